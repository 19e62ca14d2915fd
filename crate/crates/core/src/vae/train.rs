use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::ModelKind;
use super::{LossConfig, Model, Noise, Result, VaeError};
use crate::classifier::{evaluate_accuracy, Accuracy};
use crate::sprite::{ConceptLabel, Split, SpriteInstance};
use crate::tensor::{Adam, AdamConfig, Checkpoint, Graph, ParamStore, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// ELBO with a standard-normal prior everywhere.
    Vanilla,
    /// Per-label priors; every training label must be fully specified.
    Conceptual,
    /// Per-label priors, with ANY slots matched to the mixture of the
    /// domain's priors.
    Any,
}

impl Objective {
    pub fn model_kind(self) -> ModelKind {
        match self {
            Objective::Vanilla => ModelKind::Vanilla,
            Objective::Conceptual | Objective::Any => ModelKind::Conceptual,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Learning-rate multiplier for the prior table.
    pub prior_lr_scale: f64,
    /// Learning-rate multiplier for the decoder.
    pub decoder_lr_scale: f64,
    pub loss: LossConfig,
    pub seed: u64,
    /// Keep the parameters with the best mean dev accuracy.
    pub select_best: bool,
    /// Compute the dev-set loss (posterior-mean decoding) every epoch.
    pub track_dev_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::Conceptual,
            epochs: 200,
            batch_size: 32,
            adam: AdamConfig::default(),
            prior_lr_scale: 1.0,
            decoder_lr_scale: 1.0,
            loss: LossConfig::default(),
            seed: 0,
            select_best: true,
            track_dev_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(VaeError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 {
            return err("epochs and batch size must be positive");
        }
        if self.objective == Objective::Any && self.loss.mc_samples == 0 {
            return err("Monte-Carlo sample count must be positive");
        }
        let w = self.loss.weights;
        if !(w.atomic > 0.0 && w.any > 0.0 && self.loss.recon_scale > 0.0) {
            return err("loss weights must be positive");
        }
        let a = self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return err("invalid Adam hyper-parameters");
        }
        for (name, v) in [("prior", self.prior_lr_scale), ("decoder", self.decoder_lr_scale)] {
            if !(v >= 0.0 && v.is_finite()) {
                return err(&format!("{name} learning-rate scale must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// One learning-curve row. Accuracy and dev loss are on the dev split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub recon: f64,
    pub kl: Vec<f64>,
    pub total: f64,
    pub accuracy: Option<[f64; 4]>,
    pub dev_loss: Option<f64>,
}

impl EpochMetrics {
    pub fn header(latent_dim: usize) -> Vec<String> {
        let mut h = vec!["epoch".to_string(), "recon".to_string()];
        h.extend((0..latent_dim).map(|j| format!("kl_{j}")));
        h.extend(["acc_colour", "acc_size", "acc_shape", "acc_position"].map(String::from));
        h
    }

    /// Fields in [`EpochMetrics::header`] order; absent accuracies are empty.
    pub fn record(&self) -> Vec<String> {
        let mut r = vec![self.epoch.to_string(), self.recon.to_string()];
        r.extend(self.kl.iter().map(f64::to_string));
        match self.accuracy {
            Some(a) => r.extend(a.iter().map(f64::to_string)),
            None => r.extend(std::iter::repeat(String::new()).take(4)),
        }
        r
    }
}

pub struct TrainOutcome {
    /// Selected model (best dev accuracy, or the last epoch).
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    pub best_epoch: usize,
}

#[derive(Clone, Debug)]
struct Best {
    score: f64,
    epoch: usize,
    params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct TrainState {
    epoch: usize,
    adam_t: u64,
    best_epoch: Option<usize>,
    best_score: Option<f64>,
    config: TrainConfig,
    metrics: Vec<EpochMetrics>,
}

fn stream(seed: u64, a: u64, b: u64) -> u64 {
    let mut x = seed;
    for v in [a, b] {
        x = (x ^ v.wrapping_add(0x9e37_79b9_7f4a_7c15)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x ^= x >> 31;
    }
    x
}

fn batch_values(instances: &[&SpriteInstance]) -> Vec<f64> {
    instances.iter().flat_map(|i| i.image.to_unit()).collect()
}

/// Minibatch Adam over encoder, decoder and prior parameters. All
/// randomness is derived from `(seed, epoch, batch)`, so training can be
/// checkpointed and resumed with bit-identical results.
pub struct Trainer {
    model: Model,
    adam: Adam,
    config: TrainConfig,
    epoch: usize,
    metrics: Vec<EpochMetrics>,
    best: Option<Best>,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        if model.kind() != config.objective.model_kind() {
            return Err(VaeError::Incompatible(format!(
                "{:?} objective cannot train a {:?} model",
                config.objective,
                model.kind()
            )));
        }
        Ok(Self {
            adam: Adam::new(config.adam, model.params()),
            model,
            config,
            epoch: 0,
            metrics: Vec::new(),
            best: None,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn is_done(&self) -> bool {
        self.epoch >= self.config.epochs
    }

    fn check_labels(&self, split: &Split) -> Result<()> {
        if self.config.objective == Objective::Conceptual && split.instances.iter().any(|i| !i.label.is_full()) {
            return Err(VaeError::Incompatible(
                "training labels contain ANY slots; use the any objective".into(),
            ));
        }
        Ok(())
    }

    fn non_finite(&self, batch: usize) -> VaeError {
        VaeError::NonFinite {
            epoch: self.epoch + 1,
            batch,
            snapshot: Box::new(self.checkpoint()),
        }
    }

    /// One pass over `train` followed by dev evaluation.
    pub fn run_epoch(&mut self, train: &Split, dev: Option<&Split>) -> Result<&EpochMetrics> {
        self.check_labels(train)?;
        if train.is_empty() {
            return Err(VaeError::Config("training split is empty".into()));
        }
        let latent = self.model.latent_dim();
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stream(self.config.seed, self.epoch as u64, u64::MAX));
        order.shuffle(&mut rng);

        let use_labels = self.config.objective != Objective::Vanilla;
        let (mut recon, mut total) = (0.0, 0.0);
        let mut kl = vec![0.0; latent];
        for (b, idx) in order.chunks(self.config.batch_size).enumerate() {
            let insts: Vec<&SpriteInstance> = idx.iter().map(|&i| &train.instances[i]).collect();
            let x = batch_values(&insts);
            let labels: Vec<ConceptLabel> = insts.iter().map(|i| i.label).collect();
            let labels = use_labels.then_some(labels.as_slice());
            let seed = stream(self.config.seed, self.epoch as u64, b as u64);
            let noise = Noise::sample(insts.len(), latent, labels, self.config.loss.mc_samples, seed);
            let (loss, grads) = self.model.loss_and_grads(&x, insts.len(), labels, &noise, &self.config.loss)?;
            if !loss.total.is_finite() {
                return Err(self.non_finite(b));
            }
            let store = self.model.params();
            let scales: Vec<f64> = store
                .ids()
                .map(|id| match store.name(id) {
                    n if n.starts_with("prior.") => self.config.prior_lr_scale,
                    n if n.starts_with("dec.") => self.config.decoder_lr_scale,
                    _ => 1.0,
                })
                .collect();
            match self.adam.step_scaled(self.model.params_mut(), &grads, Some(&scales)) {
                Ok(()) => {}
                Err(TensorError::NonFiniteGradient(_)) => return Err(self.non_finite(b)),
                Err(e) => return Err(e.into()),
            }
            let w = insts.len() as f64;
            recon += loss.reconstruction * w;
            total += loss.total * w;
            kl.iter_mut().zip(&loss.kl).for_each(|(a, v)| *a += v * w);
        }
        let n = train.len() as f64;
        self.epoch += 1;

        let accuracy = match (self.model.kind(), dev) {
            (ModelKind::Conceptual, Some(d)) if !d.is_empty() => Some(evaluate_accuracy(&self.model, d)?),
            _ => None,
        };
        let dev_loss = match dev {
            Some(d) if self.config.track_dev_loss && !d.is_empty() => Some(self.dev_loss(d)?),
            _ => None,
        };
        self.update_best(accuracy.as_ref());
        self.metrics.push(EpochMetrics {
            epoch: self.epoch,
            recon: recon / n,
            kl: kl.iter().map(|v| v / n).collect(),
            total: total / n,
            accuracy: accuracy.map(|a| a.per_domain),
            dev_loss,
        });
        Ok(self.metrics.last().expect("just pushed"))
    }

    fn update_best(&mut self, accuracy: Option<&Accuracy>) {
        let score = accuracy.map_or(f64::NEG_INFINITY, Accuracy::mean);
        let better = match &self.best {
            None => true,
            Some(b) => score > b.score || (accuracy.is_none() && score == b.score),
        };
        if better {
            self.best = Some(Best {
                score,
                epoch: self.epoch,
                params: self.model.params().clone(),
            });
        }
    }

    /// Mean dev-set objective with the posterior mean decoded (no sampling).
    pub fn dev_loss(&self, dev: &Split) -> Result<f64> {
        let latent = self.model.latent_dim();
        let use_labels = self.config.objective != Objective::Vanilla;
        let mut sum = 0.0;
        for chunk in dev.instances.chunks(64) {
            let insts: Vec<&SpriteInstance> = chunk.iter().collect();
            let x = batch_values(&insts);
            let labels: Vec<ConceptLabel> = chunk.iter().map(|i| i.label).collect();
            let labels = use_labels.then_some(labels.as_slice());
            let noise = Noise::sample(chunk.len(), latent, labels, self.config.loss.mc_samples, stream(self.config.seed, u64::MAX, 0));
            let noise = Noise {
                latent: vec![0.0; chunk.len() * latent],
                ..noise
            };
            let mut g = Graph::new();
            let (_, loss) = self.model.objective_on(&mut g, &x, chunk.len(), labels, &noise, &self.config.loss)?;
            sum += loss.total * chunk.len() as f64;
        }
        Ok(sum / dev.len() as f64)
    }

    /// Runs epochs until the configured count is reached.
    pub fn run(&mut self, train: &Split, dev: Option<&Split>) -> Result<()> {
        while !self.is_done() {
            self.run_epoch(train, dev)?;
        }
        Ok(())
    }

    /// Full training state: parameters, Adam moments, best-so-far
    /// parameters and the metrics history.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = self.model.to_checkpoint();
        let store = self.model.params();
        for (id, (m, v)) in store.ids().zip(self.adam.first_moments().iter().zip(self.adam.second_moments())) {
            ckpt.tensors.push((format!("adam.m.{}", store.name(id)), m.clone()));
            ckpt.tensors.push((format!("adam.v.{}", store.name(id)), v.clone()));
        }
        if let Some(best) = &self.best {
            for (name, t) in best.params.iter() {
                ckpt.tensors.push((format!("best.{name}"), t.clone()));
            }
        }
        let state = TrainState {
            epoch: self.epoch,
            adam_t: self.adam.step_count(),
            best_epoch: self.best.as_ref().map(|b| b.epoch),
            best_score: self.best.as_ref().map(|b| b.score).filter(|s| s.is_finite()),
            config: self.config.clone(),
            metrics: self.metrics.clone(),
        };
        let mut table: toml::Table = toml::from_str(&ckpt.metadata).expect("model metadata is TOML");
        table.insert("training".into(), toml::Value::try_from(state).expect("serialisable"));
        ckpt.metadata = toml::to_string(&table).expect("serialisable");
        ckpt
    }

    /// Continues from [`Trainer::checkpoint`]. `config` may extend `epochs`;
    /// every other field must match the saved run.
    pub fn resume(ckpt: &Checkpoint, config: TrainConfig) -> Result<Self> {
        let model = Model::from_checkpoint(ckpt)?;
        let table: toml::Table = toml::from_str(&ckpt.metadata)
            .map_err(|e| VaeError::Incompatible(format!("checkpoint metadata: {e}")))?;
        let state: TrainState = table
            .get("training")
            .cloned()
            .ok_or_else(|| VaeError::Incompatible("checkpoint has no training state".into()))?
            .try_into()
            .map_err(|e: toml::de::Error| VaeError::Incompatible(format!("training state: {e}")))?;
        if (TrainConfig { epochs: state.config.epochs, ..config.clone() }) != state.config {
            return Err(VaeError::Incompatible("resume config differs from the saved run".into()));
        }
        let mut trainer = Self::new(model, config)?;
        let store = trainer.model.params();
        let fetch = |prefix: &str| -> Result<Vec<Tensor>> {
            store
                .ids()
                .map(|id| {
                    let name = format!("{prefix}{}", store.name(id));
                    ckpt.get(&name)
                        .cloned()
                        .ok_or_else(|| VaeError::Incompatible(format!("checkpoint lacks `{name}`")))
                })
                .collect()
        };
        let (m, v) = (fetch("adam.m.")?, fetch("adam.v.")?);
        let best = match state.best_epoch {
            Some(epoch) => {
                let mut params = store.clone();
                for (id, t) in params.ids().collect::<Vec<_>>().into_iter().zip(fetch("best.")?) {
                    *params.get_mut(id) = t;
                }
                Some(Best {
                    score: state.best_score.unwrap_or(f64::NEG_INFINITY),
                    epoch,
                    params,
                })
            }
            None => None,
        };
        trainer.adam.restore(state.adam_t, m, v)?;
        trainer.epoch = state.epoch;
        trainer.metrics = state.metrics;
        trainer.best = best;
        Ok(trainer)
    }

    pub fn finish(self) -> TrainOutcome {
        let (mut model, best) = (self.model, self.best);
        let best_epoch = match best {
            Some(b) if self.config.select_best => {
                *model.params_mut() = b.params;
                b.epoch
            }
            _ => self.epoch,
        };
        TrainOutcome {
            model,
            metrics: self.metrics,
            best_epoch,
        }
    }
}

/// Trains `model` from scratch for `config.epochs` epochs.
pub fn train(model: Model, train: &Split, dev: Option<&Split>, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(model, config.clone())?;
    trainer.run(train, dev)?;
    Ok(trainer.finish())
}
