use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ArchConfig, ConceptualPriors, Result, VaeError, DOMAIN_DIMS};
use crate::concept::ConceptRecord;
use crate::gaussian::{DiagGaussian, Gaussian1d};
use crate::sprite::{ConceptLabel, Domain, Image, Slot, Vocabulary};
use crate::tensor::{Checkpoint, Graph, NodeId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Standard-normal prior on every latent dimension.
    Vanilla,
    /// Learnable per-label Gaussian priors on the domain dimensions.
    Conceptual,
}

/// Multipliers for the KL terms of atomic and ANY domain slots. Slack
/// dimensions are always weighted 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KlWeights {
    pub atomic: f64,
    pub any: f64,
}

impl Default for KlWeights {
    fn default() -> Self {
        Self { atomic: 1.0, any: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    /// Multiplier on the per-image summed squared error.
    pub recon_scale: f64,
    pub weights: KlWeights,
    /// Monte-Carlo samples per ANY slot.
    pub mc_samples: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            recon_scale: 1.0,
            weights: KlWeights::default(),
            mc_samples: 1000,
        }
    }
}

/// Batch-averaged loss terms. `kl[j]` is the unweighted KL of latent
/// dimension `j`; `weighted_kl[j]` is what enters `total`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossBreakdown {
    pub reconstruction: f64,
    pub kl: Vec<f64>,
    pub weighted_kl: Vec<f64>,
    pub total: f64,
}

/// Standard-normal draws for one batch: one per latent entry for the
/// reparametrised sample, plus `mc_samples` per ANY slot for each domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Noise {
    pub latent: Vec<f64>,
    pub mixture: [Vec<f64>; DOMAIN_DIMS],
}

fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^ (x >> 33)
}

impl Noise {
    /// All-zero latent noise (the posterior mean is decoded). Only valid
    /// for batches without ANY slots.
    pub fn zeros(batch: usize, latent_dim: usize) -> Self {
        Self {
            latent: vec![0.0; batch * latent_dim],
            mixture: Default::default(),
        }
    }

    /// Fresh draws from independent streams per latent/domain, derived from
    /// `seed`.
    pub fn sample(batch: usize, latent_dim: usize, labels: Option<&[ConceptLabel]>, samples: usize, seed: u64) -> Self {
        let draw = |stream: u64, n: usize| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, stream));
            (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect::<Vec<_>>()
        };
        let mixture = std::array::from_fn(|d| {
            let any_rows = labels.map_or(0, |ls| ls.iter().filter(|l| l.slots[d] == Slot::Any).count());
            if any_rows == 0 {
                Vec::new()
            } else {
                draw(d as u64 + 1, any_rows * samples)
            }
        });
        Self {
            latent: draw(0, batch * latent_dim),
            mixture,
        }
    }
}

#[derive(Serialize, Deserialize)]
pub(crate) struct ModelMeta {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub vocabulary: Vocabulary,
    /// Learned priors as Gaussian concept records (informational; the
    /// tensors are authoritative).
    #[serde(default)]
    pub concepts: Vec<ConceptRecord>,
}

/// Encoder, decoder and (for the conceptual kind) the prior table psi, all
/// held in one [`ParamStore`].
#[derive(Debug)]
pub struct Model {
    kind: ModelKind,
    arch: ArchConfig,
    vocab: Vocabulary,
    store: ParamStore,
    decoder_calls: AtomicU64,
}

impl Clone for Model {
    fn clone(&self) -> Self {
        Self {
            kind: self.kind,
            arch: self.arch.clone(),
            vocab: self.vocab.clone(),
            store: self.store.clone(),
            decoder_calls: AtomicU64::new(self.decoder_calls()),
        }
    }
}

struct Builder<'a> {
    store: &'a ParamStore,
    trainable: bool,
}

impl Builder<'_> {
    fn p(&self, g: &mut Graph, name: &str) -> NodeId {
        let id = self.store.find(name).unwrap_or_else(|| panic!("missing parameter {name}"));
        if self.trainable {
            g.param(self.store, id)
        } else {
            g.constant(self.store.get(id).clone())
        }
    }

    fn dense(&self, g: &mut Graph, x: NodeId, name: &str, relu: bool) -> Result<NodeId> {
        let w = self.p(g, &format!("{name}.w"));
        let b = self.p(g, &format!("{name}.b"));
        let h = g.dense(x, w, b)?;
        Ok(if relu { g.relu(h) } else { h })
    }
}

/// Latent columns `j` of an `[n, L]` matrix as an `[n]` vector.
fn column(g: &mut Graph, m: NodeId, j: usize, n: usize) -> Result<NodeId> {
    let c = g.columns(m, j, 1)?;
    Ok(g.reshape(c, &[n])?)
}

impl Model {
    pub fn new(kind: ModelKind, arch: ArchConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (k, f, b) = (ArchConfig::KERNEL, arch.filters, arch.bottleneck());
        let latent = arch.latent_dim();
        let flat = b * b * f;

        let mut he = |store: &mut ParamStore, name: String, shape: &[usize], fan_in: usize| {
            store.insert_he_uniform(name, shape, fan_in, &mut rng);
        };
        for i in 0..arch.conv_layers {
            let cin = if i == 0 { 3 } else { f };
            he(&mut store, format!("enc.conv{i}.w"), &[k, k, cin, f], k * k * cin);
            store.insert(format!("enc.conv{i}.b"), Tensor::zeros(&[f]));
        }
        let mut width = flat;
        for i in 0..arch.dense_layers {
            he(&mut store, format!("enc.dense{i}.w"), &[width, arch.dense_width], width);
            store.insert(format!("enc.dense{i}.b"), Tensor::zeros(&[arch.dense_width]));
            width = arch.dense_width;
        }
        he(&mut store, "enc.out.w".into(), &[width, 2 * latent], width);
        store.insert("enc.out.b", Tensor::zeros(&[2 * latent]));

        let mut width = latent;
        for i in 0..arch.dense_layers {
            he(&mut store, format!("dec.dense{i}.w"), &[width, arch.dense_width], width);
            store.insert(format!("dec.dense{i}.b"), Tensor::zeros(&[arch.dense_width]));
            width = arch.dense_width;
        }
        he(&mut store, "dec.proj.w".into(), &[width, flat], width);
        store.insert("dec.proj.b", Tensor::zeros(&[flat]));
        for i in 0..arch.conv_layers {
            let cout = if i + 1 == arch.conv_layers { 3 } else { f };
            // Each output pixel of a stride-2 transposed conv sees a quarter
            // of the kernel taps.
            he(&mut store, format!("dec.deconv{i}.w"), &[k, k, cout, f], (k * k * f / 4).max(1));
            store.insert(format!("dec.deconv{i}.b"), Tensor::zeros(&[cout]));
        }

        if kind == ModelKind::Conceptual {
            for d in Domain::ALL {
                let v = vocab.len(d);
                let means = (0..v).map(|_| rng.random_range(-1.0..1.0)).collect();
                let logvars = (0..v).map(|_| rng.random_range(-7.0..0.0)).collect();
                store.insert(format!("prior.{d}.mean"), Tensor::from_vec(means));
                store.insert(format!("prior.{d}.logvar"), Tensor::from_vec(logvars));
            }
        }
        Ok(Self {
            kind,
            arch,
            vocab,
            store,
            decoder_calls: AtomicU64::new(0),
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim()
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// How many times the decoder network has been run (any path).
    pub fn decoder_calls(&self) -> u64 {
        self.decoder_calls.load(Ordering::Relaxed)
    }

    fn require_priors(&self) -> Result<()> {
        match self.kind {
            ModelKind::Conceptual => Ok(()),
            ModelKind::Vanilla => Err(VaeError::Incompatible("vanilla model has no conceptual priors".into())),
        }
    }

    /// Learned prior of every atomic label in `domain`, in vocabulary order.
    pub fn priors(&self, domain: Domain) -> Result<Vec<Gaussian1d>> {
        self.require_priors()?;
        let m = self.store.get(self.store.find(&format!("prior.{domain}.mean")).expect("prior means"));
        let l = self.store.get(self.store.find(&format!("prior.{domain}.logvar")).expect("prior logvars"));
        Ok(m.data().iter().zip(l.data()).map(|(&m, &l)| Gaussian1d::new(m, l)).collect())
    }

    pub fn conceptual_priors(&self) -> Result<ConceptualPriors> {
        let tables = [
            self.priors(Domain::Colour)?,
            self.priors(Domain::Size)?,
            self.priors(Domain::Shape)?,
            self.priors(Domain::Position)?,
        ];
        ConceptualPriors::new(self.vocab.clone(), tables)
    }

    pub fn set_prior(&mut self, domain: Domain, label: usize, g: Gaussian1d) -> Result<()> {
        self.require_priors()?;
        if label >= self.vocab.len(domain) {
            return Err(VaeError::Config(format!("{domain} label index {label} out of range")));
        }
        for (suffix, v) in [("mean", g.mean), ("logvar", g.logvar)] {
            let id = self.store.find(&format!("prior.{domain}.{suffix}")).expect("prior table");
            self.store.get_mut(id).data_mut()[label] = v;
        }
        Ok(())
    }

    fn image_len(&self) -> usize {
        self.arch.image_size * self.arch.image_size * 3
    }

    fn check_batch(&self, x: &[f64], n: usize) -> Result<()> {
        if n == 0 || x.len() != n * self.image_len() {
            let s = self.arch.image_size;
            return Err(VaeError::Shape {
                expected: vec![n, s, s, 3],
                found: vec![x.len()],
            });
        }
        Ok(())
    }

    fn encoder(&self, b: &Builder, g: &mut Graph, x: NodeId, n: usize) -> Result<(NodeId, NodeId)> {
        let mut h = x;
        for i in 0..self.arch.conv_layers {
            let k = b.p(g, &format!("enc.conv{i}.w"));
            let bias = b.p(g, &format!("enc.conv{i}.b"));
            h = g.conv2d(h, k, ArchConfig::STRIDE, ArchConfig::PADDING)?;
            h = g.bias_add(h, bias)?;
            h = g.relu(h);
        }
        let s = self.arch.bottleneck();
        h = g.reshape(h, &[n, s * s * self.arch.filters])?;
        for i in 0..self.arch.dense_layers {
            h = b.dense(g, h, &format!("enc.dense{i}"), true)?;
        }
        let out = b.dense(g, h, "enc.out", false)?;
        let l = self.latent_dim();
        Ok((g.columns(out, 0, l)?, g.columns(out, l, l)?))
    }

    fn decoder(&self, b: &Builder, g: &mut Graph, z: NodeId, n: usize) -> Result<NodeId> {
        self.decoder_calls.fetch_add(1, Ordering::Relaxed);
        let mut h = z;
        for i in 0..self.arch.dense_layers {
            h = b.dense(g, h, &format!("dec.dense{i}"), true)?;
        }
        h = b.dense(g, h, "dec.proj", true)?;
        let s = self.arch.bottleneck();
        h = g.reshape(h, &[n, s, s, self.arch.filters])?;
        for i in 0..self.arch.conv_layers {
            let k = b.p(g, &format!("dec.deconv{i}.w"));
            let bias = b.p(g, &format!("dec.deconv{i}.b"));
            h = g.deconv2d(h, k, ArchConfig::STRIDE, ArchConfig::PADDING)?;
            h = g.bias_add(h, bias)?;
            h = if i + 1 == self.arch.conv_layers { g.sigmoid(h) } else { g.relu(h) };
        }
        Ok(h)
    }

    /// Posterior `q(z|x)` for a batch of `n` images given as `[0, 1]` HWC
    /// values, concatenated.
    pub fn encode_values(&self, x: &[f64], n: usize) -> Result<Vec<DiagGaussian>> {
        self.check_batch(x, n)?;
        let s = self.arch.image_size;
        let l = self.latent_dim();
        let b = Builder {
            store: &self.store,
            trainable: false,
        };
        let mut out = Vec::with_capacity(n);
        const CHUNK: usize = 64;
        for (c, chunk) in x.chunks(CHUNK * self.image_len()).enumerate() {
            let rows = (n - c * CHUNK).min(CHUNK);
            let mut g = Graph::new();
            let xn = g.constant(Tensor::new(vec![rows, s, s, 3], chunk.to_vec())?);
            let (m, lv) = self.encoder(&b, &mut g, xn, rows)?;
            let (m, lv) = (g.value(m).data(), g.value(lv).data());
            for r in 0..rows {
                let q = DiagGaussian::new(m[r * l..(r + 1) * l].to_vec(), lv[r * l..(r + 1) * l].to_vec())
                    .map_err(|e| VaeError::Config(format!("encoder produced invalid posterior: {e}")))?;
                out.push(q);
            }
        }
        Ok(out)
    }

    pub fn encode(&self, images: &[Image]) -> Result<Vec<DiagGaussian>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let mut x = Vec::with_capacity(images.len() * self.image_len());
        for img in images {
            if img.size() != self.arch.image_size {
                let (s, f) = (self.arch.image_size, img.size());
                return Err(VaeError::Shape {
                    expected: vec![s, s, 3],
                    found: vec![f, f, 3],
                });
            }
            x.extend(img.to_unit());
        }
        self.encode_values(&x, images.len())
    }

    /// Decodes latent vectors to `[0, 1]` HWC images.
    pub fn decode(&self, zs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let l = self.latent_dim();
        if let Some(bad) = zs.iter().find(|z| z.len() != l) {
            return Err(VaeError::Shape {
                expected: vec![l],
                found: vec![bad.len()],
            });
        }
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        let b = Builder {
            store: &self.store,
            trainable: false,
        };
        let mut g = Graph::new();
        let z = g.constant(Tensor::new(vec![zs.len(), l], zs.concat())?);
        let out = self.decoder(&b, &mut g, z, zs.len())?;
        Ok(g.value(out).data().chunks(self.image_len()).map(<[f64]>::to_vec).collect())
    }

    pub fn decode_images(&self, zs: &[Vec<f64>]) -> Result<Vec<Image>> {
        let s = self.arch.image_size;
        Ok(self
            .decode(zs)?
            .iter()
            .map(|v| Image::from_unit(s, v).expect("decoder output sized to image"))
            .collect())
    }

    /// Builds the full objective on `g` and returns the total-loss node.
    fn objective(
        &self,
        g: &mut Graph,
        x: &[f64],
        n: usize,
        labels: Option<&[ConceptLabel]>,
        noise: &Noise,
        cfg: &LossConfig,
        trainable: bool,
    ) -> Result<(NodeId, LossBreakdown)> {
        self.check_batch(x, n)?;
        if let Some(ls) = labels {
            if ls.len() != n {
                return Err(VaeError::Config(format!("{} labels for {n} images", ls.len())));
            }
            for l in ls {
                for d in Domain::ALL {
                    if let Slot::Atom(i) = l.get(d) {
                        if i >= self.vocab.len(d) {
                            return Err(crate::sprite::DataError::Vocabulary {
                                domain: d,
                                label: format!("#{i}"),
                            }
                            .into());
                        }
                    }
                }
            }
        }
        let conceptual = self.kind == ModelKind::Conceptual;
        if conceptual && labels.is_none() {
            return Err(VaeError::Config("conceptual objective needs labels".into()));
        }
        let b = Builder {
            store: &self.store,
            trainable,
        };
        let s = self.arch.image_size;
        let l = self.latent_dim();
        let xn = g.constant(Tensor::new(vec![n, s, s, 3], x.to_vec())?);
        let (mean, logvar) = self.encoder(&b, g, xn, n)?;
        let z = g.reparam(mean, logvar, noise.latent.clone())?;
        let recon_img = self.decoder(&b, g, z, n)?;
        let mse = g.mse(recon_img, xn)?;
        let recon = g.scale(mse, self.image_len() as f64 * cfg.recon_scale);

        let inv_n = 1.0 / n as f64;
        let mut total = recon;
        let mut kl = vec![0.0; l];
        let mut weighted_kl = vec![0.0; l];
        for j in 0..l {
            let qm = column(g, mean, j, n)?;
            let ql = column(g, logvar, j, n)?;
            let domain = (conceptual && j < DOMAIN_DIMS).then(|| Domain::ALL[j]);
            let terms: Vec<(NodeId, f64)> = match domain {
                None => {
                    let zero = g.constant(Tensor::zeros(&[n]));
                    let k = g.gaussian_kl(qm, ql, zero, zero)?;
                    vec![(g.sum(k), 1.0)]
                }
                Some(d) => {
                    let ls = labels.expect("checked above");
                    let pm = b.p(g, &format!("prior.{d}.mean"));
                    let pl = b.p(g, &format!("prior.{d}.logvar"));
                    let (mut atomic, mut atom_idx, mut any) = (Vec::new(), Vec::new(), Vec::new());
                    for (r, lab) in ls.iter().enumerate() {
                        match lab.get(d) {
                            Slot::Atom(i) => {
                                atomic.push(r);
                                atom_idx.push(i);
                            }
                            Slot::Any => any.push(r),
                        }
                    }
                    let mut terms = Vec::new();
                    if !atomic.is_empty() {
                        let (qa, qla) = (g.select_rows(qm, &atomic)?, g.select_rows(ql, &atomic)?);
                        let (pa, pla) = (g.gather(pm, &atom_idx)?, g.gather(pl, &atom_idx)?);
                        let k = g.gaussian_kl(qa, qla, pa, pla)?;
                        terms.push((g.sum(k), cfg.weights.atomic));
                    }
                    if !any.is_empty() {
                        let (qy, qly) = (g.select_rows(qm, &any)?, g.select_rows(ql, &any)?);
                        let k = g.mixture_kl_mc(qy, qly, pm, pl, noise.mixture[j].clone(), cfg.mc_samples)?;
                        terms.push((g.sum(k), cfg.weights.any));
                    }
                    terms
                }
            };
            for (node, w) in terms {
                let v = g.value(node).data()[0];
                kl[j] += v * inv_n;
                weighted_kl[j] += w * v * inv_n;
                let scaled = g.scale(node, w * inv_n);
                total = g.add(total, scaled)?;
            }
        }
        let breakdown = LossBreakdown {
            reconstruction: g.value(recon).data()[0],
            kl,
            weighted_kl,
            total: g.value(total).data()[0],
        };
        Ok((total, breakdown))
    }

    /// Vanilla-VAE objective: every latent dimension against N(0, 1).
    pub fn loss_vanilla(&self, x: &[f64], n: usize, noise: &Noise, cfg: &LossConfig) -> Result<LossBreakdown> {
        if self.kind != ModelKind::Vanilla {
            return Err(VaeError::Incompatible("loss_vanilla needs a vanilla model".into()));
        }
        let mut g = Graph::new();
        Ok(self.objective(&mut g, x, n, None, noise, cfg, false)?.1)
    }

    /// Conceptual objective for fully labelled instances.
    pub fn loss_conceptual(
        &self,
        x: &[f64],
        labels: &[ConceptLabel],
        noise: &Noise,
        cfg: &LossConfig,
    ) -> Result<LossBreakdown> {
        self.require_priors()?;
        if labels.iter().any(|l| !l.is_full()) {
            return Err(VaeError::Config("loss_conceptual needs labels without ANY slots".into()));
        }
        let mut g = Graph::new();
        Ok(self.objective(&mut g, x, labels.len(), Some(labels), noise, cfg, false)?.1)
    }

    /// Conceptual objective where ANY slots use the Monte-Carlo KL against
    /// the equal-weight mixture of that domain's priors.
    pub fn loss_any(&self, x: &[f64], labels: &[ConceptLabel], noise: &Noise, cfg: &LossConfig) -> Result<LossBreakdown> {
        self.require_priors()?;
        let mut g = Graph::new();
        Ok(self.objective(&mut g, x, labels.len(), Some(labels), noise, cfg, false)?.1)
    }

    /// Objective on a caller-owned graph with parameters held constant.
    pub(crate) fn objective_on(
        &self,
        g: &mut Graph,
        x: &[f64],
        n: usize,
        labels: Option<&[ConceptLabel]>,
        noise: &Noise,
        cfg: &LossConfig,
    ) -> Result<(NodeId, LossBreakdown)> {
        self.objective(g, x, n, labels, noise, cfg, false)
    }

    /// Loss and the gradient for every parameter (in store order).
    pub fn loss_and_grads(
        &self,
        x: &[f64],
        n: usize,
        labels: Option<&[ConceptLabel]>,
        noise: &Noise,
        cfg: &LossConfig,
    ) -> Result<(LossBreakdown, Vec<Tensor>)> {
        let mut g = Graph::new();
        let (total, breakdown) = self.objective(&mut g, x, n, labels, noise, cfg, true)?;
        g.backward(total)?;
        Ok((breakdown, g.param_grads(&self.store)))
    }

    pub(crate) fn meta(&self) -> ModelMeta {
        let mut concepts = Vec::new();
        if self.kind == ModelKind::Conceptual {
            for d in Domain::ALL {
                for (label, p) in self.vocab.labels(d).iter().zip(self.priors(d).expect("conceptual")) {
                    concepts.push(ConceptRecord::gaussian(format!("{d}/{label}"), vec![p.mean], vec![p.variance()]));
                }
            }
        }
        ModelMeta {
            kind: self.kind,
            arch: self.arch.clone(),
            vocabulary: self.vocab.clone(),
            concepts,
        }
    }

    /// Parameters plus a `[model]` metadata table.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut table = toml::Table::new();
        table.insert("model".into(), toml::Value::try_from(self.meta()).expect("serialisable"));
        Checkpoint {
            tensors: self.store.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
            metadata: toml::to_string(&table).expect("serialisable"),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let table: toml::Table = toml::from_str(&ckpt.metadata)
            .map_err(|e| VaeError::Incompatible(format!("checkpoint metadata: {e}")))?;
        let meta: ModelMeta = table
            .get("model")
            .cloned()
            .ok_or_else(|| VaeError::Incompatible("checkpoint has no model section".into()))?
            .try_into()
            .map_err(|e: toml::de::Error| VaeError::Incompatible(format!("model section: {e}")))?;
        let mut model = Self::new(meta.kind, meta.arch, meta.vocabulary, 0)?;
        for id in model.store.ids().collect::<Vec<_>>() {
            let name = model.store.name(id).to_string();
            let t = ckpt
                .get(&name)
                .ok_or_else(|| VaeError::Incompatible(format!("checkpoint lacks `{name}`")))?;
            if t.shape() != model.store.get(id).shape() {
                return Err(VaeError::Incompatible(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = t.clone();
        }
        Ok(model)
    }
}
