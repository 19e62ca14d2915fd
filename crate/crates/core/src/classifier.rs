//! KL-based concept classifier: for each domain, pick the atomic label
//! whose prior is closest (in `KL(q || prior)`) to the encoder posterior on
//! that dimension. Only the encoder is used.

use std::fmt;

use crate::gaussian::{DiagGaussian, Gaussian1d};
use crate::sprite::{ConceptLabel, DatasetConfig, Domain, Slot, Split, SpriteInstance};
use crate::vae::{ConceptualPriors, Model, Result, VaeError, DOMAIN_DIMS};

/// Chosen label and the KL to every candidate, for one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainDecision {
    pub label: usize,
    pub scores: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationResult {
    pub domains: [DomainDecision; DOMAIN_DIMS],
}

impl ClassificationResult {
    pub fn label(&self) -> ConceptLabel {
        ConceptLabel {
            slots: std::array::from_fn(|d| Slot::Atom(self.domains[d].label)),
        }
    }
}

/// Per-domain argmin of `KL(q_d || prior)`; ties go to the earlier label.
pub fn classify_posterior(q: &DiagGaussian, priors: &ConceptualPriors) -> Result<ClassificationResult> {
    if q.dim() < DOMAIN_DIMS {
        return Err(VaeError::Shape {
            expected: vec![DOMAIN_DIMS],
            found: vec![q.dim()],
        });
    }
    let domains = std::array::from_fn(|d| {
        let qd = q.marginal(d);
        let scores: Vec<f64> = priors.domain(Domain::ALL[d]).iter().map(|p| qd.kl(p)).collect();
        let mut label = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s < scores[label] {
                label = i;
            }
        }
        DomainDecision { label, scores }
    });
    Ok(ClassificationResult { domains })
}

/// Anything that maps instances to posteriors over the latent space and
/// carries a prior table.
pub trait ConceptEncoder {
    fn posteriors(&self, instances: &[SpriteInstance]) -> Result<Vec<DiagGaussian>>;
    fn priors(&self) -> Result<ConceptualPriors>;
}

impl ConceptEncoder for Model {
    fn posteriors(&self, instances: &[SpriteInstance]) -> Result<Vec<DiagGaussian>> {
        let images: Vec<_> = instances.iter().map(|i| i.image.clone()).collect();
        self.encode(&images)
    }

    fn priors(&self) -> Result<ConceptualPriors> {
        self.conceptual_priors()
    }
}

/// Reference encoder that reads the generative attributes, maps each to the
/// label whose range midpoint is nearest, and emits exactly that label's
/// prior. Classification through it is correct by construction.
#[derive(Clone, Debug)]
pub struct RangeOracle {
    pub config: DatasetConfig,
    pub priors: ConceptualPriors,
    pub slack: usize,
}

impl RangeOracle {
    pub fn label_of(&self, inst: &SpriteInstance) -> ConceptLabel {
        let nearest = |ranges: &[crate::sprite::LabelRange], v: f64, circular: bool| {
            let dist = |r: &crate::sprite::LabelRange| {
                if circular {
                    r.circular_distance(v)
                } else {
                    (v - r.midpoint()).abs()
                }
            };
            (0..ranges.len())
                .min_by(|&a, &b| dist(&ranges[a]).total_cmp(&dist(&ranges[b])))
                .expect("non-empty vocabulary")
        };
        let s = &inst.spec;
        ConceptLabel::atoms(
            nearest(&self.config.colours, s.hue, true),
            nearest(&self.config.sizes, s.scale, false),
            self.config.shapes.iter().position(|&k| k == s.shape).unwrap_or(0),
            nearest(&self.config.positions, s.vpos, false),
        )
    }
}

impl ConceptEncoder for RangeOracle {
    fn posteriors(&self, instances: &[SpriteInstance]) -> Result<Vec<DiagGaussian>> {
        Ok(instances
            .iter()
            .map(|inst| {
                let label = self.label_of(inst);
                let mut gs: Vec<Gaussian1d> = Domain::ALL
                    .iter()
                    .map(|&d| self.priors.get(d, label.get(d).atom().expect("full label")).expect("label in table"))
                    .collect();
                gs.extend(std::iter::repeat(Gaussian1d::STANDARD).take(self.slack));
                DiagGaussian::from_marginals(&gs)
            })
            .collect())
    }

    fn priors(&self) -> Result<ConceptualPriors> {
        Ok(self.priors.clone())
    }
}

pub fn classify(encoder: &impl ConceptEncoder, instances: &[SpriteInstance]) -> Result<Vec<ClassificationResult>> {
    let priors = encoder.priors()?;
    encoder.posteriors(instances)?.iter().map(|q| classify_posterior(q, &priors)).collect()
}

/// Fraction of correct decisions per domain (colour, size, shape,
/// position). Slots labelled ANY are not scored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accuracy {
    pub per_domain: [f64; DOMAIN_DIMS],
    pub scored: [usize; DOMAIN_DIMS],
}

impl Accuracy {
    /// Values rounded to two decimals, as reported.
    pub fn rounded(&self) -> [f64; DOMAIN_DIMS] {
        self.per_domain.map(|a| (a * 100.0).round() / 100.0)
    }

    pub fn mean(&self) -> f64 {
        self.per_domain.iter().sum::<f64>() / DOMAIN_DIMS as f64
    }

    pub fn min(&self) -> f64 {
        self.per_domain.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (d, a) in Domain::ALL.iter().zip(self.rounded()) {
            writeln!(f, "{:<10} {a:.2}", d.name())?;
        }
        Ok(())
    }
}

pub fn evaluate_accuracy(encoder: &impl ConceptEncoder, split: &Split) -> Result<Accuracy> {
    evaluate_instances(encoder, &split.instances)
}

pub fn evaluate_instances(encoder: &impl ConceptEncoder, instances: &[SpriteInstance]) -> Result<Accuracy> {
    if instances.is_empty() {
        return Err(VaeError::Config("cannot evaluate accuracy on an empty split".into()));
    }
    let results = classify(encoder, instances)?;
    let mut correct = [0usize; DOMAIN_DIMS];
    let mut scored = [0usize; DOMAIN_DIMS];
    for (inst, r) in instances.iter().zip(&results) {
        for d in 0..DOMAIN_DIMS {
            if let Slot::Atom(truth) = inst.label.slots[d] {
                scored[d] += 1;
                correct[d] += (r.domains[d].label == truth) as usize;
            }
        }
    }
    if scored.contains(&0) {
        return Err(VaeError::Config("some domain has no labelled instances".into()));
    }
    Ok(Accuracy {
        per_domain: std::array::from_fn(|d| correct[d] as f64 / scored[d] as f64),
        scored,
    })
}

/// Per-snapshot accuracy series, one row per model.
pub fn learning_curve(snapshots: &[Model], dev: &Split) -> Result<Vec<Accuracy>> {
    snapshots.iter().map(|m| evaluate_accuracy(m, dev)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sprite::{generate_dataset, Vocabulary};

    fn priors() -> ConceptualPriors {
        let vocab: Vocabulary = DatasetConfig::main().vocabulary();
        let t = |ms: [f64; 3]| ms.iter().map(|&m| Gaussian1d::new(m, -3.0)).collect();
        ConceptualPriors::new(vocab, [t([-0.77, -0.08, 0.83]), t([-0.93, -0.2, 0.56]), t([0.64, -0.49, 0.09]), t([-0.81, 0.04, 1.07])]).unwrap()
    }

    #[test]
    fn exact_prior_gives_zero_kl() {
        let p = priors();
        let mut gs: Vec<_> = Domain::ALL.iter().map(|&d| p.get(d, 0).unwrap()).collect();
        gs[0] = p.get(Domain::Colour, 2).unwrap();
        gs.extend([Gaussian1d::STANDARD; 2]);
        let r = classify_posterior(&DiagGaussian::from_marginals(&gs), &p).unwrap();
        assert_eq!(r.domains[0].label, 2);
        assert_eq!(r.domains[0].scores[2], 0.0);
    }

    #[test]
    fn ties_go_to_first_label() {
        let vocab = DatasetConfig::main().vocabulary();
        let same = vec![Gaussian1d::new(0.0, 0.0); 3];
        let p = ConceptualPriors::new(vocab, [same.clone(), same.clone(), same.clone(), same]).unwrap();
        let r = classify_posterior(&DiagGaussian::standard(6), &p).unwrap();
        assert!(r.domains.iter().all(|d| d.label == 0));
    }

    #[test]
    fn oracle_is_perfect() {
        let config = DatasetConfig {
            image_size: 8,
            dev: 60,
            ..DatasetConfig::main()
        };
        let ds = generate_dataset(&DatasetConfig { train: 0, test: 0, ..config.clone() }).unwrap();
        let oracle = RangeOracle {
            config,
            priors: priors(),
            slack: 2,
        };
        let acc = evaluate_accuracy(&oracle, &ds.dev).unwrap();
        assert_eq!(acc.rounded(), [1.0; 4]);
        assert!(evaluate_instances(&oracle, &[]).is_err());
    }
}
