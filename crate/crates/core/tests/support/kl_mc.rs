//! Monte-Carlo mixture KL against analytic values.

use conceptual_vae::gaussian::{kl_mc_mixture, Gaussian1d, GaussianMixture};
use conceptual_vae::sprite::{ConceptLabel, DatasetConfig, Slot};
use conceptual_vae::vae::{ArchConfig, LossConfig, Model, ModelKind, Noise};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_gaussian(rng: &mut ChaCha8Rng) -> Gaussian1d {
    Gaussian1d::new(rng.random_range(-2.0..2.0), rng.random_range(-4.0..1.0))
}

pub fn single_component_mixture_matches_analytic_kl() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut failures = 0;
    for _ in 0..100 {
        let (q, p) = (random_gaussian(&mut rng), random_gaussian(&mut rng));
        let m = GaussianMixture::new(vec![p]).unwrap();
        let est = kl_mc_mixture(&q, &m, 1000, &mut rng).unwrap();
        if (est.estimate - q.kl(&p)).abs() > 3.0 * est.std_error {
            failures += 1;
        }
    }
    assert!(failures <= 2, "{failures} of 100 outside 3 standard errors");
}

pub fn mixture_kl_is_bounded_by_component_kls() {
    // KL(q || m) <= min_k KL(q || p_k) + ln K for an equal-weight mixture.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let q = random_gaussian(&mut rng);
        let comps: Vec<Gaussian1d> = (0..3).map(|_| random_gaussian(&mut rng)).collect();
        let bound = comps.iter().map(|p| q.kl(p)).fold(f64::INFINITY, f64::min) + 3f64.ln();
        let m = GaussianMixture::new(comps).unwrap();
        let est = kl_mc_mixture(&q, &m, 4000, &mut rng).unwrap();
        assert!(est.estimate <= bound + 4.0 * est.std_error, "{} > {bound}", est.estimate);
    }
}

pub fn any_objective_with_atomic_labels_equals_conceptual_objective() {
    let vocab = DatasetConfig::main().vocabulary();
    let model = Model::new(ModelKind::Conceptual, ArchConfig::miniature(), vocab, 2).unwrap();
    let s = model.arch().image_size;
    let labels = vec![ConceptLabel::atoms(0, 1, 2, 0), ConceptLabel::atoms(2, 2, 1, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..2 * s * s * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let cfg = LossConfig::default();
    let noise = Noise::sample(2, model.latent_dim(), Some(&labels), cfg.mc_samples, 6);
    let a = model.loss_any(&x, &labels, &noise, &cfg).unwrap();
    let c = model.loss_conceptual(&x, &labels, &noise, &cfg).unwrap();
    assert_eq!(a, c);
}

pub fn any_slot_over_one_label_vocabulary_reduces_to_analytic_kl() {
    let mut config = DatasetConfig::main();
    config.colours.truncate(1);
    let model = Model::new(ModelKind::Conceptual, ArchConfig::miniature(), config.vocabulary(), 7).unwrap();
    let s = model.arch().image_size;
    let atomic = vec![ConceptLabel::atoms(0, 0, 0, 0); 3];
    let mut any = atomic.clone();
    any.iter_mut().for_each(|l| l.slots[0] = Slot::Any);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<f64> = (0..3 * s * s * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let cfg = LossConfig { mc_samples: 1000, ..LossConfig::default() };
    let noise = Noise::sample(3, model.latent_dim(), Some(&any), cfg.mc_samples, 9);
    let exact = model.loss_conceptual(&x, &atomic, &noise, &cfg).unwrap().kl[0];
    let mc = model.loss_any(&x, &any, &noise, &cfg).unwrap().kl[0];
    // Per-row standard errors, recomputed from the shared noise.
    let q = model.encode_values(&x, 3).unwrap();
    let p = model.priors(conceptual_vae::sprite::Domain::Colour).unwrap()[0];
    let m = GaussianMixture::new(vec![p]).unwrap();
    let se2: f64 = q
        .iter()
        .enumerate()
        .map(|(i, qi)| {
            let eps = &noise.mixture[0][i * cfg.mc_samples..(i + 1) * cfg.mc_samples];
            conceptual_vae::gaussian::kl_mc_mixture_with_noise(&qi.marginal(0), &m, eps).std_error.powi(2)
        })
        .sum();
    let se = se2.sqrt() / 3.0;
    assert!((mc - exact).abs() <= 3.0 * se + 1e-12, "{mc} vs {exact} (se {se})");
}
