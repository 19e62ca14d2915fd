//! Property tests for invariants that hold for all inputs.

use conceptual_vae::analysis::{hue_bin, read_ppm, silhouette_1d, write_ppm, Raster};
use conceptual_vae::classifier::classify_posterior;
use conceptual_vae::gaussian::{DiagGaussian, Gaussian1d};
use conceptual_vae::sprite::{generate_dataset, ConceptLabel, DatasetConfig, Domain, Slot};
use conceptual_vae::tensor::{ops, read_checkpoint, write_checkpoint, Checkpoint, Tensor};
use conceptual_vae::vae::{ArchConfig, ConceptualPriors, LossConfig, Model, ModelKind, Noise};
use proptest::prelude::*;

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    lo..hi
}

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0..2.0f64, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kl_is_nonnegative_and_zero_on_the_diagonal(
        qm in finite(-3.0, 3.0), ql in finite(-6.0, 2.0), pm in finite(-3.0, 3.0), pl in finite(-6.0, 2.0)
    ) {
        let q = Gaussian1d::new(qm, ql);
        let p = Gaussian1d::new(pm, pl);
        prop_assert!(q.kl(&p) >= -1e-12);
        prop_assert!(q.kl(&q).abs() <= 1e-12);
    }

    #[test]
    fn deconv_is_the_adjoint_of_conv(
        (x, k, y) in (1usize..3, 1usize..4, 1usize..4, 1usize..3).prop_flat_map(|(n, side, cin, cout)| {
            let s = 2 * side;
            (tensor(vec![n, s, s, cin]), tensor(vec![4, 4, cin, cout]), tensor(vec![n, side, side, cout]))
        })
    ) {
        let cx = ops::conv2d(&x, &k, 2, 1).unwrap();
        let dy = ops::deconv2d(&y, &k, 2, 1).unwrap();
        let (lhs, rhs) = (dot(&cx, &y), dot(&x, &dy));
        prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()), "{lhs} vs {rhs}");
    }

    #[test]
    fn reshape_preserves_values(data in prop::collection::vec(-1.0..1.0f64, 24)) {
        let t = Tensor::new(vec![2, 3, 4], data.clone()).unwrap();
        let r = t.reshape(&[6, 4]).unwrap();
        prop_assert_eq!(r.data(), &data[..]);
        prop_assert!(Tensor::new(vec![5, 5], data).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(values in prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 1..40), meta in "[a-z =\n]{0,40}") {
        let ckpt = Checkpoint {
            tensors: vec![("w".into(), Tensor::from_vec(values))],
            metadata: meta,
        };
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &ckpt).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        prop_assert_eq!(&back.metadata, &ckpt.metadata);
        let bits = |c: &Checkpoint| c.tensors[0].1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&ckpt));
    }

    #[test]
    fn classifier_decisions_factorise_over_dimensions(
        means in prop::collection::vec(-2.0..2.0f64, 6),
        logvars in prop::collection::vec(-5.0..1.0f64, 6),
        other in prop::collection::vec(-2.0..2.0f64, 6),
    ) {
        let vocab = DatasetConfig::main().vocabulary();
        let t = |o: f64| vec![Gaussian1d::new(-1.0 + o, -2.0), Gaussian1d::new(o, -3.0), Gaussian1d::new(1.0 + o, -1.0)];
        let priors = ConceptualPriors::new(vocab, [t(0.0), t(0.1), t(-0.1), t(0.2)]).unwrap();
        let q = DiagGaussian::new(means.clone(), logvars.clone()).unwrap();
        let base = classify_posterior(&q, &priors).unwrap();
        // Changing every dimension except d leaves the decision for d unchanged.
        for d in 0..4 {
            let mut m2 = other.clone();
            m2[d] = means[d];
            let mut l2 = vec![0.0; 6];
            l2[d] = logvars[d];
            let r = classify_posterior(&DiagGaussian::new(m2, l2).unwrap(), &priors).unwrap();
            prop_assert_eq!(r.domains[d].label, base.domains[d].label);
        }
    }

    #[test]
    fn silhouette_is_bounded(values in prop::collection::vec(-5.0..5.0f64, 4..40), seed in any::<u64>()) {
        let groups: Vec<usize> = (0..values.len()).map(|i| ((seed >> (i % 60)) as usize + i) % 3).collect();
        if let Ok(s) = silhouette_1d(&values, &groups) {
            prop_assert!((-1.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn ppm_round_trip(w in 1usize..6, h in 1usize..6, seed in any::<u8>()) {
        let pixels = (0..w * h * 3).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let r = Raster::new(w, h, pixels).unwrap();
        let mut buf = Vec::new();
        write_ppm(&mut buf, &r).unwrap();
        prop_assert_eq!(read_ppm(buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn hue_bins_are_in_range(h in -3.0..3.0f64, bins in 1usize..40) {
        prop_assert!(hue_bin(h, bins) < bins);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn sampled_attributes_fall_inside_their_label_ranges(seed in any::<u64>(), rainbow in any::<bool>()) {
        let base = if rainbow { DatasetConfig::rainbow() } else { DatasetConfig::main() };
        let config = DatasetConfig { image_size: 16, train: 40, dev: 10, test: 10, seed, ..base };
        let ds = generate_dataset(&config).unwrap();
        for inst in ds.train.instances.iter().chain(&ds.dev.instances) {
            let ConceptLabel { slots: [Slot::Atom(c), Slot::Atom(s), Slot::Atom(k), Slot::Atom(p)] } = inst.label else {
                panic!("unexpected ANY label");
            };
            prop_assert!(config.colours[c].contains_circular(inst.spec.hue));
            prop_assert!(config.sizes[s].contains(inst.spec.scale));
            prop_assert_eq!(config.shapes[k], inst.spec.shape);
            prop_assert!(config.positions[p].contains(inst.spec.vpos));
            prop_assert_eq!(config.label_of_spec(&inst.spec), inst.label);
        }
    }

    #[test]
    fn loss_total_is_reconstruction_plus_weighted_kl(seed in any::<u64>(), atomic_w in 0.1..4.0f64, any_w in 0.1..4.0f64) {
        let vocab = DatasetConfig::main().vocabulary();
        let model = Model::new(ModelKind::Conceptual, ArchConfig::miniature(), vocab, seed).unwrap();
        let n = 4;
        let s = model.arch().image_size;
        let x: Vec<f64> = (0..n * s * s * 3).map(|i| ((i as u64).wrapping_mul(seed | 1) % 97) as f64 / 97.0).collect();
        let labels: Vec<ConceptLabel> = (0..n)
            .map(|i| {
                let mut l = ConceptLabel::atoms(i % 3, (i + 1) % 3, (i + 2) % 3, i % 3);
                if i % 2 == 1 {
                    l.slots[Domain::Shape.index()] = Slot::Any;
                }
                l
            })
            .collect();
        let mut cfg = LossConfig { mc_samples: 8, ..LossConfig::default() };
        cfg.weights.atomic = atomic_w;
        cfg.weights.any = any_w;
        let noise = Noise::sample(n, model.latent_dim(), Some(&labels), cfg.mc_samples, seed);
        let loss = model.loss_any(&x, &labels, &noise, &cfg).unwrap();
        let sum = loss.reconstruction + loss.weighted_kl.iter().sum::<f64>();
        prop_assert!((loss.total - sum).abs() <= 1e-12 * loss.total.abs().max(1.0), "{} vs {sum}", loss.total);

        // Slack-dimension KL does not depend on the labels.
        let other: Vec<ConceptLabel> = labels.iter().map(|_| ConceptLabel::atoms(2, 2, 2, 2)).collect();
        let l2 = model.loss_conceptual(&x, &other, &noise, &cfg).unwrap();
        for j in 4..model.latent_dim() {
            prop_assert!((l2.kl[j] - loss.kl[j]).abs() <= 1e-12);
        }
    }
}
