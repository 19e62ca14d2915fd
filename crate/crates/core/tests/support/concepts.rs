//! Fuzzy-concept algebra checked against closed-form oracles.

use conceptual_vae::concept::{
    check_log_concave, crisp_indicator, factored_density, integrate_box, normalize_density, pointwise_product,
    product_concept, rainbow_anchors, rainbow_concept, BoxRegion, ConceptualSpace, FuzzyConcept, GaussianConcept,
    Region,
};
use conceptual_vae::gaussian::Gaussian1d;
use conceptual_vae::sprite::{ConceptLabel, DatasetConfig};
use conceptual_vae::vae::ConceptualPriors;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIPLES: usize = 10_000;

fn table_priors() -> ConceptualPriors {
    let t = |v: [(f64, f64); 3]| v.iter().map(|&(m, l)| Gaussian1d::new(m, l)).collect();
    ConceptualPriors::new(
        DatasetConfig::main().vocabulary(),
        [
            t([(0.83, -3.56), (-0.08, -4.31), (-0.77, -4.23)]),
            t([(-0.93, -3.01), (-0.20, -3.62), (0.56, -2.82)]),
            t([(0.64, -4.91), (-0.49, -5.31), (0.09, -5.08)]),
            t([(-0.81, -2.37), (0.04, -3.33), (1.07, -1.82)]),
        ],
    )
    .unwrap()
}

fn space4() -> ConceptualSpace {
    ConceptualSpace::intervals(&[("colour", -3.0, 3.0), ("size", -3.0, 3.0), ("shape", -3.0, 3.0), ("position", -3.0, 3.0)])
        .unwrap()
}

pub fn product_of_gaussians_equals_joint_gaussian() {
    let priors = table_priors();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..50 {
        let label = ConceptLabel::atoms(trial % 3, (trial / 3) % 3, (trial / 9) % 3, trial % 2);
        let fd = factored_density(&label, &priors).unwrap();
        let factors: Vec<FuzzyConcept> = fd
            .factors()
            .iter()
            .map(|g| FuzzyConcept::gaussian(GaussianConcept::diagonal(vec![g.mean], vec![g.variance()]).unwrap()))
            .collect();
        let product = product_concept(&space4(), factors).unwrap();
        let joint = GaussianConcept::diagonal(
            fd.factors().iter().map(|g| g.mean).collect(),
            fd.factors().iter().map(|g| g.variance()).collect(),
        )
        .unwrap();
        for _ in 0..20 {
            let z: Vec<f64> = fd.peak().iter().map(|m| m + rng.random_range(-0.5..0.5)).collect();
            let (a, b) = (product.eval(&z).unwrap(), joint.eval(&z));
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
        let kp = normalize_density(&product, None).unwrap().kappa();
        assert!((kp - joint.kappa()).abs() <= 1e-12 * joint.kappa());
    }
}

pub fn quadrature_normalisation_integrates_to_one() {
    let g = GaussianConcept::full(vec![0.3, -0.2], &[0.5, 0.2, 0.2, 0.3]).unwrap();
    let c = FuzzyConcept::gaussian(g.clone());
    let support = BoxRegion::new(vec![-5.0, -5.0], vec![5.0, 5.0]).unwrap();
    let density = normalize_density(&c, None).unwrap();
    let mass = integrate_box(&|z| density.eval(z).unwrap(), &support);
    assert!((mass - 1.0).abs() <= 1e-3, "mass {mass}");

    // The same concept routed through quadrature.
    let wrapped = FuzzyConcept::custom(2, "wrapped", move |z| g.eval(z));
    let numeric = normalize_density(&wrapped, Some(&support)).unwrap();
    assert!((numeric.kappa() / density.kappa() - 1.0).abs() <= 1e-3);
    let mass = integrate_box(&|z| numeric.eval(z).unwrap(), &support);
    assert!((mass - 1.0).abs() <= 1e-3, "mass {mass}");

    // A crisp convex disc: kappa equals its area.
    let disc = crisp_indicator(Region::predicate(
        BoxRegion::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(),
        |z| z[0] * z[0] + z[1] * z[1] <= 1.0,
    ))
    .unwrap();
    let k = normalize_density(&disc, None).unwrap().kappa();
    assert!((k / std::f64::consts::PI - 1.0).abs() <= 1e-3, "disc area {k}");
}

pub fn pointwise_product_completes_the_square() {
    let a = FuzzyConcept::gaussian(GaussianConcept::diagonal(vec![0.0], vec![1.0]).unwrap());
    let b = FuzzyConcept::gaussian(GaussianConcept::diagonal(vec![2.0], vec![1.0]).unwrap());
    let prod = pointwise_product(a, b).unwrap();
    // N(0,1) N(2,1) is proportional to N(1, 1/2), with peak value e^{-1} at z = 1.
    let oracle = GaussianConcept::diagonal(vec![1.0], vec![0.5]).unwrap();
    let peak = prod.eval(&[1.0]).unwrap();
    assert!((peak - (-1.0f64).exp()).abs() <= 1e-12);
    for i in 0..=200 {
        let z = -4.0 + 0.04 * i as f64;
        let v = prod.eval(&[z]).unwrap() / peak;
        assert!((v - oracle.eval(&[z])).abs() <= 1e-9, "z = {z}");
    }
}

pub fn constructor_built_concepts_are_log_concave() {
    let unit2 = BoxRegion::new(vec![-3.0, -3.0], vec![3.0, 3.0]).unwrap();
    let rainbow_box = BoxRegion::new(vec![-0.5, -0.5], vec![1.5, 1.5]).unwrap();
    let g2 = GaussianConcept::full(vec![0.5, -0.5], &[1.0, -0.6, -0.6, 0.8]).unwrap();
    let fd = factored_density(&ConceptLabel::atoms(0, 1, 2, 0), &table_priors()).unwrap();
    let cases: Vec<(&str, FuzzyConcept, BoxRegion)> = vec![
        ("crisp box", crisp_indicator(Region::Box(BoxRegion::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap())).unwrap(), unit2.clone()),
        (
            "crisp disc",
            crisp_indicator(Region::predicate(unit2.clone(), |z| z[0].hypot(z[1]) <= 2.0)).unwrap(),
            unit2.clone(),
        ),
        ("diagonal gaussian", FuzzyConcept::gaussian(GaussianConcept::diagonal(vec![0.0, 1.0], vec![0.3, 2.0]).unwrap()), unit2.clone()),
        ("full gaussian", FuzzyConcept::gaussian(g2.clone()), unit2.clone()),
        (
            "pointwise product",
            pointwise_product(
                FuzzyConcept::gaussian(g2),
                crisp_indicator(Region::Box(BoxRegion::new(vec![-2.0, -2.0], vec![2.0, 1.0]).unwrap())).unwrap(),
            )
            .unwrap(),
            unit2,
        ),
        ("factored prior", fd.concept(), BoxRegion::new(vec![-2.0; 4], vec![2.0; 4]).unwrap()),
        ("rainbow", rainbow_concept(&rainbow_anchors()).unwrap(), rainbow_box),
    ];
    for (i, (name, c, space)) in cases.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let r = check_log_concave(c, space, TRIPLES, &mut rng).unwrap();
        assert!(r.passed(), "{name}: {:?}", r.counterexample);
        assert_eq!(r.triples, TRIPLES);
    }
}

pub fn non_convex_crisp_regions_are_rejected() {
    let ring = Region::predicate(BoxRegion::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap(), |z| {
        let r = z[0].hypot(z[1]);
        (1.0..=2.0).contains(&r)
    });
    assert!(crisp_indicator(ring).is_err());
}
