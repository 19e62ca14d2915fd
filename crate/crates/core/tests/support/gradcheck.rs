//! Reverse-mode gradients against central finite differences.

use conceptual_vae::sprite::{ConceptLabel, DatasetConfig, Slot};
use conceptual_vae::tensor::{Graph, NodeId, ParamStore, Tensor};
use conceptual_vae::vae::{ArchConfig, LossConfig, Model, ModelKind, Noise};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const OP_TOL: f64 = 1e-4;
const MODEL_TOL: f64 = 1e-3;
const H: f64 = 1e-6;

fn randn(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, with a floor for all-zero gradients.
fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&diff) / norm(a).max(norm(b)).max(1e-8)
}

type Build = dyn Fn(&mut Graph, &[NodeId], &mut ChaCha8Rng) -> NodeId;

/// Contracts a non-scalar node with a fixed random tensor so every output
/// entry contributes to the loss.
fn project(g: &mut Graph, x: NodeId, rng: &mut ChaCha8Rng) -> NodeId {
    let w = randn(rng, &g.value(x).shape().to_vec(), 1.0);
    let w = g.constant(w);
    let p = g.mul(x, w).unwrap();
    g.sum(p)
}

struct Case {
    name: &'static str,
    params: Vec<(Vec<usize>, f64)>,
    build: Box<Build>,
}

fn cases() -> Vec<Case> {
    let case = |name, params: Vec<(Vec<usize>, f64)>, build: Box<Build>| Case { name, params, build };
    vec![
        case(
            "conv2d",
            vec![(vec![2, 6, 6, 2], 1.0), (vec![4, 4, 2, 3], 0.5)],
            Box::new(|g, p, r| {
                let y = g.conv2d(p[0], p[1], 2, 1).unwrap();
                project(g, y, r)
            }),
        ),
        case(
            "deconv2d",
            vec![(vec![2, 3, 3, 3], 1.0), (vec![4, 4, 2, 3], 0.5)],
            Box::new(|g, p, r| {
                let y = g.deconv2d(p[0], p[1], 2, 1).unwrap();
                project(g, y, r)
            }),
        ),
        case(
            "dense",
            vec![(vec![3, 4], 1.0), (vec![4, 5], 0.5), (vec![5], 0.5)],
            Box::new(|g, p, r| {
                let y = g.dense(p[0], p[1], p[2]).unwrap();
                project(g, y, r)
            }),
        ),
        case(
            "bias_add",
            vec![(vec![2, 3, 3, 4], 1.0), (vec![4], 1.0)],
            Box::new(|g, p, r| {
                let y = g.bias_add(p[0], p[1]).unwrap();
                project(g, y, r)
            }),
        ),
        case(
            "relu",
            vec![(vec![4, 5], 1.0)],
            Box::new(|g, p, r| {
                let y = g.relu(p[0]);
                project(g, y, r)
            }),
        ),
        case(
            "sigmoid",
            vec![(vec![4, 5], 2.0)],
            Box::new(|g, p, r| {
                let y = g.sigmoid(p[0]);
                project(g, y, r)
            }),
        ),
        case(
            "exp",
            vec![(vec![6], 1.0)],
            Box::new(|g, p, r| {
                let y = g.exp(p[0]);
                project(g, y, r)
            }),
        ),
        case(
            "add_sub_mul",
            vec![(vec![3, 4], 1.0), (vec![3, 4], 1.0)],
            Box::new(|g, p, r| {
                let a = g.add(p[0], p[1]).unwrap();
                let s = g.sub(p[0], p[1]).unwrap();
                let m = g.mul(a, s).unwrap();
                project(g, m, r)
            }),
        ),
        case(
            "scale_mean",
            vec![(vec![7], 1.0)],
            Box::new(|g, p, _| {
                let s = g.scale(p[0], -2.5);
                let sq = g.mul(s, p[0]).unwrap();
                g.mean(sq)
            }),
        ),
        case(
            "mse",
            vec![(vec![2, 3, 3], 1.0), (vec![2, 3, 3], 1.0)],
            Box::new(|g, p, _| g.mse(p[0], p[1]).unwrap()),
        ),
        case(
            "reshape_columns",
            vec![(vec![2, 3, 4], 1.0)],
            Box::new(|g, p, r| {
                let m = g.reshape(p[0], &[2, 12]).unwrap();
                let c = g.columns(m, 3, 5).unwrap();
                project(g, c, r)
            }),
        ),
        case(
            "select_rows_gather",
            vec![(vec![5, 3], 1.0), (vec![4], 1.0)],
            Box::new(|g, p, r| {
                let rows = g.select_rows(p[0], &[4, 0, 4, 2]).unwrap();
                let t = g.gather(p[1], &[3, 3, 0, 1, 2, 0]).unwrap();
                let a = project(g, rows, r);
                let b = project(g, t, r);
                g.add(a, b).unwrap()
            }),
        ),
        case(
            "reparam",
            vec![(vec![3, 2], 1.0), (vec![3, 2], 0.5)],
            Box::new(|g, p, r| {
                let eps = (0..6).map(|_| r.sample(StandardNormal)).collect();
                let z = g.reparam(p[0], p[1], eps).unwrap();
                project(g, z, r)
            }),
        ),
        case(
            "gaussian_kl",
            vec![(vec![5], 1.0), (vec![5], 0.5), (vec![5], 1.0), (vec![5], 0.5)],
            Box::new(|g, p, _| {
                let k = g.gaussian_kl(p[0], p[1], p[2], p[3]).unwrap();
                g.sum(k)
            }),
        ),
        case(
            "mixture_kl_mc",
            vec![(vec![3], 1.0), (vec![3], 0.5), (vec![3], 1.0), (vec![3], 0.5)],
            Box::new(|g, p, r| {
                let eps = (0..3 * 20).map(|_| r.sample(StandardNormal)).collect();
                let k = g.mixture_kl_mc(p[0], p[1], p[2], p[3], eps, 20).unwrap();
                project(g, k, r)
            }),
        ),
        case(
            "conv_stack",
            vec![(vec![1, 8, 8, 3], 1.0), (vec![4, 4, 3, 2], 0.4), (vec![2], 0.3), (vec![4, 4, 3, 2], 0.4)],
            Box::new(|g, p, r| {
                let h = g.conv2d(p[0], p[1], 2, 1).unwrap();
                let h = g.bias_add(h, p[2]).unwrap();
                let h = g.sigmoid(h);
                let y = g.deconv2d(h, p[3], 2, 1).unwrap();
                let y = g.sigmoid(y);
                let t = randn(r, &[1, 8, 8, 3], 0.3);
                let t = g.constant(t);
                g.mse(y, t).unwrap()
            }),
        ),
    ]
}

/// Builds the graph with fresh noise from `seed`, returning the loss and
/// optionally the parameter gradients.
fn run(case: &Case, store: &ParamStore, seed: u64, grads: bool) -> (f64, Vec<Tensor>) {
    let mut g = Graph::new();
    let ids: Vec<NodeId> = store.ids().map(|id| g.param(store, id)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let loss = (case.build)(&mut g, &ids, &mut rng);
    let value = g.value(loss).data()[0];
    if !grads {
        return (value, Vec::new());
    }
    g.backward(loss).unwrap();
    (value, g.param_grads(store))
}

fn numeric_grads(case: &Case, store: &ParamStore, seed: u64) -> Vec<Tensor> {
    let mut work = store.clone();
    let ids: Vec<_> = store.ids().collect();
    ids.iter()
        .map(|&id| {
            let mut out = store.get(id).clone();
            for k in 0..out.numel() {
                let orig = work.get(id).data()[k];
                work.get_mut(id).data_mut()[k] = orig + H;
                let plus = run(case, &work, seed, false).0;
                work.get_mut(id).data_mut()[k] = orig - H;
                let minus = run(case, &work, seed, false).0;
                work.get_mut(id).data_mut()[k] = orig;
                out.data_mut()[k] = (plus - minus) / (2.0 * H);
            }
            out
        })
        .collect()
}

pub fn hundred_random_micro_graphs_match_finite_differences() {
    let cases = cases();
    let mut worst = (0.0, "");
    for trial in 0..100u64 {
        let case = &cases[trial as usize % cases.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let mut store = ParamStore::new();
        for (i, (shape, scale)) in case.params.iter().enumerate() {
            store.insert(format!("p{i}"), randn(&mut rng, shape, *scale));
        }
        let seed = rng.random();
        let analytic = run(case, &store, seed, true).1;
        let numeric = numeric_grads(case, &store, seed);
        let a: Vec<f64> = analytic.iter().flat_map(|t| t.data().to_vec()).collect();
        let n: Vec<f64> = numeric.iter().flat_map(|t| t.data().to_vec()).collect();
        let err = rel_err(&a, &n);
        assert!(err <= OP_TOL, "{} (trial {trial}): relative error {err:e}", case.name);
        if err > worst.0 {
            worst = (err, case.name);
        }
    }
    eprintln!("worst micro-graph relative error {:e} ({})", worst.0, worst.1);
}

fn mini_setup() -> (Model, Vec<f64>, Vec<ConceptLabel>, Noise, LossConfig) {
    let vocab = DatasetConfig::main().vocabulary();
    let model = Model::new(ModelKind::Conceptual, ArchConfig::miniature(), vocab, 5).unwrap();
    let s = model.arch().image_size;
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x: Vec<f64> = (0..n * s * s * 3).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels = vec![
        ConceptLabel::atoms(0, 1, 2, 0),
        ConceptLabel { slots: [Slot::Any, Slot::Atom(2), Slot::Any, Slot::Atom(1)] },
        ConceptLabel::atoms(2, 0, 1, 2),
    ];
    let cfg = LossConfig { mc_samples: 16, ..LossConfig::default() };
    let noise = Noise::sample(n, model.latent_dim(), Some(&labels), cfg.mc_samples, 7);
    (model, x, labels, noise, cfg)
}

pub fn miniature_vae_loss_gradient_matches_finite_differences() {
    let (model, x, labels, noise, cfg) = mini_setup();
    let n = labels.len();
    let (_, grads) = model.loss_and_grads(&x, n, Some(&labels), &noise, &cfg).unwrap();
    let mut work = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut a, mut num) = (Vec::new(), Vec::new());
    let ids: Vec<_> = model.params().ids().collect();
    for &id in &ids {
        let len = model.params().get(id).numel();
        // Every prior entry, and a sample of the network weights.
        let picks: Vec<usize> = if model.params().name(id).starts_with("prior.") {
            (0..len).collect()
        } else {
            (0..len.min(4)).map(|_| rng.random_range(0..len)).collect()
        };
        for k in picks {
            let orig = work.params().get(id).data()[k];
            let mut eval = |v: f64| {
                work.params_mut().get_mut(id).data_mut()[k] = v;
                work.loss_any(&x, &labels, &noise, &cfg).unwrap().total
            };
            let d = (eval(orig + H) - eval(orig - H)) / (2.0 * H);
            work.params_mut().get_mut(id).data_mut()[k] = orig;
            a.push(grads[id.index()].data()[k]);
            num.push(d);
        }
    }
    let err = rel_err(&a, &num);
    eprintln!("miniature VAE relative gradient error {err:e} over {} entries", a.len());
    assert!(err <= MODEL_TOL, "relative error {err:e}");
}

pub fn vanilla_miniature_gradient_matches_finite_differences() {
    let (_, x, labels, _, cfg) = mini_setup();
    let vocab = DatasetConfig::main().vocabulary();
    let model = Model::new(ModelKind::Vanilla, ArchConfig::miniature(), vocab, 9).unwrap();
    let n = labels.len();
    let noise = Noise::sample(n, model.latent_dim(), None, 1, 10);
    let (_, grads) = model.loss_and_grads(&x, n, None, &noise, &cfg).unwrap();
    let mut work = model.clone();
    let (mut a, mut num) = (Vec::new(), Vec::new());
    for id in model.params().ids() {
        let k = model.params().get(id).numel() / 2;
        let orig = work.params().get(id).data()[k];
        let mut eval = |v: f64| {
            work.params_mut().get_mut(id).data_mut()[k] = v;
            work.loss_vanilla(&x, n, &noise, &cfg).unwrap().total
        };
        let d = (eval(orig + H) - eval(orig - H)) / (2.0 * H);
        work.params_mut().get_mut(id).data_mut()[k] = orig;
        a.push(grads[id.index()].data()[k]);
        num.push(d);
    }
    let err = rel_err(&a, &num);
    assert!(err <= MODEL_TOL, "relative error {err:e}");
}
