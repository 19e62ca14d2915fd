//! Define-by-run reverse-mode differentiation.
//!
//! Every builder method evaluates its op immediately and appends a node whose
//! inputs all precede it, so node order is a topological order and
//! [`Graph::backward`] is a single reverse sweep.

use super::ops::{self, col2im, gemm, im2col, ConvGeometry};
use super::{ParamId, ParamStore, Result, Tensor, TensorError};
use crate::gaussian::{kl_1d, HALF_LN_2PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        geom: ConvGeometry,
        cols: Vec<f64>,
    },
    Deconv2d {
        input: NodeId,
        kernel: NodeId,
        geom: ConvGeometry,
    },
    Dense {
        input: NodeId,
        weights: NodeId,
        bias: NodeId,
    },
    BiasAdd {
        input: NodeId,
        bias: NodeId,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Sum(NodeId),
    Mean(NodeId),
    Mse(NodeId, NodeId),
    Reshape(NodeId),
    Columns {
        input: NodeId,
        start: usize,
    },
    SelectRows {
        input: NodeId,
        rows: Vec<usize>,
    },
    Gather {
        table: NodeId,
        index: Vec<usize>,
    },
    Reparam {
        mean: NodeId,
        logvar: NodeId,
        eps: Vec<f64>,
    },
    GaussianKl {
        q_mean: NodeId,
        q_logvar: NodeId,
        p_mean: NodeId,
        p_logvar: NodeId,
    },
    MixtureKl {
        q_mean: NodeId,
        q_logvar: NodeId,
        means: NodeId,
        logvars: NodeId,
        eps: Vec<f64>,
        samples: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Gradient of the last `backward` loss with respect to `id`; zero for
    /// nodes the loss does not depend on (including constants).
    pub fn grad(&self, id: NodeId) -> Tensor {
        let node = &self.nodes[id.0];
        match &node.grad {
            Some(g) => Tensor::from_parts(node.value.shape().to_vec(), g.clone()),
            None => Tensor::zeros(node.value.shape()),
        }
    }

    /// Gradients for every parameter in `store`, summed over all nodes that
    /// reference the same parameter. Unused parameters get zeros.
    pub fn param_grads(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut grads: Vec<Tensor> = store.ids().map(|id| Tensor::zeros(store.get(id).shape())).collect();
        for node in &self.nodes {
            if let (Op::Param(pid), Some(g)) = (&node.op, &node.grad) {
                for (acc, v) in grads[pid.0].data_mut().iter_mut().zip(g) {
                    *acc += v;
                }
            }
        }
        grads
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = match op {
            Op::Param(_) => true,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn same_shape(&self, a: NodeId, b: NodeId) -> Result<()> {
        self.value(b).expect_shape(self.value(a).shape())
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Constant, &[])
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        self.push(store.get(id).clone(), Op::Param(id), &[])
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let (out, cols, geom) = ops::conv2d_with_cols(self.value(input), self.value(kernel), stride, padding)?;
        let cols = if self.nodes[kernel.0].requires_grad { cols } else { Vec::new() };
        Ok(self.push(out, Op::Conv2d { input, kernel, geom, cols }, &[input, kernel]))
    }

    pub fn deconv2d(&mut self, input: NodeId, kernel: NodeId, stride: usize, padding: usize) -> Result<NodeId> {
        let (out, geom) = ops::deconv2d_with_geometry(self.value(input), self.value(kernel), stride, padding)?;
        Ok(self.push(out, Op::Deconv2d { input, kernel, geom }, &[input, kernel]))
    }

    pub fn dense(&mut self, input: NodeId, weights: NodeId, bias: NodeId) -> Result<NodeId> {
        let out = ops::dense(self.value(input), self.value(weights), self.value(bias))?;
        Ok(self.push(out, Op::Dense { input, weights, bias }, &[input, weights, bias]))
    }

    /// Adds a per-channel bias along the last axis.
    pub fn bias_add(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let (x, b) = (self.value(input), self.value(bias));
        let c = *x.shape().last().ok_or_else(|| TensorError::Dimension("bias_add on a scalar".into()))?;
        b.expect_shape(&[c])?;
        let data = x
            .data()
            .chunks_exact(c)
            .flat_map(|row| row.iter().zip(b.data()).map(|(v, d)| v + d))
            .collect();
        let out = Tensor::from_parts(x.shape().to_vec(), data);
        Ok(self.push(out, Op::BiasAdd { input, bias }, &[input, bias]))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = ops::relu(self.value(x));
        self.push(out, Op::Relu(x), &[x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = ops::sigmoid(self.value(x));
        self.push(out, Op::Sigmoid(x), &[x])
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let out = ops::map(self.value(x), f64::exp);
        self.push(out, Op::Exp(x), &[x])
    }

    fn zip_with(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.same_shape(a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok(Tensor::from_parts(ta.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip_with(a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip_with(a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let out = self.zip_with(a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let out = ops::map(self.value(x), |v| v * factor);
        self.push(out, Op::Scale(x, factor), &[x])
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let t = self.value(x);
        let m = t.data().iter().sum::<f64>() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        let m = ops::mse(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(m), Op::Mse(pred, target), &[pred, target]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let out = self.value(x).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Columns `start..start+len` of a `[rows, width]` matrix.
    pub fn columns(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let t = self.value(x);
        let [rows, width] = *t.shape() else {
            return Err(TensorError::Dimension(format!("columns expects a matrix, got {:?}", t.shape())));
        };
        if len == 0 || start + len > width {
            return Err(TensorError::Dimension(format!(
                "columns {start}..{} out of range for width {width}",
                start + len
            )));
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&t.data()[r * width + start..r * width + start + len]);
        }
        Ok(self.push(Tensor::from_parts(vec![rows, len], data), Op::Columns { input: x, start }, &[x]))
    }

    /// Rows of the leading axis, in the given order.
    pub fn select_rows(&mut self, x: NodeId, rows: &[usize]) -> Result<NodeId> {
        let t = self.value(x);
        let lead = *t.shape().first().ok_or_else(|| TensorError::Dimension("select_rows on a scalar".into()))?;
        if rows.is_empty() || rows.iter().any(|&r| r >= lead) {
            return Err(TensorError::Dimension(format!("row selection {rows:?} invalid for {lead} rows")));
        }
        let width = t.numel() / lead;
        let mut data = Vec::with_capacity(rows.len() * width);
        for &r in rows {
            data.extend_from_slice(&t.data()[r * width..(r + 1) * width]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = rows.len();
        let out = Tensor::from_parts(shape, data);
        Ok(self.push(out, Op::SelectRows { input: x, rows: rows.to_vec() }, &[x]))
    }

    /// `out[i] = table[index[i]]` for a one-dimensional table.
    pub fn gather(&mut self, table: NodeId, index: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        let [len] = *t.shape() else {
            return Err(TensorError::Dimension(format!("gather expects a vector table, got {:?}", t.shape())));
        };
        if index.is_empty() || index.iter().any(|&i| i >= len) {
            return Err(TensorError::Dimension(format!("gather index {index:?} invalid for table of {len}")));
        }
        let out = Tensor::from_vec(index.iter().map(|&i| t.data()[i]).collect());
        Ok(self.push(out, Op::Gather { table, index: index.to_vec() }, &[table]))
    }

    /// Reparametrised sample `mean + exp(logvar / 2) * eps` with frozen noise.
    pub fn reparam(&mut self, mean: NodeId, logvar: NodeId, eps: Vec<f64>) -> Result<NodeId> {
        self.same_shape(mean, logvar)?;
        if eps.len() != self.value(mean).numel() {
            return Err(TensorError::Dimension(format!(
                "noise has {} values for {} latent entries",
                eps.len(),
                self.value(mean).numel()
            )));
        }
        let (m, lv) = (self.value(mean), self.value(logvar));
        let data = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(&eps)
            .map(|((&mu, &l), &e)| mu + (0.5 * l).exp() * e)
            .collect();
        let out = Tensor::from_parts(m.shape().to_vec(), data);
        Ok(self.push(out, Op::Reparam { mean, logvar, eps }, &[mean, logvar]))
    }

    /// Elementwise `KL(N(q_mean, e^q_logvar) || N(p_mean, e^p_logvar))`.
    pub fn gaussian_kl(&mut self, q_mean: NodeId, q_logvar: NodeId, p_mean: NodeId, p_logvar: NodeId) -> Result<NodeId> {
        for other in [q_logvar, p_mean, p_logvar] {
            self.same_shape(q_mean, other)?;
        }
        let n = self.value(q_mean).numel();
        let data = (0..n)
            .map(|i| {
                kl_1d(
                    self.value(q_mean).data()[i],
                    self.value(q_logvar).data()[i],
                    self.value(p_mean).data()[i],
                    self.value(p_logvar).data()[i],
                )
            })
            .collect();
        let out = Tensor::from_parts(self.value(q_mean).shape().to_vec(), data);
        Ok(self.push(
            out,
            Op::GaussianKl { q_mean, q_logvar, p_mean, p_logvar },
            &[q_mean, q_logvar, p_mean, p_logvar],
        ))
    }

    /// Per-row Monte-Carlo estimate of `KL(q_i || m)` where `m` is the
    /// equal-weight mixture of the 1-D Gaussians `(means[k], logvars[k])`.
    ///
    /// `eps` holds `samples` standard-normal draws per row (row-major); the
    /// samples are pushed through the reparametrisation so the estimate is
    /// differentiable in both `q` and the mixture components.
    pub fn mixture_kl_mc(
        &mut self,
        q_mean: NodeId,
        q_logvar: NodeId,
        means: NodeId,
        logvars: NodeId,
        eps: Vec<f64>,
        samples: usize,
    ) -> Result<NodeId> {
        self.same_shape(q_mean, q_logvar)?;
        self.same_shape(means, logvars)?;
        let [rows] = *self.value(q_mean).shape() else {
            return Err(TensorError::Dimension("mixture KL expects vector posteriors".into()));
        };
        if self.value(means).rank() != 1 {
            return Err(TensorError::Dimension("mixture components must be a vector".into()));
        }
        if samples == 0 || eps.len() != rows * samples {
            return Err(TensorError::Dimension(format!(
                "need {rows} x {samples} noise values (samples >= 1), got {}",
                eps.len()
            )));
        }
        let comps = Components::new(self.value(means).data(), self.value(logvars).data());
        let qm = self.value(q_mean).data();
        let ql = self.value(q_logvar).data();
        let data = (0..rows)
            .map(|i| {
                let sigma = (0.5 * ql[i]).exp();
                let noise = &eps[i * samples..(i + 1) * samples];
                let total: f64 = noise
                    .iter()
                    .map(|&e| {
                        let log_q = -HALF_LN_2PI - 0.5 * ql[i] - 0.5 * e * e;
                        log_q - comps.log_density(qm[i] + sigma * e)
                    })
                    .sum();
                total / samples as f64
            })
            .collect();
        let out = Tensor::from_vec(data);
        Ok(self.push(
            out,
            Op::MixtureKl { q_mean, q_logvar, means, logvars, eps, samples },
            &[q_mean, q_logvar, means, logvars],
        ))
    }

    /// Reverse sweep from a one-element `loss` node.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(shape));
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let contributions = self.vjp(i, &g);
            self.nodes[i].grad = Some(g);
            for (target, delta) in contributions {
                let node = &mut self.nodes[target.0];
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    None => node.grad = Some(delta),
                }
            }
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Vector-Jacobian products of node `i` for each input that needs one.
    fn vjp(&self, i: usize, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        let mut emit = |id: NodeId, f: &dyn Fn() -> Vec<f64>| {
            if self.wants(id) {
                out.push((id, f()));
            }
        };
        let val = |id: NodeId| self.value(id).data();
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::Conv2d { input, kernel, geom, cols } => {
                let patch = geom.kernel * geom.kernel * geom.in_c;
                let rows = geom.batch * geom.out_h * geom.out_w;
                emit(*kernel, &|| {
                    let mut dk = vec![0.0; patch * geom.out_c];
                    gemm(patch, rows, geom.out_c, cols, true, g, false, &mut dk, 0.0);
                    dk
                });
                emit(*input, &|| {
                    let mut dcols = vec![0.0; rows * patch];
                    gemm(rows, geom.out_c, patch, g, false, val(*kernel), true, &mut dcols, 0.0);
                    col2im(&dcols, geom)
                });
            }
            Op::Deconv2d { input, kernel, geom } => {
                let patch = geom.kernel * geom.kernel * geom.in_c;
                let rows = geom.batch * geom.out_h * geom.out_w;
                let dcols = im2col(g, geom);
                emit(*input, &|| {
                    let mut dx = vec![0.0; rows * geom.out_c];
                    gemm(rows, patch, geom.out_c, &dcols, false, val(*kernel), false, &mut dx, 0.0);
                    dx
                });
                emit(*kernel, &|| {
                    let mut dk = vec![0.0; patch * geom.out_c];
                    gemm(patch, rows, geom.out_c, &dcols, true, val(*input), false, &mut dk, 0.0);
                    dk
                });
            }
            Op::Dense { input, weights, bias } => {
                let (rows, n) = ops::dense_rows(self.value(*input)).expect("validated in forward");
                let m = self.value(*bias).numel();
                emit(*input, &|| {
                    let mut dx = vec![0.0; rows * n];
                    gemm(rows, m, n, g, false, val(*weights), true, &mut dx, 0.0);
                    dx
                });
                emit(*weights, &|| {
                    let mut dw = vec![0.0; n * m];
                    gemm(n, rows, m, val(*input), true, g, false, &mut dw, 0.0);
                    dw
                });
                emit(*bias, &|| {
                    let mut db = vec![0.0; m];
                    for row in g.chunks_exact(m) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    db
                });
            }
            Op::BiasAdd { input, bias } => {
                emit(*input, &|| g.to_vec());
                emit(*bias, &|| {
                    let c = self.value(*bias).numel();
                    let mut db = vec![0.0; c];
                    for row in g.chunks_exact(c) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    db
                });
            }
            Op::Relu(x) => emit(*x, &|| {
                val(*x).iter().zip(g).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect()
            }),
            Op::Sigmoid(x) => emit(*x, &|| {
                node.value.data().iter().zip(g).map(|(&y, &d)| d * y * (1.0 - y)).collect()
            }),
            Op::Exp(x) => emit(*x, &|| node.value.data().iter().zip(g).map(|(&y, &d)| d * y).collect()),
            Op::Add(a, b) => {
                emit(*a, &|| g.to_vec());
                emit(*b, &|| g.to_vec());
            }
            Op::Sub(a, b) => {
                emit(*a, &|| g.to_vec());
                emit(*b, &|| g.iter().map(|d| -d).collect());
            }
            Op::Mul(a, b) => {
                emit(*a, &|| g.iter().zip(val(*b)).map(|(d, v)| d * v).collect());
                emit(*b, &|| g.iter().zip(val(*a)).map(|(d, v)| d * v).collect());
            }
            Op::Scale(x, factor) => emit(*x, &|| g.iter().map(|d| d * factor).collect()),
            Op::Sum(x) => emit(*x, &|| vec![g[0]; self.value(*x).numel()]),
            Op::Mean(x) => emit(*x, &|| {
                let n = self.value(*x).numel();
                vec![g[0] / n as f64; n]
            }),
            Op::Mse(a, b) => {
                let n = self.value(*a).numel() as f64;
                let diff = || val(*a).iter().zip(val(*b)).map(move |(p, t)| 2.0 * (p - t) / n * g[0]);
                emit(*a, &|| diff().collect());
                emit(*b, &|| diff().map(|d| -d).collect());
            }
            Op::Reshape(x) => emit(*x, &|| g.to_vec()),
            Op::Columns { input, start } => emit(*input, &|| {
                let shape = self.value(*input).shape();
                let (rows, width) = (shape[0], shape[1]);
                let len = node.value.shape()[1];
                let mut dx = vec![0.0; rows * width];
                for r in 0..rows {
                    dx[r * width + start..r * width + start + len].copy_from_slice(&g[r * len..(r + 1) * len]);
                }
                dx
            }),
            Op::SelectRows { input, rows } => emit(*input, &|| {
                let src = self.value(*input);
                let width = src.numel() / src.shape()[0];
                let mut dx = vec![0.0; src.numel()];
                for (k, &r) in rows.iter().enumerate() {
                    dx[r * width..(r + 1) * width]
                        .iter_mut()
                        .zip(&g[k * width..(k + 1) * width])
                        .for_each(|(d, v)| *d += v);
                }
                dx
            }),
            Op::Gather { table, index } => emit(*table, &|| {
                let mut dt = vec![0.0; self.value(*table).numel()];
                for (&i, &d) in index.iter().zip(g) {
                    dt[i] += d;
                }
                dt
            }),
            Op::Reparam { mean, logvar, eps } => {
                emit(*mean, &|| g.to_vec());
                emit(*logvar, &|| {
                    val(*logvar)
                        .iter()
                        .zip(eps)
                        .zip(g)
                        .map(|((&l, &e), &d)| d * 0.5 * (0.5 * l).exp() * e)
                        .collect()
                });
            }
            Op::GaussianKl { q_mean, q_logvar, p_mean, p_logvar } => {
                let (qm, ql, pm, pl) = (val(*q_mean), val(*q_logvar), val(*p_mean), val(*p_logvar));
                let n = qm.len();
                emit(*q_mean, &|| (0..n).map(|i| g[i] * (qm[i] - pm[i]) / pl[i].exp()).collect());
                emit(*p_mean, &|| (0..n).map(|i| -g[i] * (qm[i] - pm[i]) / pl[i].exp()).collect());
                emit(*q_logvar, &|| (0..n).map(|i| g[i] * 0.5 * ((ql[i] - pl[i]).exp() - 1.0)).collect());
                emit(*p_logvar, &|| {
                    (0..n)
                        .map(|i| {
                            let d = qm[i] - pm[i];
                            g[i] * 0.5 * (1.0 - (ql[i].exp() + d * d) / pl[i].exp())
                        })
                        .collect()
                });
            }
            Op::MixtureKl { q_mean, q_logvar, means, logvars, eps, samples } => {
                let grads = mixture_kl_grads(val(*q_mean), val(*q_logvar), val(*means), val(*logvars), eps, *samples, g);
                emit(*q_mean, &|| grads.q_mean.clone());
                emit(*q_logvar, &|| grads.q_logvar.clone());
                emit(*means, &|| grads.means.clone());
                emit(*logvars, &|| grads.logvars.clone());
            }
        }
        out
    }
}

/// Equal-weight 1-D Gaussian mixture with cached precisions.
struct Components<'a> {
    means: &'a [f64],
    logvars: &'a [f64],
    precisions: Vec<f64>,
    log_k: f64,
}

impl<'a> Components<'a> {
    fn new(means: &'a [f64], logvars: &'a [f64]) -> Self {
        Self {
            means,
            logvars,
            precisions: logvars.iter().map(|l| (-l).exp()).collect(),
            log_k: (means.len() as f64).ln(),
        }
    }

    fn component_log_pdf(&self, k: usize, z: f64) -> f64 {
        let d = z - self.means[k];
        -HALF_LN_2PI - 0.5 * self.logvars[k] - 0.5 * d * d * self.precisions[k]
    }

    /// `log m(z)` and, in `resp`, the posterior responsibilities.
    fn log_density_with(&self, z: f64, resp: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (k, r) in resp.iter_mut().enumerate() {
            *r = self.component_log_pdf(k, z);
            max = max.max(*r);
        }
        let mut total = 0.0;
        for r in resp.iter_mut() {
            *r = (*r - max).exp();
            total += *r;
        }
        for r in resp.iter_mut() {
            *r /= total;
        }
        max + total.ln() - self.log_k
    }

    fn log_density(&self, z: f64) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.means.len() {
            max = max.max(self.component_log_pdf(k, z));
        }
        let total: f64 = (0..self.means.len()).map(|k| (self.component_log_pdf(k, z) - max).exp()).sum();
        max + total.ln() - self.log_k
    }
}

struct MixtureGrads {
    q_mean: Vec<f64>,
    q_logvar: Vec<f64>,
    means: Vec<f64>,
    logvars: Vec<f64>,
}

fn mixture_kl_grads(
    qm: &[f64],
    ql: &[f64],
    means: &[f64],
    logvars: &[f64],
    eps: &[f64],
    samples: usize,
    g: &[f64],
) -> MixtureGrads {
    let comps = Components::new(means, logvars);
    let k = means.len();
    let mut out = MixtureGrads {
        q_mean: vec![0.0; qm.len()],
        q_logvar: vec![0.0; qm.len()],
        means: vec![0.0; k],
        logvars: vec![0.0; k],
    };
    let mut resp = vec![0.0; k];
    for i in 0..qm.len() {
        let sigma = (0.5 * ql[i]).exp();
        let w = g[i] / samples as f64;
        for &e in &eps[i * samples..(i + 1) * samples] {
            let z = qm[i] + sigma * e;
            comps.log_density_with(z, &mut resp);
            let mut dlogm_dz = 0.0;
            for c in 0..k {
                let scaled = (z - means[c]) * comps.precisions[c];
                dlogm_dz -= resp[c] * scaled;
                out.means[c] -= w * resp[c] * scaled;
                out.logvars[c] -= w * resp[c] * (-0.5 + 0.5 * (z - means[c]) * scaled);
            }
            out.q_mean[i] -= w * dlogm_dz;
            out.q_logvar[i] += w * (-0.5 - dlogm_dz * 0.5 * sigma * e);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_of_scaled_weight() {
        // loss = mse(w * x, y) with x = 1, y = 0, w = 2: dloss/dw = 2 w x^2 = 4.
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::from_vec(vec![2.0]));
        let mut g = Graph::new();
        let wn = g.param(&store, w);
        let x = g.constant(Tensor::from_vec(vec![1.0]));
        let y = g.constant(Tensor::from_vec(vec![0.0]));
        let wx = g.mul(wn, x).unwrap();
        let loss = g.mse(wx, y).unwrap();
        g.backward(loss).unwrap();
        assert_eq!(g.grad(wn).data(), &[4.0]);
        assert_eq!(g.param_grads(&store)[0].data(), &[4.0]);
    }

    #[test]
    fn constants_get_zero_gradient() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::from_vec(vec![1.5, -0.5]));
        let mut g = Graph::new();
        let wn = g.param(&store, w);
        let c = g.constant(Tensor::from_vec(vec![3.0, 4.0]));
        let prod = g.mul(wn, c).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        assert_eq!(g.grad(c).data(), &[0.0, 0.0]);
        assert_eq!(g.grad(wn).data(), &[3.0, 4.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(g.backward(c), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn shared_parameter_gradients_accumulate() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::from_vec(vec![3.0]));
        let mut g = Graph::new();
        let a = g.param(&store, w);
        let b = g.param(&store, w);
        let prod = g.mul(a, b).unwrap();
        let loss = g.sum(prod);
        g.backward(loss).unwrap();
        assert_eq!(g.param_grads(&store)[0].data(), &[6.0]);
    }

    #[test]
    fn kl_1d_identity_is_zero() {
        assert_eq!(kl_1d(0.3, -1.2, 0.3, -1.2), 0.0);
        assert!((kl_1d(1.0, 0.0, 0.0, 0.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mixture_log_density_no_overflow() {
        let means = [0.0, 5.0, -5.0];
        for lv in [-30.0, 0.0, 30.0] {
            let lvs = [lv; 3];
            let c = Components::new(&means, &lvs);
            for z in [-100.0, 0.0, 3.0, 100.0] {
                assert!(c.log_density(z).is_finite());
            }
        }
    }
}
