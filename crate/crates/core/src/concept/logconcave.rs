use nalgebra::{Matrix2, SymmetricEigen};
use rand::Rng;

use super::{BoxRegion, ConceptError, FuzzyConcept, GaussianConcept, Result};

const SLACK: f64 = 1e-9;

/// A triple violating `c(p z + (1-p) z') >= c(z)^p c(z')^(1-p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub z: Vec<f64>,
    pub z_prime: Vec<f64>,
    pub p: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogConcavity {
    pub triples: usize,
    pub counterexample: Option<Counterexample>,
}

impl LogConcavity {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

/// Samples `(z, z', p)` uniformly (points from `space`, `p` from [0, 1])
/// and reports the first violation beyond a 1e-9 slack.
pub fn check_log_concave(c: &FuzzyConcept, space: &BoxRegion, n_triples: usize, rng: &mut impl Rng) -> Result<LogConcavity> {
    if space.dim() != c.dim() {
        return Err(ConceptError::Dimension {
            expected: c.dim(),
            found: space.dim(),
        });
    }
    for i in 0..n_triples {
        let z = space.sample(rng);
        let z_prime = space.sample(rng);
        let p: f64 = rng.random_range(0.0..=1.0);
        let mid: Vec<f64> = z.iter().zip(&z_prime).map(|(a, b)| p * a + (1.0 - p) * b).collect();
        let lhs = c.eval(&mid)?;
        let rhs = c.eval(&z)?.powf(p) * c.eval(&z_prime)?.powf(1.0 - p);
        if lhs + SLACK < rhs {
            return Ok(LogConcavity {
                triples: i + 1,
                counterexample: Some(Counterexample { z, z_prime, p, lhs, rhs }),
            });
        }
    }
    Ok(LogConcavity {
        triples: n_triples,
        counterexample: None,
    })
}

/// Default anchors `(position, hue)`: top is red, centre green, bottom blue.
pub fn rainbow_anchors() -> Vec<(f64, f64)> {
    vec![(1.0, 0.0), (0.5, 0.33), (0.0, 0.62)]
}

/// Full-covariance Gaussian over (position, hue) whose principal axis
/// passes through the anchors' centroid along their main direction. The
/// variance along the ridge is the largest squared anchor offset; across
/// the ridge it is ten times smaller.
pub fn rainbow_concept(anchors: &[(f64, f64)]) -> Result<FuzzyConcept> {
    if anchors.iter().any(|(a, b)| !(a.is_finite() && b.is_finite())) {
        return Err(ConceptError::Degenerate("anchors must be finite".into()));
    }
    let n = anchors.len() as f64;
    if anchors.len() < 2 {
        return Err(ConceptError::Degenerate("need at least two anchors".into()));
    }
    let cx = anchors.iter().map(|a| a.0).sum::<f64>() / n;
    let cy = anchors.iter().map(|a| a.1).sum::<f64>() / n;
    let mut scatter = Matrix2::zeros();
    for &(x, y) in anchors {
        let d = nalgebra::Vector2::new(x - cx, y - cy);
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (imax, imin) = if eig.eigenvalues[0] >= eig.eigenvalues[1] { (0, 1) } else { (1, 0) };
    let axis = eig.eigenvectors.column(imax).into_owned();
    let normal = eig.eigenvectors.column(imin).into_owned();
    let ridge = anchors
        .iter()
        .map(|&(x, y)| (axis[0] * (x - cx) + axis[1] * (y - cy)).powi(2))
        .fold(0.0, f64::max);
    if ridge <= 1e-12 {
        return Err(ConceptError::Degenerate("anchors coincide; no ridge direction".into()));
    }
    let cross = ridge / 10.0;
    let cov = axis * axis.transpose() * ridge + normal * normal.transpose() * cross;
    // Symmetrise exactly before the Cholesky check.
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    let g = GaussianConcept::full(vec![cx, cy], &[cov[(0, 0)], off, off, cov[(1, 1)]])?;
    Ok(FuzzyConcept::gaussian(g))
}
