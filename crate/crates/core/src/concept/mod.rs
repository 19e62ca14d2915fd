//! Fuzzy concepts over conceptual spaces: crisp convex regions, Gaussian
//! concepts, products across domains and pointwise products within one
//! space, plus normalisation to densities and sampled log-concavity checks.

mod density;
mod logconcave;

pub use density::{factored_density, integrate_box, normalize_density, Density, FactoredDensity};
pub use logconcave::{check_log_concave, rainbow_anchors, rainbow_concept, Counterexample, LogConcavity};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sprite::DataError;

#[derive(Debug, Error)]
pub enum ConceptError {
    #[error("point has {found} coordinates, concept expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("point {0:?} lies outside the conceptual space")]
    OutsideSpace(Vec<f64>),
    #[error("region is not convex: midpoint of {a:?} and {b:?} is not a member")]
    NonConvex { a: Vec<f64>, b: Vec<f64> },
    #[error("expected {expected} factor concepts, got {found}")]
    Arity { expected: usize, found: usize },
    #[error("invalid covariance: {0}")]
    Covariance(String),
    #[error("cannot normalise: {0}")]
    Normalization(String),
    #[error("concept value {0} outside [0, 1]")]
    Range(f64),
    #[error("degenerate construction: {0}")]
    Degenerate(String),
    #[error("invalid region: {0}")]
    Region(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T, E = ConceptError> = std::result::Result<T, E>;

/// Axis-aligned box `[lower, upper]` in R^d.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(ConceptError::Region(format!("bounds {lower:?} / {upper:?} mismatched or empty")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(ConceptError::Region(format!("bounds {lower:?} / {upper:?} not ordered")));
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim() && z.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| if u > l { rng.random_range(l..=u) } else { l })
            .collect()
    }

    /// Cartesian product of boxes, in order.
    pub fn product(boxes: &[BoxRegion]) -> Result<Self> {
        Self::new(
            boxes.iter().flat_map(|b| b.lower.iter().copied()).collect(),
            boxes.iter().flat_map(|b| b.upper.iter().copied()).collect(),
        )
    }
}

type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
type Membership = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A measurable subset of R^d used for crisp concepts and space factors.
#[derive(Clone)]
pub enum Region {
    Box(BoxRegion),
    /// Union of boxes; convex only in special cases.
    Union(Vec<BoxRegion>),
    /// Membership predicate together with a bounding box.
    Predicate { bounds: BoxRegion, test: Predicate },
}

impl fmt::Debug for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::Box(b) => f.debug_tuple("Box").field(b).finish(),
            Region::Union(bs) => f.debug_tuple("Union").field(bs).finish(),
            Region::Predicate { bounds, .. } => f.debug_struct("Predicate").field("bounds", bounds).finish(),
        }
    }
}

const CONVEXITY_PAIRS: usize = 2000;

impl Region {
    pub fn predicate(bounds: BoxRegion, test: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        Region::Predicate {
            bounds,
            test: Arc::new(test),
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds().dim()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        match self {
            Region::Box(b) => b.contains(z),
            Region::Union(bs) => bs.iter().any(|b| b.contains(z)),
            Region::Predicate { bounds, test } => bounds.contains(z) && test(z),
        }
    }

    /// Smallest box known to contain the region.
    pub fn bounds(&self) -> BoxRegion {
        match self {
            Region::Box(b) | Region::Predicate { bounds: b, .. } => b.clone(),
            Region::Union(bs) => {
                let d = bs[0].dim();
                let lower = (0..d).map(|i| bs.iter().map(|b| b.lower[i]).fold(f64::INFINITY, f64::min)).collect();
                let upper = (0..d).map(|i| bs.iter().map(|b| b.upper[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
                BoxRegion { lower, upper }
            }
        }
    }

    fn sample_member(&self, rng: &mut impl Rng) -> Option<Vec<f64>> {
        match self {
            Region::Box(b) => Some(b.sample(rng)),
            Region::Union(bs) => Some(bs[rng.random_range(0..bs.len())].sample(rng)),
            Region::Predicate { bounds, test } => (0..1000).map(|_| bounds.sample(rng)).find(|z| test(z)),
        }
    }

    /// Sampled midpoint test: draws member pairs and checks that their
    /// midpoint (and a random convex combination) is a member.
    pub fn check_convex(&self) -> Result<()> {
        self.validate_shape()?;
        if let Region::Box(_) = self {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x00c0_13ec);
        for _ in 0..CONVEXITY_PAIRS {
            let (Some(a), Some(b)) = (self.sample_member(&mut rng), self.sample_member(&mut rng)) else {
                return Err(ConceptError::Region("could not sample members of the region".into()));
            };
            let t: f64 = rng.random_range(0.0..1.0);
            for p in [0.5, t] {
                let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| p * x + (1.0 - p) * y).collect();
                if !self.contains(&m) {
                    return Err(ConceptError::NonConvex { a, b });
                }
            }
        }
        Ok(())
    }

    fn validate_shape(&self) -> Result<()> {
        if let Region::Union(bs) = self {
            if bs.is_empty() || bs.iter().any(|b| b.dim() != bs[0].dim()) {
                return Err(ConceptError::Region("union needs boxes of one dimension".into()));
            }
        }
        Ok(())
    }
}

/// One factor of a conceptual space.
#[derive(Clone, Debug)]
pub struct SpaceFactor {
    pub name: String,
    pub region: Region,
}

/// A product of convex domains `Z = Z_1 x ... x Z_n` with Lebesgue measure.
#[derive(Clone, Debug)]
pub struct ConceptualSpace {
    factors: Vec<SpaceFactor>,
}

impl ConceptualSpace {
    pub fn new(factors: Vec<SpaceFactor>) -> Result<Self> {
        if factors.is_empty() {
            return Err(ConceptError::Region("a space needs at least one factor".into()));
        }
        for f in &factors {
            f.region.check_convex()?;
        }
        Ok(Self { factors })
    }

    /// One interval factor per named domain.
    pub fn intervals(domains: &[(&str, f64, f64)]) -> Result<Self> {
        let factors = domains
            .iter()
            .map(|&(name, lo, hi)| {
                Ok(SpaceFactor {
                    name: name.to_string(),
                    region: Region::Box(BoxRegion::interval(lo, hi)?),
                })
            })
            .collect::<Result<_>>()?;
        Self::new(factors)
    }

    pub fn factors(&self) -> &[SpaceFactor] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.region.dim()).sum()
    }

    pub fn factor_dims(&self) -> Vec<usize> {
        self.factors.iter().map(|f| f.region.dim()).collect()
    }

    pub fn bounds(&self) -> BoxRegion {
        let boxes: Vec<_> = self.factors.iter().map(|f| f.region.bounds()).collect();
        BoxRegion::product(&boxes).expect("factors are valid boxes")
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        if z.len() != self.dim() {
            return false;
        }
        let mut offset = 0;
        self.factors.iter().all(|f| {
            let d = f.region.dim();
            let ok = f.region.contains(&z[offset..offset + d]);
            offset += d;
            ok
        })
    }

    /// Degree to which `z` satisfies `c`; rejects points outside the space.
    pub fn eval(&self, c: &FuzzyConcept, z: &[f64]) -> Result<f64> {
        if c.dim() != self.dim() {
            return Err(ConceptError::Dimension {
                expected: self.dim(),
                found: c.dim(),
            });
        }
        if !self.contains(z) {
            return Err(ConceptError::OutsideSpace(z.to_vec()));
        }
        c.eval(z)
    }
}

/// Covariance of a Gaussian concept.
#[derive(Clone, Debug)]
pub enum Covariance {
    Diagonal(Vec<f64>),
    /// Symmetric positive-definite matrix with its lower Cholesky factor.
    Full { matrix: DMatrix<f64>, chol: DMatrix<f64> },
}

/// Unnormalised Gaussian `c(z) = exp(-1/2 (z - mu)^T Sigma^-1 (z - mu))`.
#[derive(Clone, Debug)]
pub struct GaussianConcept {
    mean: Vec<f64>,
    cov: Covariance,
}

impl GaussianConcept {
    pub fn diagonal(mean: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != variances.len() {
            return Err(ConceptError::Dimension {
                expected: mean.len(),
                found: variances.len(),
            });
        }
        if variances.iter().any(|v| !(v.is_finite() && *v > 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(ConceptError::Covariance(format!("variances {variances:?} must be positive")));
        }
        Ok(Self {
            mean,
            cov: Covariance::Diagonal(variances),
        })
    }

    /// Full covariance given row-major.
    pub fn full(mean: Vec<f64>, covariance: &[f64]) -> Result<Self> {
        let d = mean.len();
        if d == 0 || covariance.len() != d * d {
            return Err(ConceptError::Dimension {
                expected: d * d,
                found: covariance.len(),
            });
        }
        let matrix = DMatrix::from_row_slice(d, d, covariance);
        let asym = (&matrix - matrix.transpose()).abs().max();
        if !(asym <= 1e-12 * matrix.abs().max().max(1.0)) {
            return Err(ConceptError::Covariance("matrix is not symmetric".into()));
        }
        let chol = nalgebra::Cholesky::new(matrix.clone())
            .ok_or_else(|| ConceptError::Covariance("matrix is not positive definite".into()))?
            .l();
        Ok(Self {
            mean,
            cov: Covariance::Full { matrix, chol },
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &Covariance {
        &self.cov
    }

    /// Squared Mahalanobis distance.
    pub fn mahalanobis2(&self, z: &[f64]) -> f64 {
        match &self.cov {
            Covariance::Diagonal(v) => z.iter().zip(&self.mean).zip(v).map(|((z, m), v)| (z - m).powi(2) / v).sum(),
            Covariance::Full { chol, .. } => {
                let diff = DVector::from_iterator(self.dim(), z.iter().zip(&self.mean).map(|(z, m)| z - m));
                let y = chol.solve_lower_triangular(&diff).expect("Cholesky factor is invertible");
                y.norm_squared()
            }
        }
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        (-0.5 * self.mahalanobis2(z)).exp()
    }

    /// `det(2 pi Sigma)^(1/2)`, the integral of the unnormalised concept.
    pub fn kappa(&self) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        match &self.cov {
            Covariance::Diagonal(v) => v.iter().map(|s| two_pi * s).product::<f64>().sqrt(),
            Covariance::Full { chol, .. } => {
                let det_l: f64 = chol.diagonal().iter().product();
                two_pi.powf(self.dim() as f64 / 2.0) * det_l
            }
        }
    }

    fn covariance_row_major(&self) -> Vec<f64> {
        match &self.cov {
            Covariance::Diagonal(v) => v.clone(),
            Covariance::Full { matrix, .. } => matrix.transpose().as_slice().to_vec(),
        }
    }
}

#[derive(Clone)]
pub enum ConceptKind {
    Crisp(Region),
    Gaussian(GaussianConcept),
    /// One concept per coordinate block, in order.
    Product(Vec<FuzzyConcept>),
    Pointwise(Box<FuzzyConcept>, Box<FuzzyConcept>),
    Custom { name: String, f: Membership },
}

impl fmt::Debug for ConceptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConceptKind::Crisp(r) => f.debug_tuple("Crisp").field(r).finish(),
            ConceptKind::Gaussian(g) => f.debug_tuple("Gaussian").field(g).finish(),
            ConceptKind::Product(cs) => f.debug_tuple("Product").field(cs).finish(),
            ConceptKind::Pointwise(a, b) => f.debug_tuple("Pointwise").field(a).field(b).finish(),
            ConceptKind::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

/// A function `Z -> [0, 1]`, expected to be log-concave.
#[derive(Clone, Debug)]
pub struct FuzzyConcept {
    dim: usize,
    kind: ConceptKind,
}

impl FuzzyConcept {
    pub fn gaussian(g: GaussianConcept) -> Self {
        Self {
            dim: g.dim(),
            kind: ConceptKind::Gaussian(g),
        }
    }

    /// Arbitrary membership function. Its range and log-concavity are the
    /// caller's responsibility (see [`check_log_concave`]).
    pub fn custom(dim: usize, name: &str, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            dim,
            kind: ConceptKind::Custom {
                name: name.to_string(),
                f: Arc::new(f),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ConceptKind {
        &self.kind
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.dim {
            return Err(ConceptError::Dimension {
                expected: self.dim,
                found: z.len(),
            });
        }
        let v = match &self.kind {
            ConceptKind::Crisp(r) => r.contains(z) as u8 as f64,
            ConceptKind::Gaussian(g) => g.eval(z),
            ConceptKind::Product(cs) => {
                let mut offset = 0;
                let mut acc = 1.0;
                for c in cs {
                    acc *= c.eval(&z[offset..offset + c.dim])?;
                    offset += c.dim;
                }
                acc
            }
            ConceptKind::Pointwise(a, b) => a.eval(z)? * b.eval(z)?,
            ConceptKind::Custom { f, .. } => f(z),
        };
        if !(0.0..=1.0).contains(&v) {
            return Err(ConceptError::Range(v));
        }
        Ok(v)
    }

    /// Serialisable form, available for Gaussian and crisp-box concepts.
    pub fn to_record(&self, name: &str) -> Option<ConceptRecord> {
        match &self.kind {
            ConceptKind::Gaussian(g) => Some(ConceptRecord::gaussian(name.to_string(), g.mean.clone(), g.covariance_row_major())),
            ConceptKind::Crisp(Region::Box(b)) => Some(ConceptRecord {
                tag: "crisp".into(),
                name: name.to_string(),
                mean: Vec::new(),
                covariance: Vec::new(),
                lower: b.lower.clone(),
                upper: b.upper.clone(),
            }),
            _ => None,
        }
    }
}

/// Indicator of a convex region; non-convex regions are rejected by a
/// sampled midpoint test.
pub fn crisp_indicator(region: Region) -> Result<FuzzyConcept> {
    region.check_convex()?;
    Ok(FuzzyConcept {
        dim: region.dim(),
        kind: ConceptKind::Crisp(region),
    })
}

/// `c(z_1, ..., z_n) = prod_i c_i(z_i)`, one concept per factor of `space`.
pub fn product_concept(space: &ConceptualSpace, cs: Vec<FuzzyConcept>) -> Result<FuzzyConcept> {
    let dims = space.factor_dims();
    if cs.len() != dims.len() {
        return Err(ConceptError::Arity {
            expected: dims.len(),
            found: cs.len(),
        });
    }
    for (c, &d) in cs.iter().zip(&dims) {
        if c.dim != d {
            return Err(ConceptError::Dimension {
                expected: d,
                found: c.dim,
            });
        }
    }
    Ok(FuzzyConcept {
        dim: space.dim(),
        kind: ConceptKind::Product(cs),
    })
}

/// `(a . b)(z) = a(z) b(z)` for concepts on the same space.
pub fn pointwise_product(a: FuzzyConcept, b: FuzzyConcept) -> Result<FuzzyConcept> {
    if a.dim != b.dim {
        return Err(ConceptError::Dimension {
            expected: a.dim,
            found: b.dim,
        });
    }
    Ok(FuzzyConcept {
        dim: a.dim,
        kind: ConceptKind::Pointwise(Box::new(a), Box::new(b)),
    })
}

/// Text record of a concept: `tag` is `gaussian` (with `mean` and either
/// diagonal variances or a row-major covariance) or `crisp` (box bounds).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub tag: String,
    pub name: String,
    #[serde(default)]
    pub mean: Vec<f64>,
    #[serde(default)]
    pub covariance: Vec<f64>,
    #[serde(default)]
    pub lower: Vec<f64>,
    #[serde(default)]
    pub upper: Vec<f64>,
}

impl ConceptRecord {
    pub fn gaussian(name: String, mean: Vec<f64>, covariance: Vec<f64>) -> Self {
        Self {
            tag: "gaussian".into(),
            name,
            mean,
            covariance,
            lower: Vec::new(),
            upper: Vec::new(),
        }
    }

    pub fn to_concept(&self) -> Result<FuzzyConcept> {
        match self.tag.as_str() {
            "gaussian" if self.covariance.len() == self.mean.len() => {
                Ok(FuzzyConcept::gaussian(GaussianConcept::diagonal(self.mean.clone(), self.covariance.clone())?))
            }
            "gaussian" => Ok(FuzzyConcept::gaussian(GaussianConcept::full(self.mean.clone(), &self.covariance)?)),
            "crisp" => crisp_indicator(Region::Box(BoxRegion::new(self.lower.clone(), self.upper.clone())?)),
            other => Err(ConceptError::Region(format!("unknown concept tag `{other}`"))),
        }
    }
}
