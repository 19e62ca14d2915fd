use super::{BoxRegion, ConceptError, ConceptKind, FuzzyConcept, GaussianConcept, Region, Result};
use crate::gaussian::Gaussian1d;
use crate::sprite::{ConceptLabel, DataError, Domain, Slot};
use crate::vae::ConceptualPriors;

const QUAD_TOL: f64 = 1e-7;
const MAX_DEPTH: usize = 40;

fn simpson_rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: usize) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson on `[a, b]`, started from a fixed 16-panel split so
/// narrow peaks are not missed.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const PANELS: usize = 16;
    let h = (b - a) / PANELS as f64;
    (0..PANELS)
        .map(|i| {
            let (x0, x1) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (f0, fm, f1) = (f(x0), f(0.5 * (x0 + x1)), f(x1));
            let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
            simpson_rec(f, x0, x1, f0, fm, f1, whole, tol / PANELS as f64, MAX_DEPTH)
        })
        .sum()
}

/// Integral of `f` over a box by nested adaptive Simpson (one level per
/// coordinate; intended for d <= 3).
pub fn integrate_box(f: &dyn Fn(&[f64]) -> f64, region: &BoxRegion) -> f64 {
    fn nested(f: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], prefix: &mut Vec<f64>) -> f64 {
        let i = prefix.len();
        if i == lo.len() {
            return f(prefix);
        }
        let tol = QUAD_TOL * (hi[i] - lo[i]).max(1e-300);
        let inner = |x: f64| {
            let mut p = prefix.clone();
            p.push(x);
            nested(f, lo, hi, &mut p)
        };
        adaptive_simpson(&inner, lo[i], hi[i], tol)
    }
    nested(f, region.lower(), region.upper(), &mut Vec::new())
}

/// `p(z) = c(z) / kappa`.
#[derive(Clone, Debug)]
pub struct Density {
    concept: FuzzyConcept,
    kappa: f64,
}

impl Density {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn concept(&self) -> &FuzzyConcept {
        &self.concept
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        Ok(self.concept.eval(z)? / self.kappa)
    }
}

fn kappa_of(c: &FuzzyConcept, support: Option<&BoxRegion>) -> Result<f64> {
    let quadrature = |bounds: &BoxRegion| {
        if bounds.dim() != c.dim() {
            return Err(ConceptError::Dimension {
                expected: c.dim(),
                found: bounds.dim(),
            });
        }
        Ok(integrate_box(&|z| c.eval(z).unwrap_or(f64::NAN), bounds))
    };
    match c.kind() {
        ConceptKind::Gaussian(g) => Ok(g.kappa()),
        ConceptKind::Crisp(Region::Box(b)) => Ok(b.volume()),
        ConceptKind::Crisp(r) => quadrature(support.unwrap_or(&r.bounds())),
        ConceptKind::Product(cs) => {
            let mut offset = 0;
            let mut acc = 1.0;
            for f in cs {
                let block = support
                    .map(|s| {
                        BoxRegion::new(
                            s.lower()[offset..offset + f.dim()].to_vec(),
                            s.upper()[offset..offset + f.dim()].to_vec(),
                        )
                    })
                    .transpose()?;
                acc *= kappa_of(f, block.as_ref())?;
                offset += f.dim();
            }
            Ok(acc)
        }
        ConceptKind::Pointwise(..) | ConceptKind::Custom { .. } => {
            let s = support.ok_or_else(|| ConceptError::Normalization("this concept needs a support box for quadrature".into()))?;
            quadrature(s)
        }
    }
}

/// Turns a fuzzy concept into a probability density. Gaussian, crisp-box
/// and product concepts use closed forms; other concepts are integrated
/// numerically over `support`.
pub fn normalize_density(c: &FuzzyConcept, support: Option<&BoxRegion>) -> Result<Density> {
    let kappa = kappa_of(c, support)?;
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(ConceptError::Normalization(format!("integral is {kappa}")));
    }
    Ok(Density {
        concept: c.clone(),
        kappa,
    })
}

/// `p(z | c) = prod_i N(z_i; mu_{c_i}, sigma^2_{c_i})` over the domain
/// dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct FactoredDensity {
    factors: [Gaussian1d; 4],
}

impl FactoredDensity {
    pub fn factors(&self) -> &[Gaussian1d; 4] {
        &self.factors
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != 4 {
            return Err(ConceptError::Dimension { expected: 4, found: z.len() });
        }
        Ok(self.factors.iter().zip(z).map(|(g, &v)| g.log_pdf(v)).sum::<f64>().exp())
    }

    pub fn peak(&self) -> Vec<f64> {
        self.factors.iter().map(|g| g.mean).collect()
    }

    /// The same density as a product of unnormalised 1-D Gaussian concepts.
    pub fn concept(&self) -> FuzzyConcept {
        FuzzyConcept {
            dim: 4,
            kind: ConceptKind::Product(
                self.factors
                    .iter()
                    .map(|g| FuzzyConcept::gaussian(GaussianConcept::diagonal(vec![g.mean], vec![g.variance()]).expect("finite prior")))
                    .collect(),
            ),
        }
    }
}

pub fn factored_density(label: &ConceptLabel, priors: &ConceptualPriors) -> Result<FactoredDensity> {
    let mut factors = [Gaussian1d::STANDARD; 4];
    for d in Domain::ALL {
        let g = match label.get(d) {
            Slot::Atom(i) => priors.get(d, i),
            Slot::Any => None,
        };
        factors[d.index()] = g.ok_or_else(|| DataError::Vocabulary {
            domain: d,
            label: match label.get(d) {
                Slot::Atom(i) => format!("#{i}"),
                Slot::Any => crate::sprite::ANY.into(),
            },
        })?;
    }
    Ok(FactoredDensity { factors })
}
