//! Artifact helpers: PPM images, CSV exports, cluster statistics, latent
//! traversals and run manifests.

mod manifest;
mod ppm;

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::gaussian::DiagGaussian;
use crate::sprite::{Domain, Image, SpriteInstance, Vocabulary};
use crate::vae::{EpochMetrics, Model, ModelKind, VaeError, DOMAIN_DIMS};

pub use manifest::{hash_inputs, RunManifest, MANIFEST_FILE};
pub use ppm::{read_ppm, write_ppm, Raster};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file at byte {offset}: {message}")]
    Format { offset: usize, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = AnalysisError> = std::result::Result<T, E>;

/// Writes the learning curve with the header from [`EpochMetrics::header`].
pub fn write_metrics_csv(w: impl Write, latent_dim: usize, metrics: &[EpochMetrics]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(EpochMetrics::header(latent_dim))?;
    for m in metrics {
        if m.kl.len() != latent_dim {
            return Err(AnalysisError::Invalid(format!("row has {} KL columns, expected {latent_dim}", m.kl.len())));
        }
        out.write_record(m.record())?;
    }
    out.flush()?;
    Ok(())
}

pub const CLUSTER_COLUMNS: [&str; 8] = ["instance", "dim", "mean", "logvar", "colour", "size", "shape", "position"];

/// One encoder output for one latent dimension of one instance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterRow {
    pub instance: usize,
    pub dim: usize,
    pub mean: f64,
    pub logvar: f64,
    pub colour: String,
    pub size: String,
    pub shape: String,
    pub position: String,
}

/// Posterior mean and log-variance of every instance on every dimension.
pub fn cluster_rows(model: &Model, instances: &[SpriteInstance], vocab: &Vocabulary) -> Result<Vec<ClusterRow>> {
    let images: Vec<Image> = instances.iter().map(|i| i.image.clone()).collect();
    let qs = model.encode(&images)?;
    let mut rows = Vec::with_capacity(instances.len() * model.latent_dim());
    for (idx, (inst, q)) in instances.iter().zip(&qs).enumerate() {
        let [colour, size, shape, position] = inst.label.names(vocab).map(str::to_string);
        for (dim, (&mean, &logvar)) in q.mean().iter().zip(q.logvar()).enumerate() {
            rows.push(ClusterRow {
                instance: idx,
                dim,
                mean,
                logvar,
                colour: colour.clone(),
                size: size.clone(),
                shape: shape.clone(),
                position: position.clone(),
            });
        }
    }
    Ok(rows)
}

pub fn write_clusters_csv(w: impl Write, rows: &[ClusterRow]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CLUSTER_COLUMNS)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean silhouette of scalar values under the given grouping. Points in
/// singleton groups score 0; fewer than two groups is an error.
pub fn silhouette_1d(values: &[f64], groups: &[usize]) -> Result<f64> {
    if values.len() != groups.len() || values.is_empty() {
        return Err(AnalysisError::Invalid("values and groups must be non-empty and aligned".into()));
    }
    let k = groups.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    groups.iter().for_each(|&g| sizes[g] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(AnalysisError::Invalid("silhouette needs at least two non-empty groups".into()));
    }
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for (i, &v) in values.iter().enumerate() {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for (&u, &g) in values.iter().zip(groups) {
            sums[g] += (u - v).abs();
        }
        let own = groups[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&g| g != own && sizes[g] > 0)
            .map(|g| sums[g] / sizes[g] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        total += if denom > 0.0 { (b - a) / denom } else { 0.0 };
    }
    Ok(total / values.len() as f64)
}

/// Posterior means on `dim` grouped by the atomic label of `domain`;
/// instances with ANY in that domain are skipped.
pub fn silhouette_by_label(posteriors: &[DiagGaussian], instances: &[SpriteInstance], dim: usize, domain: Domain) -> Result<f64> {
    let (values, groups): (Vec<f64>, Vec<usize>) = posteriors
        .iter()
        .zip(instances)
        .filter_map(|(q, inst)| inst.label.get(domain).atom().map(|g| (q.mean()[dim], g)))
        .unzip();
    silhouette_1d(&values, &groups)
}

/// Hue, saturation and value of an 8-bit colour, all in [0, 1].
pub fn rgb_to_hsv([r, g, b]: [u8; 3]) -> (f64, f64, f64) {
    let (r, g, b) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, max);
    }
    let h = if max == r {
        ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    (h / 6.0, s, max)
}

/// Saturation below which a pixel counts as background or grey.
pub const HUE_SATURATION_FLOOR: f64 = 0.3;

/// Saturation-weighted circular mean hue of the coloured pixels, or `None`
/// when nothing is saturated enough.
pub fn dominant_hue(raster: &Raster) -> Option<f64> {
    let (mut sx, mut sy) = (0.0, 0.0);
    for px in raster.pixels().chunks_exact(3) {
        let (h, s, v) = rgb_to_hsv([px[0], px[1], px[2]]);
        if s >= HUE_SATURATION_FLOOR && v >= 0.2 {
            let a = h * std::f64::consts::TAU;
            sx += s * a.cos();
            sy += s * a.sin();
        }
    }
    if sx.hypot(sy) < 1e-9 {
        return None;
    }
    Some((sy.atan2(sx) / std::f64::consts::TAU).rem_euclid(1.0))
}

/// Index of the hue bin of width `1/bins` centred on `k / bins`.
pub fn hue_bin(hue: f64, bins: usize) -> usize {
    ((hue.rem_euclid(1.0) * bins as f64 + 0.5).floor() as usize) % bins
}

/// Default traversal half-width in prior standard deviations.
pub const TRAVERSAL_SIGMAS: f64 = 2.0;

/// Standard deviation of the prior on `dim`: N(0, 1) for slack and vanilla
/// dimensions, and the equal-weight mixture of the atomic priors for a
/// domain dimension.
pub fn prior_std(model: &Model, dim: usize) -> Result<f64> {
    if dim >= model.latent_dim() {
        return Err(AnalysisError::Invalid(format!("dimension {dim} outside latent size {}", model.latent_dim())));
    }
    if model.kind() == ModelKind::Vanilla || dim >= DOMAIN_DIMS {
        return Ok(1.0);
    }
    let ps = model.priors(Domain::ALL[dim])?;
    let k = ps.len() as f64;
    let mean = ps.iter().map(|p| p.mean).sum::<f64>() / k;
    let second = ps.iter().map(|p| p.variance() + p.mean * p.mean).sum::<f64>() / k;
    Ok((second - mean * mean).max(0.0).sqrt())
}

/// Evenly spaced values on `[centre - r, centre + r]`; one step gives
/// the centre.
pub fn sweep(centre: f64, radius: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![centre],
        _ => (0..steps)
            .map(|i| centre - radius + 2.0 * radius * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

/// Encodes `image`, sweeps the posterior mean of `dim` with all other
/// dimensions fixed at their means, and decodes every point. `radius`
/// defaults to two prior standard deviations.
pub fn traverse(model: &Model, image: &Image, dim: usize, steps: usize, radius: Option<f64>) -> Result<Vec<Image>> {
    if steps == 0 {
        return Err(AnalysisError::Invalid("traversal needs at least one step".into()));
    }
    let radius = match radius {
        Some(r) if r.is_finite() && r >= 0.0 => r,
        Some(r) => return Err(AnalysisError::Invalid(format!("traversal radius {r} must be finite and non-negative"))),
        None => TRAVERSAL_SIGMAS * prior_std(model, dim)?,
    };
    prior_std(model, dim)?; // validates `dim`
    let q = model.encode(std::slice::from_ref(image))?.remove(0);
    let zs: Vec<Vec<f64>> = sweep(q.mean()[dim], radius, steps)
        .into_iter()
        .map(|v| {
            let mut z = q.mean().to_vec();
            z[dim] = v;
            z
        })
        .collect();
    Ok(model.decode_images(&zs)?)
}

/// Concatenates equally sized images left to right.
pub fn hstack(images: &[Image]) -> Result<Raster> {
    let Some(first) = images.first() else {
        return Err(AnalysisError::Invalid("nothing to concatenate".into()));
    };
    let s = first.size();
    if images.iter().any(|im| im.size() != s) {
        return Err(AnalysisError::Invalid("images differ in size".into()));
    }
    let width = s * images.len();
    let mut pixels = Vec::with_capacity(width * s * 3);
    for y in 0..s {
        for im in images {
            pixels.extend_from_slice(&im.pixels()[y * s * 3..(y + 1) * s * 3]);
        }
    }
    Raster::new(width, s, pixels)
}
