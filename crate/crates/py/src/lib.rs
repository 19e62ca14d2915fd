//! Python bindings: dataset generation, model construction and training,
//! encoding, classification, traversal and the Gaussian KL helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use ::conceptual_vae as core;
use core::analysis::traverse;
use core::classifier::evaluate_accuracy;
use core::gaussian::{kl_mc_mixture, Gaussian1d, GaussianMixture};
use core::profile::Profile;
use core::sprite::{self as sprite, Domain, Image, SplitKind, Variant};
use core::tensor::{read_checkpoint, write_checkpoint};
use core::vae::{self as vae, Objective};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn parse_profile(name: &str) -> PyResult<Profile> {
    match name {
        "paper" => Ok(Profile::Paper),
        "desk" => Ok(Profile::Desk),
        _ => Err(value_err(format!("unknown profile `{name}` (paper or desk)"))),
    }
}

fn parse_variant(name: &str) -> PyResult<Variant> {
    match name {
        "main" => Ok(Variant::Main),
        "rainbow" => Ok(Variant::Rainbow),
        _ => Err(value_err(format!("unknown variant `{name}` (main or rainbow)"))),
    }
}

fn parse_objective(name: &str) -> PyResult<Objective> {
    match name {
        "conceptual" => Ok(Objective::Conceptual),
        "vanilla" => Ok(Objective::Vanilla),
        "any" => Ok(Objective::Any),
        _ => Err(value_err(format!("unknown objective `{name}` (conceptual, vanilla or any)"))),
    }
}

fn parse_domain(name: &str) -> PyResult<Domain> {
    Domain::ALL
        .into_iter()
        .find(|d| d.name() == name)
        .ok_or_else(|| value_err(format!("unknown domain `{name}`")))
}

fn parse_split(name: &str) -> PyResult<SplitKind> {
    SplitKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| value_err(format!("unknown split `{name}` (train, dev or test)")))
}

/// One split of a generated dataset.
#[pyclass(module = "conceptual_vae", frozen)]
pub struct Split {
    inner: sprite::Split,
    vocab: sprite::Vocabulary,
    image_size: usize,
}

#[pymethods]
impl Split {
    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.image_size
    }

    /// Raw RGB bytes (row-major, `size * size * 3`) of instance `i`.
    fn image<'py>(&self, py: Python<'py>, i: usize) -> PyResult<Bound<'py, PyBytes>> {
        let inst = self.inner.instances.get(i).ok_or_else(|| value_err("index out of range"))?;
        Ok(PyBytes::new(py, inst.image.pixels()))
    }

    /// `(colour, size, shape, position)` label names of instance `i`; missing
    /// labels read `"any"`.
    fn label(&self, i: usize) -> PyResult<(String, String, String, String)> {
        let inst = self.inner.instances.get(i).ok_or_else(|| value_err("index out of range"))?;
        let [c, s, k, p] = inst.label.names(&self.vocab).map(str::to_string);
        Ok((c, s, k, p))
    }
}

/// Train, dev and test splits with their generating configuration.
#[pyclass(module = "conceptual_vae", frozen)]
pub struct Dataset {
    inner: sprite::Dataset,
}

#[pymethods]
impl Dataset {
    #[staticmethod]
    #[pyo3(signature = (variant="main", profile="desk", train=None, dev=None, test=None, image_size=None, any_labels=0, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn generate(
        variant: &str,
        profile: &str,
        train: Option<usize>,
        dev: Option<usize>,
        test: Option<usize>,
        image_size: Option<usize>,
        any_labels: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let mut config = parse_profile(profile)?.dataset(parse_variant(variant)?);
        config.train = train.unwrap_or(config.train);
        config.dev = dev.unwrap_or(config.dev);
        config.test = test.unwrap_or(config.test);
        config.image_size = image_size.unwrap_or(config.image_size);
        config.any_labels = any_labels;
        config.seed = seed;
        Ok(Self { inner: sprite::generate_dataset(&config).map_err(value_err)? })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: sprite::read_dataset(&path).map_err(io_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        sprite::write_dataset(&path, &self.inner).map_err(io_err)
    }

    fn split(&self, name: &str) -> PyResult<Split> {
        Ok(Split {
            inner: self.inner.split(parse_split(name)?).clone(),
            vocab: self.inner.config.vocabulary(),
            image_size: self.inner.config.image_size,
        })
    }

    /// Label names per domain, in prior-table order.
    fn vocabulary(&self, domain: &str) -> PyResult<Vec<String>> {
        Ok(self.inner.config.vocabulary().labels(parse_domain(domain)?).to_vec())
    }
}

/// A conceptual or vanilla VAE.
#[pyclass(module = "conceptual_vae")]
pub struct Model {
    inner: vae::Model,
}

#[pymethods]
impl Model {
    /// A freshly initialised model sized for `dataset`.
    #[new]
    #[pyo3(signature = (dataset, kind="conceptual", profile="desk", filters=None, seed=0))]
    fn new(dataset: &Dataset, kind: &str, profile: &str, filters: Option<usize>, seed: u64) -> PyResult<Self> {
        let mut arch = parse_profile(profile)?.arch();
        arch.image_size = dataset.inner.config.image_size;
        arch.filters = filters.unwrap_or(arch.filters);
        let kind = parse_objective(kind)?.model_kind();
        let inner = vae::Model::new(kind, arch, dataset.inner.config.vocabulary(), seed).map_err(value_err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = read_checkpoint(BufReader::new(File::open(&path).map_err(io_err)?)).map_err(value_err)?;
        Ok(Self { inner: vae::Model::from_checkpoint(&ckpt).map_err(value_err)? })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let w = BufWriter::new(File::create(&path).map_err(io_err)?);
        write_checkpoint(w, &self.inner.to_checkpoint()).map_err(io_err)
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.latent_dim()
    }

    #[getter]
    fn image_size(&self) -> usize {
        self.inner.arch().image_size
    }

    /// `(mean, logvar)` of every label's prior in `domain`.
    fn priors(&self, domain: &str) -> PyResult<Vec<(f64, f64)>> {
        let gs = self.inner.priors(parse_domain(domain)?).map_err(value_err)?;
        Ok(gs.iter().map(|g| (g.mean, g.logvar)).collect())
    }

    /// Posterior `(means, logvars)` for every instance of `split`.
    fn encode(&self, py: Python<'_>, split: &Split) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
        let images: Vec<Image> = split.inner.instances.iter().map(|i| i.image.clone()).collect();
        let qs = py.detach(|| self.inner.encode(&images)).map_err(value_err)?;
        Ok(qs.iter().map(|q| (q.mean().to_vec(), q.logvar().to_vec())).collect())
    }

    /// Decoded RGB bytes for each latent vector.
    fn decode<'py>(&self, py: Python<'py>, zs: Vec<Vec<f64>>) -> PyResult<Vec<Bound<'py, PyBytes>>> {
        let images = self.inner.decode_images(&zs).map_err(value_err)?;
        Ok(images.iter().map(|im| PyBytes::new(py, im.pixels())).collect())
    }

    /// Per-domain dev accuracy of the KL classifier.
    fn accuracy(&self, py: Python<'_>, split: &Split) -> PyResult<[f64; 4]> {
        py.detach(|| evaluate_accuracy(&self.inner, &split.inner))
            .map(|a| a.per_domain)
            .map_err(value_err)
    }

    /// Frames decoded along latent dimension `dim`, starting from `image`.
    #[pyo3(signature = (image, dim, steps=7, radius=None))]
    fn traverse<'py>(
        &self,
        py: Python<'py>,
        image: &[u8],
        dim: usize,
        steps: usize,
        radius: Option<f64>,
    ) -> PyResult<Vec<Bound<'py, PyBytes>>> {
        let size = self.inner.arch().image_size;
        let image = Image::new(size, image.to_vec()).ok_or_else(|| value_err(format!("expected {size}x{size} RGB bytes")))?;
        let frames = traverse(&self.inner, &image, dim, steps, radius).map_err(value_err)?;
        Ok(frames.iter().map(|im| PyBytes::new(py, im.pixels())).collect())
    }

    /// Trains in place and returns one metrics dict per epoch.
    #[pyo3(signature = (dataset, objective=None, profile="desk", epochs=None, batch_size=None, lr=None, recon_scale=None, seed=0))]
    #[allow(clippy::too_many_arguments)]
    fn train(
        &mut self,
        py: Python<'_>,
        dataset: &Dataset,
        objective: Option<&str>,
        profile: &str,
        epochs: Option<usize>,
        batch_size: Option<usize>,
        lr: Option<f64>,
        recon_scale: Option<f64>,
        seed: u64,
    ) -> PyResult<Vec<Metrics>> {
        let objective = match objective {
            Some(o) => parse_objective(o)?,
            None if self.inner.kind() == vae::ModelKind::Vanilla => Objective::Vanilla,
            None if dataset.inner.config.any_labels > 0 => Objective::Any,
            None => Objective::Conceptual,
        };
        let mut config = parse_profile(profile)?.train(objective);
        config.seed = seed;
        config.epochs = epochs.unwrap_or(config.epochs);
        config.batch_size = batch_size.unwrap_or(config.batch_size);
        config.adam.lr = lr.unwrap_or(config.adam.lr);
        config.loss.recon_scale = recon_scale.unwrap_or(config.loss.recon_scale);
        let model = self.inner.clone();
        let data = &dataset.inner;
        let outcome = py
            .detach(|| vae::train(model, &data.train, (!data.dev.is_empty()).then_some(&data.dev), &config))
            .map_err(value_err)?;
        self.inner = outcome.model;
        Ok(outcome
            .metrics
            .into_iter()
            .map(|m| Metrics { epoch: m.epoch, recon: m.recon, kl: m.kl, total: m.total, accuracy: m.accuracy })
            .collect())
    }
}

/// One epoch of training metrics.
#[pyclass(module = "conceptual_vae", frozen, get_all)]
pub struct Metrics {
    epoch: usize,
    recon: f64,
    kl: Vec<f64>,
    total: f64,
    accuracy: Option<[f64; 4]>,
}

#[pymethods]
impl Metrics {
    fn __repr__(&self) -> String {
        format!("Metrics(epoch={}, recon={:.4}, total={:.4}, accuracy={:?})", self.epoch, self.recon, self.total, self.accuracy)
    }
}

/// Closed-form KL(q || p) between 1-D Gaussians given as `(mean, logvar)`.
#[pyfunction]
fn kl_gaussian(q: (f64, f64), p: (f64, f64)) -> f64 {
    Gaussian1d::new(q.0, q.1).kl(&Gaussian1d::new(p.0, p.1))
}

/// Monte-Carlo KL(q || mixture) with equal component weights; returns
/// `(estimate, standard_error)`.
#[pyfunction]
#[pyo3(signature = (q, components, samples=1000, seed=0))]
fn kl_mixture(q: (f64, f64), components: Vec<(f64, f64)>, samples: usize, seed: u64) -> PyResult<(f64, f64)> {
    let m = GaussianMixture::new(components.into_iter().map(|(m, l)| Gaussian1d::new(m, l)).collect())
        .map_err(value_err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let est = kl_mc_mixture(&Gaussian1d::new(q.0, q.1), &m, samples, &mut rng).map_err(value_err)?;
    Ok((est.estimate, est.std_error))
}

#[pymodule]
fn conceptual_vae(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Dataset>()?;
    m.add_class::<Split>()?;
    m.add_class::<Model>()?;
    m.add_class::<Metrics>()?;
    m.add_function(wrap_pyfunction!(kl_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(kl_mixture, m)?)?;
    Ok(())
}
