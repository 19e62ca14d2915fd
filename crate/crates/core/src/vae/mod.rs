//! The Conceptual VAE: a convolutional encoder/decoder whose first four
//! latent dimensions are tied to the colour, size, shape and position
//! domains, each with a learnable 1-D Gaussian prior per atomic label.

mod model;
mod train;

pub use model::{KlWeights, LossBreakdown, LossConfig, Model, ModelKind, Noise};
pub use train::{train, EpochMetrics, Objective, TrainConfig, TrainOutcome, Trainer};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::Gaussian1d;
use crate::sprite::{DataError, Domain, Vocabulary};
use crate::tensor::{CheckpointError, TensorError};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("incompatible model: {0}")]
    Incompatible(String),
    #[error("input shape mismatch: expected {expected:?}, found {found:?}")]
    Shape { expected: Vec<usize>, found: Vec<usize> },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        /// Parameters and optimiser state just before the failing step.
        snapshot: Box<crate::tensor::Checkpoint>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VaeError> = std::result::Result<T, E>;

/// Number of conceptual domains; latent dims `0..4` are colour, size,
/// shape, position.
pub const DOMAIN_DIMS: usize = 4;

/// Network shape. Conv layers use 4x4 kernels, stride 2 and padding 1, so
/// each one halves the image side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub image_size: usize,
    pub filters: usize,
    pub conv_layers: usize,
    pub dense_width: usize,
    pub dense_layers: usize,
    pub slack: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl ArchConfig {
    pub const KERNEL: usize = 4;
    pub const STRIDE: usize = 2;
    pub const PADDING: usize = 1;

    /// 64x64 input, four conv layers of 64 filters, two dense layers of 256
    /// and a six-dimensional latent space.
    pub fn paper() -> Self {
        Self {
            image_size: 64,
            filters: 64,
            conv_layers: 4,
            dense_width: 256,
            dense_layers: 2,
            slack: 2,
        }
    }

    /// Same topology with fewer filters, for single-machine runs.
    pub fn desk() -> Self {
        Self {
            filters: 16,
            ..Self::paper()
        }
    }

    /// 8x8 network with two conv layers, used for gradient checks.
    pub fn miniature() -> Self {
        Self {
            image_size: 8,
            filters: 3,
            conv_layers: 2,
            dense_width: 6,
            dense_layers: 1,
            slack: 2,
        }
    }

    pub fn latent_dim(&self) -> usize {
        DOMAIN_DIMS + self.slack
    }

    pub fn bottleneck(&self) -> usize {
        self.image_size >> self.conv_layers
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(VaeError::Config(m.to_string()));
        if self.filters == 0 || self.dense_width == 0 || self.conv_layers == 0 {
            return err("filters, dense width and conv layers must be positive");
        }
        if self.conv_layers >= usize::BITS as usize
            || self.bottleneck() == 0
            || self.bottleneck() << self.conv_layers != self.image_size
        {
            return err("image size must be divisible by 2^conv_layers");
        }
        Ok(())
    }
}

/// The prior table psi: one 1-D Gaussian per atomic label of each domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ConceptualPriors {
    pub vocabulary: Vocabulary,
    pub tables: [Vec<Gaussian1d>; DOMAIN_DIMS],
}

impl ConceptualPriors {
    pub fn new(vocabulary: Vocabulary, tables: [Vec<Gaussian1d>; DOMAIN_DIMS]) -> Result<Self> {
        for d in Domain::ALL {
            if tables[d.index()].len() != vocabulary.len(d) {
                return Err(VaeError::Config(format!(
                    "{d} has {} labels but {} priors",
                    vocabulary.len(d),
                    tables[d.index()].len()
                )));
            }
        }
        Ok(Self { vocabulary, tables })
    }

    pub fn domain(&self, domain: Domain) -> &[Gaussian1d] {
        &self.tables[domain.index()]
    }

    pub fn get(&self, domain: Domain, label: usize) -> Option<Gaussian1d> {
        self.tables[domain.index()].get(label).copied()
    }
}
