//! Preset sizes for data, network and schedule.

use serde::{Deserialize, Serialize};

use crate::sprite::{DatasetConfig, Variant};
use crate::vae::{ArchConfig, LossConfig, Objective, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 3000 training images, 64 filters, 200 epochs of batch 32.
    Paper,
    /// 1000 training images, 16 filters, 50 epochs of batch 8. The
    /// reconstruction term is scaled by 0.1 and the priors learn at 1% of
    /// the base rate, which lets the encoder separate concepts within the
    /// shorter schedule.
    Desk,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        }
    }

    pub fn dataset(self, variant: Variant) -> DatasetConfig {
        let base = DatasetConfig::for_variant(variant);
        match self {
            Profile::Paper => base,
            Profile::Desk => DatasetConfig { train: 1000, ..base },
        }
    }

    pub fn arch(self) -> ArchConfig {
        match self {
            Profile::Paper => ArchConfig::paper(),
            Profile::Desk => ArchConfig::desk(),
        }
    }

    pub fn train(self, objective: Objective) -> TrainConfig {
        let base = TrainConfig { objective, ..TrainConfig::default() };
        match self {
            Profile::Paper => base,
            Profile::Desk => TrainConfig {
                epochs: 50,
                batch_size: 8,
                prior_lr_scale: 0.01,
                loss: LossConfig { recon_scale: 0.1, ..base.loss },
                ..base
            },
        }
    }
}
