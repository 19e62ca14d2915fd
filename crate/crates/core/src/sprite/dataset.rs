use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    render_sprite, ClampWarning, ConceptLabel, DataError, DatasetConfig, Domain, SpriteInstance,
    SpriteSpec, Slot,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Dev,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Dev, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Dev => "dev",
            SplitKind::Test => "test",
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub kind: SplitKind,
    pub instances: Vec<SpriteInstance>,
    /// Instances whose sprite had to be moved to stay on the canvas.
    pub warnings: Vec<(usize, ClampWarning)>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub train: Split,
    pub dev: Split,
    pub test: Split,
}

impl Dataset {
    pub fn split(&self, kind: SplitKind) -> &Split {
        match kind {
            SplitKind::Train => &self.train,
            SplitKind::Dev => &self.dev,
            SplitKind::Test => &self.test,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for one instance, so any subset of a split can be
/// regenerated (or generated in parallel) without replaying the rest.
pub(crate) fn instance_rng(seed: u64, split: SplitKind, index: usize) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(seed) ^ (split as u64 + 1));
    ChaCha8Rng::seed_from_u64(splitmix64(s ^ index as u64))
}

fn sample_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Samples continuous attributes for a fully specified label and renders it.
pub fn sample_instance(
    label: &ConceptLabel,
    config: &DatasetConfig,
    rng: &mut impl Rng,
) -> Result<(SpriteInstance, Option<ClampWarning>), DataError> {
    let vocab = config.vocabulary();
    let mut idx = [0usize; 4];
    for d in Domain::ALL {
        match label.get(d) {
            Slot::Atom(i) if i < vocab.len(d) => idx[d.index()] = i,
            Slot::Atom(i) => {
                return Err(DataError::Vocabulary {
                    domain: d,
                    label: format!("#{i}"),
                })
            }
            Slot::Any => {
                return Err(DataError::Vocabulary {
                    domain: d,
                    label: super::ANY.into(),
                })
            }
        }
    }
    let colour = &config.colours[idx[0]];
    let size = &config.sizes[idx[1]];
    let position = &config.positions[idx[3]];
    let spec = SpriteSpec {
        hue: sample_in(rng, colour.lo, colour.hi).rem_euclid(1.0),
        saturation: sample_in(rng, config.saturation[0], config.saturation[1]),
        brightness: sample_in(rng, config.brightness[0], config.brightness[1]),
        scale: sample_in(rng, size.lo, size.hi),
        shape: config.shapes[idx[2]],
        vpos: sample_in(rng, position.lo, position.hi),
    };
    let rendered = render_sprite(&spec, config.image_size)?;
    Ok((
        SpriteInstance {
            image: rendered.image,
            spec,
            label: *label,
        },
        rendered.warning,
    ))
}

fn generate_split(config: &DatasetConfig, kind: SplitKind, count: usize) -> Result<Split, DataError> {
    let vocab = config.vocabulary();
    let mut instances = Vec::with_capacity(count);
    let mut warnings = Vec::new();
    for i in 0..count {
        let mut rng = instance_rng(config.seed, kind, i);
        let full = ConceptLabel {
            slots: Domain::ALL.map(|d| Slot::Atom(rng.random_range(0..vocab.len(d)))),
        };
        let (mut inst, warning) = sample_instance(&full, config, &mut rng)?;
        if let Some(w) = warning {
            warnings.push((i, w));
        }
        // Partial labels only affect training supervision; evaluation
        // splits keep every slot.
        if kind == SplitKind::Train && config.any_labels > 0 {
            for slot in index::sample(&mut rng, 4, config.any_labels) {
                inst.label.slots[slot] = Slot::Any;
            }
        }
        instances.push(inst);
    }
    Ok(Split {
        kind,
        instances,
        warnings,
    })
}

/// Generates train/dev/test splits. Every instance draws from its own
/// stream derived from `(config.seed, split, index)`.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, DataError> {
    config.validate()?;
    Ok(Dataset {
        config: config.clone(),
        train: generate_split(config, SplitKind::Train, config.train)?,
        dev: generate_split(config, SplitKind::Dev, config.dev)?,
        test: generate_split(config, SplitKind::Test, config.test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(train: usize, any: usize) -> DatasetConfig {
        DatasetConfig {
            image_size: 16,
            train,
            dev: 10,
            test: 10,
            any_labels: any,
            seed: 7,
            ..DatasetConfig::main()
        }
    }

    #[test]
    fn membership_holds_for_many_samples() {
        let config = DatasetConfig {
            image_size: 8,
            ..DatasetConfig::main()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for c in 0..3 {
            for s in 0..3 {
                for p in 0..3 {
                    let label = ConceptLabel::atoms(c, s, (c + s + p) % 3, p);
                    for _ in 0..40 {
                        let (inst, _) = sample_instance(&label, &config, &mut rng).unwrap();
                        assert_eq!(config.label_of_spec(&inst.spec), label);
                        inst.spec.validate().unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn any_slot_is_rejected() {
        let config = small(0, 0);
        let mut label = ConceptLabel::atoms(0, 0, 0, 0);
        label.slots[2] = Slot::Any;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_instance(&label, &config, &mut rng),
            Err(DataError::Vocabulary { domain: Domain::Shape, .. })
        ));
        let bad = ConceptLabel::atoms(3, 0, 0, 0);
        assert!(sample_instance(&bad, &config, &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_dataset(&small(20, 1)).unwrap();
        let b = generate_dataset(&small(20, 1)).unwrap();
        assert_eq!(a, b);
        let mut other = small(20, 1);
        other.seed = 8;
        assert_ne!(generate_dataset(&other).unwrap().train, a.train);
    }

    #[test]
    fn any_labels_only_in_train() {
        let ds = generate_dataset(&small(100, 2)).unwrap();
        assert!(ds.train.instances.iter().all(|i| i.label.any_count() == 2));
        assert!(ds.dev.instances.iter().all(|i| i.label.is_full()));
        let slots: HashSet<_> = ds
            .train
            .instances
            .iter()
            .flat_map(|i| (0..4).filter(move |&s| i.label.slots[s] == Slot::Any))
            .collect();
        assert_eq!(slots.len(), 4);
    }

    #[test]
    fn zero_counts_give_empty_splits() {
        let mut c = small(0, 0);
        c.dev = 0;
        c.test = 0;
        let ds = generate_dataset(&c).unwrap();
        assert!(ds.train.is_empty() && ds.dev.is_empty() && ds.test.is_empty());
    }

    #[test]
    fn splits_use_distinct_streams() {
        let ds = generate_dataset(&small(10, 0)).unwrap();
        assert_ne!(ds.train.instances[0].spec, ds.dev.instances[0].spec);
    }
}
