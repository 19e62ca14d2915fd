//! Procedural coloured-shapes dataset: one filled sprite per image, labelled
//! by colour, size, shape and vertical position.

mod config;
mod dataset;
mod io;
mod render;

pub use config::{DatasetConfig, LabelRange, Variant};
pub use dataset::{generate_dataset, sample_instance, Dataset, Split, SplitKind};
pub use io::{read_dataset, read_split, write_dataset, write_split, DatasetMeta};
pub use render::{hsv_to_rgb, render_sprite, ClampWarning, Rendered, BACKGROUND, POSITION_MARGIN};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("label `{label}` is not in the {domain} vocabulary")]
    Vocabulary { domain: Domain, label: String },
    #[error("invalid dataset config: {0}")]
    Config(String),
    #[error("{file}: malformed at byte {offset}: {reason}")]
    Format {
        file: String,
        offset: u64,
        reason: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The four conceptual domains, in latent-dimension order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Colour,
    Size,
    Shape,
    Position,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Colour, Domain::Size, Domain::Shape, Domain::Position];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Domain::Colour => "colour",
            Domain::Size => "size",
            Domain::Shape => "shape",
            Domain::Position => "position",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Square,
    Triangle,
    Circle,
}

impl ShapeKind {
    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Square => "square",
            ShapeKind::Triangle => "triangle",
            ShapeKind::Circle => "circle",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "square" => Some(ShapeKind::Square),
            "triangle" => Some(ShapeKind::Triangle),
            "circle" => Some(ShapeKind::Circle),
            _ => None,
        }
    }
}

/// Atomic label names for each domain; order fixes tie-breaking and the
/// prior table layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub colour: Vec<String>,
    pub size: Vec<String>,
    pub shape: Vec<String>,
    pub position: Vec<String>,
}

/// Spelling of the distinguished missing-label placeholder.
pub const ANY: &str = "any";

impl Vocabulary {
    pub fn labels(&self, domain: Domain) -> &[String] {
        match domain {
            Domain::Colour => &self.colour,
            Domain::Size => &self.size,
            Domain::Shape => &self.shape,
            Domain::Position => &self.position,
        }
    }

    pub fn len(&self, domain: Domain) -> usize {
        self.labels(domain).len()
    }

    pub fn index_of(&self, domain: Domain, label: &str) -> Result<usize, DataError> {
        self.labels(domain)
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| DataError::Vocabulary {
                domain,
                label: label.to_string(),
            })
    }

    /// Parses one slot, accepting the ANY spelling.
    pub fn parse_slot(&self, domain: Domain, label: &str) -> Result<Slot, DataError> {
        if label == ANY {
            Ok(Slot::Any)
        } else {
            self.index_of(domain, label).map(Slot::Atom)
        }
    }

    pub fn slot_name(&self, domain: Domain, slot: Slot) -> &str {
        match slot {
            Slot::Atom(i) => &self.labels(domain)[i],
            Slot::Any => ANY,
        }
    }

    /// Number of fully specified label tuples.
    pub fn tuple_count(&self) -> usize {
        Domain::ALL.iter().map(|&d| self.len(d)).product()
    }
}

/// One domain's entry in a concept label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    Atom(usize),
    Any,
}

impl Slot {
    pub fn atom(self) -> Option<usize> {
        match self {
            Slot::Atom(i) => Some(i),
            Slot::Any => None,
        }
    }
}

/// Per-domain labels (colour, size, shape, position), each an atomic label
/// index into the vocabulary or ANY.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConceptLabel {
    pub slots: [Slot; 4],
}

impl ConceptLabel {
    pub fn atoms(colour: usize, size: usize, shape: usize, position: usize) -> Self {
        Self {
            slots: [Slot::Atom(colour), Slot::Atom(size), Slot::Atom(shape), Slot::Atom(position)],
        }
    }

    pub fn get(&self, domain: Domain) -> Slot {
        self.slots[domain.index()]
    }

    pub fn any_count(&self) -> usize {
        self.slots.iter().filter(|s| **s == Slot::Any).count()
    }

    pub fn is_full(&self) -> bool {
        self.any_count() == 0
    }

    pub fn parse(vocab: &Vocabulary, names: [&str; 4]) -> Result<Self, DataError> {
        let mut slots = [Slot::Any; 4];
        for (d, name) in Domain::ALL.into_iter().zip(names) {
            slots[d.index()] = vocab.parse_slot(d, name)?;
        }
        Ok(Self { slots })
    }

    pub fn names<'a>(&self, vocab: &'a Vocabulary) -> [&'a str; 4] {
        Domain::ALL.map(|d| vocab.slot_name(d, self.get(d)))
    }
}

/// Continuous generative attributes of one sprite. Horizontal position is
/// always the image centre.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpriteSpec {
    pub hue: f64,
    pub saturation: f64,
    pub brightness: f64,
    /// Fraction of image height spanned by the shape.
    pub scale: f64,
    pub shape: ShapeKind,
    /// 0 = bottom, 1 = top.
    pub vpos: f64,
}

impl SpriteSpec {
    pub const HPOS: f64 = 0.5;

    pub fn validate(&self) -> Result<(), DataError> {
        let checks = [
            ("hue", self.hue, (0.0..1.0).contains(&self.hue)),
            ("saturation", self.saturation, (0.0..=1.0).contains(&self.saturation)),
            ("brightness", self.brightness, (0.0..=1.0).contains(&self.brightness)),
            ("scale", self.scale, self.scale > 0.0 && self.scale <= 1.0),
            ("vpos", self.vpos, (0.0..=1.0).contains(&self.vpos)),
        ];
        for (name, v, ok) in checks {
            if !ok {
                return Err(DataError::Config(format!("{name} = {v} out of range")));
            }
        }
        Ok(())
    }
}

/// Square RGB image with 8-bit channels, row-major, top row first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    size: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(size: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == size * size * 3).then_some(Self { size, pixels })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn rgb(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.size + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channel values scaled to [0, 1], HWC order.
    pub fn to_unit(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 255.0).collect()
    }

    /// Quantises [0, 1] values (HWC) to 8 bits.
    pub fn from_unit(size: usize, values: &[f64]) -> Option<Self> {
        let pixels = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
        Self::new(size, pixels)
    }
}

/// A rendered sprite with its generative attributes and training label.
#[derive(Clone, Debug, PartialEq)]
pub struct SpriteInstance {
    pub image: Image,
    pub spec: SpriteSpec,
    pub label: ConceptLabel,
}
