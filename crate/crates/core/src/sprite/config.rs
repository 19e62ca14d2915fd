use serde::{Deserialize, Serialize};

use super::{ConceptLabel, DataError, Domain, ShapeKind, Slot, SpriteSpec, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Main,
    Rainbow,
}

/// Half-open attribute interval `[lo, hi)` for one atomic label. Hue ranges
/// may extend past 1 and wrap around the colour circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelRange {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl LabelRange {
    fn new(name: &str, lo: f64, hi: f64) -> Self {
        Self {
            name: name.to_string(),
            lo,
            hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v < self.hi
    }

    /// Membership on the unit circle (for hue).
    pub fn contains_circular(&self, v: f64) -> bool {
        (v - self.lo).rem_euclid(1.0) < self.width()
    }

    /// Circular distance from `v` to the range midpoint.
    pub fn circular_distance(&self, v: f64) -> f64 {
        let d = (v - self.midpoint()).rem_euclid(1.0);
        d.min(1.0 - d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub variant: Variant,
    pub image_size: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub seed: u64,
    /// Number of ANY slots per training instance (0 to 3).
    pub any_labels: usize,
    pub saturation: [f64; 2],
    pub brightness: [f64; 2],
    pub colours: Vec<LabelRange>,
    pub sizes: Vec<LabelRange>,
    pub shapes: Vec<ShapeKind>,
    pub positions: Vec<LabelRange>,
}

impl DatasetConfig {
    /// Three colours, sizes, shapes and positions; 3000/300/300 instances.
    pub fn main() -> Self {
        Self {
            variant: Variant::Main,
            image_size: 64,
            train: 3000,
            dev: 300,
            test: 300,
            seed: 0,
            any_labels: 0,
            saturation: [0.5, 1.0],
            brightness: [0.7, 1.0],
            colours: vec![
                LabelRange::new("red", 0.95, 1.05),
                LabelRange::new("green", 0.27, 0.40),
                LabelRange::new("blue", 0.55, 0.70),
            ],
            sizes: vec![
                LabelRange::new("small", 0.10, 0.17),
                LabelRange::new("medium", 0.22, 0.30),
                LabelRange::new("large", 0.35, 0.48),
            ],
            shapes: vec![ShapeKind::Square, ShapeKind::Triangle, ShapeKind::Circle],
            positions: vec![
                LabelRange::new("bottom", 0.05, 0.25),
                LabelRange::new("centre", 0.40, 0.60),
                LabelRange::new("top", 0.75, 0.95),
            ],
        }
    }

    /// Seven rainbow hues with gaps between neighbouring arcs.
    pub fn rainbow() -> Self {
        Self {
            variant: Variant::Rainbow,
            colours: vec![
                LabelRange::new("red", 0.95, 1.03),
                LabelRange::new("orange", 0.05, 0.11),
                LabelRange::new("yellow", 0.13, 0.19),
                LabelRange::new("green", 0.24, 0.42),
                LabelRange::new("blue", 0.52, 0.64),
                LabelRange::new("indigo", 0.67, 0.75),
                LabelRange::new("violet", 0.78, 0.92),
            ],
            ..Self::main()
        }
    }

    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Main => Self::main(),
            Variant::Rainbow => Self::rainbow(),
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        let names = |r: &[LabelRange]| r.iter().map(|l| l.name.clone()).collect();
        Vocabulary {
            colour: names(&self.colours),
            size: names(&self.sizes),
            shape: self.shapes.iter().map(|s| s.name().to_string()).collect(),
            position: names(&self.positions),
        }
    }

    pub fn ranges(&self, domain: Domain) -> Option<&[LabelRange]> {
        match domain {
            Domain::Colour => Some(&self.colours),
            Domain::Size => Some(&self.sizes),
            Domain::Position => Some(&self.positions),
            Domain::Shape => None,
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let err = |m: String| Err(DataError::Config(m));
        if self.image_size < 8 {
            return err(format!("image size {} too small", self.image_size));
        }
        if self.any_labels > 3 {
            return err(format!("any_labels must be 0..=3, got {}", self.any_labels));
        }
        for (name, [lo, hi]) in [("saturation", self.saturation), ("brightness", self.brightness)] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return err(format!("{name} range [{lo}, {hi}] invalid"));
            }
        }
        for d in Domain::ALL {
            let n = self.vocabulary().len(d);
            if n == 0 {
                return err(format!("{d} vocabulary is empty"));
            }
        }
        let mut names = self.vocabulary().shape;
        names.sort();
        names.dedup();
        if names.len() != self.shapes.len() {
            return err("duplicate shape labels".into());
        }
        for r in &self.colours {
            if !(0.0..1.0).contains(&r.lo) || r.width() <= 0.0 || r.width() > 1.0 {
                return err(format!("hue range {} [{}, {}) invalid", r.name, r.lo, r.hi));
            }
        }
        for (i, a) in self.colours.iter().enumerate() {
            for b in &self.colours[i + 1..] {
                // Arcs overlap iff either start lies inside the other arc.
                if a.contains_circular(b.lo) || b.contains_circular(a.lo) {
                    return err(format!("hue ranges {} and {} overlap", a.name, b.name));
                }
            }
        }
        for (domain, ranges) in [("size", &self.sizes), ("position", &self.positions)] {
            for r in ranges.iter() {
                let lower_ok = if domain == "size" { r.lo > 0.0 } else { r.lo >= 0.0 };
                if !lower_ok || r.hi > 1.0 || r.lo >= r.hi {
                    return err(format!("{domain} range {} [{}, {}) invalid", r.name, r.lo, r.hi));
                }
            }
            for (i, a) in ranges.iter().enumerate() {
                for b in &ranges[i + 1..] {
                    if a.lo < b.hi && b.lo < a.hi {
                        return err(format!("{domain} ranges {} and {} overlap", a.name, b.name));
                    }
                }
            }
        }
        for d in Domain::ALL {
            let mut names = self.vocabulary().labels(d).to_vec();
            names.sort();
            names.dedup();
            if names.len() != self.vocabulary().len(d) || names.iter().any(|n| n == super::ANY) {
                return err(format!("{d} labels must be unique and not `any`"));
            }
        }
        Ok(())
    }

    /// Ground-truth label decided purely from the generative attributes.
    /// Attributes outside every range (possible only for hand-made specs)
    /// leave that slot as ANY.
    pub fn label_of_spec(&self, spec: &SpriteSpec) -> ConceptLabel {
        let pick = |ranges: &[LabelRange], v: f64, circular: bool| {
            ranges
                .iter()
                .position(|r| if circular { r.contains_circular(v) } else { r.contains(v) })
                .map_or(Slot::Any, Slot::Atom)
        };
        ConceptLabel {
            slots: [
                pick(&self.colours, spec.hue, true),
                pick(&self.sizes, spec.scale, false),
                self.shapes.iter().position(|&s| s == spec.shape).map_or(Slot::Any, Slot::Atom),
                pick(&self.positions, spec.vpos, false),
            ],
        }
    }
}
