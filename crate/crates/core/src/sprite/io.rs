//! On-disk layout: one directory per split holding `meta` (TOML),
//! `images.bin` (raw u8 RGB, instance-major), `labels.csv` and
//! `attributes.csv` (the continuous generative attributes).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ClampWarning, ConceptLabel, DataError, Dataset, DatasetConfig, Image, ShapeKind, Split,
    SplitKind, SpriteInstance, SpriteSpec, Variant, Vocabulary,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub split: SplitKind,
    pub count: usize,
    pub image_size: usize,
    pub seed: u64,
    pub any_labels: usize,
    pub variant: Variant,
    pub vocabulary: Vocabulary,
    /// `(index, requested centre row, clamped centre row)`.
    #[serde(default)]
    pub clamped: Vec<(usize, f64, f64)>,
    pub config: DatasetConfig,
}

#[derive(Serialize, Deserialize)]
struct LabelRow {
    index: usize,
    colour: String,
    size: String,
    shape: String,
    position: String,
}

#[derive(Serialize, Deserialize)]
struct AttributeRow {
    index: usize,
    hue: f64,
    saturation: f64,
    brightness: f64,
    scale: f64,
    shape: ShapeKind,
    vpos: f64,
}

fn format_err(file: &Path, offset: u64, reason: impl Into<String>) -> DataError {
    DataError::Format {
        file: file.display().to_string(),
        offset,
        reason: reason.into(),
    }
}

fn csv_err(file: &Path, e: csv::Error) -> DataError {
    let offset = e.position().map_or(0, |p| p.byte());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        kind => format_err(file, offset, format!("{kind:?}")),
    }
}

pub fn write_split(dir: &Path, split: &Split, config: &DatasetConfig) -> Result<(), DataError> {
    fs::create_dir_all(dir)?;
    let vocab = config.vocabulary();
    let meta = DatasetMeta {
        split: split.kind,
        count: split.len(),
        image_size: config.image_size,
        seed: config.seed,
        any_labels: config.any_labels,
        variant: config.variant,
        vocabulary: vocab.clone(),
        clamped: split
            .warnings
            .iter()
            .map(|(i, w)| (*i, w.requested_cy, w.clamped_cy))
            .collect(),
        config: config.clone(),
    };
    let text = toml::to_string(&meta).map_err(|e| DataError::Config(e.to_string()))?;
    fs::write(dir.join("meta"), text)?;

    let mut bytes = Vec::with_capacity(split.len() * config.image_size.pow(2) * 3);
    for inst in &split.instances {
        bytes.extend_from_slice(inst.image.pixels());
    }
    fs::write(dir.join("images.bin"), bytes)?;

    let labels_path = dir.join("labels.csv");
    let mut labels = csv::Writer::from_path(&labels_path).map_err(|e| csv_err(&labels_path, e))?;
    let attrs_path = dir.join("attributes.csv");
    let mut attrs = csv::Writer::from_path(&attrs_path).map_err(|e| csv_err(&attrs_path, e))?;
    for (index, inst) in split.instances.iter().enumerate() {
        let [colour, size, shape, position] = inst.label.names(&vocab).map(str::to_string);
        labels
            .serialize(LabelRow {
                index,
                colour,
                size,
                shape,
                position,
            })
            .map_err(|e| csv_err(&labels_path, e))?;
        let s = &inst.spec;
        attrs
            .serialize(AttributeRow {
                index,
                hue: s.hue,
                saturation: s.saturation,
                brightness: s.brightness,
                scale: s.scale,
                shape: s.shape,
                vpos: s.vpos,
            })
            .map_err(|e| csv_err(&attrs_path, e))?;
    }
    labels.flush()?;
    attrs.flush()?;
    Ok(())
}

fn read_rows<T: serde::de::DeserializeOwned>(path: &Path, count: usize) -> Result<Vec<T>, DataError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::with_capacity(count);
    for (i, row) in reader.deserialize::<T>().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        if i >= count {
            let offset = reader.position().byte();
            return Err(format_err(path, offset, format!("more than {count} rows")));
        }
        rows.push(row);
    }
    if rows.len() != count {
        let len = fs::metadata(path)?.len();
        return Err(format_err(path, len, format!("expected {count} rows, found {}", rows.len())));
    }
    Ok(rows)
}

pub fn read_split(dir: &Path) -> Result<(Split, DatasetMeta), DataError> {
    let meta_path = dir.join("meta");
    let text = fs::read_to_string(&meta_path)?;
    let meta: DatasetMeta = toml::from_str(&text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start as u64);
        format_err(&meta_path, offset, e.message().to_string())
    })?;
    if meta.vocabulary != meta.config.vocabulary() || meta.image_size != meta.config.image_size {
        return Err(format_err(&meta_path, 0, "header disagrees with embedded config"));
    }

    let images_path = dir.join("images.bin");
    let bytes = fs::read(&images_path)?;
    let per_image = meta.image_size * meta.image_size * 3;
    let expected = per_image * meta.count;
    if bytes.len() < expected {
        return Err(format_err(
            &images_path,
            bytes.len() as u64,
            format!("truncated: expected {expected} bytes"),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(&images_path, expected as u64, "trailing bytes"));
    }

    let labels_path = dir.join("labels.csv");
    let labels: Vec<LabelRow> = read_rows(&labels_path, meta.count)?;
    let attrs_path = dir.join("attributes.csv");
    let attrs: Vec<AttributeRow> = read_rows(&attrs_path, meta.count)?;

    let mut instances = Vec::with_capacity(meta.count);
    for (i, (l, a)) in labels.into_iter().zip(attrs).enumerate() {
        if l.index != i || a.index != i {
            return Err(format_err(&labels_path, 0, format!("row {i} has index {}", l.index)));
        }
        let label = ConceptLabel::parse(
            &meta.vocabulary,
            [&l.colour, &l.size, &l.shape, &l.position].map(String::as_str),
        )?;
        let spec = SpriteSpec {
            hue: a.hue,
            saturation: a.saturation,
            brightness: a.brightness,
            scale: a.scale,
            shape: a.shape,
            vpos: a.vpos,
        };
        let image = Image::new(meta.image_size, bytes[i * per_image..(i + 1) * per_image].to_vec())
            .expect("slice sized to image");
        instances.push(SpriteInstance { image, spec, label });
    }
    let warnings = meta
        .clamped
        .iter()
        .map(|&(i, requested_cy, clamped_cy)| {
            (
                i,
                ClampWarning {
                    requested_cy,
                    clamped_cy,
                },
            )
        })
        .collect();
    let split = Split {
        kind: meta.split,
        instances,
        warnings,
    };
    Ok((split, meta))
}

pub fn write_dataset(root: &Path, dataset: &Dataset) -> Result<(), DataError> {
    for kind in SplitKind::ALL {
        write_split(&root.join(kind.name()), dataset.split(kind), &dataset.config)?;
    }
    Ok(())
}

pub fn read_dataset(root: &Path) -> Result<Dataset, DataError> {
    let mut splits = Vec::new();
    let mut config = None;
    for kind in SplitKind::ALL {
        let (split, meta) = read_split(&root.join(kind.name()))?;
        if split.kind != kind {
            return Err(format_err(&root.join(kind.name()).join("meta"), 0, "split kind mismatch"));
        }
        config.get_or_insert(meta.config);
        splits.push(split);
    }
    let mut it = splits.into_iter();
    Ok(Dataset {
        config: config.expect("three splits read"),
        train: it.next().unwrap(),
        dev: it.next().unwrap(),
        test: it.next().unwrap(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sprite::generate_dataset;

    fn config(train: usize) -> DatasetConfig {
        DatasetConfig {
            image_size: 12,
            train,
            dev: 3,
            test: 2,
            any_labels: 1,
            seed: 3,
            ..DatasetConfig::main()
        }
    }

    #[test]
    fn round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&config(15)).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn empty_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = config(0);
        c.dev = 0;
        c.test = 0;
        let ds = generate_dataset(&c).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        assert_eq!(read_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let ds = generate_dataset(&config(8)).unwrap();
        write_dataset(a.path(), &ds).unwrap();
        write_dataset(b.path(), &generate_dataset(&config(8)).unwrap()).unwrap();
        for f in ["meta", "images.bin", "labels.csv", "attributes.csv"] {
            let p = |d: &tempfile::TempDir| d.path().join("train").join(f);
            assert_eq!(fs::read(p(&a)).unwrap(), fs::read(p(&b)).unwrap(), "{f}");
        }
    }

    #[test]
    fn truncation_reports_offset() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&config(4)).unwrap();
        write_dataset(dir.path(), &ds).unwrap();
        let images = dir.path().join("train/images.bin");
        let bytes = fs::read(&images).unwrap();
        fs::write(&images, &bytes[..bytes.len() - 10]).unwrap();
        match read_split(&dir.path().join("train")) {
            Err(DataError::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len() - 10),
            other => panic!("expected format error, got {other:?}"),
        }
        let labels = dir.path().join("dev/labels.csv");
        let text = fs::read_to_string(&labels).unwrap();
        fs::write(&labels, &text[..text.len() / 2]).unwrap();
        assert!(matches!(read_split(&dir.path().join("dev")), Err(DataError::Format { .. })));
    }

    #[test]
    fn corrupt_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &generate_dataset(&config(2)).unwrap()).unwrap();
        fs::write(dir.path().join("test/meta"), "split = [[[").unwrap();
        assert!(matches!(read_split(&dir.path().join("test")), Err(DataError::Format { .. })));
    }
}
