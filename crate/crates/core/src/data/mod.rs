//! Datasets, synthetic tasks and file formats (CSV vectors, binary PPM/PGM).

mod pnm;
mod synth;
mod vectors;

pub use pnm::{read_pnm, write_pnm, Pnm};
pub use synth::{gaussian_blur, gaussian_noise, synth_blob_task};
pub use vectors::{load_vectors, save_vectors, VectorDataset};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::UnitKind;
use crate::rng::RngStream;

/// Mask pixels at or above this gray level are foreground.
pub const MASK_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: empty dataset")]
    Empty { path: PathBuf },
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("malformed image: {0}")]
    Pnm(String),
    #[error("{0}: no matching mask")]
    MissingPair(PathBuf),
    #[error("size mismatch between {first} and {second}")]
    SizeMismatch { first: PathBuf, second: PathBuf },
    #[error("train count {count} out of range for dataset of {size}")]
    SplitRange { count: usize, size: usize },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One training pair: inputs and encoded output targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// An RGB image in `[0,1]` (pixel-major, channels fastest) and its binary mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageExample {
    pub name: String,
    pub image: Vec<f64>,
    pub mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub height: usize,
    pub width: usize,
    pub examples: Vec<ImageExample>,
}

/// Target encoding of a binary label for an output unit kind.
pub fn label_value(kind: UnitKind, positive: bool) -> f64 {
    match (kind, positive) {
        (UnitKind::Tanh, false) => -1.0,
        (_, p) => p as u8 as f64,
    }
}

impl ImageDataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Training pairs with mask targets encoded for `kind` outputs.
    pub fn to_examples(&self, kind: UnitKind) -> Vec<Example> {
        self.examples
            .iter()
            .map(|e| Example {
                x: e.image.clone(),
                y: e.mask.iter().map(|&m| label_value(kind, m)).collect(),
            })
            .collect()
    }

    pub fn subset(&self, examples: Vec<ImageExample>) -> Self {
        Self {
            height: self.height,
            width: self.width,
            examples,
        }
    }
}

impl ImageExample {
    pub fn from_pnm(name: String, image: &Pnm, mask: &Pnm) -> Self {
        Self {
            name,
            image: image.to_unit_rgb(),
            mask: mask.data.iter().map(|&v| v >= MASK_THRESHOLD).collect(),
        }
    }

    pub fn image_pnm(&self, height: usize, width: usize) -> Pnm {
        Pnm::rgb(width, height, self.image.iter().map(|&v| to_byte(v)).collect())
    }

    pub fn mask_pnm(&self, height: usize, width: usize) -> Pnm {
        Pnm::gray(width, height, self.mask.iter().map(|&m| if m { 255 } else { 0 }).collect())
    }
}

pub(crate) fn to_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Loads every `<stem>.ppm` with its `<stem>.pgm` mask, ordered by stem.
pub fn load_images(dir: &Path) -> Result<ImageDataset, DataError> {
    let mut stems: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| DataError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ppm"))
        .collect();
    stems.sort();
    if stems.is_empty() {
        return Err(DataError::Empty { path: dir.to_path_buf() });
    }
    let mut examples = Vec::with_capacity(stems.len());
    let mut shape: Option<(usize, usize, PathBuf)> = None;
    for img_path in stems {
        let mask_path = img_path.with_extension("pgm");
        if !mask_path.exists() {
            return Err(DataError::MissingPair(img_path));
        }
        let img = Pnm::load(&img_path)?;
        let mask = Pnm::load(&mask_path)?;
        if img.channels != 3 || mask.channels != 1 {
            return Err(DataError::Pnm(format!(
                "{}: expected P6 image and P5 mask",
                img_path.display()
            )));
        }
        if (img.width, img.height) != (mask.width, mask.height) {
            return Err(DataError::SizeMismatch {
                first: img_path,
                second: mask_path,
            });
        }
        match &shape {
            Some((h, w, first)) if (*h, *w) != (img.height, img.width) => {
                return Err(DataError::SizeMismatch {
                    first: first.clone(),
                    second: img_path,
                })
            }
            None => shape = Some((img.height, img.width, img_path.clone())),
            _ => {}
        }
        let name = img_path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        examples.push(ImageExample::from_pnm(name, &img, &mask));
    }
    let (height, width, _) = shape.expect("nonempty");
    Ok(ImageDataset {
        height,
        width,
        examples,
    })
}

/// Writes `<name>.ppm` / `<name>.pgm` pairs readable by [`load_images`].
pub fn save_images(dir: &Path, data: &ImageDataset) -> Result<(), DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
    for e in &data.examples {
        e.image_pnm(data.height, data.width).save(&dir.join(format!("{}.ppm", e.name)))?;
        e.mask_pnm(data.height, data.width).save(&dir.join(format!("{}.pgm", e.name)))?;
    }
    Ok(())
}

/// Random disjoint split into `train_count` and the rest.
pub fn split<T: Clone>(items: &[T], train_count: usize, seed: u64) -> Result<(Vec<T>, Vec<T>), DataError> {
    if train_count == 0 || train_count >= items.len() {
        return Err(DataError::SplitRange {
            count: train_count,
            size: items.len(),
        });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    RngStream::new(seed).shuffle(&mut order);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(&order[..train_count]), pick(&order[train_count..])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_partition() {
        let items: Vec<u32> = (0..10).collect();
        let (a, b) = split(&items, 3, 7).unwrap();
        assert_eq!((a.len(), b.len()), (3, 7));
        let mut all: Vec<u32> = a.iter().chain(&b).copied().collect();
        all.sort();
        assert_eq!(all, items);
        assert_eq!(split(&items, 3, 7).unwrap(), (a, b));
        assert!(split(&items, 0, 1).is_err());
        assert!(split(&items, 10, 1).is_err());
    }

    #[test]
    fn image_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data = synth_blob_task(2, 8, 6, 3);
        save_images(dir.path(), &data).unwrap();
        let back = load_images(dir.path()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!((back.height, back.width), (8, 6));
        for (a, b) in back.examples.iter().zip(&data.examples) {
            assert_eq!(a.mask, b.mask);
            for (x, y) in a.image.iter().zip(&b.image) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
        }
    }

    #[test]
    fn mask_threshold() {
        let dir = tempfile::tempdir().unwrap();
        Pnm::rgb(2, 1, vec![0; 6]).save(&dir.path().join("a.ppm")).unwrap();
        Pnm::gray(2, 1, vec![200, 127]).save(&dir.path().join("a.pgm")).unwrap();
        let d = load_images(dir.path()).unwrap();
        assert_eq!(d.examples[0].mask, vec![true, false]);
    }

    #[test]
    fn missing_and_mismatched_pairs() {
        let dir = tempfile::tempdir().unwrap();
        Pnm::rgb(2, 2, vec![0; 12]).save(&dir.path().join("a.ppm")).unwrap();
        assert!(matches!(load_images(dir.path()), Err(DataError::MissingPair(_))));
        Pnm::gray(3, 2, vec![0; 6]).save(&dir.path().join("a.pgm")).unwrap();
        let err = load_images(dir.path()).unwrap_err().to_string();
        assert!(err.contains("a.ppm") && err.contains("a.pgm"), "{err}");
    }

    #[test]
    fn tanh_targets() {
        let d = synth_blob_task(1, 4, 4, 0);
        let ex = &d.to_examples(UnitKind::Tanh)[0];
        assert!(ex.y.iter().all(|&v| v == 1.0 || v == -1.0));
        assert_eq!(ex.x.len(), 48);
    }
}
