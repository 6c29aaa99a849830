//! Datasets: the MNIST IDX format and a seeded Gaussian-blob generator.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{names, Streams};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad IDX magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("IDX file truncated: header promises {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} out of range")]
    BadLabel(u8),
}

/// Dense row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub n_features: usize,
    pub n_classes: usize,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example(&self, i: usize) -> (&[f64], usize) {
        let d = self.n_features;
        (&self.features[i * d..(i + 1) * d], self.labels[i])
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            let (x, y) = self.example(i);
            features.extend_from_slice(x);
            labels.push(y);
        }
        Dataset {
            n_features: self.n_features,
            n_classes: self.n_classes,
            features,
            labels,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        samples: usize,
        features: usize,
        classes: usize,
        separation: f64,
    },
    Mnist {
        dir: PathBuf,
    },
}

/// Gaussian blobs: class centres drawn from `N(0, separation^2 I)`, examples
/// from `N(centre, I)`. Example `i` has label `i % classes`.
pub fn synthetic(n: usize, features: usize, classes: usize, separation: f64, seed: u64) -> Dataset {
    let streams = Streams::new(seed);
    let mut rng = streams.rng(names::DATA, &[0]);
    let centres: Vec<f64> = (0..classes * features)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            separation * z
        })
        .collect();
    let mut rng = streams.rng(names::DATA, &[1]);
    let mut data = Vec::with_capacity(n * features);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % classes;
        for j in 0..features {
            let noise: f64 = StandardNormal.sample(&mut rng);
            data.push(centres[y * features + j] + noise);
        }
        labels.push(y);
    }
    Dataset {
        n_features: features,
        n_classes: classes,
        features: data,
        labels,
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, IdxError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

/// Parses an IDX3 image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8]), IdxError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::BadMagic {
            found: magic,
            expected: IDX_IMAGES_MAGIC,
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok((n, rows, cols, &bytes[16..]))
}

/// Parses an IDX1 label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8], IdxError> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::BadMagic {
            found: magic,
            expected: IDX_LABELS_MAGIC,
        });
    }
    let n = be_u32(bytes, 4)? as usize;
    let expected = 8 + n;
    if bytes.len() != expected {
        return Err(IdxError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..])
}

/// Builds a 10-class dataset from IDX image and label bytes; pixels scaled to `[0, 1]`.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset, IdxError> {
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(IdxError::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= 10) {
        return Err(IdxError::BadLabel(bad));
    }
    Ok(Dataset {
        n_features: rows * cols,
        n_classes: 10,
        features: pixels.iter().map(|&p| p as f64 / 255.0).collect(),
        labels: labels.iter().map(|&l| l as usize).collect(),
    })
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_mnist(dir: &Path) -> Result<Dataset, IdxError> {
    let images = read(&dir.join(MNIST_TRAIN_IMAGES))?;
    let labels = read(&dir.join(MNIST_TRAIN_LABELS))?;
    dataset_from_idx(&images, &labels)
}

/// Loads `source` and holds out `validation_size` randomly chosen examples
/// for the BS. Returns `(train, validation)`.
pub fn load_dataset(
    source: &DatasetSource,
    validation_size: usize,
    seed: u64,
) -> Result<(Dataset, Dataset), super::LearningError> {
    let full = match source {
        DatasetSource::Synthetic {
            samples,
            features,
            classes,
            separation,
        } => synthetic(
            samples + validation_size,
            *features,
            *classes,
            *separation,
            seed,
        ),
        DatasetSource::Mnist { dir } => load_mnist(dir)?,
    };
    if validation_size == 0 || validation_size >= full.len() {
        return Err(super::LearningError::Empty(
            "validation split must be non-empty and leave training data",
        ));
    }
    let mut order: Vec<usize> = (0..full.len()).collect();
    order.shuffle(&mut Streams::new(seed).rng(names::DATA, &[2]));
    let (val_idx, train_idx) = order.split_at(validation_size);
    let mut train_idx = train_idx.to_vec();
    let mut val_idx = val_idx.to_vec();
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    Ok((full.subset(&train_idx), full.subset(&val_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_IMAGES_MAGIC.to_be_bytes());
        v.extend(n.to_be_bytes());
        v.extend(rows.to_be_bytes());
        v.extend(cols.to_be_bytes());
        v.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_LABELS_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_mnist_shaped_files() {
        let ds = dataset_from_idx(&idx_images(3, 28, 28, 255), &idx_labels(&[0, 9, 4])).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_features, 784);
        assert_eq!(ds.labels, vec![0, 9, 4]);
        assert!(ds.features.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn rejects_bad_magic() {
        let mut img = idx_images(1, 2, 2, 0);
        img[3] = 0x01;
        assert!(matches!(
            dataset_from_idx(&img, &idx_labels(&[1])),
            Err(IdxError::BadMagic { found: 0x801, .. })
        ));
        // label file passed as image file
        assert!(matches!(
            parse_idx_images(&idx_labels(&[1])),
            Err(IdxError::BadMagic { .. })
        ));
    }

    #[test]
    fn rejects_truncated_file() {
        let img = idx_images(4, 28, 28, 7);
        let cut = &img[..img.len() - 1];
        assert!(matches!(
            parse_idx_images(cut),
            Err(IdxError::Truncated { .. })
        ));
        assert!(matches!(
            parse_idx_images(&img[..10]),
            Err(IdxError::Truncated { .. })
        ));
        let lab = idx_labels(&[1, 2, 3]);
        assert!(matches!(
            parse_idx_labels(&lab[..lab.len() - 1]),
            Err(IdxError::Truncated { .. })
        ));
    }

    #[test]
    fn rejects_count_mismatch() {
        assert!(matches!(
            dataset_from_idx(&idx_images(2, 2, 2, 0), &idx_labels(&[1, 2, 3])),
            Err(IdxError::CountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }

    #[test]
    fn missing_directory_is_io_error() {
        let err = load_mnist(Path::new("/nonexistent/mnist")).unwrap_err();
        assert!(matches!(err, IdxError::Io { .. }));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthetic(1000, 12, 10, 2.0, 4);
        assert_eq!(a.len(), 1000);
        assert_eq!(a.class_counts(), vec![100; 10]);
        assert_eq!(a, synthetic(1000, 12, 10, 2.0, 4));
        assert_ne!(a, synthetic(1000, 12, 10, 2.0, 5));
    }

    #[test]
    fn validation_split_is_disjoint_and_sized() {
        let src = DatasetSource::Synthetic {
            samples: 500,
            features: 4,
            classes: 5,
            separation: 2.0,
        };
        let (train, val) = load_dataset(&src, 100, 1).unwrap();
        assert_eq!(train.len(), 500);
        assert_eq!(val.len(), 100);
        assert!(load_dataset(&src, 0, 1).is_err());
    }
}
