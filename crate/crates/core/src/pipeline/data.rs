//! Dataset generation, loading, and splitting.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Labeled inputs with a fixed class count.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Two-class 3x3 image task: per-class mean patterns plus i.i.d. Gaussian
/// pixel noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySpec {
    pub samples_per_class: usize,
    pub pixel_std: f64,
    /// Row-major 3x3 mean per class.
    pub means: [[f64; 9]; 2],
}

impl Default for ToySpec {
    fn default() -> Self {
        // Class 0: plus sign (center row and column bright); class 1: bright
        // corners. The inter-class contrast leaves classification
        // near-perfect (the class gap is several noise standard deviations)
        // while staying narrow enough that an L-inf budget of 0.1 can carry
        // an input over the decision boundary.
        let hi = 0.59;
        let lo = 0.41;
        let plus = [lo, hi, lo, hi, hi, hi, lo, hi, lo];
        let corners = [hi, lo, hi, lo, lo, lo, hi, lo, hi];
        Self {
            samples_per_class: 500,
            pixel_std: 0.05,
            means: [plus, corners],
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.pixel_std <= 0.0 {
            return Err(Error::Config("pixel_std must be positive".into()));
        }
        if self.means[0] == self.means[1] {
            return Err(Error::Config("class means must differ".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::Config("need at least one sample per class".into()));
        }
        Ok(())
    }
}

/// Sample a balanced toy dataset; classes alternate so any prefix is roughly
/// balanced. Pixels are clamped to [0, 1], the attack's clip range.
pub fn gen_toy(spec: &ToySpec, seed: u64) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.pixel_std).map_err(|e| Error::Config(e.to_string()))?;
    let n = spec.samples_per_class * 2;
    let mut inputs = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 2;
        let data: Vec<f64> = spec.means[class]
            .iter()
            .map(|&m| (m + noise.sample(&mut rng)).clamp(0.0, 1.0))
            .collect();
        inputs.push(Tensor::new(vec![1, 3, 3], data)?);
        labels.push(class);
    }
    Ok(Dataset {
        inputs,
        labels,
        class_count: 2,
    })
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or(Error::Parse {
            offset,
            message: "unexpected end of file".into(),
        })
}

/// Parse a pair of IDX files (the common handwritten-digit container:
/// big-endian dims, unsigned byte payload). Pixels scale to [0, 1]; images
/// come out shaped (1, h, w).
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = std::fs::read(images_path)?;
    let lbl_bytes = std::fs::read(labels_path)?;

    let magic = read_be_u32(&img_bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad image magic {:#010x}", magic),
        });
    }
    let count = read_be_u32(&img_bytes, 4)? as usize;
    let h = read_be_u32(&img_bytes, 8)? as usize;
    let w = read_be_u32(&img_bytes, 12)? as usize;
    let expected = 16 + count * h * w;
    if img_bytes.len() != expected {
        return Err(Error::Parse {
            offset: img_bytes.len().min(expected),
            message: format!(
                "image payload truncated: need {} bytes, have {}",
                expected,
                img_bytes.len()
            ),
        });
    }

    let magic = read_be_u32(&lbl_bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad label magic {:#010x}", magic),
        });
    }
    let lbl_count = read_be_u32(&lbl_bytes, 4)? as usize;
    if lbl_bytes.len() != 8 + lbl_count {
        return Err(Error::Parse {
            offset: lbl_bytes.len().min(8 + lbl_count),
            message: format!(
                "label payload truncated: need {} bytes, have {}",
                8 + lbl_count,
                lbl_bytes.len()
            ),
        });
    }
    if lbl_count != count {
        return Err(Error::Parse {
            offset: 4,
            message: format!("{} images but {} labels", count, lbl_count),
        });
    }

    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * h * w;
        let data: Vec<f64> = img_bytes[start..start + h * w]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        inputs.push(Tensor::new(vec![1, h, w], data)?);
        let label = lbl_bytes[8 + i] as usize;
        if label > 9 {
            return Err(Error::Config(format!(
                "label {} at index {} outside [0, 9]",
                label, i
            )));
        }
        labels.push(label);
    }
    Ok(Dataset {
        inputs,
        labels,
        class_count: 10,
    })
}

/// Train/validation/test split indices, 60/20/20, seeded shuffle.
#[derive(Debug, Clone)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_dataset(len: usize, seed: u64) -> SplitIndices {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = len * 60 / 100;
    let n_val = len * 20 / 100;
    SplitIndices {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    }
}

pub fn subset(ds: &Dataset, idx: &[usize]) -> Dataset {
    Dataset {
        inputs: idx.iter().map(|&i| ds.inputs[i].clone()).collect(),
        labels: idx.iter().map(|&i| ds.labels[i]).collect(),
        class_count: ds.class_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_zero_std_reproduces_the_means() {
        let spec = ToySpec {
            pixel_std: 1e-9,
            samples_per_class: 4,
            ..ToySpec::default()
        };
        let ds = gen_toy(&spec, 3).unwrap();
        for (x, &y) in ds.inputs.iter().zip(&ds.labels) {
            for (v, m) in x.data().iter().zip(&spec.means[y]) {
                assert!((v - m).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn empirical_pixel_std_is_close_to_nominal() {
        let spec = ToySpec {
            samples_per_class: 5000,
            ..ToySpec::default()
        };
        let ds = gen_toy(&spec, 11).unwrap();
        // Per-pixel standard deviation within each class.
        for class in 0..2 {
            for pix in 0..9 {
                let vals: Vec<f64> = ds
                    .inputs
                    .iter()
                    .zip(&ds.labels)
                    .filter(|(_, &y)| y == class)
                    .map(|(x, _)| x.data()[pix])
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
                let std = var.sqrt();
                assert!(
                    (0.045..=0.055).contains(&std),
                    "class {} pixel {}: std {}",
                    class,
                    pix,
                    std
                );
            }
        }
    }

    #[test]
    fn seeds_control_the_sample() {
        let spec = ToySpec::default();
        let a = gen_toy(&spec, 1).unwrap();
        let b = gen_toy(&spec, 1).unwrap();
        let c = gen_toy(&spec, 2).unwrap();
        assert_eq!(a.inputs[0].data(), b.inputs[0].data());
        assert_ne!(a.inputs[0].data(), c.inputs[0].data());
    }

    #[test]
    fn classes_are_balanced() {
        let ds = gen_toy(&ToySpec::default(), 5).unwrap();
        let ones = ds.labels.iter().filter(|&&y| y == 1).count();
        assert_eq!(ones * 2, ds.len());
    }

    fn idx_fixture() -> (Vec<u8>, Vec<u8>) {
        // Two 2x3 images built byte by byte.
        let mut images = Vec::new();
        images.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&3u32.to_be_bytes());
        images.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
        images.extend_from_slice(&[255, 204, 153, 102, 51, 0]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[7, 3]);
        (images, labels)
    }

    #[test]
    fn idx_fixture_parses_to_exact_pixels() {
        let (images, labels) = idx_fixture();
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lbl.idx");
        std::fs::write(&ip, &images).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        let ds = load_idx(&ip, &lp).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.labels, vec![7, 3]);
        assert_eq!(ds.inputs[0].shape(), &[1, 2, 3]);
        let want: Vec<f64> = [0, 51, 102, 153, 204, 255]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        assert_eq!(ds.inputs[0].data(), want.as_slice());
        assert_eq!(ds.inputs[1].data()[5], 0.0);
    }

    #[test]
    fn truncated_and_mismatched_idx_files_error() {
        let (images, labels) = idx_fixture();
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.idx");
        let lp = dir.path().join("lbl.idx");

        std::fs::write(&ip, &images[..images.len() - 2]).unwrap();
        std::fs::write(&lp, &labels).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Parse { .. })));

        // Count mismatch: forge a 3-image header.
        let mut bad = images.clone();
        bad[4..8].copy_from_slice(&3u32.to_be_bytes());
        std::fs::write(&ip, &bad).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Parse { .. })));

        // Bad label value.
        std::fs::write(&ip, &images).unwrap();
        let mut bad_labels = labels.clone();
        bad_labels[9] = 11;
        std::fs::write(&lp, &bad_labels).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Config(_))));
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let a = split_dataset(100, 9);
        let b = split_dataset(100, 9);
        assert_eq!(a.train, b.train);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (60, 20, 20));
        let mut all: Vec<usize> = a
            .train
            .iter()
            .chain(&a.val)
            .chain(&a.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }
}
