//! Labelled datasets: IDX (MNIST-format) files and a seeded synthetic
//! teacher task.

use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{io_at, GapError, Result};
use crate::model::{argmax, Targets};
use crate::rng::{rng_for, stream};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Row-major samples with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Split {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 || features.len() != dim * labels.len() {
            return Err(GapError::Shape(format!(
                "{} features cannot hold {} samples of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        Ok(Self {
            dim,
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Features and label targets for the given sample indices.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor, Targets)> {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(GapError::Shape(format!(
                    "sample {i} out of range {}",
                    self.len()
                )));
            }
            x.extend_from_slice(self.sample(i));
            y.push(self.labels[i]);
        }
        Ok((
            Tensor::new(vec![idx.len(), self.dim], x)?,
            Targets::Labels(y),
        ))
    }

    pub fn all(&self) -> Result<(Tensor, Targets)> {
        let idx: Vec<usize> = (0..self.len()).collect();
        self.batch(&idx)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub train: Split,
    pub validation: Split,
    pub num_classes: usize,
}

impl Dataset {
    /// Holds out the last `round(val_fraction * n)` samples for validation.
    pub fn from_split(all: Split, num_classes: usize, val_fraction: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(GapError::Config(format!(
                "validation fraction {val_fraction} outside [0,1)"
            )));
        }
        if let Some(&bad) = all.labels.iter().find(|&&y| y >= num_classes) {
            return Err(GapError::Format(format!(
                "label {bad} outside {num_classes} classes"
            )));
        }
        let n = all.len();
        let n_val = (val_fraction * n as f64).round() as usize;
        let n_train = n - n_val;
        if n_train == 0 {
            return Err(GapError::Config(
                "no training samples left after the split".into(),
            ));
        }
        let dim = all.dim;
        let (tx, vx) = all.features.split_at(n_train * dim);
        let (ty, vy) = all.labels.split_at(n_train);
        Ok(Self {
            train: Split::new(dim, tx.to_vec(), ty.to_vec())?,
            validation: Split {
                dim,
                features: vx.to_vec(),
                labels: vy.to_vec(),
            },
            num_classes,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.train.dim
    }
}

fn read_u32_be(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| GapError::Format("truncated IDX header".into()))
}

/// Parses an IDX image file: magic, then `N`, then the remaining dims, then
/// `N * prod(dims)` unsigned bytes. Pixels are scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, Vec<f64>)> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(GapError::Format(format!("bad image magic {magic:#010x}")));
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * dim {
        return Err(GapError::Format(format!(
            "image payload has {} bytes, header promises {}",
            body.len(),
            n * dim
        )));
    }
    Ok((dim, body.iter().map(|&b| b as f64 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(GapError::Format(format!("bad label magic {magic:#010x}")));
    }
    let n = read_u32_be(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(GapError::Format(format!(
            "label payload has {} bytes, header promises {n}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Loads an image/label IDX pair. The class count is `max(label) + 1`.
pub fn load_idx(images: &Path, labels: &Path, val_fraction: f64) -> Result<Dataset> {
    let (dim, features) = parse_idx_images(&fs::read(images).map_err(io_at(images))?)?;
    let labels = parse_idx_labels(&fs::read(labels).map_err(io_at(labels))?)?;
    if features.len() / dim.max(1) != labels.len() {
        return Err(GapError::Format(format!(
            "{} images but {} labels",
            features.len() / dim.max(1),
            labels.len()
        )));
    }
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::from_split(Split::new(dim, features, labels)?, classes, val_fraction)
}

/// Serialises samples to an IDX pair (single-row images of width `dim`).
pub fn encode_idx(split: &Split) -> (Vec<u8>, Vec<u8>) {
    let mut img = Vec::new();
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(split.len() as u32).to_be_bytes());
    img.extend_from_slice(&1u32.to_be_bytes());
    img.extend_from_slice(&(split.dim as u32).to_be_bytes());
    img.extend(
        split
            .features
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut lbl = Vec::new();
    lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(split.len() as u32).to_be_bytes());
    lbl.extend(split.labels.iter().map(|&y| y as u8));
    (img, lbl)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Teacher widths, input first, class count last.
    pub teacher: Vec<usize>,
    pub samples: usize,
    /// Probability of replacing a label with a different random class.
    pub noise: f64,
    pub seed: u64,
    pub val_fraction: f64,
}

/// Random teacher network: Gaussian weights scaled by `1/sqrt(fan_in)`, no
/// biases, `tanh` hidden units. For two classes the labels are balanced in
/// distribution, since the logit difference is an odd function of a
/// symmetric input.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    layers: Vec<(usize, usize, Vec<f64>)>,
}

impl Teacher {
    pub fn classify(&self, x: &[f64]) -> usize {
        let mut act = x.to_vec();
        for (k, (inp, out, w)) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; *out];
            for o in 0..*out {
                next[o] = (0..*inp).map(|i| w[o * inp + i] * act[i]).sum();
            }
            if k + 1 < self.layers.len() {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            act = next;
        }
        argmax(&act)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub dataset: Dataset,
    pub teacher: Teacher,
}

pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SyntheticTask> {
    if spec.teacher.len() < 2 || spec.teacher.contains(&0) || spec.teacher.last() == Some(&1) {
        return Err(GapError::Config(format!(
            "invalid teacher widths {:?}",
            spec.teacher
        )));
    }
    if spec.samples == 0 || !(0.0..=1.0).contains(&spec.noise) {
        return Err(GapError::Config(
            "synthetic data needs samples > 0 and noise in [0,1]".into(),
        ));
    }
    let mut rng = rng_for(spec.seed, stream::SYNTHETIC, 0, 0);
    let layers = spec
        .teacher
        .windows(2)
        .map(|p| {
            let scale = 1.0 / (p[0] as f64).sqrt();
            let w = (0..p[0] * p[1])
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect::<Vec<f64>>();
            (p[0], p[1], w)
        })
        .collect();
    let teacher = Teacher { layers };
    let dim = spec.teacher[0];
    let classes = *spec.teacher.last().expect("checked length");
    let mut features = Vec::with_capacity(spec.samples * dim);
    let mut labels = Vec::with_capacity(spec.samples);
    for _ in 0..spec.samples {
        let x: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut y = teacher.classify(&x);
        if spec.noise > 0.0 && rng.random::<f64>() < spec.noise {
            let other = rng.random_range(0..classes - 1);
            y = if other >= y { other + 1 } else { other };
        }
        features.extend_from_slice(&x);
        labels.push(y);
    }
    let dataset = Dataset::from_split(
        Split::new(dim, features, labels)?,
        classes,
        spec.val_fraction,
    )?;
    Ok(SyntheticTask { dataset, teacher })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
        for v in [n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        b
    }

    #[test]
    fn parses_28x28_images() {
        let (dim, px) = parse_idx_images(&image_bytes(3, 28, 28, 255)).unwrap();
        assert_eq!(dim, 784);
        assert_eq!(px.len(), 3 * 784);
        assert!(px.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn rejects_wrong_magic_and_truncation() {
        let mut b = image_bytes(2, 2, 2, 7);
        assert!(parse_idx_labels(&b).is_err());
        b.pop();
        assert!(matches!(parse_idx_images(&b), Err(GapError::Format(_))));
        assert!(matches!(
            parse_idx_images(&b[..10]),
            Err(GapError::Format(_))
        ));
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        fs::write(&img, image_bytes(3, 2, 2, 0)).unwrap();
        let mut l = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        l.extend_from_slice(&2u32.to_be_bytes());
        l.extend_from_slice(&[0, 1]);
        fs::write(&lbl, l).unwrap();
        assert!(matches!(
            load_idx(&img, &lbl, 0.0),
            Err(GapError::Format(_))
        ));
    }

    #[test]
    fn teacher_is_perfect_without_noise() {
        let spec = SyntheticSpec {
            teacher: vec![5, 7, 3],
            samples: 300,
            noise: 0.0,
            seed: 4,
            val_fraction: 0.2,
        };
        let task = make_synthetic(&spec).unwrap();
        let ds = &task.dataset;
        assert_eq!(ds.train.len(), 240);
        assert_eq!(ds.validation.len(), 60);
        for i in 0..ds.train.len() {
            assert_eq!(
                task.teacher.classify(ds.train.sample(i)),
                ds.train.labels()[i]
            );
        }
        let again = make_synthetic(&spec).unwrap();
        assert_eq!(again.dataset, task.dataset);
    }

    #[test]
    fn noise_flips_labels() {
        let spec = SyntheticSpec {
            teacher: vec![4, 2],
            samples: 2000,
            noise: 0.3,
            seed: 1,
            val_fraction: 0.0,
        };
        let task = make_synthetic(&spec).unwrap();
        let wrong = (0..2000)
            .filter(|&i| {
                task.teacher.classify(task.dataset.train.sample(i))
                    != task.dataset.train.labels()[i]
            })
            .count();
        // 600 expected; sd ~ 20
        assert!((500..700).contains(&wrong), "{wrong}");
    }
}
