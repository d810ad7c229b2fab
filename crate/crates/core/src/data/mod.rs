//! Datasets: synthetic generators, file readers, splitting and
//! normalization.

mod cache;
mod idx;
mod synth;
mod table;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::{read_cache, write_cache};
pub use idx::{read_idx, write_idx};
pub use synth::{gen_gaussian_mixture, gen_imbalanced};
pub use table::read_csv;

use crate::error::{Error, Result};
use crate::rng::stream;

/// Per-feature affine map applied as `(v - mean) / scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

/// Samples stored row-major, one row of `feature_len()` values each.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    feature_shape: Vec<usize>,
    classes: usize,
    normalization: Option<Normalization>,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, feature_shape: Vec<usize>, classes: usize) -> Result<Self> {
        let len: usize = feature_shape.iter().product();
        if feature_shape.is_empty() || len == 0 {
            return Err(Error::Format(format!("bad feature shape {feature_shape:?}")));
        }
        if features.len() != labels.len() * len {
            return Err(Error::Dimension {
                expected: labels.len() * len,
                got: features.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset feature"));
        }
        Ok(Self {
            features,
            labels,
            feature_shape,
            classes,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_shape(&self) -> &[usize] {
        &self.feature_shape
    }

    pub fn feature_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let len = self.feature_len();
        &self.features[i * len..(i + 1) * len]
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.feature_len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_shape: self.feature_shape.clone(),
            classes: self.classes,
            normalization: self.normalization.clone(),
        }
    }

    /// Concatenated rows `indices`.
    pub fn gather(&self, indices: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(indices.len() * self.feature_len());
        for &i in indices {
            out.extend_from_slice(self.row(i));
        }
        out
    }

    /// SHA-256 over shape, classes, feature bits and labels.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for &d in &self.feature_shape {
            h.update((d as u64).to_le_bytes());
        }
        h.update((self.classes as u64).to_le_bytes());
        for v in &self.features {
            h.update(v.to_bits().to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        h.finalize().into()
    }

    /// Per-dimension mean and population standard deviation; constant
    /// dimensions get scale 1 and are only centered.
    pub fn fit_normalization(&self) -> Normalization {
        let len = self.feature_len();
        let n = self.len().max(1) as f64;
        let mut mean = vec![0.0; len];
        for row in self.features.chunks(len) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; len];
        for row in self.features.chunks(len) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 { sd } else { 1.0 }
            })
            .collect();
        Normalization { mean, scale }
    }

    pub fn normalized(&self, norm: &Normalization) -> Result<Dataset> {
        let len = self.feature_len();
        if norm.mean.len() != len || norm.scale.len() != len {
            return Err(Error::Dimension {
                expected: len,
                got: norm.mean.len(),
            });
        }
        let mut features = self.features.clone();
        for row in features.chunks_mut(len) {
            for ((v, m), s) in row.iter_mut().zip(&norm.mean).zip(&norm.scale) {
                *v = (*v - m) / s;
            }
        }
        Ok(Dataset {
            features,
            normalization: Some(norm.clone()),
            ..self.clone()
        })
    }
}

/// Disjoint train / eval index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Seeded shuffle keyed by `(seed, fingerprint)`; both lists are sorted.
pub fn split(ds: &Dataset, eval_count: usize, seed: u64) -> Result<Split> {
    if eval_count >= ds.len() {
        return Err(Error::Budget {
            requested: eval_count,
            available: ds.len(),
        });
    }
    let fp = ds.fingerprint();
    let key = u64::from_le_bytes(fp[..8].try_into().unwrap());
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut stream(seed ^ key, "split", 0));
    let mut eval = order[..eval_count].to_vec();
    let mut train = order[eval_count..].to_vec();
    eval.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, eval })
}

/// Splits, then normalizes both halves with statistics of the train half.
pub fn train_eval(ds: &Dataset, eval_count: usize, seed: u64, normalize: bool) -> Result<(Dataset, Dataset)> {
    let s = split(ds, eval_count, seed)?;
    let (train, eval) = (ds.subset(&s.train), ds.subset(&s.eval));
    if !normalize {
        return Ok((train, eval));
    }
    let norm = train.fit_normalization();
    Ok((train.normalized(&norm)?, eval.normalized(&norm)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = gen_gaussian_mixture(3, 50, 2, 3.0, 1).unwrap();
        let a = split(&ds, 30, 7).unwrap();
        assert_eq!(a, split(&ds, 30, 7).unwrap());
        assert_ne!(a, split(&ds, 30, 8).unwrap());
        assert_eq!(a.eval.len(), 30);
        let mut all: Vec<usize> = a.train.iter().chain(&a.eval).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..150).collect::<Vec<_>>());
    }

    #[test]
    fn normalization_gives_zero_mean_unit_scale() {
        let ds = gen_gaussian_mixture(4, 100, 3, 5.0, 2).unwrap();
        let (train, eval) = train_eval(&ds, 100, 0, true).unwrap();
        assert_eq!(eval.len(), 100);
        let n = train.fit_normalization();
        for (m, s) in n.mean.iter().zip(&n.scale) {
            assert!(m.abs() < 1e-6 && (s - 1.0).abs() < 1e-6, "{m} {s}");
        }
        assert!(train.normalization().is_some());
    }

    #[test]
    fn rejects_inconsistent_construction() {
        assert!(Dataset::new(vec![0.0; 3], vec![0, 1], vec![2], 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], vec![0, 2], vec![2], 2).is_err());
        assert!(Dataset::new(vec![0.0; 4], vec![0, 1], vec![2], 2).is_ok());
    }
}
