//! Dataset container and the synthetic blob generator.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Dense feature matrix plus integer labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// Row-major `num_samples x feature_dim`.
    pub features: Vec<f64>,
    pub labels: Vec<u32>,
    pub num_samples: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<u32>,
        feature_dim: usize,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one sample".into()));
        }
        if features.len() != n * feature_dim {
            return Err(Error::DimMismatch {
                expected: n * feature_dim,
                got: features.len(),
            });
        }
        if let Some((i, y)) = labels
            .iter()
            .enumerate()
            .find(|(_, y)| **y as usize >= num_classes)
        {
            return Err(Error::InvalidArgument(format!(
                "label {y} of sample {i} exceeds class count {num_classes}"
            )));
        }
        if let Some((i, v)) = features.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature entry {i} is {v}")));
        }
        Ok(Dataset {
            features,
            labels,
            num_samples: n,
            feature_dim,
            num_classes,
            split,
        })
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        &self.features[i * self.feature_dim..(i + 1) * self.feature_dim]
    }

    /// Splits off the first `n_train` samples as a training set; the rest
    /// become the held-out set.
    pub fn split_at(self, n_train: usize) -> Result<(Dataset, Dataset)> {
        if n_train == 0 || n_train >= self.num_samples {
            return Err(Error::InvalidArgument(format!(
                "split point {n_train} must be strictly inside (0, {})",
                self.num_samples
            )));
        }
        let d = self.feature_dim;
        let train = Dataset {
            features: self.features[..n_train * d].to_vec(),
            labels: self.labels[..n_train].to_vec(),
            num_samples: n_train,
            feature_dim: d,
            num_classes: self.num_classes,
            split: Split::Train,
        };
        let test = Dataset {
            features: self.features[n_train * d..].to_vec(),
            labels: self.labels[n_train..].to_vec(),
            num_samples: self.num_samples - n_train,
            feature_dim: d,
            num_classes: self.num_classes,
            split: Split::Test,
        };
        Ok((train, test))
    }
}

/// `k` Gaussian blobs with unit-separated means and the given spread,
/// deterministic under `seed`, labels balanced round-robin.
///
/// Class means sit on the integer lattice: class `j`'s mean has the base-`s`
/// digits of `j` as coordinates, `s` chosen so all `k` fit, which puts
/// adjacent means exactly distance 1 apart.
pub fn synth_dataset(seed: u64, n: usize, d: usize, k: usize, spread: f64) -> Result<Dataset> {
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!(
            "need n >= k >= 2, got n = {n}, k = {k}"
        )));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("feature dimension must be positive".into()));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "spread must be positive and finite, got {spread}"
        )));
    }

    // Smallest lattice side s with s^d >= k.
    let mut side = 1usize;
    while (side as f64).powi(d as i32) < k as f64 {
        side += 1;
    }
    let mut means = vec![vec![0.0; d]; k];
    for (j, mean) in means.iter_mut().enumerate() {
        let mut rest = j;
        for coord in mean.iter_mut() {
            *coord = (rest % side) as f64;
            rest /= side;
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % k;
        labels.push(class as u32);
        for mean_coord in &means[class] {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            features.push(mean_coord + spread * noise);
        }
    }
    Dataset::new(features, labels, d, k, Split::Train)
}
