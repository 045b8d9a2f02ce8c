//! A small fully connected network with ReLU hidden layers and a softmax
//! cross-entropy loss, written for exactness rather than speed: everything is
//! `f64`, reductions run in a fixed order, and the backward pass is the exact
//! gradient of the batch mean loss.
//!
//! Parameter flattening order is fixed and load-bearing (the minibatch oracle
//! and every optimizer see the network only through flat vectors): layer by
//! layer from the input side, each layer's weight matrix in row-major order
//! (output-neuron major) followed by its bias vector.

use crate::error::{Error, Result};
use crate::nn::data::Dataset;
use crate::param::ParamVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Architecture: `layer_widths = [input, hidden..., output]`.
#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
}

impl MlpSpec {
    /// Requires at least one hidden layer and all widths positive.
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "architecture needs input, at least one hidden, and output widths; got {:?}",
                layer_widths
            )));
        }
        if layer_widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "all layer widths must be positive; got {:?}",
                layer_widths
            )));
        }
        Ok(MlpSpec { layer_widths })
    }
}

/// The network: per-layer weight matrices (row-major, `out x in`) and biases.
#[derive(Debug, Clone)]
pub struct Mlp {
    widths: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch_size: usize,
    /// `activations[0]` is the input batch; `activations[l+1]` the post-ReLU
    /// output of layer `l` (raw logits for the last layer). All row-major
    /// `batch_size x width`.
    activations: Vec<Vec<f64>>,
    /// Softmax probabilities, `batch_size x output`.
    probs: Vec<f64>,
    labels: Vec<u32>,
}

impl Mlp {
    /// Seeded initialization: weights uniform in `±sqrt(6 / fan_in)`, biases zero.
    pub fn seeded(spec: &MlpSpec, seed: u64) -> Mlp {
        let widths = spec.layer_widths.clone();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(w);
            biases.push(vec![0.0; fan_out]);
        }
        Mlp {
            widths,
            weights,
            biases,
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        (0..self.num_layers())
            .map(|l| self.widths[l] * self.widths[l + 1] + self.widths[l + 1])
            .sum()
    }

    /// Flattens all parameters in the documented order.
    pub fn flatten(&self) -> ParamVector {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.num_layers() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        ParamVector::new(out)
    }

    /// Inverse of [`Mlp::flatten`].
    pub fn load_flat(&mut self, theta: &ParamVector) -> Result<()> {
        if theta.dim() != self.param_count() {
            return Err(Error::DimMismatch {
                expected: self.param_count(),
                got: theta.dim(),
            });
        }
        let flat = theta.as_slice();
        let mut pos = 0;
        for l in 0..self.num_layers() {
            let w_len = self.widths[l] * self.widths[l + 1];
            self.weights[l].copy_from_slice(&flat[pos..pos + w_len]);
            pos += w_len;
            let b_len = self.widths[l + 1];
            self.biases[l].copy_from_slice(&flat[pos..pos + b_len]);
            pos += b_len;
        }
        Ok(())
    }

    /// Mean softmax cross-entropy over the batch, with the activations cached
    /// for [`Mlp::backward`]. Stabilized by max-logit subtraction; the
    /// per-sample loss is `logsumexp(z) - z[label]`, which stays finite for
    /// any finite logits.
    #[allow(clippy::needless_range_loop)]
    pub fn forward_loss(&self, features: &[f64], labels: &[u32]) -> Result<(f64, ForwardCache)> {
        let d = self.input_dim();
        if labels.is_empty() || features.len() != labels.len() * d {
            return Err(Error::DimMismatch {
                expected: labels.len() * d,
                got: features.len(),
            });
        }
        let k = self.output_dim();
        for (i, y) in labels.iter().enumerate() {
            if *y as usize >= k {
                return Err(Error::InvalidArgument(format!(
                    "label {y} of sample {i} exceeds class count {k}"
                )));
            }
        }
        let batch = labels.len();

        let mut activations = Vec::with_capacity(self.num_layers() + 1);
        activations.push(features.to_vec());
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let prev = &activations[l];
            let mut next = vec![0.0; batch * fan_out];
            let last = l + 1 == self.num_layers();
            for b in 0..batch {
                let row = &prev[b * fan_in..(b + 1) * fan_in];
                let out = &mut next[b * fan_out..(b + 1) * fan_out];
                for o in 0..fan_out {
                    let w = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                    let mut z = self.biases[l][o];
                    for i in 0..fan_in {
                        z += w[i] * row[i];
                    }
                    out[o] = if last { z } else { z.max(0.0) };
                }
            }
            activations.push(next);
        }

        let logits = activations.last().unwrap();
        let mut probs = vec![0.0; batch * k];
        let mut loss_sum = 0.0;
        for b in 0..batch {
            let z = &logits[b * k..(b + 1) * k];
            let zmax = z.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let mut denom = 0.0;
            for &v in z {
                denom += (v - zmax).exp();
            }
            let lse = zmax + denom.ln();
            loss_sum += lse - z[labels[b] as usize];
            for (o, &v) in z.iter().enumerate() {
                probs[b * k + o] = (v - zmax).exp() / denom;
            }
        }
        let loss = loss_sum / batch as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("batch loss is {loss}")));
        }

        Ok((
            loss,
            ForwardCache {
                batch_size: batch,
                activations,
                probs,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Exact gradient of the batch mean loss with respect to every parameter,
    /// flattened in the documented order. Must be handed the cache from the
    /// matching [`Mlp::forward_loss`] call.
    #[allow(clippy::needless_range_loop)]
    pub fn backward(&self, cache: &ForwardCache) -> ParamVector {
        let batch = cache.batch_size;
        let k = self.output_dim();
        let inv_batch = 1.0 / batch as f64;

        // d(mean loss)/d(logits) = (softmax - onehot) / batch.
        let mut d_out = vec![0.0; batch * k];
        for b in 0..batch {
            for o in 0..k {
                let indicator = if cache.labels[b] as usize == o { 1.0 } else { 0.0 };
                d_out[b * k + o] = (cache.probs[b * k + o] - indicator) * inv_batch;
            }
        }

        let mut grads_w: Vec<Vec<f64>> = Vec::with_capacity(self.num_layers());
        let mut grads_b: Vec<Vec<f64>> = Vec::with_capacity(self.num_layers());
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let input = &cache.activations[l];
            let mut dw = vec![0.0; fan_in * fan_out];
            let mut db = vec![0.0; fan_out];
            for b in 0..batch {
                let dz = &d_out[b * fan_out..(b + 1) * fan_out];
                let row = &input[b * fan_in..(b + 1) * fan_in];
                for o in 0..fan_out {
                    db[o] += dz[o];
                    let wrow = &mut dw[o * fan_in..(o + 1) * fan_in];
                    for i in 0..fan_in {
                        wrow[i] += dz[o] * row[i];
                    }
                }
            }

            if l > 0 {
                // Propagate to the previous layer's output, masking by its ReLU.
                let mut d_prev = vec![0.0; batch * fan_in];
                for b in 0..batch {
                    let dz = &d_out[b * fan_out..(b + 1) * fan_out];
                    let act = &cache.activations[l][b * fan_in..(b + 1) * fan_in];
                    let dp = &mut d_prev[b * fan_in..(b + 1) * fan_in];
                    for o in 0..fan_out {
                        let wrow = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                        for i in 0..fan_in {
                            dp[i] += dz[o] * wrow[i];
                        }
                    }
                    for i in 0..fan_in {
                        if act[i] <= 0.0 {
                            dp[i] = 0.0;
                        }
                    }
                }
                d_out = d_prev;
            }

            grads_w.push(dw);
            grads_b.push(db);
        }
        grads_w.reverse();
        grads_b.reverse();

        let mut flat = Vec::with_capacity(self.param_count());
        for l in 0..self.num_layers() {
            flat.extend_from_slice(&grads_w[l]);
            flat.extend_from_slice(&grads_b[l]);
        }
        ParamVector::new(flat)
    }

    /// Logits for one feature row.
    #[allow(clippy::needless_range_loop)]
    pub fn logits(&self, row: &[f64]) -> Vec<f64> {
        let mut a = row.to_vec();
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let last = l + 1 == self.num_layers();
            let mut next = vec![0.0; fan_out];
            for o in 0..fan_out {
                let w = &self.weights[l][o * fan_in..(o + 1) * fan_in];
                let mut z = self.biases[l][o];
                for i in 0..fan_in {
                    z += w[i] * a[i];
                }
                next[o] = if last { z } else { z.max(0.0) };
            }
            a = next;
        }
        a
    }

    /// Fraction of samples whose argmax logit matches the label.
    pub fn accuracy(&self, data: &Dataset) -> f64 {
        let mut hits = 0usize;
        for i in 0..data.num_samples {
            let z = self.logits(data.feature_row(i));
            let pred = z
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(idx, _)| idx)
                .unwrap();
            if pred == data.labels[i] as usize {
                hits += 1;
            }
        }
        hits as f64 / data.num_samples as f64
    }
}
