//! Minimal feedforward Q-network: sigmoid hidden layers, one linear output,
//! trained by SGD on mean squared error. Sized [63, 100, 100, 1] for the
//! energy agents, but generic so tests can gradient-check small nets.

use super::encoding::ActiveBits;
use super::DrlError;
use rand::Rng;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

const CHECKPOINT_MAGIC: &str = "zec-qnet v1";

/// Layer sizes used by the energy agents.
pub const QNET_SIZES: [usize; 4] = [63, 100, 100, 1];

/// Flat parameter store plus per-layer offsets. Layer 0 weights are kept
/// input-major so a one-hot input touches contiguous rows; deeper layers are
/// row-major by output neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    weight_offsets: Vec<usize>,
    bias_offsets: Vec<usize>,
    train_buf: Option<TrainBuf>,
}

#[derive(Debug, Clone, PartialEq)]
struct TrainBuf {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    grads: Vec<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Dot product with four fixed-order accumulators; deterministic and wide
/// enough to hide FP latency.
#[inline]
fn dot4(w: &[f64], x: &[f64]) -> f64 {
    debug_assert_eq!(w.len(), x.len());
    let n = w.len();
    let head = n - n % 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    let mut k = 0;
    while k < head {
        s0 += w[k] * x[k];
        s1 += w[k + 1] * x[k + 1];
        s2 += w[k + 2] * x[k + 2];
        s3 += w[k + 3] * x[k + 3];
        k += 4;
    }
    let mut tail = 0.0;
    while k < n {
        tail += w[k] * x[k];
        k += 1;
    }
    (s0 + s1) + (s2 + s3) + tail
}

impl Mlp {
    /// Xavier-uniform weights (±sqrt(6/(fan_in+fan_out))), zero biases.
    pub fn new(sizes: &[usize], rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "need input and output layers");
        assert!(sizes.iter().all(|&s| s >= 1), "layer sizes must be positive");
        assert_eq!(*sizes.last().unwrap(), 1, "scalar Q output");
        let mut net = Self::zeroed(sizes.to_vec());
        for l in 0..net.layer_count() {
            let limit = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
            let start = net.weight_offsets[l];
            let len = sizes[l] * sizes[l + 1];
            for w in &mut net.params[start..start + len] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        net
    }

    pub(crate) fn zeroed(sizes: Vec<usize>) -> Self {
        let layers = sizes.len() - 1;
        let mut weight_offsets = Vec::with_capacity(layers);
        let mut bias_offsets = Vec::with_capacity(layers);
        let mut total = 0;
        for l in 0..layers {
            weight_offsets.push(total);
            total += sizes[l] * sizes[l + 1];
            bias_offsets.push(total);
            total += sizes[l + 1];
        }
        Mlp { sizes, params: vec![0.0; total], weight_offsets, bias_offsets, train_buf: None }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn param(&self, k: usize) -> f64 {
        self.params[k]
    }

    pub fn set_param(&mut self, k: usize, value: f64) {
        self.params[k] = value;
    }

    #[inline]
    fn weights(&self, layer: usize) -> &[f64] {
        let start = self.weight_offsets[layer];
        &self.params[start..start + self.sizes[layer] * self.sizes[layer + 1]]
    }

    #[inline]
    fn biases(&self, layer: usize) -> &[f64] {
        let start = self.bias_offsets[layer];
        &self.params[start..start + self.sizes[layer + 1]]
    }

    fn fresh_acts(&self) -> Vec<Vec<f64>> {
        (1..self.sizes.len()).map(|l| vec![0.0; self.sizes[l]]).collect()
    }

    /// Forward pass from hot input bits; fills `acts` (one vector per
    /// non-input layer, post-activation) and returns the scalar output.
    fn forward_into(&self, bits: &ActiveBits, acts: &mut [Vec<f64>]) -> f64 {
        let h1 = self.sizes[1];
        let last_layer = self.layer_count() - 1;
        {
            let first = &mut acts[0];
            first.copy_from_slice(self.biases(0));
            let w0 = self.weights(0);
            for i in bits.indices() {
                debug_assert!(i < self.sizes[0]);
                let row = &w0[i * h1..(i + 1) * h1];
                for (a, w) in first.iter_mut().zip(row) {
                    *a += w;
                }
            }
            if last_layer == 0 {
                // Single weight layer: linear output straight off the input.
                return first[0];
            }
            for a in first.iter_mut() {
                *a = sigmoid(*a);
            }
        }
        for layer in 1..=last_layer {
            let n_in = self.sizes[layer];
            let w = self.weights(layer);
            let b = self.biases(layer);
            let hidden = layer < last_layer;
            let (prev_part, cur_part) = acts.split_at_mut(layer);
            let prev = &prev_part[layer - 1];
            let cur = &mut cur_part[0];
            for (j, out) in cur.iter_mut().enumerate() {
                let pre = b[j] + dot4(&w[j * n_in..(j + 1) * n_in], prev);
                *out = if hidden { sigmoid(pre) } else { pre };
            }
        }
        acts[last_layer][0]
    }

    /// Q-value from hot bits (allocates scratch; the training path reuses
    /// internal buffers instead).
    pub fn q_bits(&self, bits: &ActiveBits) -> f64 {
        let mut acts = self.fresh_acts();
        self.forward_into(bits, &mut acts)
    }

    /// Q-value for a dense input vector; zero entries contribute nothing, so
    /// a one-hot input takes the same arithmetic path as `q_bits`.
    pub fn q_value(&self, input: &[f64]) -> Result<f64, DrlError> {
        if input.len() != self.sizes[0] {
            return Err(DrlError::ShapeMismatch { got: input.len(), want: self.sizes[0] });
        }
        let h1 = self.sizes[1];
        let last_layer = self.layer_count() - 1;
        let mut acts = self.fresh_acts();
        {
            let first = &mut acts[0];
            first.copy_from_slice(self.biases(0));
            let w0 = self.weights(0);
            for (i, &x) in input.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = &w0[i * h1..(i + 1) * h1];
                for (a, w) in first.iter_mut().zip(row) {
                    *a += x * w;
                }
            }
            if last_layer == 0 {
                return Ok(first[0]);
            }
            for a in first.iter_mut() {
                *a = sigmoid(*a);
            }
        }
        for layer in 1..=last_layer {
            let n_in = self.sizes[layer];
            let w = self.weights(layer);
            let b = self.biases(layer);
            let hidden = layer < last_layer;
            let (prev_part, cur_part) = acts.split_at_mut(layer);
            let prev = &prev_part[layer - 1];
            let cur = &mut cur_part[0];
            for (j, out) in cur.iter_mut().enumerate() {
                let pre = b[j] + dot4(&w[j * n_in..(j + 1) * n_in], prev);
                *out = if hidden { sigmoid(pre) } else { pre };
            }
        }
        Ok(acts[last_layer][0])
    }

    /// Mean squared error over (input bits, target) samples; no gradients.
    pub fn batch_loss(&self, samples: &[(ActiveBits, f64)]) -> f64 {
        assert!(!samples.is_empty());
        let mut acts = self.fresh_acts();
        let mut total = 0.0;
        for (bits, target) in samples {
            let q = self.forward_into(bits, &mut acts);
            total += (q - target) * (q - target);
        }
        total / samples.len() as f64
    }

    /// Analytic gradients of the batch MSE, flat like `params`; returns
    /// (loss, gradients). Allocates; diagnostic and test use.
    pub fn batch_gradients(&self, samples: &[(ActiveBits, f64)]) -> (f64, Vec<f64>) {
        let mut acts = self.fresh_acts();
        let mut deltas = self.fresh_acts();
        let mut grads = vec![0.0; self.params.len()];
        let sq_sum = self.accumulate(samples, &mut acts, &mut deltas, &mut grads);
        let n = samples.len() as f64;
        grads.iter_mut().for_each(|g| *g /= n);
        (sq_sum / n, grads)
    }

    /// One SGD step on the batch MSE; returns the pre-update loss.
    pub fn sgd_step(&mut self, samples: &[(ActiveBits, f64)], alpha: f64) -> f64 {
        let mut buf = self.train_buf.take().unwrap_or_else(|| TrainBuf {
            acts: self.fresh_acts(),
            deltas: self.fresh_acts(),
            grads: vec![0.0; self.params.len()],
        });
        buf.grads.iter_mut().for_each(|g| *g = 0.0);
        let sq_sum = self.accumulate(samples, &mut buf.acts, &mut buf.deltas, &mut buf.grads);
        let n = samples.len() as f64;
        let scale = alpha / n;
        for (p, g) in self.params.iter_mut().zip(&buf.grads) {
            *p -= scale * g;
        }
        debug_assert!(self.params.iter().all(|p| p.is_finite()), "parameters must stay finite");
        self.train_buf = Some(buf);
        sq_sum / n
    }

    /// Shared forward+backward over a batch. `grads` accumulates the
    /// gradient of the summed squared error (callers divide by batch size);
    /// returns that sum.
    fn accumulate(
        &self,
        samples: &[(ActiveBits, f64)],
        acts: &mut [Vec<f64>],
        deltas: &mut [Vec<f64>],
        grads: &mut [f64],
    ) -> f64 {
        assert!(!samples.is_empty());
        let last_layer = self.layer_count() - 1;
        let mut sq_sum = 0.0;
        for (bits, target) in samples {
            let q = self.forward_into(bits, acts);
            let err = q - target;
            sq_sum += err * err;
            // Linear output: delta at the output equals d(err²)/dq.
            deltas[last_layer][0] = 2.0 * err;

            for layer in (0..=last_layer).rev() {
                let n_in = self.sizes[layer];
                let n_out = self.sizes[layer + 1];
                let woff = self.weight_offsets[layer];
                let boff = self.bias_offsets[layer];

                let (deltas_prev, deltas_cur) = deltas.split_at_mut(layer);
                let delta = &deltas_cur[0];

                for (j, d) in delta.iter().enumerate() {
                    grads[boff + j] += d;
                }
                if layer == 0 {
                    // One-hot input: only the hot rows receive gradient.
                    for i in bits.indices() {
                        let row = &mut grads[woff + i * n_out..woff + (i + 1) * n_out];
                        for (gw, d) in row.iter_mut().zip(delta) {
                            *gw += d;
                        }
                    }
                } else {
                    let a_prev = &acts[layer - 1];
                    for (j, d) in delta.iter().enumerate() {
                        let row = &mut grads[woff + j * n_in..woff + (j + 1) * n_in];
                        for (gw, a) in row.iter_mut().zip(a_prev) {
                            *gw += d * a;
                        }
                    }
                    // Propagate to the previous (sigmoid) layer: axpy per
                    // output row, then the σ' factor.
                    let d_prev = &mut deltas_prev[layer - 1];
                    d_prev.iter_mut().for_each(|d| *d = 0.0);
                    let w = self.weights(layer);
                    for (j, d) in delta.iter().enumerate() {
                        let row = &w[j * n_in..(j + 1) * n_in];
                        for (dp, wji) in d_prev.iter_mut().zip(row) {
                            *dp += d * wji;
                        }
                    }
                    for (dp, a) in d_prev.iter_mut().zip(a_prev) {
                        *dp *= a * (1.0 - a);
                    }
                }
            }
        }
        sq_sum
    }

    /// Writes a versioned text checkpoint: magic line, layer sizes, then one
    /// parameter per line in flat order.
    pub fn save(&self, path: &Path) -> Result<(), DrlError> {
        let mut text = String::with_capacity(self.params.len() * 20 + 64);
        text.push_str(CHECKPOINT_MAGIC);
        text.push_str("\nsizes");
        for s in &self.sizes {
            write!(text, " {s}").expect("writing to a String cannot fail");
        }
        text.push('\n');
        for p in &self.params {
            writeln!(text, "{p}").expect("writing to a String cannot fail");
        }
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp, DrlError> {
        let reject = |reason: String| DrlError::Checkpoint { path: path.display().to_string(), reason };
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some(CHECKPOINT_MAGIC) => {}
            other => return Err(reject(format!("bad magic line {other:?}"))),
        }
        let sizes_line = lines.next().ok_or_else(|| reject("missing sizes line".into()))?;
        let mut fields = sizes_line.split_whitespace();
        if fields.next() != Some("sizes") {
            return Err(reject("missing sizes line".into()));
        }
        let sizes: Vec<usize> = fields
            .map(|f| f.parse().map_err(|_| reject(format!("bad layer size `{f}`"))))
            .collect::<Result<_, _>>()?;
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) || *sizes.last().unwrap() != 1 {
            return Err(reject(format!("invalid layer sizes {sizes:?}")));
        }
        let mut net = Self::zeroed(sizes);
        let mut count = 0;
        for (k, line) in lines.enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if count >= net.params.len() {
                return Err(reject("more parameters than the sizes allow".into()));
            }
            let value: f64 = trimmed.parse().map_err(|_| reject(format!("bad parameter on line {}", k + 3)))?;
            if !value.is_finite() {
                return Err(reject(format!("non-finite parameter on line {}", k + 3)));
            }
            net.params[count] = value;
            count += 1;
        }
        if count != net.params.len() {
            return Err(reject(format!("expected {} parameters, found {count}", net.params.len())));
        }
        Ok(net)
    }

    /// Loads a checkpoint and rejects it unless its layer sizes match.
    pub fn load_expecting(path: &Path, sizes: &[usize]) -> Result<Mlp, DrlError> {
        let net = Self::load(path)?;
        if net.sizes != sizes {
            return Err(DrlError::Checkpoint {
                path: path.display().to_string(),
                reason: format!("layer sizes {:?} do not match expected {sizes:?}", net.sizes),
            });
        }
        Ok(net)
    }
}
