//! Scalar-in, scalar-out feedforward network with tanh hidden layers and a
//! linear output neuron, plus the min-max scaling used around it.
//!
//! Parameters are stored per layer as a row-major weight matrix
//! (`n_out × n_in`) followed by a bias vector. [`Network::flatten`] walks the
//! layers in order and emits each layer's weights row by row, then its
//! biases; that order is also the column order of the Jacobian and the
//! on-disk model format.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major, `n_out × n_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n_in..(i + 1) * self.n_in]
    }

    fn param_count(&self) -> usize {
        self.n_out * self.n_in + self.n_out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
}

/// Total trainable parameters for a size list `[1, n_1, …, n_L, 1]`.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * w[0] + w[1]).sum()
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(invalid(
            "layer_sizes",
            "need at least input and output layers",
        ));
    }
    if sizes[0] != 1 || sizes[sizes.len() - 1] != 1 {
        return Err(invalid("layer_sizes", "input and output widths must be 1"));
    }
    if sizes.contains(&0) {
        return Err(invalid(
            "layer_sizes",
            "every layer needs at least one unit",
        ));
    }
    Ok(())
}

impl Network {
    /// All-zero network.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Ok(Self {
            sizes: sizes.to_vec(),
            layers,
        })
    }

    /// Weights uniform on `±1/sqrt(fan_in)`, biases zero.
    pub fn init(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..=bound);
            }
        }
        Ok(net)
    }

    /// Builds a network from a flattened parameter vector.
    pub fn unflatten(sizes: &[usize], w: &[f64]) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if w.len() != net.param_count() {
            return Err(Error::Contract(format!(
                "parameter vector has length {}, architecture {:?} needs {}",
                w.len(),
                sizes,
                net.param_count()
            )));
        }
        net.set_params(w);
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            w.extend_from_slice(&layer.weights);
            w.extend_from_slice(&layer.biases);
        }
        w
    }

    /// Overwrites all parameters. `w.len()` must equal `param_count()`.
    pub fn set_params(&mut self, w: &[f64]) {
        assert_eq!(w.len(), self.param_count(), "parameter length mismatch");
        let mut offset = 0;
        for layer in &mut self.layers {
            let nw = layer.weights.len();
            layer.weights.copy_from_slice(&w[offset..offset + nw]);
            offset += nw;
            let nb = layer.biases.len();
            layer.biases.copy_from_slice(&w[offset..offset + nb]);
            offset += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    /// Single-sample forward pass.
    pub fn forward(&self, x: f64) -> Result<f64> {
        let mut a = vec![x];
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            z.clear();
            for i in 0..layer.n_out {
                z.push(affine(layer.biases[i], layer.row(i), &a));
            }
            if idx != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut a, &mut z);
        }
        let y = a[0];
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NumericFault { context: "forward" })
        }
    }

    /// Batch forward pass over a row of `P` inputs. Each output column is
    /// bit-identical to [`Network::forward`] on that input.
    pub fn forward_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let p = inputs.len();
        // Column-major activations: `a[col * width + unit]`.
        let mut a = inputs.to_vec();
        let mut width = 1;
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; p * layer.n_out];
            for col in 0..p {
                let prev = &a[col * width..(col + 1) * width];
                let out = &mut next[col * layer.n_out..(col + 1) * layer.n_out];
                for (i, o) in out.iter_mut().enumerate() {
                    let z = affine(layer.biases[i], layer.row(i), prev);
                    *o = if idx == last { z } else { z.tanh() };
                }
            }
            a = next;
            width = layer.n_out;
        }
        if a.iter().all(|v| v.is_finite()) {
            Ok(a)
        } else {
            Err(Error::NumericFault {
                context: "forward_batch",
            })
        }
    }

    /// Forward pass that keeps every layer's activations, for backprop.
    /// `acts[0]` is the input, `acts[L+1]` the output.
    fn forward_cached(&self, x: f64, acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.layers.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].push(x);
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.split_at_mut(idx + 1);
            let prev = &done[idx];
            let out = &mut rest[0];
            out.clear();
            for i in 0..layer.n_out {
                let z = affine(layer.biases[i], layer.row(i), prev);
                out.push(if idx == last { z } else { z.tanh() });
            }
        }
    }

    /// Writes `∂ŷ/∂w` for input `x` into `row` (length `param_count()`),
    /// in flatten order, and returns `ŷ`.
    pub fn gradient_row(&self, x: f64, row: &mut [f64], scratch: &mut GradScratch) -> f64 {
        debug_assert_eq!(row.len(), self.param_count());
        self.forward_cached(x, &mut scratch.acts);
        let acts = &scratch.acts;
        let n_layers = self.layers.len();

        // Parameter offset of each layer in flatten order.
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.param_count();
        }

        // Linear output: dŷ/dz_out = 1.
        scratch.delta.clear();
        scratch.delta.push(1.0);
        for idx in (0..n_layers).rev() {
            let layer = &self.layers[idx];
            let a_prev = &acts[idx];
            let base = offsets[idx];
            let nw = layer.n_out * layer.n_in;
            for i in 0..layer.n_out {
                let d = scratch.delta[i];
                let dst = &mut row[base + i * layer.n_in..base + (i + 1) * layer.n_in];
                for (g, &a) in dst.iter_mut().zip(a_prev) {
                    *g = d * a;
                }
                row[base + nw + i] = d;
            }
            if idx > 0 {
                // Back through W then tanh' = 1 - a².
                scratch.next.clear();
                scratch.next.resize(layer.n_in, 0.0);
                for i in 0..layer.n_out {
                    let d = scratch.delta[i];
                    for (acc, &w) in scratch.next.iter_mut().zip(layer.row(i)) {
                        *acc += w * d;
                    }
                }
                for (acc, &a) in scratch.next.iter_mut().zip(a_prev) {
                    *acc *= 1.0 - a * a;
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.next);
            }
        }
        acts[n_layers][0]
    }
}

/// Reusable buffers for [`Network::gradient_row`].
#[derive(Debug, Default, Clone)]
pub struct GradScratch {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

#[inline]
fn affine(bias: f64, row: &[f64], input: &[f64]) -> f64 {
    let mut z = bias;
    for (w, a) in row.iter().zip(input) {
        z += w * a;
    }
    z
}

/// Mean squared error `(1/P) Σ (y - t)²`.
pub fn mse(outputs: &[f64], targets: &[f64]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(Error::Contract(format!(
            "mse: {} outputs vs {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    if outputs.is_empty() {
        return Err(Error::Contract("mse: empty batch".into()));
    }
    let sum: f64 = outputs
        .iter()
        .zip(targets)
        .map(|(y, t)| (y - t) * (y - t))
        .sum();
    Ok(sum / outputs.len() as f64)
}

/// Paired inputs (velocities) and targets (rpm commands).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Batch {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Contract(format!(
                "batch: {} inputs vs {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if inputs.is_empty() {
            return Err(Error::Contract(
                "batch must hold at least one sample".into(),
            ));
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
        }
    }
}

/// Affine map of `[min, max]` onto `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(data: &[f64]) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Contract("cannot fit scaling on empty data".into()));
        }
        let (min, max) = data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        Self::new(min, max)
    }

    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(Error::NumericFault {
                context: "scaling range",
            });
        }
        if max <= min {
            return Err(Error::DegenerateRange(min));
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        2.0 * (x - self.min) / (self.max - self.min) - 1.0
    }

    #[inline]
    pub fn reverse(&self, y: f64) -> f64 {
        (y + 1.0) * (self.max - self.min) / 2.0 + self.min
    }
}

/// Scaling for network input (m/s) and output (rpm), fit on training data only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormParams {
    pub input: MinMax,
    pub output: MinMax,
}

impl NormParams {
    pub fn fit(train: &Batch) -> Result<Self> {
        Ok(Self {
            input: MinMax::fit(&train.inputs)?,
            output: MinMax::fit(&train.targets)?,
        })
    }

    pub fn apply(&self, batch: &Batch) -> Batch {
        Batch {
            inputs: batch.inputs.iter().map(|&x| self.input.apply(x)).collect(),
            targets: batch
                .targets
                .iter()
                .map(|&t| self.output.apply(t))
                .collect(),
        }
    }
}

/// A trained network together with its scaling: maps a velocity in m/s to
/// an rpm command.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseModel {
    pub net: Network,
    pub norm: NormParams,
}

impl InverseModel {
    pub fn command(&self, v: f64) -> Result<f64> {
        let y = self.net.forward(self.norm.input.apply(v))?;
        Ok(self.norm.output.reverse(y))
    }
}
