//! Dense-layer kernels shared by the source-target classifiers and the
//! task model. Plain `Vec<f64>` arithmetic: the networks here are a few
//! hundred parameters, so clarity wins over vectorization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A fully connected layer `y = W x + b` with row-major weights.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// `weights[o * in_dim + i]` connects input `i` to output `o`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradient buffer matching a [`DenseLayer`].
#[derive(Debug, Clone)]
pub(crate) struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// Xavier-uniform weights in `±sqrt(6/(fan_in+fan_out))`, zero biases.
    pub fn xavier(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        Self {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        let mut out = self.bias.clone();
        for (o, out_o) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            *out_o += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
        out
    }

    /// Accumulates parameter gradients for one sample and returns `dL/dx`.
    ///
    /// `x` is the input that produced this layer's output and `grad_out`
    /// is `dL/dy` at that output.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut DenseGrad) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(grad_out.len(), self.out_dim);
        let mut grad_x = vec![0.0; self.in_dim];
        for (o, &g) in grad_out.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let grad_row = &mut grad.weights[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grad_row[i] += g * x[i];
                grad_x[i] += g * row[i];
            }
        }
        grad_x
    }

    pub fn zero_grad(&self) -> DenseGrad {
        DenseGrad {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    /// One gradient-descent step: `θ ← θ − lr · scale · g`.
    pub fn apply_step(&mut self, grad: &DenseGrad, lr: f64, scale: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.weights) {
            *w -= lr * scale * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grad.bias) {
            *b -= lr * scale * g;
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn get_param(&self, idx: usize) -> f64 {
        if idx < self.weights.len() {
            self.weights[idx]
        } else {
            self.bias[idx - self.weights.len()]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        if idx < self.weights.len() {
            self.weights[idx] = value;
        } else {
            self.bias[idx - self.weights.len()] = value;
        }
    }
}

/// A stack of dense layers with a ReLU after every layer.
///
/// Used as a feature extractor and as the hidden part of the binary
/// source-target classifier; consumers put their own linear layer on top.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ReluStack {
    pub layers: Vec<DenseLayer>,
}

impl ReluStack {
    /// Builds `input_dim → dims[0] → … → dims.last()` with Xavier init.
    pub fn xavier(input_dim: usize, dims: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut layers = Vec::with_capacity(dims.len());
        let mut prev = input_dim;
        for &d in dims {
            layers.push(DenseLayer::xavier(prev, d, rng));
            prev = d;
        }
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.input_dim(), |l| l.out_dim)
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Post-ReLU activations of every layer, input first.
    ///
    /// `trace[0]` is the input, `trace[k]` the output of layer `k-1`.
    pub fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.forward(trace.last().unwrap());
            for v in &mut z {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            trace.push(z);
        }
        trace
    }

    pub fn output(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).pop().unwrap()
    }

    /// Backpropagates `dL/d(last activation)` through the stack,
    /// accumulating into `grads` (one buffer per layer).
    pub fn backward(&self, trace: &[Vec<f64>], grad_out: &[f64], grads: &mut [DenseGrad]) {
        debug_assert_eq!(trace.len(), self.layers.len() + 1);
        debug_assert_eq!(grads.len(), self.layers.len());
        let mut grad = grad_out.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            // ReLU gate: activation 0 means the unit was clipped.
            for (g, &a) in grad.iter_mut().zip(&trace[k + 1]) {
                if a <= 0.0 {
                    *g = 0.0;
                }
            }
            grad = layer.backward(&trace[k], &grad, &mut grads[k]);
        }
    }

    pub fn zero_grads(&self) -> Vec<DenseGrad> {
        self.layers.iter().map(DenseLayer::zero_grad).collect()
    }

    pub fn apply_step(&mut self, grads: &[DenseGrad], lr: f64, scale: f64) {
        for (layer, grad) in self.layers.iter_mut().zip(grads) {
            layer.apply_step(grad, lr, scale);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    pub fn get_param(&self, mut idx: usize) -> f64 {
        for layer in &self.layers {
            if idx < layer.param_count() {
                return layer.get_param(idx);
            }
            idx -= layer.param_count();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut idx: usize, value: f64) {
        for layer in &mut self.layers {
            if idx < layer.param_count() {
                layer.set_param(idx, value);
                return;
            }
            idx -= layer.param_count();
        }
        panic!("parameter index out of range");
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = DenseLayer::xavier(4, 3, &mut rng);
        let x: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // L = 0.5 * ||y - target||^2, dL/dy = y - target
        let y = layer.forward(&x);
        let grad_out: Vec<f64> = y.iter().zip(&target).map(|(a, b)| a - b).collect();
        let mut grad = layer.zero_grad();
        layer.backward(&x, &grad_out, &mut grad);

        let loss = |l: &DenseLayer| -> f64 {
            l.forward(&x)
                .iter()
                .zip(&target)
                .map(|(a, b)| 0.5 * (a - b) * (a - b))
                .sum()
        };
        let eps = 1e-6;
        for idx in 0..layer.param_count() {
            let mut plus = layer.clone();
            plus.set_param(idx, plus.get_param(idx) + eps);
            let mut minus = layer.clone();
            minus.set_param(idx, minus.get_param(idx) - eps);
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * eps);
            let analytic = if idx < grad.weights.len() {
                grad.weights[idx]
            } else {
                grad.bias[idx - grad.weights.len()]
            };
            assert!(
                (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "param {idx}: numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn sigmoid_is_bounded_and_symmetric() {
        for x in [-700.0, -5.0, 0.0, 5.0, 700.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0 || (x >= 700.0 && s == 1.0));
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-12);
        }
    }
}
