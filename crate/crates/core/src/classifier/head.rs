use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer, weights stored row-major as `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn he<R: Rng>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        Dense {
            inputs,
            outputs,
            weight: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.inputs..(o + 1) * self.inputs]
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs).map(|o| self.bias[o] + self.row(o).iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).collect()
    }
}

/// The purity head: `D → D → D/2 → D/4` with ReLU after each hidden layer,
/// then a linear map to one logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    pub dim: usize,
    pub layers: Vec<Dense>,
}

fn widths(dim: usize) -> [usize; 5] {
    [dim, dim, dim / 2, dim / 4, 1]
}

pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 { 1.0 / (1.0 + (-z).exp()) } else { z.exp() / (1.0 + z.exp()) };
    // keep the result strictly inside (0, 1) for every finite logit
    p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Binary cross-entropy computed from the logit, stable for large `|z|`.
pub fn bce_with_logit(z: f64, label: f64) -> f64 {
    z.max(0.0) - z * label + (-z.abs()).exp().ln_1p()
}

/// Label 1 when `probability >= threshold`.
pub fn decide(probability: f64, threshold: f64) -> u8 {
    u8::from(probability >= threshold)
}

pub(crate) struct Trace {
    /// Pre-activations of the three hidden layers.
    hidden_z: [Vec<f64>; 3],
    /// Inputs to each of the four layers.
    inputs: [Vec<f64>; 4],
    pub logit: f64,
}

impl HeadParams {
    fn check_dim(dim: usize) -> Result<()> {
        if dim < 4 || !dim.is_multiple_of(4) {
            return Err(Error::param("dim", format!("{dim} must be a positive multiple of 4")));
        }
        Ok(())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::check_dim(dim)?;
        let w = widths(dim);
        Ok(HeadParams { dim, layers: (0..4).map(|i| Dense::zeros(w[i], w[i + 1])).collect() })
    }

    /// He-normal weights, zero biases.
    pub fn init<R: Rng>(dim: usize, rng: &mut R) -> Result<Self> {
        Self::check_dim(dim)?;
        let w = widths(dim);
        Ok(HeadParams { dim, layers: (0..4).map(|i| Dense::he(w[i], w[i + 1], rng)).collect() })
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Checks layer shapes against `dim` and that every parameter is finite.
    pub fn validate(&self) -> Result<()> {
        Self::check_dim(self.dim)?;
        let w = widths(self.dim);
        if self.layers.len() != 4 {
            return Err(Error::Checkpoint(format!("expected 4 layers, found {}", self.layers.len())));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs != w[i]
                || l.outputs != w[i + 1]
                || l.weight.len() != l.inputs * l.outputs
                || l.bias.len() != l.outputs
            {
                return Err(Error::Checkpoint(format!(
                    "layer {i} is {}x{} with {} weights, expected {}x{}",
                    l.inputs,
                    l.outputs,
                    l.weight.len(),
                    w[i],
                    w[i + 1]
                )));
            }
        }
        if self.values().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(&l.bias))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable reference to the `k`-th parameter in `values()` order.
    pub fn param_mut(&mut self, mut k: usize) -> Option<&mut f64> {
        for l in &mut self.layers {
            if k < l.weight.len() {
                return l.weight.get_mut(k);
            }
            k -= l.weight.len();
            if k < l.bias.len() {
                return l.bias.get_mut(k);
            }
            k -= l.bias.len();
        }
        None
    }

    fn check_input(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, actual: e.len() });
        }
        Ok(())
    }

    pub(crate) fn trace(&self, e: &[f64]) -> Result<Trace> {
        self.check_input(e)?;
        let mut inputs: [Vec<f64>; 4] = Default::default();
        let mut hidden_z: [Vec<f64>; 3] = Default::default();
        inputs[0] = e.to_vec();
        for i in 0..3 {
            let z = self.layers[i].apply(&inputs[i]);
            inputs[i + 1] = z.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect();
            hidden_z[i] = z;
        }
        let logit = self.layers[3].apply(&inputs[3])[0];
        Ok(Trace { hidden_z, inputs, logit })
    }

    /// Returns `(logit, probability)`.
    pub fn forward(&self, e: &[f64]) -> Result<(f64, f64)> {
        let logit = self.trace(e)?.logit;
        Ok((logit, sigmoid(logit)))
    }

    pub fn probability(&self, e: &[f64]) -> Result<f64> {
        Ok(self.forward(e)?.1)
    }

    /// Adds the gradient of the cross-entropy for one example into `grads`
    /// (same shapes as `self`), returning the example's loss.
    pub fn accumulate_gradient(&self, e: &[f64], label: f64, grads: &mut HeadParams) -> Result<f64> {
        let t = self.trace(e)?;
        let mut delta = vec![sigmoid_unclamped(t.logit) - label];
        for i in (0..4).rev() {
            let layer = &self.layers[i];
            let g = &mut grads.layers[i];
            let a = &t.inputs[i];
            for (o, d) in delta.iter().enumerate() {
                g.bias[o] += d;
                g.weight[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(a).for_each(|(gw, av)| *gw += d * av);
            }
            if i == 0 {
                break;
            }
            let z = &t.hidden_z[i - 1];
            delta = (0..layer.inputs)
                .map(|j| {
                    if z[j] > 0.0 {
                        delta.iter().enumerate().map(|(o, d)| d * layer.weight[o * layer.inputs + j]).sum()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        Ok(bce_with_logit(t.logit, label))
    }

    pub fn loss(&self, e: &[f64], label: f64) -> Result<f64> {
        Ok(bce_with_logit(self.trace(e)?.logit, label))
    }

    /// Folds an input standardization `(x - mean) / scale` into the first layer.
    pub(crate) fn fold_input_affine(&mut self, mean: &[f64], scale: &[f64]) {
        let l = &mut self.layers[0];
        for o in 0..l.outputs {
            let row = &mut l.weight[o * l.inputs..(o + 1) * l.inputs];
            let mut shift = 0.0;
            for j in 0..row.len() {
                row[j] /= scale[j];
                shift += row[j] * mean[j];
            }
            l.bias[o] -= shift;
        }
    }
}

fn sigmoid_unclamped(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        z.exp() / (1.0 + z.exp())
    }
}

/// Largest relative error between the analytic gradient and central finite
/// differences over every parameter. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check(head: &HeadParams, e: &[f64], label: u8, epsilon: f64) -> Result<f64> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::param("epsilon", format!("{epsilon} outside [1e-6, 1e-3]")));
    }
    let y = f64::from(label);
    let mut analytic = HeadParams::zeros(head.dim)?;
    head.accumulate_gradient(e, y, &mut analytic)?;
    let analytic: Vec<f64> = analytic.values().copied().collect();
    let mut probe = head.clone();
    let mut worst = 0.0f64;
    for ((k, a), &orig) in analytic.iter().enumerate().zip(head.values()) {
        let mut at = |v: f64| -> Result<f64> {
            if let Some(slot) = probe.param_mut(k) {
                *slot = v;
            }
            probe.loss(e, y)
        };
        let up = at(orig + epsilon)?;
        let down = at(orig - epsilon)?;
        at(orig)?;
        let numeric = (up - down) / (2.0 * epsilon);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}
