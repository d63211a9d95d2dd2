use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::InstanceTensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `exp(-z^2 / sigma^2)` with trainable `sigma`.
    Rbf,
    Tanh,
}

/// Single-filter convolution over the day axis. The filter spans all feature
/// columns, so every window collapses to one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvStressModule {
    pub activation: Activation,
    pub height: usize,
    pub stride: usize,
    pub n_features: usize,
    /// Row-major `height x n_features`.
    pub filter: Vec<f64>,
    pub bias: f64,
    /// `sigma = exp(log_sigma)`; only trained for the RBF activation.
    pub log_sigma: f64,
}

/// Pre-activations and outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTrace {
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
}

impl ConvStressModule {
    pub fn zeros(activation: Activation, height: usize, stride: usize, n_features: usize) -> Self {
        Self {
            activation,
            height,
            stride,
            n_features,
            filter: vec![0.0; height * n_features],
            bias: 0.0,
            log_sigma: 0.0,
        }
    }

    /// Glorot-uniform filter, zero bias, unit sigma.
    pub fn init<R: Rng>(activation: Activation, height: usize, stride: usize, n_features: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(activation, height, stride, n_features);
        let limit = (6.0 / (height * n_features + 1) as f64).sqrt();
        m.filter.iter_mut().for_each(|w| *w = rng.random_range(-limit..limit));
        m
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    /// Number of windows over `rows` days.
    pub fn n_windows(&self, rows: usize) -> usize {
        if rows < self.height {
            0
        } else {
            (rows - self.height) / self.stride + 1
        }
    }

    pub fn n_params(&self) -> usize {
        self.filter.len() + 1 + usize::from(self.activation == Activation::Rbf)
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.filter);
        out.push(self.bias);
        if self.activation == Activation::Rbf {
            out.push(self.log_sigma);
        }
    }

    pub fn read_params(&mut self, params: &[f64]) {
        let n = self.filter.len();
        self.filter.copy_from_slice(&params[..n]);
        self.bias = params[n];
        if self.activation == Activation::Rbf {
            self.log_sigma = params[n + 1];
        }
    }

    fn activate(&self, z: f64) -> f64 {
        match self.activation {
            Activation::Rbf => (-(z * z) * (-2.0 * self.log_sigma).exp()).exp(),
            Activation::Tanh => z.tanh(),
        }
    }

    pub fn forward(&self, x: &InstanceTensor) -> Result<ConvTrace> {
        if x.cols != self.n_features {
            return Err(Error::Shape(format!(
                "filter width {} does not match {} input features",
                self.n_features, x.cols
            )));
        }
        let windows = self.n_windows(x.rows);
        let span = self.height * self.n_features;
        let mut pre = Vec::with_capacity(windows);
        for t in 0..windows {
            let start = t * self.stride * self.n_features;
            let window = &x.data[start..start + span];
            let z: f64 = self.bias + self.filter.iter().zip(window).map(|(w, v)| w * v).sum::<f64>();
            pre.push(z);
        }
        let out = pre.iter().map(|&z| self.activate(z)).collect();
        Ok(ConvTrace { pre, out })
    }

    /// Accumulate parameter gradients for upstream gradients `d_out` into
    /// `grad`, laid out as in [`Self::write_params`].
    pub fn backward(&self, x: &InstanceTensor, trace: &ConvTrace, d_out: &[f64], grad: &mut [f64]) {
        let span = self.height * self.n_features;
        let inv_var = (-2.0 * self.log_sigma).exp();
        let (g_filter, g_rest) = grad.split_at_mut(self.filter.len());
        for (t, (&z, &y)) in trace.pre.iter().zip(&trace.out).enumerate() {
            let g = d_out[t];
            if g == 0.0 {
                continue;
            }
            let dz = match self.activation {
                Activation::Rbf => {
                    g_rest[1] += g * y * 2.0 * z * z * inv_var;
                    g * (-2.0 * z * inv_var * y)
                }
                Activation::Tanh => g * (1.0 - y * y),
            };
            let start = t * self.stride * self.n_features;
            let window = &x.data[start..start + span];
            for (gw, v) in g_filter.iter_mut().zip(window) {
                *gw += dz * v;
            }
            g_rest[0] += dz;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::features::ModuleKind;

    fn tensor(rows: usize, cols: usize) -> InstanceTensor {
        InstanceTensor {
            kind: ModuleKind::Heat,
            rows,
            cols,
            data: (0..rows * cols).map(|i| ((i * 7919) % 13) as f64 / 13.0 - 0.5).collect(),
            mask: vec![true; rows],
        }
    }

    #[test]
    fn window_count() {
        let m = ConvStressModule::zeros(Activation::Rbf, 15, 12, 14);
        assert_eq!(m.n_windows(330), 27);
        assert_eq!(m.n_windows(14), 0);
        assert_eq!(m.n_windows(15), 1);
    }

    #[test]
    fn zero_filter_outputs() {
        let x = tensor(330, 14);
        let rbf = ConvStressModule::zeros(Activation::Rbf, 15, 12, 14).forward(&x).unwrap();
        assert_eq!(rbf.out.len(), 27);
        assert!(rbf.out.iter().all(|&v| v == 1.0));
        let tanh = ConvStressModule::zeros(Activation::Tanh, 15, 12, 14).forward(&x).unwrap();
        assert!(tanh.out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch() {
        let m = ConvStressModule::zeros(Activation::Tanh, 15, 12, 13);
        assert!(matches!(m.forward(&tensor(30, 14)), Err(Error::Shape(_))));
    }

    #[test]
    fn window_covers_expected_rows() {
        // A filter that only reads row 0 of the window picks up row t*s.
        let x = tensor(51, 3);
        let mut m = ConvStressModule::zeros(Activation::Tanh, 5, 4, 3);
        m.filter[0] = 1.0;
        let tr = m.forward(&x).unwrap();
        for (t, z) in tr.pre.iter().enumerate() {
            assert_eq!(*z, x.row(4 * t)[0]);
        }
    }
}
