use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer, weights stored row-major `n_out x n_in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }
}

/// ReLU hidden layers followed by a scalar linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub n_in: usize,
    pub hidden: Vec<usize>,
}

/// Layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> f64 {
        self.pre.last().unwrap()[0]
    }

    /// Whether each hidden unit is active, layer by layer.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let hidden = &self.pre[..self.pre.len() - 1];
        hidden.iter().flatten().map(|&z| z > 0.0).collect()
    }
}

impl Mlp {
    pub fn zeros(shape: &MlpShape) -> Self {
        let mut dims = vec![shape.n_in];
        dims.extend(&shape.hidden);
        dims.push(1);
        Self {
            layers: dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng>(shape: &MlpShape, rng: &mut R) -> Self {
        let mut mlp = Self::zeros(shape);
        for layer in &mut mlp.layers {
            let limit = (6.0 / (layer.n_in + layer.n_out) as f64).sqrt();
            layer
                .weights
                .iter_mut()
                .for_each(|w| *w = rng.random_range(-limit..limit));
        }
        mlp
    }

    pub fn shape(&self) -> MlpShape {
        MlpShape {
            n_in: self.layers[0].n_in,
            hidden: self.layers[..self.layers.len() - 1].iter().map(|l| l.n_out).collect(),
        }
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
    }

    pub fn read_params(&mut self, mut params: &[f64]) {
        for l in &mut self.layers {
            let (w, rest) = params.split_at(l.weights.len());
            let (b, rest) = rest.split_at(l.bias.len());
            l.weights.copy_from_slice(w);
            l.bias.copy_from_slice(b);
            params = rest;
        }
    }

    pub fn forward(&self, x: &[f64]) -> MlpTrace {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&current);
            let next = if k == last {
                z.clone()
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        MlpTrace { inputs, pre }
    }

    /// Backpropagate `d_out = dL/d(output)`. Parameter gradients are
    /// accumulated into `grad` when given; returns `dL/d(input)`.
    pub fn backward(&self, trace: &MlpTrace, d_out: f64, mut grad: Option<&mut [f64]>) -> Vec<f64> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for l in &self.layers {
            offsets.push(acc);
            acc += l.n_params();
        }
        let mut delta = vec![d_out];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let x = &trace.inputs[k];
            if let Some(g) = grad.as_deref_mut() {
                let g = &mut g[offsets[k]..offsets[k] + layer.n_params()];
                let (gw, gb) = g.split_at_mut(layer.weights.len());
                for (j, &dz) in delta.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    gb[j] += dz;
                    for (gwi, xi) in gw[j * layer.n_in..(j + 1) * layer.n_in].iter_mut().zip(x) {
                        *gwi += dz * xi;
                    }
                }
            }
            let mut dx = vec![0.0; layer.n_in];
            for (j, &dz) in delta.iter().enumerate() {
                if dz == 0.0 {
                    continue;
                }
                for (d, w) in dx.iter_mut().zip(&layer.weights[j * layer.n_in..(j + 1) * layer.n_in]) {
                    *d += dz * w;
                }
            }
            if k > 0 {
                // through the ReLU of the previous layer
                for (d, &z) in dx.iter_mut().zip(&trace.pre[k - 1]) {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            delta = dx;
        }
        delta
    }
}
