use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{ConvStressModule, ConvTrace};
use super::features::{build_instance_tensor, FeatureStats, InstanceTensor, ModuleKind};
use super::mlp::{Mlp, MlpTrace};
use crate::data::Dataset;
use crate::dem::{dem_stress_table, CombineKind, DemParams, StressKind};
use crate::growth::{build_calendar, GrowthParams, PeriodPartition, N_PERIODS};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum ModelKind {
    #[serde(rename = "dem-mlp")]
    DemMlp,
    #[default]
    #[serde(rename = "cnn-mlp")]
    CnnMlp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DemMlp => "dem-mlp",
            ModelKind::CnnMlp => "cnn-mlp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "dem-mlp" => Some(ModelKind::DemMlp),
            "cnn-mlp" => Some(ModelKind::CnnMlp),
            _ => None,
        }
    }

    /// Hidden layer widths used unless configured otherwise.
    pub fn default_hidden(self) -> Vec<usize> {
        match self {
            ModelKind::DemMlp => vec![56, 30, 20],
            ModelKind::CnnMlp => vec![64, 80, 40],
        }
    }
}

/// The part of the model that turns an instance into stress vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum StressFrontEnd {
    /// Fixed expert models; nothing here is trained.
    Dem { params: DemParams, ksat_bounds: [f64; 2] },
    Cnn {
        heat: ConvStressModule,
        drought: ConvStressModule,
        d_max: usize,
        growth: GrowthParams,
        heat_stats: FeatureStats,
        drought_stats: FeatureStats,
    },
}

/// Stress front end, combination, regression head and the encodings needed to
/// apply them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub front: StressFrontEnd,
    pub combine: CombineKind,
    pub mlp: Mlp,
    /// MLP inputs are `(x - shift) / scale`.
    pub input_shift: Vec<f64>,
    pub input_scale: Vec<f64>,
    /// Predictions are `target_mean + target_scale * mlp_output`.
    pub target_mean: f64,
    pub target_scale: f64,
    pub hybrid_ids: Vec<String>,
    pub env_ids: Vec<String>,
    pub seed: u64,
    pub epochs_trained: usize,
}

/// Model-ready inputs for every instance of a dataset.
#[derive(Debug, Clone)]
pub struct ModelInputs {
    /// Bundle hybrid index per instance.
    pub hybrid: Vec<usize>,
    /// Bundle environment index per instance.
    pub env: Vec<usize>,
    /// Dataset environment index per instance, used to look up tensors.
    pub tensor_env: Vec<usize>,
    pub stresses: PreparedStress,
}

#[derive(Debug, Clone)]
pub enum PreparedStress {
    /// Per-instance heat and drought period vectors.
    Dem(Vec<([f64; N_PERIODS], [f64; N_PERIODS])>),
    /// Per-environment heat and drought tensors.
    Cnn(Vec<(InstanceTensor, InstanceTensor)>),
}

impl ModelInputs {
    pub fn len(&self) -> usize {
        self.hybrid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hybrid.is_empty()
    }
}

/// Derivatives of the predicted delta-yield with respect to the three stress
/// vectors entering the MLP, each treated as an independent input.
#[derive(Debug, Clone, PartialEq)]
pub struct StressGradient {
    pub heat: Vec<f64>,
    pub drought: Vec<f64>,
    pub combined: Vec<f64>,
}

impl StressGradient {
    pub fn get(&self, kind: StressKind) -> Option<&[f64]> {
        match kind {
            StressKind::Heat => Some(&self.heat),
            StressKind::Drought => Some(&self.drought),
            StressKind::Combined => Some(&self.combined),
            _ => None,
        }
    }
}

/// Forward pass of one instance.
pub struct Trace {
    pub heat: Vec<f64>,
    pub drought: Vec<f64>,
    conv: Option<(ConvTrace, ConvTrace)>,
    pub mlp: MlpTrace,
}

/// Scalar id encoding: index scaled to `[0, 1]`.
pub fn id_scalar(index: usize, count: usize) -> f64 {
    if count > 1 {
        index as f64 / (count - 1) as f64
    } else {
        0.0
    }
}

fn lookup(ids: &[String], id: &str, what: &str) -> Result<usize> {
    ids.iter()
        .position(|h| h == id)
        .ok_or_else(|| Error::Lookup(format!("unknown {what} {id}")))
}

impl ModelBundle {
    /// Length of each stress vector.
    pub fn stress_len(&self) -> usize {
        match &self.front {
            StressFrontEnd::Dem { .. } => N_PERIODS,
            StressFrontEnd::Cnn { heat, d_max, .. } => heat.n_windows(*d_max),
        }
    }

    /// MLP input width, `3 * stress_len + 2`.
    pub fn input_len(&self) -> usize {
        3 * self.stress_len() + 2
    }

    pub fn is_trained(&self) -> bool {
        self.epochs_trained > 0
    }

    pub fn n_params(&self) -> usize {
        let front = match &self.front {
            StressFrontEnd::Dem { .. } => 0,
            StressFrontEnd::Cnn { heat, drought, .. } => heat.n_params() + drought.n_params(),
        };
        front + self.mlp.n_params()
    }

    /// Number of leading entries of [`Self::params`] owned by the stress
    /// modules.
    pub fn n_front_params(&self) -> usize {
        self.n_params() - self.mlp.n_params()
    }

    /// Trainable parameters, flattened: heat module, drought module, MLP.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        if let StressFrontEnd::Cnn { heat, drought, .. } = &self.front {
            heat.write_params(&mut out);
            drought.write_params(&mut out);
        }
        self.mlp.write_params(&mut out);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                params.len()
            )));
        }
        let mut rest = params;
        if let StressFrontEnd::Cnn { heat, drought, .. } = &mut self.front {
            let (h, r) = rest.split_at(heat.n_params());
            heat.read_params(h);
            let (d, r) = r.split_at(drought.n_params());
            drought.read_params(d);
            rest = r;
        }
        self.mlp.read_params(rest);
        Ok(())
    }

    /// Resolve ids and compute the stress inputs for every instance.
    pub fn prepare(&self, dataset: &Dataset) -> Result<ModelInputs> {
        let hybrid = dataset
            .instances()
            .iter()
            .map(|inst| lookup(&self.hybrid_ids, &inst.hybrid_id, "hybrid"))
            .collect::<Result<Vec<_>>>()?;
        let env_lookup = dataset
            .environments()
            .map(|e| lookup(&self.env_ids, &e.env_id, "environment"))
            .collect::<Result<Vec<_>>>()?;
        let tensor_env: Vec<usize> = (0..dataset.n_instances()).map(|i| dataset.instance_env(i)).collect();
        let env = tensor_env.iter().map(|&e| env_lookup[e]).collect();

        let stresses = match &self.front {
            StressFrontEnd::Dem { params, ksat_bounds } => {
                let mut params = params.clone();
                params.drought.ksat_bounds = Some(*ksat_bounds);
                let table = dem_stress_table(dataset, &params)?;
                PreparedStress::Dem(
                    table
                        .instances
                        .iter()
                        .map(|s| (*s.get(StressKind::Heat), *s.get(StressKind::Drought)))
                        .collect(),
                )
            }
            StressFrontEnd::Cnn {
                d_max,
                growth,
                heat_stats,
                drought_stats,
                ..
            } => {
                let partition = PeriodPartition::default();
                let tensors = (0..dataset.n_environments())
                    .into_par_iter()
                    .map(|e| {
                        let env = dataset.environment(e);
                        let cal = build_calendar(env, growth, &partition)?;
                        Ok((
                            build_instance_tensor(env, &cal, ModuleKind::Heat, *d_max, heat_stats)?,
                            build_instance_tensor(env, &cal, ModuleKind::Drought, *d_max, drought_stats)?,
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                PreparedStress::Cnn(tensors)
            }
        };
        Ok(ModelInputs {
            hybrid,
            env,
            tensor_env,
            stresses,
        })
    }

    fn stress_vectors(
        &self,
        inputs: &ModelInputs,
        p: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, Option<(ConvTrace, ConvTrace)>)> {
        match (&self.front, &inputs.stresses) {
            (StressFrontEnd::Dem { .. }, PreparedStress::Dem(v)) => {
                let (h, d) = &v[p];
                Ok((h.to_vec(), d.to_vec(), None))
            }
            (StressFrontEnd::Cnn { heat, drought, .. }, PreparedStress::Cnn(t)) => {
                let (xh, xd) = &t[inputs.tensor_env[p]];
                let th = heat.forward(xh)?;
                let td = drought.forward(xd)?;
                Ok((th.out.clone(), td.out.clone(), Some((th, td))))
            }
            _ => Err(Error::State("inputs were prepared for a different model kind".into())),
        }
    }

    /// Unscaled MLP input `[S_H, S_D, f(S_H, S_D), i, j]`.
    pub fn raw_input(&self, heat: &[f64], drought: &[f64], hybrid: usize, env: usize) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * heat.len() + 2);
        x.extend_from_slice(heat);
        x.extend_from_slice(drought);
        x.extend(heat.iter().zip(drought).map(|(&h, &d)| self.combine.apply(h, d)));
        x.push(id_scalar(hybrid, self.hybrid_ids.len()));
        x.push(id_scalar(env, self.env_ids.len()));
        x
    }

    /// Prediction from explicit MLP stress inputs; the combined vector is
    /// taken as given rather than recomputed.
    pub fn predict_from_stresses(
        &self,
        heat: &[f64],
        drought: &[f64],
        combined: &[f64],
        hybrid: usize,
        env: usize,
    ) -> Result<f64> {
        let trace = self.mlp_trace_from_stresses(heat, drought, combined, hybrid, env)?;
        Ok(self.target_mean + self.target_scale * trace.output())
    }

    /// MLP forward pass on explicit stress inputs. The prediction is
    /// `target_mean + target_scale * output`.
    pub fn mlp_trace_from_stresses(
        &self,
        heat: &[f64],
        drought: &[f64],
        combined: &[f64],
        hybrid: usize,
        env: usize,
    ) -> Result<MlpTrace> {
        let n = self.stress_len();
        if heat.len() != n || drought.len() != n || combined.len() != n {
            return Err(Error::Shape(format!("stress vectors must have length {n}")));
        }
        let mut x = Vec::with_capacity(3 * n + 2);
        x.extend_from_slice(heat);
        x.extend_from_slice(drought);
        x.extend_from_slice(combined);
        x.push(id_scalar(hybrid, self.hybrid_ids.len()));
        x.push(id_scalar(env, self.env_ids.len()));
        Ok(self.mlp.forward(&self.scale_input(x)))
    }

    fn scale_input(&self, mut x: Vec<f64>) -> Vec<f64> {
        for ((v, s), c) in x.iter_mut().zip(&self.input_shift).zip(&self.input_scale) {
            *v = (*v - s) / c;
        }
        x
    }

    pub fn forward(&self, inputs: &ModelInputs, p: usize) -> Result<Trace> {
        if p >= inputs.len() {
            return Err(Error::Index { index: p, len: inputs.len() });
        }
        let (heat, drought, conv) = self.stress_vectors(inputs, p)?;
        let x = self.raw_input(&heat, &drought, inputs.hybrid[p], inputs.env[p]);
        if x.len() != self.mlp.n_in() {
            return Err(Error::Shape(format!(
                "MLP expects {} inputs, got {}",
                self.mlp.n_in(),
                x.len()
            )));
        }
        let mlp = self.mlp.forward(&self.scale_input(x));
        Ok(Trace {
            heat,
            drought,
            conv,
            mlp,
        })
    }

    fn output(&self, trace: &Trace) -> f64 {
        self.target_mean + self.target_scale * trace.mlp.output()
    }

    /// Predicted delta-yield of instance `p`.
    pub fn predict(&self, inputs: &ModelInputs, p: usize) -> Result<f64> {
        Ok(self.output(&self.forward(inputs, p)?))
    }

    /// Predictions for the given instances, in order.
    pub fn predict_many(&self, inputs: &ModelInputs, instances: &[usize]) -> Result<Vec<f64>> {
        instances.par_iter().map(|&p| self.predict(inputs, p)).collect()
    }

    /// Derivative of the MLP output with respect to its unscaled inputs.
    fn input_gradient(&self, trace: &Trace) -> Vec<f64> {
        let mut g = self.mlp.backward(&trace.mlp, self.target_scale, None);
        for (v, c) in g.iter_mut().zip(&self.input_scale) {
            *v /= c;
        }
        g
    }

    /// Accumulate `d_pred * d(prediction)/d(params)` for instance `p` into
    /// `grad`, laid out as in [`Self::params`]. Returns the prediction.
    pub fn accumulate_param_gradient(&self, inputs: &ModelInputs, p: usize, d_pred: f64, grad: &mut [f64]) -> Result<f64> {
        let trace = self.forward(inputs, p)?;
        self.backward(inputs, p, &trace, d_pred, grad);
        Ok(self.output(&trace))
    }

    /// Accumulate the gradient of `weight * (prediction - target)^2` into
    /// `grad`. Returns the squared error.
    pub fn accumulate_squared_error_gradient(
        &self,
        inputs: &ModelInputs,
        p: usize,
        target: f64,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let trace = self.forward(inputs, p)?;
        let err = self.output(&trace) - target;
        self.backward(inputs, p, &trace, 2.0 * weight * err, grad);
        Ok(err * err)
    }

    fn backward(&self, inputs: &ModelInputs, p: usize, trace: &Trace, d_pred: f64, grad: &mut [f64]) {
        let front = self.n_front_params();
        let (g_front, g_mlp) = grad.split_at_mut(front);
        let dx = self.mlp.backward(&trace.mlp, d_pred * self.target_scale, Some(g_mlp));
        if let (StressFrontEnd::Cnn { heat, drought, .. }, PreparedStress::Cnn(t), Some((th, td))) =
            (&self.front, &inputs.stresses, &trace.conv)
        {
            let n = trace.heat.len();
            let mut dh = vec![0.0; n];
            let mut dd = vec![0.0; n];
            for k in 0..n {
                let (fh, fd) = self.combine.partials(trace.heat[k], trace.drought[k]);
                let c = dx[2 * n + k] / self.input_scale[2 * n + k];
                dh[k] = dx[k] / self.input_scale[k] + c * fh;
                dd[k] = dx[n + k] / self.input_scale[n + k] + c * fd;
            }
            let (xh, xd) = &t[inputs.tensor_env[p]];
            let (gh, gd) = g_front.split_at_mut(heat.n_params());
            heat.backward(xh, th, &dh, gh);
            drought.backward(xd, td, &dd, gd);
        }
    }

    /// Gradients of instance `p`'s prediction with respect to the stress
    /// inputs of the MLP.
    pub fn stress_gradient(&self, inputs: &ModelInputs, p: usize) -> Result<StressGradient> {
        let trace = self.forward(inputs, p)?;
        let g = self.input_gradient(&trace);
        let n = self.stress_len();
        Ok(StressGradient {
            heat: g[..n].to_vec(),
            drought: g[n..2 * n].to_vec(),
            combined: g[2 * n..3 * n].to_vec(),
        })
    }

    /// Stress vectors produced by the front end for instance `p`.
    pub fn stresses(&self, inputs: &ModelInputs, p: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let (h, d, _) = self.stress_vectors(inputs, p)?;
        Ok((h, d))
    }
}
