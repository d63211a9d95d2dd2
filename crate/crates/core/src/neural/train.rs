use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conv::{Activation, ConvStressModule};
use super::features::{padded_length, FeatureStats, ModuleKind};
use super::mlp::{Mlp, MlpShape};
use super::model::{ModelBundle, ModelInputs, ModelKind, PreparedStress, StressFrontEnd};
use super::optim::Adadelta;
use super::{InputScaling, ModelConfig, TrainConfig};
use crate::data::Dataset;
use crate::growth::{build_calendar, PeriodPartition};
use crate::sensitivity::compute_delta_yield;
use crate::{Error, Result};

/// Instances per gradient work unit. Fixed so that the reduction order, and
/// hence the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

const SPLIT_STREAM: u64 = 0;
const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded uniform split of `0..n`; both index lists are sorted.
pub fn split_instances(n: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    let n_train = (train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::config(
            "train.train_fraction",
            format!("splitting {n} instances with fraction {train_fraction} leaves an empty split"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed, SPLIT_STREAM));
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    /// Test MSE divided by the test-split variance of the target; absent when
    /// that variance is zero.
    pub test_mse_over_sigma: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    /// Metrics before training (epoch 0) and after every epoch.
    pub history: Vec<EpochMetrics>,
    pub split: Split,
    pub delta_yield: Vec<f64>,
}

impl TrainOutcome {
    pub fn final_metrics(&self) -> EpochMetrics {
        *self.history.last().expect("history holds at least epoch 0")
    }
}

fn mean_and_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Freshly initialized bundle for `dataset`, with normalization statistics
/// fitted on the `train` instances. Also returns the prepared inputs.
pub fn init_bundle(
    config: &ModelConfig,
    dataset: &Dataset,
    delta_yield: &[f64],
    train: &[usize],
    seed: u64,
) -> Result<(ModelBundle, ModelInputs)> {
    config.validate()?;
    let mut r = rng(seed, INIT_STREAM);
    let front = match config.kind {
        ModelKind::DemMlp => {
            let ksat_bounds = config.dem.drought.resolve_ksat_bounds(dataset)?;
            StressFrontEnd::Dem {
                params: config.dem.clone(),
                ksat_bounds,
            }
        }
        ModelKind::CnnMlp => {
            let (h, s) = (config.cnn.height, config.cnn.stride);
            let longest = dataset.max_season_length();
            let d_max = match config.cnn.d_max {
                Some(d) if d < longest => {
                    return Err(Error::config(
                        "model.cnn.d_max",
                        format!("{d} is shorter than the longest season ({longest} days)"),
                    ))
                }
                Some(d) => d,
                None => padded_length(longest, h, s),
            };
            let growth = config.dem.growth;
            let partition = PeriodPartition::default();
            let mut envs: Vec<usize> = train.iter().map(|&p| dataset.instance_env(p)).collect();
            envs.sort_unstable();
            envs.dedup();
            let seasons = envs
                .iter()
                .map(|&e| {
                    let env = dataset.environment(e);
                    Ok((env, build_calendar(env, &growth, &partition)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let heat_stats = FeatureStats::fit(ModuleKind::Heat, seasons.iter().map(|(e, c)| (*e, c)));
            let drought_stats = FeatureStats::fit(ModuleKind::Drought, seasons.iter().map(|(e, c)| (*e, c)));
            let n_heat = ModuleKind::Heat.features().len();
            let n_drought = ModuleKind::Drought.features().len();
            StressFrontEnd::Cnn {
                heat: ConvStressModule::init(Activation::Rbf, h, s, n_heat, &mut r),
                drought: ConvStressModule::init(Activation::Tanh, h, s, n_drought, &mut r),
                d_max,
                growth,
                heat_stats,
                drought_stats,
            }
        }
    };

    let (target_mean, target_std) = mean_and_std(train.iter().map(|&p| delta_yield[p]));
    let mut bundle = ModelBundle {
        kind: config.kind,
        front,
        combine: config.combine,
        mlp: Mlp::zeros(&MlpShape { n_in: 1, hidden: vec![] }),
        input_shift: Vec::new(),
        input_scale: Vec::new(),
        target_mean,
        target_scale: if target_std > 0.0 { target_std } else { 1.0 },
        hybrid_ids: dataset.hybrid_ids().cloned().collect(),
        env_ids: dataset.environments().map(|e| e.env_id.clone()).collect(),
        seed,
        epochs_trained: 0,
    };
    let n_in = bundle.input_len();
    bundle.mlp = Mlp::init(
        &MlpShape {
            n_in,
            hidden: config.hidden_layers(),
        },
        &mut r,
    );
    bundle.input_shift = vec![0.0; n_in];
    bundle.input_scale = vec![1.0; n_in];

    let inputs = bundle.prepare(dataset)?;
    // Expert stresses span several orders of magnitude, so their columns are
    // standardized; learned stresses are already bounded.
    if let PreparedStress::Dem(_) = inputs.stresses {
        let rows = train
            .iter()
            .map(|&p| {
                let (h, d) = bundle.stresses(&inputs, p)?;
                Ok(bundle.raw_input(&h, &d, inputs.hybrid[p], inputs.env[p]))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = bundle.stress_len();
        let groups: Vec<Vec<usize>> = match config.input_scaling {
            InputScaling::Column => (0..3 * n).map(|j| vec![j]).collect(),
            InputScaling::Block => (0..3).map(|b| (b * n..(b + 1) * n).collect()).collect(),
        };
        for cols in groups {
            let (m, s) = mean_and_std(rows.iter().flat_map(|r| cols.iter().map(move |&j| r[j])));
            for j in cols {
                bundle.input_shift[j] = m;
                bundle.input_scale[j] = if s > 1e-12 { s } else { 1.0 };
            }
        }
    }
    Ok((bundle, inputs))
}

/// Mean squared error of the bundle's predictions over `instances`.
pub fn mse(bundle: &ModelBundle, inputs: &ModelInputs, instances: &[usize], targets: &[f64]) -> Result<f64> {
    if instances.is_empty() {
        return Err(Error::config("train.train_fraction", "empty evaluation split"));
    }
    let preds = bundle.predict_many(inputs, instances)?;
    let sse: f64 = preds
        .iter()
        .zip(instances)
        .map(|(y, &p)| (y - targets[p]) * (y - targets[p]))
        .sum();
    Ok(sse / instances.len() as f64)
}

fn evaluate(bundle: &ModelBundle, inputs: &ModelInputs, split: &Split, targets: &[f64], epoch: usize) -> Result<EpochMetrics> {
    let train_mse = mse(bundle, inputs, &split.train, targets)?;
    let test_mse = mse(bundle, inputs, &split.test, targets)?;
    let (_, test_std) = mean_and_std(split.test.iter().map(|&p| targets[p]));
    let var = test_std * test_std;
    Ok(EpochMetrics {
        epoch,
        train_mse,
        test_mse,
        test_mse_over_sigma: (var > 0.0).then(|| test_mse / var),
    })
}

/// Gradient of the batch mean squared error. Returns the gradient and the
/// batch loss.
pub fn batch_gradient(bundle: &ModelBundle, inputs: &ModelInputs, batch: &[usize], targets: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = bundle.n_params();
    let weight = 1.0 / batch.len() as f64;
    let parts = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n];
            let mut loss = 0.0;
            for &p in chunk {
                loss += bundle.accumulate_squared_error_gradient(inputs, p, targets[p], weight, &mut g)?;
            }
            Ok((g, loss))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut grad = vec![0.0; n];
    let mut loss = 0.0;
    for (g, l) in parts {
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        loss += l;
    }
    Ok((grad, loss * weight))
}

/// Initialize and train a model on `dataset`'s delta-yield targets.
pub fn fit(dataset: &Dataset, model: &ModelConfig, train: &TrainConfig) -> Result<TrainOutcome> {
    train.validate()?;
    let delta_yield = compute_delta_yield(dataset).values;
    let split = split_instances(dataset.n_instances(), train.train_fraction, train.seed)?;
    let (mut bundle, inputs) = init_bundle(model, dataset, &delta_yield, &split.train, train.seed)?;
    let mut params = bundle.params();
    let mut opt = Adadelta::new(params.len(), train.rho, train.epsilon, train.learning_rate);
    let mut shuffle = rng(train.seed, SHUFFLE_STREAM);
    let mut order = split.train.clone();

    let mut history = vec![evaluate(&bundle, &inputs, &split, &delta_yield, 0)?];
    for epoch in 1..=train.epochs {
        order.shuffle(&mut shuffle);
        for batch in order.chunks(train.batch_size) {
            let (mut grad, loss) = batch_gradient(&bundle, &inputs, batch, &delta_yield)?;
            if train.weight_decay > 0.0 {
                grad.iter_mut().zip(&params).for_each(|(g, p)| *g += train.weight_decay * p);
            }
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { epoch });
            }
            opt.step(&mut params, &grad);
            bundle.set_params(&params)?;
        }
        bundle.epochs_trained = epoch;
        let metrics = evaluate(&bundle, &inputs, &split, &delta_yield, epoch)?;
        if !metrics.train_mse.is_finite() || !metrics.test_mse.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(metrics);
    }
    Ok(TrainOutcome {
        bundle,
        history,
        split,
        delta_yield,
    })
}
