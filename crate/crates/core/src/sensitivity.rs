//! Delta-yield targets and per-hybrid sensitivity matrices: covariance of
//! delta-yield with expert stresses (C) and summed model gradients with
//! respect to stress inputs (R).

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dem::{PeriodVector, StressKind};
use crate::neural::{ModelBundle, ModelInputs, ModelKind, StressGradient};
use crate::{Error, Result};

/// Per-instance `max yield of the hybrid - observed yield`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaYieldTable {
    pub values: Vec<f64>,
}

pub fn compute_delta_yield(dataset: &Dataset) -> DeltaYieldTable {
    let mut best = vec![f64::NEG_INFINITY; dataset.n_hybrids()];
    for (i, inst) in dataset.instances().iter().enumerate() {
        let h = dataset.instance_hybrid(i);
        best[h] = best[h].max(inst.yield_obs);
    }
    let values = dataset
        .instances()
        .iter()
        .enumerate()
        .map(|(i, inst)| best[dataset.instance_hybrid(i)] - inst.yield_obs)
        .collect();
    DeltaYieldTable { values }
}

/// Which environments contribute instances to a covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvFilter {
    #[default]
    All,
    /// Environments with at least one day whose mean temperature exceeds
    /// `threshold`.
    Warm { threshold: f64 },
    /// Complement of [`EnvFilter::Warm`] at the same threshold.
    Cold { threshold: f64 },
}

pub const DEFAULT_WARM_THRESHOLD: f64 = 35.0;

impl EnvFilter {
    pub fn warm() -> Self {
        EnvFilter::Warm {
            threshold: DEFAULT_WARM_THRESHOLD,
        }
    }

    pub fn cold() -> Self {
        EnvFilter::Cold {
            threshold: DEFAULT_WARM_THRESHOLD,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EnvFilter::All => "all",
            EnvFilter::Warm { .. } => "warm",
            EnvFilter::Cold { .. } => "cold",
        }
    }

    pub fn retains(&self, env: &crate::data::Environment) -> bool {
        match *self {
            EnvFilter::All => true,
            EnvFilter::Warm { threshold } => env.weather.iter().any(|w| w.tmean > threshold),
            EnvFilter::Cold { threshold } => !env.weather.iter().any(|w| w.tmean > threshold),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixKind {
    CHeat,
    CDrought,
    CCombined,
    RHeat,
    RDrought,
    RCombined,
}

impl MatrixKind {
    pub fn name(self) -> &'static str {
        match self {
            MatrixKind::CHeat => "c_heat",
            MatrixKind::CDrought => "c_drought",
            MatrixKind::CCombined => "c_combined",
            MatrixKind::RHeat => "r_heat",
            MatrixKind::RDrought => "r_drought",
            MatrixKind::RCombined => "r_combined",
        }
    }

    pub fn covariance(stress: StressKind) -> Result<Self> {
        match stress {
            StressKind::Heat => Ok(MatrixKind::CHeat),
            StressKind::Drought => Ok(MatrixKind::CDrought),
            StressKind::Combined => Ok(MatrixKind::CCombined),
            other => Err(Error::Parameter(format!("no covariance matrix for {} stress", other.name()))),
        }
    }

    pub fn susceptibility(stress: StressKind) -> Result<Self> {
        match stress {
            StressKind::Heat => Ok(MatrixKind::RHeat),
            StressKind::Drought => Ok(MatrixKind::RDrought),
            StressKind::Combined => Ok(MatrixKind::RCombined),
            other => Err(Error::Parameter(format!(
                "no susceptibility matrix for {} stress",
                other.name()
            ))),
        }
    }

    pub fn stress(self) -> StressKind {
        match self {
            MatrixKind::CHeat | MatrixKind::RHeat => StressKind::Heat,
            MatrixKind::CDrought | MatrixKind::RDrought => StressKind::Drought,
            MatrixKind::CCombined | MatrixKind::RCombined => StressKind::Combined,
        }
    }
}

/// What the columns of a matrix index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSemantics {
    GrowthPeriod,
    ConvolutionWindow,
}

/// Hybrids x columns matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMatrix {
    pub kind: MatrixKind,
    pub filter: EnvFilter,
    pub columns: ColumnSemantics,
    pub hybrid_ids: Vec<String>,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl SensitivityMatrix {
    pub fn new(
        kind: MatrixKind,
        filter: EnvFilter,
        columns: ColumnSemantics,
        hybrid_ids: Vec<String>,
        n_cols: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != hybrid_ids.len() * n_cols {
            return Err(Error::Shape(format!(
                "{} values do not fill a {} x {n_cols} matrix",
                data.len(),
                hybrid_ids.len()
            )));
        }
        Ok(Self {
            kind,
            filter,
            columns,
            hybrid_ids,
            n_cols,
            data,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.hybrid_ids.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, t: usize) -> f64 {
        self.data[i * self.n_cols + t]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_cols.max(1))
    }

    /// Mean of `|value|` over all rows and the given columns.
    pub fn mean_abs_over(&self, cols: std::ops::Range<usize>) -> f64 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for i in 0..self.n_rows() {
            for t in cols.clone() {
                sum += self.get(i, t).abs();
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

/// Population covariance of paired samples, centred two-pass form.
pub fn population_covariance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n
}

/// Per-hybrid population covariance between delta-yield and each period of
/// the expert stress vectors, over the instances retained by `filter`.
/// Hybrids with fewer than two retained instances get a zero row.
pub fn covariance_matrix(
    dataset: &Dataset,
    stress: &[PeriodVector],
    kind: MatrixKind,
    filter: EnvFilter,
) -> Result<SensitivityMatrix> {
    if stress.len() != dataset.n_instances() {
        return Err(Error::Shape(format!(
            "{} stress vectors for {} instances",
            stress.len(),
            dataset.n_instances()
        )));
    }
    let delta = compute_delta_yield(dataset).values;
    let retained_env: Vec<bool> = dataset.environments().map(|e| filter.retains(e)).collect();
    let retained = |p: usize| retained_env[dataset.instance_env(p)];
    if !(0..dataset.n_instances()).any(retained) {
        return Err(Error::EmptyAnalysis(format!(
            "the {} environment filter retains no instances",
            filter.name()
        )));
    }
    let n_cols = crate::growth::N_PERIODS;
    let rows: Vec<Vec<f64>> = (0..dataset.n_hybrids())
        .into_par_iter()
        .map(|h| {
            let members: Vec<usize> = dataset
                .instances_of_hybrid(h)
                .iter()
                .copied()
                .filter(|&p| retained(p))
                .collect();
            if members.len() < 2 {
                return vec![0.0; n_cols];
            }
            let dy: Vec<f64> = members.iter().map(|&p| delta[p]).collect();
            (0..n_cols)
                .map(|t| {
                    let s: Vec<f64> = members.iter().map(|&p| stress[p][t]).collect();
                    population_covariance(&dy, &s)
                })
                .collect()
        })
        .collect();
    SensitivityMatrix::new(
        kind,
        filter,
        ColumnSemantics::GrowthPeriod,
        dataset.hybrid_ids().cloned().collect(),
        n_cols,
        rows.concat(),
    )
}

/// Stress-input gradients of every listed instance, in order.
pub fn instance_gradients(bundle: &ModelBundle, inputs: &ModelInputs, instances: &[usize]) -> Result<Vec<StressGradient>> {
    instances
        .par_iter()
        .map(|&p| bundle.stress_gradient(inputs, p))
        .collect()
}

/// Per-hybrid sums of stress-input gradients for heat, drought and combined
/// stress. `instances` defaults to every instance and may repeat entries.
pub fn susceptibility_matrices(
    bundle: &ModelBundle,
    dataset: &Dataset,
    inputs: &ModelInputs,
    instances: Option<&[usize]>,
) -> Result<[SensitivityMatrix; 3]> {
    if !bundle.is_trained() {
        return Err(Error::State("susceptibility requires a trained model".into()));
    }
    let all: Vec<usize>;
    let instances = match instances {
        Some(list) => list,
        None => {
            all = (0..dataset.n_instances()).collect();
            &all
        }
    };
    if let Some(&bad) = instances.iter().find(|&&p| p >= dataset.n_instances()) {
        return Err(Error::Index {
            index: bad,
            len: dataset.n_instances(),
        });
    }
    let grads = instance_gradients(bundle, inputs, instances)?;
    let n_cols = bundle.stress_len();
    let columns = match bundle.kind {
        ModelKind::DemMlp => ColumnSemantics::GrowthPeriod,
        ModelKind::CnnMlp => ColumnSemantics::ConvolutionWindow,
    };
    let ids: Vec<String> = dataset.hybrid_ids().cloned().collect();
    let build = |stress: StressKind| -> Result<SensitivityMatrix> {
        let mut data = vec![0.0; ids.len() * n_cols];
        for (&p, g) in instances.iter().zip(&grads) {
            let h = dataset.instance_hybrid(p);
            let row = &mut data[h * n_cols..(h + 1) * n_cols];
            for (r, v) in row.iter_mut().zip(g.get(stress).expect("model stress kind")) {
                *r += v;
            }
        }
        SensitivityMatrix::new(
            MatrixKind::susceptibility(stress)?,
            EnvFilter::All,
            columns,
            ids.clone(),
            n_cols,
            data,
        )
    };
    Ok([
        build(StressKind::Heat)?,
        build(StressKind::Drought)?,
        build(StressKind::Combined)?,
    ])
}

/// Susceptibility matrix for a single stress kind.
pub fn susceptibility_matrix(
    bundle: &ModelBundle,
    dataset: &Dataset,
    inputs: &ModelInputs,
    stress: StressKind,
    instances: Option<&[usize]>,
) -> Result<SensitivityMatrix> {
    let kind = MatrixKind::susceptibility(stress)?;
    let [h, d, c] = susceptibility_matrices(bundle, dataset, inputs, instances)?;
    Ok(match kind {
        MatrixKind::RHeat => h,
        MatrixKind::RDrought => d,
        _ => c,
    })
}

#[derive(Serialize)]
struct MatrixDescriptor<'a> {
    kind: MatrixKind,
    filter: EnvFilter,
    columns: ColumnSemantics,
    n_rows: usize,
    n_cols: usize,
    provenance: Option<&'a str>,
}

/// Write `hybrid_id,c0..c{K-1}` to `path` and a JSON descriptor next to it.
pub fn write_matrix(matrix: &SensitivityMatrix, path: &Path, provenance: Option<&str>) -> Result<()> {
    let mut out = String::new();
    if let Some(p) = provenance {
        out.push_str(&format!("# {p}\n"));
    }
    out.push_str("hybrid_id");
    for t in 0..matrix.n_cols {
        out.push_str(&format!(",c{t}"));
    }
    out.push('\n');
    for (i, id) in matrix.hybrid_ids.iter().enumerate() {
        out.push_str(id);
        for v in matrix.row(i) {
            out.push_str(&format!(",{v:e}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let descriptor = MatrixDescriptor {
        kind: matrix.kind,
        filter: matrix.filter,
        columns: matrix.columns,
        n_rows: matrix.n_rows(),
        n_cols: matrix.n_cols,
        provenance,
    };
    let side = path.with_extension("json");
    let json = serde_json::to_string_pretty(&descriptor)?;
    std::fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
}

/// Read a matrix written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<SensitivityMatrix> {
    #[derive(Deserialize)]
    struct Descriptor {
        kind: MatrixKind,
        filter: EnvFilter,
        columns: ColumnSemantics,
        n_cols: usize,
    }
    let side = path.with_extension("json");
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let d: Descriptor = serde_json::from_str(&text)?;
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|source| Error::Csv { file: file.clone(), source })?;
    let mut ids = Vec::new();
    let mut data = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|source| Error::Csv { file: file.clone(), source })?;
        ids.push(rec[0].to_string());
        for v in rec.iter().skip(1) {
            data.push(v.parse::<f64>().map_err(|e| Error::Data(format!("{file}: {e}")))?);
        }
    }
    SensitivityMatrix::new(d.kind, d.filter, d.columns, ids, d.n_cols, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::constant_env;
    use crate::data::PlantingInstance;

    fn inst(h: &str, e: &str, y: f64) -> PlantingInstance {
        PlantingInstance {
            hybrid_id: h.into(),
            env_id: e.into(),
            irr: 0,
            yield_obs: y,
        }
    }

    #[test]
    fn delta_yield_examples() {
        let envs = vec![constant_env("E1", 20, 30.0, 10.0)];
        let ds = Dataset::new(
            envs,
            vec![
                inst("A", "E1", 100.0),
                inst("A", "E1", 90.0),
                inst("A", "E1", 80.0),
                inst("B", "E1", 55.0),
                inst("C", "E1", 7.0),
                inst("C", "E1", 7.0),
            ],
        )
        .unwrap();
        let dy = compute_delta_yield(&ds).values;
        assert_eq!(dy, vec![0.0, 10.0, 20.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn covariance_examples() {
        assert_eq!(population_covariance(&[0.0, 10.0], &[0.0, 5.0]), 12.5);
        assert_eq!(population_covariance(&[0.0, 10.0, 3.0], &[4.0, 4.0, 4.0]), 0.0);
    }

    #[test]
    fn warm_filter_zero_rows() {
        let envs = vec![constant_env("HOT", 20, 40.0, 36.0), constant_env("MILD", 20, 30.0, 10.0)];
        let ds = Dataset::new(
            envs,
            vec![
                inst("A", "HOT", 100.0),
                inst("A", "HOT", 90.0),
                inst("B", "MILD", 50.0),
                inst("B", "MILD", 40.0),
            ],
        )
        .unwrap();
        let stress: Vec<PeriodVector> = (0..4).map(|p| [p as f64; 18]).collect();
        let warm = covariance_matrix(&ds, &stress, MatrixKind::CHeat, EnvFilter::warm()).unwrap();
        assert!(warm.row(0).iter().all(|&v| v != 0.0));
        assert!(warm.row(1).iter().all(|&v| v == 0.0));
        let cold = covariance_matrix(&ds, &stress, MatrixKind::CHeat, EnvFilter::cold()).unwrap();
        assert!(cold.row(0).iter().all(|&v| v == 0.0));
        let none = EnvFilter::Warm { threshold: 100.0 };
        assert!(matches!(
            covariance_matrix(&ds, &stress, MatrixKind::CHeat, none),
            Err(Error::EmptyAnalysis(_))
        ));
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = SensitivityMatrix::new(
            MatrixKind::RDrought,
            EnvFilter::All,
            ColumnSemantics::ConvolutionWindow,
            vec!["H1".into(), "H2".into()],
            3,
            vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0, 0.0, -7.25],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        write_matrix(&m, &path, Some("seed=1")).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.lines().nth(1).unwrap() == "hybrid_id,c0,c1,c2");
        assert_eq!(read_matrix(&path).unwrap(), m);
    }
}
