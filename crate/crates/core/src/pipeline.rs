//! Command orchestration: configuration, run directories, artifacts and the
//! manifest.
//!
//! Every command of a run writes below `<output_dir>/seed<N>-<hash>`, where
//! the hash covers the resolved configuration. Downstream commands read the
//! artifacts of upstream ones from the same directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    compare_rankings, heatmap_svg, kmeans_cluster, label_accuracy, rank_hybrids, resistant_fraction, scatter_svg,
    write_clusters, write_comparison, write_ranking, ClusterResult, Norm,
};
use crate::data::{generate_synthetic, load_dataset, write_dataset, DataPaths, Dataset, SynthConfig, SynthGroundTruth};
use crate::dem::{dem_stress_table, StressKind};
use crate::neural::{fit, load_bundle, save_bundle, ModelBundle, ModelConfig, ModelKind, TrainConfig};
use crate::sensitivity::{
    covariance_matrix, read_matrix, susceptibility_matrices, EnvFilter, MatrixKind, SensitivityMatrix,
    DEFAULT_WARM_THRESHOLD,
};
use crate::{Error, Result, VERSION};

pub const MANIFEST: &str = "manifest.json";

/// Exactly one of `synth` and `paths` selects the data source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub synth: Option<SynthConfig>,
    pub paths: Option<DataPaths>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterName {
    #[default]
    All,
    Warm,
    Cold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivityConfig {
    pub filter: FilterName,
    pub warm_threshold: f64,
}

impl Default for SensitivityConfig {
    fn default() -> Self {
        Self {
            filter: FilterName::All,
            warm_threshold: DEFAULT_WARM_THRESHOLD,
        }
    }
}

impl SensitivityConfig {
    pub fn env_filter(&self) -> EnvFilter {
        let threshold = self.warm_threshold;
        match self.filter {
            FilterName::All => EnvFilter::All,
            FilterName::Warm => EnvFilter::Warm { threshold },
            FilterName::Cold => EnvFilter::Cold { threshold },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub norm: Norm,
    /// Also compare susceptibility rankings against the run that differs
    /// only in model kind.
    pub compare_models: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub sensitivity: SensitivityConfig,
    pub analysis: AnalysisConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            output_dir: PathBuf::from("runs"),
            data: DataConfig {
                synth: Some(SynthConfig::default()),
                paths: None,
            },
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            sensitivity: SensitivityConfig::default(),
            analysis: AnalysisConfig::default(),
        }
    }
}

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub model: Option<ModelKind>,
}

impl RunConfig {
    /// Parse TOML text. Relative data paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .and_then(|s| text.get(..s.start))
                .map(|head| format!("line {}", head.matches('\n').count() + 1))
                .unwrap_or_else(|| "config".into());
            Error::config(field, e.message().to_string())
        })?;
        if let Some(p) = cfg.data.paths.as_mut() {
            for path in [&mut p.weather, &mut p.environments, &mut p.performance] {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(k) = o.model {
            self.model.kind = k;
        }
        // The global seed drives every seeded stage.
        self.train.seed = self.seed;
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data.synth, &self.data.paths) {
            (Some(s), None) => s.validate()?,
            (None, Some(p)) => {
                for (field, path) in [
                    ("data.paths.weather", &p.weather),
                    ("data.paths.environments", &p.environments),
                    ("data.paths.performance", &p.performance),
                ] {
                    if !path.is_file() {
                        return Err(Error::config(field, format!("{} does not exist", path.display())));
                    }
                }
            }
            (Some(_), Some(_)) => return Err(Error::config("data", "give either `synth` or `paths`, not both")),
            (None, None) => return Err(Error::config("data", "one of `synth` or `paths` is required")),
        }
        self.model.validate()?;
        self.train.validate()?;
        if !self.sensitivity.warm_threshold.is_finite() {
            return Err(Error::config("sensitivity.warm_threshold", "must be finite"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(format!("seed{}-{}", self.seed, &self.hash()[..8]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Dem { emit_calendar: bool },
    Train,
    Sensitivity,
    Rank,
    Cluster,
    Compare,
    Eval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Dem { .. } => "dem",
            Command::Train => "train",
            Command::Sensitivity => "sensitivity",
            Command::Rank => "rank",
            Command::Cluster => "cluster",
            Command::Compare => "compare",
            Command::Eval => "eval",
        }
    }
}

/// A validated configuration bound to its run directory.
pub struct Run {
    pub config: RunConfig,
    pub dir: PathBuf,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub artifacts: Vec<ManifestEntry>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingArtifact {
            path: path.to_path_buf(),
            producer: producer.into(),
        })
    }
}

fn json_pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.strip_prefix(root).map(|p| p != Path::new(MANIFEST)).unwrap_or(true) {
            out.push(path);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GroundTruthFile<'a> {
    provenance: &'a str,
    dual_resistant_fraction: f64,
    #[serde(flatten)]
    truth: &'a SynthGroundTruth,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterSummaryEntry {
    matrix: String,
    silhouette: f64,
    inertia: f64,
    n_susceptible: usize,
    iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClusterSummary {
    provenance: String,
    seed: u64,
    clusters: Vec<ClusterSummaryEntry>,
    resistant_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ComparisonSummary {
    a: String,
    b: String,
    spearman: f64,
}

/// End-to-end evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: String,
    pub model: String,
    pub epochs: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_mse_over_sigma: Option<f64>,
    pub resistant_fraction: f64,
    pub silhouette: Vec<(String, f64)>,
    pub recovery: Option<ClusterRecovery>,
}

/// Agreement of the clusters with planted synthetic labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecovery {
    pub heat_accuracy: f64,
    pub drought_accuracy: f64,
    pub resistant_fraction: f64,
    pub planted_dual_resistant_fraction: f64,
}

const SUSCEPTIBILITY: [MatrixKind; 3] = [MatrixKind::RHeat, MatrixKind::RDrought, MatrixKind::RCombined];
const COVARIANCE: [MatrixKind; 3] = [MatrixKind::CHeat, MatrixKind::CDrought, MatrixKind::CCombined];
const CLUSTERED: [MatrixKind; 2] = [MatrixKind::RHeat, MatrixKind::RDrought];

impl Run {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash();
        let provenance = format!("agrostress {VERSION}; seed={}; config={}", config.seed, &hash[..16]);
        let dir = config.run_dir();
        Ok(Self { config, dir, provenance })
    }

    fn p(&self) -> Option<&str> {
        Some(&self.provenance)
    }

    pub fn data_dir(&self) -> PathBuf {
        self.dir.join("data")
    }

    pub fn bundle_path(&self) -> PathBuf {
        self.dir.join("model").join("model.bundle")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("model").join("metrics.csv")
    }

    pub fn matrix_path(&self, kind: MatrixKind) -> PathBuf {
        self.dir.join("sensitivity").join(format!("{}.csv", kind.name()))
    }

    pub fn clusters_path(&self, kind: MatrixKind) -> PathBuf {
        self.dir.join("cluster").join(format!("{}.csv", kind.name()))
    }

    fn cluster_summary_path(&self) -> PathBuf {
        self.dir.join("cluster").join("summary.json")
    }

    fn ground_truth_path(&self) -> PathBuf {
        self.data_dir().join("ground_truth.json")
    }

    pub fn report_path(&self) -> PathBuf {
        self.dir.join("report.json")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dir.join(MANIFEST)
    }

    /// Dataset of this run: the synthetic tables written by `synth`, or the
    /// configured input files.
    pub fn dataset(&self) -> Result<Dataset> {
        match &self.config.data.paths {
            Some(paths) => load_dataset(paths),
            None => {
                let paths = DataPaths::in_dir(&self.data_dir());
                for p in [&paths.weather, &paths.environments, &paths.performance] {
                    require(p, "synth")?;
                }
                load_dataset(&paths)
            }
        }
    }

    fn ground_truth(&self) -> Result<Option<SynthGroundTruth>> {
        let path = self.ground_truth_path();
        if self.config.data.synth.is_none() || !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Some(serde_json::from_str(&text)?))
    }

    fn bundle(&self) -> Result<ModelBundle> {
        let path = self.bundle_path();
        require(&path, "train")?;
        load_bundle(&path)
    }

    fn matrix(&self, kind: MatrixKind) -> Result<SensitivityMatrix> {
        let path = self.matrix_path(kind);
        require(&path, "sensitivity")?;
        read_matrix(&path)
    }

    pub fn execute(&self, command: Command) -> Result<Vec<PathBuf>> {
        ensure_dir(&self.dir)?;
        let mut canonical = self.config.clone();
        canonical.output_dir = PathBuf::new();
        write(&self.dir.join("config.json"), json_pretty(&canonical)?)?;
        let written = match command {
            Command::Synth => self.synth()?,
            Command::Dem { emit_calendar } => self.dem(emit_calendar)?,
            Command::Train => self.train()?,
            Command::Sensitivity => self.sensitivity()?,
            Command::Rank => self.rank()?,
            Command::Cluster => self.cluster()?,
            Command::Compare => self.compare()?,
            Command::Eval => self.eval()?.1,
        };
        self.write_manifest()?;
        Ok(written)
    }

    pub fn synth(&self) -> Result<Vec<PathBuf>> {
        let Some(cfg) = &self.config.data.synth else {
            return Err(Error::config("data.synth", "`synth` needs a synthetic data source"));
        };
        let (dataset, truth) = generate_synthetic(cfg, self.config.seed)?;
        let paths = write_dataset(&dataset, &self.data_dir(), self.p())?;
        let gt = self.ground_truth_path();
        let file = GroundTruthFile {
            provenance: &self.provenance,
            dual_resistant_fraction: truth.dual_resistant_fraction(),
            truth: &truth,
        };
        write(&gt, json_pretty(&file)?)?;
        Ok(vec![paths.weather, paths.environments, paths.performance, gt])
    }

    pub fn dem(&self, emit_calendar: bool) -> Result<Vec<PathBuf>> {
        let dataset = self.dataset()?;
        let table = dem_stress_table(&dataset, &self.config.model.dem)?;
        let dir = self.dir.join("dem");
        ensure_dir(&dir)?;
        let mut written = Vec::new();
        for kind in StressKind::ALL {
            let mut out = format!("# {}\nhybrid_id,env_id,kind", self.provenance);
            for t in 0..crate::growth::N_PERIODS {
                let _ = write!(out, ",p{t}");
            }
            out.push('\n');
            for (inst, s) in dataset.instances().iter().zip(&table.instances) {
                let _ = write!(out, "{},{},{}", inst.hybrid_id, inst.env_id, kind.name());
                for v in s.get(kind) {
                    let _ = write!(out, ",{v}");
                }
                out.push('\n');
            }
            let path = dir.join(format!("{}.csv", kind.name()));
            write(&path, out)?;
            written.push(path);
        }
        if emit_calendar {
            let cal_dir = dir.join("calendars");
            ensure_dir(&cal_dir)?;
            for (env, cal) in dataset.environments().zip(&table.calendars) {
                let mut out = format!("# {}\nenv_id,day,gdu,agdu,period\n", self.provenance);
                for d in 0..cal.len() {
                    let _ = writeln!(out, "{},{},{},{},{}", env.env_id, d, cal.gdu[d], cal.agdu[d], cal.period[d]);
                }
                let path = cal_dir.join(format!("{}.csv", env.env_id));
                write(&path, out)?;
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn train(&self) -> Result<Vec<PathBuf>> {
        let dataset = self.dataset()?;
        let outcome = fit(&dataset, &self.config.model, &self.config.train)?;
        let bundle = self.bundle_path();
        ensure_dir(bundle.parent().expect("bundle path has a parent"))?;
        save_bundle(&outcome.bundle, &bundle, self.p())?;
        let mut out = format!("# {}\nepoch,train_mse,test_mse,test_mse_over_sigma\n", self.provenance);
        for m in &outcome.history {
            let ratio = m.test_mse_over_sigma.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{}", m.epoch, m.train_mse, m.test_mse, ratio);
        }
        let metrics = self.metrics_path();
        write(&metrics, out)?;
        let split = self.dir.join("model").join("split.json");
        write(&split, json_pretty(&outcome.split)?)?;
        Ok(vec![bundle, metrics, split])
    }

    pub fn sensitivity(&self) -> Result<Vec<PathBuf>> {
        let dataset = self.dataset()?;
        let bundle = self.bundle()?;
        let filter = self.config.sensitivity.env_filter();
        ensure_dir(&self.dir.join("sensitivity"))?;
        let mut written = Vec::new();

        let table = dem_stress_table(&dataset, &self.config.model.dem)?;
        for kind in COVARIANCE {
            let m = covariance_matrix(&dataset, &table.vectors(kind.stress()), kind, filter)?;
            let path = self.matrix_path(kind);
            crate::sensitivity::write_matrix(&m, &path, self.p())?;
            written.extend([path.clone(), path.with_extension("json")]);
        }

        let retained: Vec<bool> = dataset.environments().map(|e| filter.retains(e)).collect();
        let instances: Vec<usize> = (0..dataset.n_instances())
            .filter(|&p| retained[dataset.instance_env(p)])
            .collect();
        if instances.is_empty() {
            return Err(Error::EmptyAnalysis(format!(
                "the {} environment filter retains no instances",
                filter.name()
            )));
        }
        let inputs = bundle.prepare(&dataset)?;
        let matrices = susceptibility_matrices(&bundle, &dataset, &inputs, Some(&instances))?;
        for mut m in matrices {
            m.filter = filter;
            let path = self.matrix_path(m.kind);
            crate::sensitivity::write_matrix(&m, &path, self.p())?;
            written.extend([path.clone(), path.with_extension("json")]);
        }
        Ok(written)
    }

    pub fn rank(&self) -> Result<Vec<PathBuf>> {
        let dir = self.dir.join("rank");
        ensure_dir(&dir)?;
        let mut written = Vec::new();
        for kind in SUSCEPTIBILITY.into_iter().chain(COVARIANCE) {
            let m = self.matrix(kind)?;
            let ranking = rank_hybrids(&m, self.config.analysis.norm);
            let csv = dir.join(format!("{}.csv", kind.name()));
            write_ranking(&ranking, &csv, self.p())?;
            let svg = dir.join(format!("{}.svg", kind.name()));
            write(&svg, heatmap_svg(&m, Some(&ranking), self.p()))?;
            written.extend([csv, svg]);
        }
        Ok(written)
    }

    fn cluster_results(&self) -> Result<Vec<ClusterResult>> {
        CLUSTERED
            .iter()
            .map(|&k| kmeans_cluster(&self.matrix(k)?, self.config.seed))
            .collect()
    }

    pub fn cluster(&self) -> Result<Vec<PathBuf>> {
        let results = self.cluster_results()?;
        ensure_dir(&self.dir.join("cluster"))?;
        let mut written = Vec::new();
        let mut entries = Vec::new();
        for (kind, r) in CLUSTERED.iter().zip(&results) {
            let path = self.clusters_path(*kind);
            write_clusters(r, &path, self.p())?;
            written.push(path);
            entries.push(ClusterSummaryEntry {
                matrix: kind.name().into(),
                silhouette: r.silhouette,
                inertia: r.inertia,
                n_susceptible: r.susceptible().iter().filter(|&&s| s).count(),
                iterations: r.iterations,
            });
        }
        let refs: Vec<&ClusterResult> = results.iter().collect();
        let summary = ClusterSummary {
            provenance: self.provenance.clone(),
            seed: self.config.seed,
            clusters: entries,
            resistant_fraction: resistant_fraction(&refs)?,
        };
        let path = self.cluster_summary_path();
        write(&path, json_pretty(&summary)?)?;
        written.push(path);
        Ok(written)
    }

    /// Run directory of the configuration that differs only in model kind.
    pub fn sibling_model_run(&self) -> Result<Run> {
        let mut other = self.config.clone();
        other.model.kind = match other.model.kind {
            ModelKind::CnnMlp => ModelKind::DemMlp,
            ModelKind::DemMlp => ModelKind::CnnMlp,
        };
        Run::new(other)
    }

    pub fn compare(&self) -> Result<Vec<PathBuf>> {
        let dir = self.dir.join("compare");
        ensure_dir(&dir)?;
        let norm = self.config.analysis.norm;
        let mut pairs: Vec<(String, SensitivityMatrix, String, SensitivityMatrix)> = Vec::new();
        for (r, c) in SUSCEPTIBILITY.into_iter().zip(COVARIANCE) {
            pairs.push((r.name().into(), self.matrix(r)?, c.name().into(), self.matrix(c)?));
        }
        if self.config.analysis.compare_models {
            let other = self.sibling_model_run()?;
            let here = self.config.model.kind.name();
            let there = other.config.model.kind.name();
            for r in SUSCEPTIBILITY {
                let path = other.matrix_path(r);
                if !path.exists() {
                    return Err(Error::MissingArtifact {
                        path,
                        producer: format!("sensitivity --model {there}"),
                    });
                }
                pairs.push((
                    format!("{here}_{}", r.name()),
                    self.matrix(r)?,
                    format!("{there}_{}", r.name()),
                    read_matrix(&other.matrix_path(r))?,
                ));
            }
        }
        let mut written = Vec::new();
        let mut summary = Vec::new();
        for (a_name, a, b_name, b) in &pairs {
            let cmp = compare_rankings(&rank_hybrids(a, norm), &rank_hybrids(b, norm))?;
            let stem = format!("{a_name}__{b_name}");
            let csv = dir.join(format!("{stem}.csv"));
            write_comparison(&cmp, &csv, self.p())?;
            let svg = dir.join(format!("{stem}.svg"));
            write(&svg, scatter_svg(&cmp, a_name, b_name, self.p()))?;
            written.extend([csv, svg]);
            summary.push(ComparisonSummary {
                a: a_name.clone(),
                b: b_name.clone(),
                spearman: cmp.spearman,
            });
        }
        let path = dir.join("summary.json");
        write(&path, json_pretty(&summary)?)?;
        written.push(path);
        Ok(written)
    }

    fn final_metrics(&self) -> Result<crate::neural::EpochMetrics> {
        let path = self.metrics_path();
        require(&path, "train")?;
        let file = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(&path)
            .map_err(|source| Error::Csv { file: file.clone(), source })?;
        let mut last = None;
        for record in reader.records() {
            last = Some(record.map_err(|source| Error::Csv { file: file.clone(), source })?);
        }
        let record = last.ok_or_else(|| Error::Data(format!("{file} holds no metrics")))?;
        let num = |i: usize| -> Result<f64> {
            record
                .get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("{file}: malformed column {i}")))
        };
        Ok(crate::neural::EpochMetrics {
            epoch: num(0)? as usize,
            train_mse: num(1)?,
            test_mse: num(2)?,
            test_mse_over_sigma: record.get(3).and_then(|v| v.parse().ok()),
        })
    }

    /// Report of model quality and clustering, with recovery against planted
    /// labels for synthetic data.
    pub fn eval(&self) -> Result<(EvalReport, Vec<PathBuf>)> {
        let metrics = self.final_metrics()?;
        require(&self.cluster_summary_path(), "cluster")?;
        let results = self.cluster_results()?;
        let refs: Vec<&ClusterResult> = results.iter().collect();
        let resist = resistant_fraction(&refs)?;
        let recovery = self.ground_truth()?.map(|truth| ClusterRecovery {
            heat_accuracy: label_accuracy(&results[0].susceptible(), &truth.heat_labels()),
            drought_accuracy: label_accuracy(&results[1].susceptible(), &truth.drought_labels()),
            resistant_fraction: resist,
            planted_dual_resistant_fraction: truth.dual_resistant_fraction(),
        });
        let report = EvalReport {
            provenance: self.provenance.clone(),
            model: self.config.model.kind.name().into(),
            epochs: metrics.epoch,
            train_mse: metrics.train_mse,
            test_mse: metrics.test_mse,
            test_mse_over_sigma: metrics.test_mse_over_sigma,
            resistant_fraction: resist,
            silhouette: CLUSTERED
                .iter()
                .zip(&results)
                .map(|(k, r)| (k.name().to_string(), r.silhouette))
                .collect(),
            recovery,
        };
        let path = self.report_path();
        write(&path, json_pretty(&report)?)?;
        Ok((report, vec![path]))
    }

    /// Hash every file of the run directory and write the manifest.
    pub fn write_manifest(&self) -> Result<Manifest> {
        let mut files = Vec::new();
        collect_files(&self.dir, &self.dir, &mut files)?;
        let mut artifacts = files
            .iter()
            .map(|f| {
                let bytes = std::fs::read(f).map_err(|e| Error::io(f, e))?;
                let rel = f.strip_prefix(&self.dir).expect("file lies in the run directory");
                Ok(ManifestEntry {
                    path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = Manifest {
            tool_version: VERSION.into(),
            seed: self.config.seed,
            config_hash: self.config.hash(),
            artifacts,
        };
        write(&self.manifest_path(), json_pretty(&manifest)?)?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_hash_ignores_output_dir() {
        let a = RunConfig::default();
        a.validate().unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn toml_round_trip_and_field_errors() {
        let cfg = RunConfig::from_toml(
            "seed = 3\n[model]\nkind = \"dem-mlp\"\n[train]\nepochs = 5\n",
            Path::new("."),
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.model.kind, ModelKind::DemMlp);
        assert_eq!(cfg.train.epochs, 5);
        assert!(cfg.data.synth.is_some());

        let err = RunConfig::from_toml("[train]\nrho = \"x\"\n", Path::new(".")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let bad = RunConfig {
            train: TrainConfig { rho: 1.5, ..Default::default() },
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "train.rho"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exactly_one_data_source() {
        let mut cfg = RunConfig::default();
        cfg.data.paths = Some(DataPaths::in_dir(Path::new("/nonexistent")));
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "data"));
        cfg.data.synth = None;
        assert!(matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "data.paths.weather"));
    }
}
