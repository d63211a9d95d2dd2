use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, StringRecord, Trim};
use serde::{Deserialize, Serialize};

use super::{DailyWeather, Dataset, Environment, PlantingInstance};
use crate::{Error, Result};

pub const WEATHER_COLUMNS: [&str; 10] = [
    "env_id", "day", "tmax", "tmin", "tmean", "prec", "srad", "swe", "vp", "dayl",
];
pub const ENVIRONMENT_COLUMNS: [&str; 12] = [
    "env_id",
    "planting_day",
    "harvest_day",
    "elev",
    "clay",
    "silt",
    "sand",
    "awc",
    "ph",
    "om",
    "cec",
    "ksat",
];
pub const PERFORMANCE_COLUMNS: [&str; 4] = ["hybrid_id", "env_id", "irr", "yield"];

/// Locations of the three input tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub weather: PathBuf,
    pub environments: PathBuf,
    pub performance: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            weather: dir.join("weather.csv"),
            environments: dir.join("environments.csv"),
            performance: dir.join("performance.csv"),
        }
    }
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, StringRecord)>,
}

impl Table {
    fn read(path: &Path, required: &[&str], optional: &[&str]) -> Result<Self> {
        let file = path.display().to_string();
        let handle = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(Trim::All)
            .from_reader(handle);
        let csv_err = |source| Error::Csv {
            file: file.clone(),
            source,
        };
        let headers = reader.headers().map_err(csv_err)?.clone();
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.to_string(), i))
            .collect();
        for col in required {
            if !columns.contains_key(*col) && !optional.contains(col) {
                return Err(Error::Schema {
                    file,
                    column: col.to_string(),
                });
            }
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            rows.push((line, record));
        }
        Ok(Self {
            file,
            columns,
            rows,
        })
    }

    fn invalid(&self, row: u64, message: impl Into<String>) -> Error {
        Error::Validation {
            file: self.file.clone(),
            row,
            message: message.into(),
        }
    }

    fn raw<'a>(&self, record: &'a StringRecord, column: &str) -> Option<&'a str> {
        self.columns.get(column).and_then(|&i| record.get(i))
    }

    fn text(&self, row: u64, record: &StringRecord, column: &str) -> Result<String> {
        match self.raw(record, column) {
            Some(s) if !s.is_empty() => Ok(s.to_string()),
            _ => Err(self.invalid(row, format!("empty `{column}`"))),
        }
    }

    fn number<T: std::str::FromStr>(&self, row: u64, record: &StringRecord, column: &str) -> Result<T> {
        let s = self.raw(record, column).unwrap_or("");
        s.parse()
            .map_err(|_| self.invalid(row, format!("cannot parse `{column}` value {s:?}")))
    }
}

/// Read and validate the weather, environment and performance tables.
pub fn load_dataset(paths: &DataPaths) -> Result<Dataset> {
    let env_table = Table::read(&paths.environments, &ENVIRONMENT_COLUMNS, &[])?;
    let mut environments = Vec::with_capacity(env_table.rows.len());
    let mut env_pos = HashMap::new();
    for (line, rec) in &env_table.rows {
        let t = &env_table;
        let env = Environment {
            env_id: t.text(*line, rec, "env_id")?,
            planting_day: t.number(*line, rec, "planting_day")?,
            harvest_day: t.number(*line, rec, "harvest_day")?,
            elev: t.number(*line, rec, "elev")?,
            clay: t.number(*line, rec, "clay")?,
            silt: t.number(*line, rec, "silt")?,
            sand: t.number(*line, rec, "sand")?,
            awc: t.number(*line, rec, "awc")?,
            ph: t.number(*line, rec, "ph")?,
            om: t.number(*line, rec, "om")?,
            cec: t.number(*line, rec, "cec")?,
            ksat: t.number(*line, rec, "ksat")?,
            weather: Vec::new(),
        };
        if env_pos.insert(env.env_id.clone(), environments.len()).is_some() {
            return Err(t.invalid(*line, format!("duplicate env_id {}", env.env_id)));
        }
        environments.push(env);
    }

    let weather_table = Table::read(&paths.weather, &WEATHER_COLUMNS, &["swe"])?;
    for (line, rec) in &weather_table.rows {
        let t = &weather_table;
        let env_id = t.text(*line, rec, "env_id")?;
        let Some(&pos) = env_pos.get(&env_id) else {
            return Err(Error::Reference(format!(
                "{} line {line}: weather for unknown environment {env_id}",
                t.file
            )));
        };
        // Missing snow-water equivalent counts as no snow.
        let swe = match t.raw(rec, "swe") {
            None | Some("") => 0.0,
            Some(_) => t.number(*line, rec, "swe")?,
        };
        let day = DailyWeather {
            day_index: t.number(*line, rec, "day")?,
            tmax: t.number(*line, rec, "tmax")?,
            tmin: t.number(*line, rec, "tmin")?,
            tmean: t.number(*line, rec, "tmean")?,
            prec: t.number(*line, rec, "prec")?,
            srad: t.number(*line, rec, "srad")?,
            swe,
            vp: t.number(*line, rec, "vp")?,
            dayl: t.number(*line, rec, "dayl")?,
        };
        day.check().map_err(|m| t.invalid(*line, m))?;
        environments[pos].weather.push(day);
    }
    for env in &mut environments {
        env.weather.sort_by_key(|w| w.day_index);
    }

    let perf = Table::read(&paths.performance, &PERFORMANCE_COLUMNS, &[])?;
    let mut instances = Vec::with_capacity(perf.rows.len());
    for (line, rec) in &perf.rows {
        let irr: u8 = perf.number(*line, rec, "irr")?;
        if irr > 3 {
            return Err(perf.invalid(*line, format!("irr {irr} outside 0..=3")));
        }
        let yield_obs: f64 = perf.number(*line, rec, "yield")?;
        if !(yield_obs >= 0.0) {
            return Err(perf.invalid(*line, format!("negative yield {yield_obs}")));
        }
        instances.push(PlantingInstance {
            hybrid_id: perf.text(*line, rec, "hybrid_id")?,
            env_id: perf.text(*line, rec, "env_id")?,
            irr,
            yield_obs,
        });
    }

    Dataset::new(environments, instances)
}

fn create(path: &Path, provenance: Option<&str>) -> Result<std::io::BufWriter<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    if let Some(p) = provenance {
        writeln!(w, "# {p}").map_err(|e| Error::io(path, e))?;
    }
    Ok(w)
}

/// Write the three tables into `dir`. A provenance line, when given, is
/// written as a leading `#` comment that [`load_dataset`] skips.
pub fn write_dataset(dataset: &Dataset, dir: &Path, provenance: Option<&str>) -> Result<DataPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DataPaths::in_dir(dir);

    let mut w = create(&paths.environments, provenance)?;
    let mut out = String::new();
    out.push_str(&ENVIRONMENT_COLUMNS.join(","));
    out.push('\n');
    for e in dataset.environments() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            e.env_id, e.planting_day, e.harvest_day, e.elev, e.clay, e.silt, e.sand, e.awc, e.ph, e.om,
            e.cec, e.ksat
        ));
    }
    w.write_all(out.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&paths.environments, e))?;

    let mut w = create(&paths.weather, provenance)?;
    let mut out = String::new();
    out.push_str(&WEATHER_COLUMNS.join(","));
    out.push('\n');
    for e in dataset.environments() {
        for d in &e.weather {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                e.env_id, d.day_index, d.tmax, d.tmin, d.tmean, d.prec, d.srad, d.swe, d.vp, d.dayl
            ));
        }
    }
    w.write_all(out.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&paths.weather, e))?;

    let mut w = create(&paths.performance, provenance)?;
    let mut out = String::new();
    out.push_str(&PERFORMANCE_COLUMNS.join(","));
    out.push('\n');
    for i in dataset.instances() {
        out.push_str(&format!("{},{},{},{}\n", i.hybrid_id, i.env_id, i.irr, i.yield_obs));
    }
    w.write_all(out.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&paths.performance, e))?;

    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    const ENVS: &str = "env_id,planting_day,harvest_day,elev,clay,silt,sand,awc,ph,om,cec,ksat\n\
        E1,120,122,250,20,40,40,0.15,6.5,2.1,14,9.5\n\
        E2,130,131,300,30,30,40,0.2,6.8,1.8,12,20\n";

    fn weather(bad_row: bool) -> String {
        let mut s = String::from("env_id,day,tmax,tmin,tmean,prec,srad,swe,vp,dayl\n");
        s.push_str("E1,0,30,15,22,0,20,0,1.1,50000\n");
        if bad_row {
            s.push_str("E1,1,20,25,22,1,20,0,1.1,50000\n");
        } else {
            s.push_str("E1,1,31,16,23,1,20,,1.1,50000\n");
        }
        s.push_str("E1,2,32,17,24,3,19,0,1.2,50000\n");
        s.push_str("E2,0,28,14,21,0,21,0,1.0,51000\n");
        s.push_str("E2,1,29,15,22,5,22,0,1.0,51000\n");
        s
    }

    const PERF: &str = "hybrid_id,env_id,irr,yield\nH1,E1,0,180\nH1,E2,3,200.5\nH2,E2,1,150\n";

    fn fixture(dir: &Path, weather_text: &str, perf: &str) -> DataPaths {
        let p = DataPaths::in_dir(dir);
        fs::write(&p.environments, ENVS).unwrap();
        fs::write(&p.weather, weather_text).unwrap();
        fs::write(&p.performance, perf).unwrap();
        p
    }

    #[test]
    fn loads_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(&fixture(dir.path(), &weather(false), PERF)).unwrap();
        assert_eq!(ds.n_environments(), 2);
        assert_eq!(ds.n_instances(), 3);
        assert_eq!(ds.n_hybrids(), 2);
        // empty SWE cell reads as zero
        assert_eq!(ds.environment(0).weather[1].swe, 0.0);
    }

    #[test]
    fn tmin_above_tmax_cites_row() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(&fixture(dir.path(), &weather(true), PERF)).unwrap_err();
        match err {
            Error::Validation { row, message, .. } => {
                assert_eq!(row, 3);
                assert!(message.contains("tmin"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dangling_environment() {
        let dir = tempfile::tempdir().unwrap();
        let perf = format!("{PERF}H3,X99,0,100\n");
        let err = load_dataset(&fixture(dir.path(), &weather(false), &perf)).unwrap_err();
        assert!(matches!(err, Error::Reference(m) if m.contains("X99")));
    }

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let w = weather(false).replace("tmean", "tavg");
        let err = load_dataset(&fixture(dir.path(), &w, PERF)).unwrap_err();
        assert!(matches!(err, Error::Schema { column, .. } if column == "tmean"));
    }

    #[test]
    fn round_trip_reproduces_rows() {
        let dir = tempfile::tempdir().unwrap();
        let ds = load_dataset(&fixture(dir.path(), &weather(false), PERF)).unwrap();
        let out = tempfile::tempdir().unwrap();
        let paths = write_dataset(&ds, out.path(), Some("agrostress test")).unwrap();
        let again = load_dataset(&paths).unwrap();
        assert_eq!(ds, again);
    }
}
