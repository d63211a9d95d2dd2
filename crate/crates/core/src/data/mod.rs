//! Domain data model: environments with daily weather, planting instances,
//! CSV ingestion and the synthetic generator.

mod io;
mod synth;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_dataset, write_dataset, DataPaths, ENVIRONMENT_COLUMNS, PERFORMANCE_COLUMNS, WEATHER_COLUMNS};
pub use synth::{generate_synthetic, LabelLayout, SynthConfig, SynthGroundTruth};

/// One day of weather. Temperatures in °C, precipitation and SWE in mm,
/// radiation in MJ m⁻² day⁻¹, vapor pressure in kPa, day length in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyWeather {
    pub day_index: usize,
    pub tmax: f64,
    pub tmin: f64,
    pub tmean: f64,
    pub prec: f64,
    pub srad: f64,
    pub swe: f64,
    pub vp: f64,
    pub dayl: f64,
}

impl DailyWeather {
    pub fn check(&self) -> std::result::Result<(), String> {
        let finite = [
            self.tmax, self.tmin, self.tmean, self.prec, self.srad, self.swe, self.vp, self.dayl,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err("non-finite weather value".into());
        }
        if self.tmin > self.tmax {
            return Err(format!("tmin {} > tmax {}", self.tmin, self.tmax));
        }
        if self.tmean < self.tmin || self.tmean > self.tmax {
            return Err(format!(
                "tmean {} outside [tmin {}, tmax {}]",
                self.tmean, self.tmin, self.tmax
            ));
        }
        if self.prec < 0.0 || self.swe < 0.0 || self.vp < 0.0 {
            return Err("prec, swe and vp must be nonnegative".into());
        }
        if !(0.0..=86400.0).contains(&self.dayl) {
            return Err(format!("dayl {} outside [0, 86400]", self.dayl));
        }
        Ok(())
    }
}

/// A site-season: soil and site features plus daily weather from planting to
/// harvest inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub env_id: String,
    pub planting_day: i64,
    pub harvest_day: i64,
    pub elev: f64,
    pub clay: f64,
    pub silt: f64,
    pub sand: f64,
    pub awc: f64,
    pub ph: f64,
    pub om: f64,
    pub cec: f64,
    pub ksat: f64,
    pub weather: Vec<DailyWeather>,
}

impl Environment {
    pub fn season_length(&self) -> usize {
        self.weather.len()
    }

    pub fn max_tmean(&self) -> f64 {
        self.weather
            .iter()
            .map(|w| w.tmean)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Data(format!("environment {}: {msg}", self.env_id)));
        if self.harvest_day <= self.planting_day {
            return fail("harvest_day must exceed planting_day".into());
        }
        let expected = (self.harvest_day - self.planting_day + 1) as usize;
        if self.weather.len() != expected {
            return fail(format!(
                "expected {expected} weather days, found {}",
                self.weather.len()
            ));
        }
        for (d, w) in self.weather.iter().enumerate() {
            if w.day_index != d {
                return fail(format!("weather day {} out of sequence at position {d}", w.day_index));
            }
            if let Err(e) = w.check() {
                return fail(format!("day {d}: {e}"));
            }
        }
        let texture = self.clay + self.silt + self.sand;
        if (texture - 100.0).abs() > 1.0 {
            return fail(format!("clay+silt+sand = {texture}, expected 100 ± 1"));
        }
        if !(self.awc > 0.0 && self.awc < 1.0) {
            return fail(format!("awc {} outside (0, 1)", self.awc));
        }
        if !(self.ksat > 0.0) {
            return fail(format!("ksat {} must be positive", self.ksat));
        }
        Ok(())
    }
}

/// One hybrid grown in one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantingInstance {
    pub hybrid_id: String,
    pub env_id: String,
    pub irr: u8,
    pub yield_obs: f64,
}

/// Validated collection of environments and planting instances with dense
/// indices assigned in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    environments: IndexMap<String, Environment>,
    instances: Vec<PlantingInstance>,
    hybrids: IndexMap<String, Vec<usize>>,
    instance_env: Vec<usize>,
    instance_hybrid: Vec<usize>,
}

impl Dataset {
    pub fn new(environments: Vec<Environment>, instances: Vec<PlantingInstance>) -> Result<Self> {
        let mut envs = IndexMap::with_capacity(environments.len());
        for env in environments {
            env.validate()?;
            if envs.contains_key(&env.env_id) {
                return Err(Error::Data(format!("duplicate environment {}", env.env_id)));
            }
            envs.insert(env.env_id.clone(), env);
        }
        let mut hybrids: IndexMap<String, Vec<usize>> = IndexMap::new();
        let mut instance_env = Vec::with_capacity(instances.len());
        let mut instance_hybrid = Vec::with_capacity(instances.len());
        for (i, inst) in instances.iter().enumerate() {
            let Some(e) = envs.get_index_of(&inst.env_id) else {
                return Err(Error::Reference(format!(
                    "instance {i} (hybrid {}) references unknown environment {}",
                    inst.hybrid_id, inst.env_id
                )));
            };
            if inst.irr > 3 {
                return Err(Error::Data(format!("instance {i}: irr {} outside 0..=3", inst.irr)));
            }
            if !(inst.yield_obs >= 0.0) || !inst.yield_obs.is_finite() {
                return Err(Error::Data(format!(
                    "instance {i}: yield {} must be finite and nonnegative",
                    inst.yield_obs
                )));
            }
            let entry = hybrids.entry(inst.hybrid_id.clone()).or_default();
            entry.push(i);
            instance_env.push(e);
            instance_hybrid.push(hybrids.get_index_of(&inst.hybrid_id).unwrap());
        }
        Ok(Self {
            environments: envs,
            instances,
            hybrids,
            instance_env,
            instance_hybrid,
        })
    }

    pub fn environments(&self) -> impl ExactSizeIterator<Item = &Environment> {
        self.environments.values()
    }

    pub fn environment(&self, index: usize) -> &Environment {
        &self.environments[index]
    }

    pub fn environment_by_id(&self, env_id: &str) -> Option<&Environment> {
        self.environments.get(env_id)
    }

    pub fn env_index(&self, env_id: &str) -> Option<usize> {
        self.environments.get_index_of(env_id)
    }

    pub fn n_environments(&self) -> usize {
        self.environments.len()
    }

    pub fn instances(&self) -> &[PlantingInstance] {
        &self.instances
    }

    pub fn n_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn n_hybrids(&self) -> usize {
        self.hybrids.len()
    }

    pub fn hybrid_ids(&self) -> impl ExactSizeIterator<Item = &String> {
        self.hybrids.keys()
    }

    pub fn hybrid_id(&self, index: usize) -> &str {
        self.hybrids.get_index(index).map(|(k, _)| k.as_str()).unwrap()
    }

    pub fn hybrid_index(&self, hybrid_id: &str) -> Option<usize> {
        self.hybrids.get_index_of(hybrid_id)
    }

    /// Instance indices of hybrid `index`, in dataset order.
    pub fn instances_of_hybrid(&self, index: usize) -> &[usize] {
        &self.hybrids[index]
    }

    pub fn instance_env(&self, instance: usize) -> usize {
        self.instance_env[instance]
    }

    pub fn instance_hybrid(&self, instance: usize) -> usize {
        self.instance_hybrid[instance]
    }

    /// Smallest and largest KSAT over all environments.
    pub fn ksat_extremes(&self) -> (f64, f64) {
        self.environments().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
            (lo.min(e.ksat), hi.max(e.ksat))
        })
    }

    pub fn max_season_length(&self) -> usize {
        self.environments().map(Environment::season_length).max().unwrap_or(0)
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;

    /// Environment with constant weather over `days` days.
    pub fn constant_env(id: &str, days: usize, tmax: f64, tmin: f64) -> Environment {
        let weather = (0..days)
            .map(|d| DailyWeather {
                day_index: d,
                tmax,
                tmin,
                tmean: (tmax + tmin) / 2.0,
                prec: 2.0,
                srad: 18.0,
                swe: 0.0,
                vp: 1.2,
                dayl: 50_000.0,
            })
            .collect();
        Environment {
            env_id: id.into(),
            planting_day: 100,
            harvest_day: 100 + days as i64 - 1,
            elev: 200.0,
            clay: 20.0,
            silt: 40.0,
            sand: 40.0,
            awc: 0.15,
            ph: 6.5,
            om: 2.0,
            cec: 15.0,
            ksat: 10.0,
            weather,
        }
    }
}
