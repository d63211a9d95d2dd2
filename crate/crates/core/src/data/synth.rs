//! Seeded synthetic datasets with planted heat and drought susceptibility.
//!
//! Weather follows a sinusoidal seasonal temperature curve with AR(1) noise.
//! Environments may receive one heat wave and one dry spell at a random point
//! of the season. Yield penalties are planted only for susceptible hybrids and
//! only from stress that falls into late growth periods; the yield scale is
//! arbitrary.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::{DailyWeather, Dataset, Environment, PlantingInstance};
use crate::growth::{build_calendar, GrowthParams, PeriodPartition};
use crate::{Error, Result};

/// How susceptibility labels are laid out over the hybrid index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelLayout {
    /// Contiguous index blocks, as for hybrids numbered by breeding family.
    /// Heat-susceptible hybrids occupy `[0, k)`, drought-susceptible ones
    /// `[n/4, n/4 + k)` modulo `n`.
    #[default]
    Blocked,
    /// Independent random subsets per stress.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_hybrids: usize,
    pub n_envs: usize,
    pub instances_per_hybrid: usize,
    /// Fraction of hybrids susceptible to each stress.
    pub susceptible_fraction: f64,
    pub label_layout: LabelLayout,
    /// Mean season length in days.
    pub season_length: usize,
    /// Seasons vary uniformly within `season_length ± season_jitter`.
    pub season_jitter: usize,
    /// Shortest season the downstream convolution can handle.
    pub filter_height: usize,
    pub heat_wave_probability: f64,
    pub dry_spell_probability: f64,
    pub irrigated_env_fraction: f64,
    /// Periods at or after this index count as late season.
    pub late_period_start: usize,
    /// Mean temperature above which late-season degree-days accumulate.
    pub heat_threshold: f64,
    pub heat_penalty_per_degree_day: f64,
    pub drought_penalty_per_day: f64,
    pub noise_sd: f64,
    pub growth: GrowthParams,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_hybrids: 200,
            n_envs: 40,
            instances_per_hybrid: 10,
            susceptible_fraction: 0.5,
            label_layout: LabelLayout::Blocked,
            season_length: 130,
            season_jitter: 10,
            filter_height: 15,
            heat_wave_probability: 0.6,
            dry_spell_probability: 0.6,
            irrigated_env_fraction: 0.2,
            late_period_start: 14,
            heat_threshold: 25.0,
            heat_penalty_per_degree_day: 0.3,
            drought_penalty_per_day: 1.0,
            noise_sd: 2.0,
            growth: GrowthParams::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = |field: &str, msg: &str| Err(Error::config(format!("synth.{field}"), msg));
        if self.n_hybrids < 2 {
            return cfg("n_hybrids", "need at least 2 hybrids");
        }
        if self.n_envs < 2 {
            return cfg("n_envs", "need at least 2 environments");
        }
        if self.instances_per_hybrid < 2 || self.instances_per_hybrid > self.n_envs {
            return cfg("instances_per_hybrid", "must lie in 2..=n_envs");
        }
        if !(0.0..=1.0).contains(&self.susceptible_fraction) {
            return cfg("susceptible_fraction", "must lie in [0, 1]");
        }
        for (name, p) in [
            ("heat_wave_probability", self.heat_wave_probability),
            ("dry_spell_probability", self.dry_spell_probability),
            ("irrigated_env_fraction", self.irrigated_env_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return cfg(name, "must lie in [0, 1]");
            }
        }
        if self.season_jitter >= self.season_length
            || self.season_length - self.season_jitter < self.filter_height.max(2)
        {
            return cfg("season_length", "shortest season is shorter than the filter height");
        }
        if self.late_period_start >= crate::growth::N_PERIODS {
            return cfg("late_period_start", "must be a valid period index");
        }
        if !(self.noise_sd >= 0.0) {
            return cfg("noise_sd", "must be nonnegative");
        }
        Ok(())
    }

    fn susceptible_count(&self) -> usize {
        (self.susceptible_fraction * self.n_hybrids as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTruth {
    pub hybrid_id: String,
    pub heat_susceptible: bool,
    pub drought_susceptible: bool,
    pub max_yield: f64,
    /// Yield loss per late-season degree-day; zero when resistant.
    pub heat_coefficient: f64,
    /// Yield loss per late-season dry day; zero when resistant.
    pub drought_coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentTruth {
    pub env_id: String,
    pub heat_wave: Option<(usize, usize)>,
    pub dry_spell: Option<(usize, usize)>,
    pub late_heat_load: f64,
    /// Days of the planted dry spell that fall in late-season periods.
    pub late_dry_days: f64,
    pub irr: u8,
}

/// Planted labels and latent quantities behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthGroundTruth {
    pub seed: u64,
    pub hybrids: Vec<HybridTruth>,
    pub environments: Vec<EnvironmentTruth>,
    /// Planted yield penalty per instance, in dataset order.
    pub instance_penalty: Vec<f64>,
}

impl SynthGroundTruth {
    pub fn heat_labels(&self) -> Vec<bool> {
        self.hybrids.iter().map(|h| h.heat_susceptible).collect()
    }

    pub fn drought_labels(&self) -> Vec<bool> {
        self.hybrids.iter().map(|h| h.drought_susceptible).collect()
    }

    pub fn dual_resistant_fraction(&self) -> f64 {
        let n = self
            .hybrids
            .iter()
            .filter(|h| !h.heat_susceptible && !h.drought_susceptible)
            .count();
        n as f64 / self.hybrids.len() as f64
    }
}

fn saturation_vp(t: f64) -> f64 {
    0.61 * (17.27 * t / (t + 237.3)).exp()
}

struct GeneratedEnv {
    env: Environment,
    heat_wave: Option<(usize, usize)>,
    dry_spell: Option<(usize, usize)>,
}

fn generate_environment(index: usize, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> GeneratedEnv {
    let len = cfg.season_length - cfg.season_jitter
        + rng.random_range(0..=2 * cfg.season_jitter);
    let planting_day = rng.random_range(110..=140i64);

    let base = rng.random_range(13.0..18.0);
    let amplitude = rng.random_range(6.0..9.0);
    let noise = Normal::new(0.0, 1.5).unwrap();
    let rain_amount = Exp::new(1.0 / 8.0).unwrap();

    let heat_wave = rng.random_bool(cfg.heat_wave_probability).then(|| {
        let wave_len = rng.random_range(6..=14).min(len);
        let start = rng.random_range(0..=len - wave_len);
        (start, wave_len)
    });
    let heat_boost = rng.random_range(6.0..10.0);
    let dry_spell = rng.random_bool(cfg.dry_spell_probability).then(|| {
        let spell_len = rng.random_range(15..=30).min(len);
        let start = rng.random_range(0..=len - spell_len);
        (start, spell_len)
    });
    let within = |ep: Option<(usize, usize)>, d: usize| ep.is_some_and(|(s, l)| d >= s && d < s + l);

    let mut anomaly = 0.0;
    let weather = (0..len)
        .map(|d| {
            let phase = std::f64::consts::PI * (d as f64 + 0.5) / len as f64;
            anomaly = 0.6 * anomaly + noise.sample(rng);
            let background = base + amplitude * phase.sin() + anomaly;
            let tmean = background + if within(heat_wave, d) { heat_boost } else { 0.0 };
            let dry = within(dry_spell, d);
            // Episodes only touch their own module's exclusive features: heat
            // waves shift temperatures, dry spells remove rain and humidity.
            let range = rng.random_range(14.0..26.0);
            let tmax = tmean + range / 2.0;
            let tmin = tmean - range / 2.0;
            let prec = if !dry && rng.random_bool(0.35) {
                rain_amount.sample(rng)
            } else {
                0.0
            };
            let humidity = rng.random_range(0.85..1.0) * if dry { 0.7 } else { 1.0 };
            let vp = saturation_vp((background - range / 2.0).max(-20.0)) * humidity;
            let srad = (17.0 + 5.0 * phase.sin() + rng.random_range(-3.0..3.0)).max(1.0);
            let dayl = (50_000.0 + 6_000.0 * phase.sin()).clamp(0.0, 86_400.0);
            DailyWeather {
                day_index: d,
                tmax,
                tmin,
                tmean,
                prec,
                srad,
                swe: 0.0,
                vp,
                dayl,
            }
        })
        .collect();

    let sand = rng.random_range(20.0..60.0);
    let clay = rng.random_range(10.0..35.0);
    let silt = 100.0 - sand - clay;
    let env = Environment {
        env_id: format!("E{index:03}"),
        planting_day,
        harvest_day: planting_day + len as i64 - 1,
        elev: rng.random_range(100.0..1200.0),
        clay,
        silt,
        sand,
        awc: 0.08 + 0.12 * (clay + silt) / 100.0,
        ph: rng.random_range(5.5..7.5),
        om: rng.random_range(1.0..4.0),
        cec: rng.random_range(5.0..25.0),
        ksat: 2.0 + 40.0 * sand / 100.0 + rng.random_range(0.0..3.0),
        weather,
    };
    GeneratedEnv {
        env,
        heat_wave,
        dry_spell,
    }
}

fn label_sets(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> (Vec<bool>, Vec<bool>) {
    let n = cfg.n_hybrids;
    let k = cfg.susceptible_count();
    let mut heat = vec![false; n];
    let mut drought = vec![false; n];
    match cfg.label_layout {
        LabelLayout::Blocked => {
            let offset = n / 4;
            for i in 0..k {
                heat[i] = true;
                drought[(offset + i) % n] = true;
            }
        }
        LabelLayout::Shuffled => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(rng);
            order[..k].iter().for_each(|&i| heat[i] = true);
            order.shuffle(rng);
            order[..k].iter().for_each(|&i| drought[i] = true);
        }
    }
    (heat, drought)
}

/// Generate a dataset and its planted ground truth. Deterministic in `seed`.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<(Dataset, SynthGroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let partition = PeriodPartition::default();

    let mut environments = Vec::with_capacity(cfg.n_envs);
    let mut env_truth = Vec::with_capacity(cfg.n_envs);
    for e in 0..cfg.n_envs {
        let generated = generate_environment(e, cfg, &mut rng);
        let calendar = build_calendar(&generated.env, &cfg.growth, &partition)?;
        let in_spell = |d: usize| generated.dry_spell.is_some_and(|(s, l)| d >= s && d < s + l);
        let mut heat_load = 0.0;
        let mut dry_days = 0.0;
        for (d, w) in generated.env.weather.iter().enumerate() {
            if calendar.period[d] < cfg.late_period_start {
                continue;
            }
            heat_load += (w.tmean - cfg.heat_threshold).max(0.0);
            if in_spell(d) {
                dry_days += 1.0;
            }
        }
        let irr = if rng.random_bool(cfg.irrigated_env_fraction) {
            rng.random_range(1..=3u8)
        } else {
            0
        };
        env_truth.push(EnvironmentTruth {
            env_id: generated.env.env_id.clone(),
            heat_wave: generated.heat_wave,
            dry_spell: generated.dry_spell,
            late_heat_load: heat_load,
            late_dry_days: dry_days,
            irr,
        });
        environments.push(generated.env);
    }

    let (heat_labels, drought_labels) = label_sets(cfg, &mut rng);
    let width = cfg.n_hybrids.to_string().len().max(4);
    let noise = Normal::new(0.0, cfg.noise_sd).unwrap();
    let mut hybrids = Vec::with_capacity(cfg.n_hybrids);
    let mut instances = Vec::with_capacity(cfg.n_hybrids * cfg.instances_per_hybrid);
    let mut penalties = Vec::with_capacity(instances.capacity());
    let mut env_order: Vec<usize> = (0..cfg.n_envs).collect();
    for h in 0..cfg.n_hybrids {
        let truth = HybridTruth {
            hybrid_id: format!("H{h:0width$}"),
            heat_susceptible: heat_labels[h],
            drought_susceptible: drought_labels[h],
            max_yield: rng.random_range(180.0..240.0),
            heat_coefficient: if heat_labels[h] {
                cfg.heat_penalty_per_degree_day * rng.random_range(0.8..1.2)
            } else {
                0.0
            },
            drought_coefficient: if drought_labels[h] {
                cfg.drought_penalty_per_day * rng.random_range(0.8..1.2)
            } else {
                0.0
            },
        };
        env_order.shuffle(&mut rng);
        let mut chosen = env_order[..cfg.instances_per_hybrid].to_vec();
        chosen.sort_unstable();
        for e in chosen {
            let et = &env_truth[e];
            let irrigation_relief = 1.0 - f64::from(et.irr) / 3.0;
            let penalty = truth.heat_coefficient * et.late_heat_load
                + truth.drought_coefficient * et.late_dry_days * irrigation_relief;
            let yield_obs = (truth.max_yield - penalty + noise.sample(&mut rng)).max(0.0);
            instances.push(PlantingInstance {
                hybrid_id: truth.hybrid_id.clone(),
                env_id: et.env_id.clone(),
                irr: et.irr,
                yield_obs,
            });
            penalties.push(penalty);
        }
        hybrids.push(truth);
    }

    let dataset = Dataset::new(environments, instances)?;
    Ok((
        dataset,
        SynthGroundTruth {
            seed,
            hybrids,
            environments: env_truth,
            instance_penalty: penalties,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_hybrids: 12,
            n_envs: 6,
            instances_per_hybrid: 3,
            season_length: 60,
            season_jitter: 5,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let (da, ga) = generate_synthetic(&small(), 7).unwrap();
        let (db, gb) = generate_synthetic(&small(), 7).unwrap();
        assert_eq!(ga, gb);
        let pa = super::super::write_dataset(&da, a.path(), None).unwrap();
        let pb = super::super::write_dataset(&db, b.path(), None).unwrap();
        for (x, y) in [(pa.weather, pb.weather), (pa.environments, pb.environments), (pa.performance, pb.performance)] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let (dc, _) = generate_synthetic(&small(), 8).unwrap();
        assert_ne!(da, dc);
    }

    #[test]
    fn exact_label_counts() {
        let cfg = SynthConfig {
            n_envs: 4,
            instances_per_hybrid: 2,
            season_length: 40,
            season_jitter: 2,
            ..SynthConfig::default()
        };
        for layout in [LabelLayout::Blocked, LabelLayout::Shuffled] {
            let cfg = SynthConfig { label_layout: layout, ..cfg.clone() };
            let (_, truth) = generate_synthetic(&cfg, 3).unwrap();
            assert_eq!(truth.heat_labels().iter().filter(|&&s| s).count(), 100);
            assert_eq!(truth.drought_labels().iter().filter(|&&s| s).count(), 100);
        }
    }

    #[test]
    fn zero_fraction_plants_no_penalty() {
        let cfg = SynthConfig {
            susceptible_fraction: 0.0,
            ..small()
        };
        let (_, truth) = generate_synthetic(&cfg, 5).unwrap();
        assert!(truth.instance_penalty.iter().all(|&p| p == 0.0));
        assert!(truth.hybrids.iter().all(|h| h.heat_coefficient == 0.0 && h.drought_coefficient == 0.0));
    }

    #[test]
    fn resistant_hybrids_have_identically_zero_penalty() {
        let (ds, truth) = generate_synthetic(&small(), 9).unwrap();
        for (i, inst) in ds.instances().iter().enumerate() {
            let h = &truth.hybrids[ds.hybrid_index(&inst.hybrid_id).unwrap()];
            if !h.heat_susceptible && !h.drought_susceptible {
                assert_eq!(truth.instance_penalty[i], 0.0);
            }
        }
    }

    #[test]
    fn degenerate_configs_rejected() {
        for cfg in [
            SynthConfig { n_hybrids: 0, ..small() },
            SynthConfig { season_length: 12, season_jitter: 0, ..small() },
            SynthConfig { instances_per_hybrid: 7, ..small() },
            SynthConfig { susceptible_fraction: 1.5, ..small() },
        ] {
            assert!(matches!(generate_synthetic(&cfg, 1), Err(Error::Config { .. })));
        }
    }

    #[test]
    fn weather_invariants_hold_over_seeds() {
        let cfg = SynthConfig {
            n_hybrids: 2,
            n_envs: 3,
            instances_per_hybrid: 2,
            ..SynthConfig::default()
        };
        for seed in 0..100 {
            let (ds, _) = generate_synthetic(&cfg, seed).unwrap();
            for env in ds.environments() {
                for w in &env.weather {
                    w.check().unwrap();
                }
            }
        }
    }
}
