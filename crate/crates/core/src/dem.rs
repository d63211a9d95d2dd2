//! Deterministic expert stress models: temperature, heat, cold and
//! accumulated heat cut-offs, a Penman-Monteith style evapotranspiration and
//! soil-water balance driving drought stress, combined stress, and
//! aggregation of daily values into growth periods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Environment};
use crate::growth::{
    build_calendar, GrowthCalendar, GrowthParams, PeriodPartition, StageConstants, StageKind, N_PERIODS,
};
use crate::{Error, Result};

/// One value per growth period.
pub type PeriodVector = [f64; N_PERIODS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StressKind {
    Temp,
    Heat,
    Cold,
    AccumulatedHeat,
    Drought,
    Combined,
}

impl StressKind {
    pub const ALL: [StressKind; 6] = [
        StressKind::Temp,
        StressKind::Heat,
        StressKind::Cold,
        StressKind::AccumulatedHeat,
        StressKind::Drought,
        StressKind::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StressKind::Temp => "temp",
            StressKind::Heat => "heat",
            StressKind::Cold => "cold",
            StressKind::AccumulatedHeat => "accumulated_heat",
            StressKind::Drought => "drought",
            StressKind::Combined => "combined",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatParams {
    /// `(T0, T1, T2, T3)` of the temperature trapezoid.
    pub temp_thresholds: [f64; 4],
    /// `(T2, T3)` of the high-end heat cut-off.
    pub heat_thresholds: [f64; 2],
    /// `(T0, T1)` of the cold cut-off.
    pub cold_thresholds: [f64; 2],
    /// `(a0, a1)`: a run of `l` hot days is scaled by `a0 + a1 * l`.
    pub accumulation: [f64; 2],
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            temp_thresholds: [10.0, 20.0, 25.0, 35.0],
            heat_thresholds: [25.0, 30.0],
            cold_thresholds: [10.0, 15.0],
            accumulation: [0.9, 0.1],
        }
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[0] < w[1])
}

impl HeatParams {
    pub fn validate(&self) -> Result<()> {
        if !strictly_increasing(&self.temp_thresholds) {
            return Err(Error::config("heat.temp_thresholds", "must be strictly increasing"));
        }
        if !strictly_increasing(&self.heat_thresholds) {
            return Err(Error::config("heat.heat_thresholds", "must be strictly increasing"));
        }
        if !strictly_increasing(&self.cold_thresholds) {
            return Err(Error::config("heat.cold_thresholds", "must be strictly increasing"));
        }
        let [a0, a1] = self.accumulation;
        if !(a0 > 0.0 && a1 >= 0.0) {
            return Err(Error::config("heat.accumulation", "need a0 > 0 and a1 >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DroughtParams {
    /// Depletion fraction in the allowable-depletion threshold.
    pub p: f64,
    /// Irrigation coefficient.
    pub q: f64,
    /// KSAT normalization bounds. Taken from the dataset extremes when unset.
    pub ksat_bounds: Option<[f64; 2]>,
    /// Soil water at planting as a fraction of the period-0 depletion threshold.
    pub initial_aw_fraction: f64,
}

impl Default for DroughtParams {
    fn default() -> Self {
        Self {
            p: 0.5,
            q: 1.0 / 3.0,
            ksat_bounds: None,
            initial_aw_fraction: 1.0,
        }
    }
}

impl DroughtParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::config("drought.p", "must lie in (0, 1)"));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::config("drought.q", "must lie in (0, 1)"));
        }
        if let Some([lo, hi]) = self.ksat_bounds {
            if !(lo < hi) {
                return Err(Error::config("drought.ksat_bounds", "need min < max"));
            }
        }
        if !(self.initial_aw_fraction >= 0.0) {
            return Err(Error::config("drought.initial_aw_fraction", "must be nonnegative"));
        }
        Ok(())
    }

    /// Bounds to use for `dataset`: the configured ones, else the dataset's
    /// KSAT extremes.
    pub fn resolve_ksat_bounds(&self, dataset: &Dataset) -> Result<[f64; 2]> {
        if let Some(b) = self.ksat_bounds {
            return Ok(b);
        }
        let (lo, hi) = dataset.ksat_extremes();
        if !(lo < hi) {
            return Err(Error::Parameter(format!(
                "degenerate KSAT range [{lo}, {hi}]; set drought.ksat_bounds explicitly"
            )));
        }
        Ok([lo, hi])
    }
}

/// Heat/drought combination function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CombineKind {
    #[default]
    Product,
    Sum,
    ExpProduct,
    ExpSum,
}

impl CombineKind {
    pub fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            CombineKind::Product => x * y,
            CombineKind::Sum => x + y,
            CombineKind::ExpProduct => (x * y).exp_m1(),
            CombineKind::ExpSum => (x + y).exp_m1(),
        }
    }

    /// Partial derivatives `(df/dx, df/dy)`.
    pub fn partials(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            CombineKind::Product => (y, x),
            CombineKind::Sum => (1.0, 1.0),
            CombineKind::ExpProduct => {
                let e = (x * y).exp();
                (y * e, x * e)
            }
            CombineKind::ExpSum => {
                let e = (x + y).exp();
                (e, e)
            }
        }
    }
}

/// Combined stress `f(s_h, s_d)`.
pub fn s_combined(s_h: f64, s_d: f64, kind: CombineKind) -> f64 {
    kind.apply(s_h, s_d)
}

/// Temperature stress: 1 outside `[T0, T3]`, 0 on `[T1, T2]`, linear between.
pub fn s_temp(tmean: f64, thresholds: &[f64; 4]) -> f64 {
    let [t0, t1, t2, t3] = *thresholds;
    if tmean <= t0 || tmean >= t3 {
        1.0
    } else if tmean < t1 {
        1.0 - (tmean - t0) / (t1 - t0)
    } else if tmean <= t2 {
        0.0
    } else {
        (tmean - t2) / (t3 - t2)
    }
}

/// High-end heat cut-off.
pub fn s_heat(tmean: f64, t2: f64, t3: f64) -> Result<f64> {
    if !(t2 < t3) {
        return Err(Error::Parameter(format!("heat thresholds need t2 < t3, got ({t2}, {t3})")));
    }
    Ok(if tmean <= t2 {
        0.0
    } else if tmean >= t3 {
        1.0
    } else {
        (tmean - t2) / (t3 - t2)
    })
}

/// Low-end cold cut-off.
pub fn s_cold(tmean: f64, t0: f64, t1: f64) -> Result<f64> {
    if !(t0 < t1) {
        return Err(Error::Parameter(format!("cold thresholds need t0 < t1, got ({t0}, {t1})")));
    }
    Ok(if tmean <= t0 {
        1.0
    } else if tmean >= t1 {
        0.0
    } else {
        1.0 - (tmean - t0) / (t1 - t0)
    })
}

/// Scale every maximal run of `l` consecutive positive values by `a0 + a1 * l`.
pub fn s_heat_accumulated(daily: &[f64], a0: f64, a1: f64) -> Vec<f64> {
    let mut out = vec![0.0; daily.len()];
    let mut start = 0;
    while start < daily.len() {
        if !(daily[start] > 0.0) {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < daily.len() && daily[end] > 0.0 {
            end += 1;
        }
        let factor = a0 + a1 * (end - start) as f64;
        for d in start..end {
            out[d] = factor * daily[d];
        }
        start = end;
    }
    out
}

/// Atmospheric pressure (kPa) at elevation `elev` (m).
pub fn air_pressure(elev: f64) -> f64 {
    101.3 * (1.0 - 0.0065 * elev / 293.0).powf(5.26)
}

/// Psychrometric constant for pressure `pressure` (kPa).
pub fn psychrometric_constant(pressure: f64) -> f64 {
    0.000665 * pressure
}

/// Reference evapotranspiration (mm/day), clamped at zero.
///
/// The slope term uses `(T + 273.3)^2` in its denominator, as in the model
/// this reproduces, rather than the FAO `(T + 237.3)^2`.
pub fn et0_daily(tmean: f64, elev: f64, vp: f64, srad: f64) -> f64 {
    let gamma = psychrometric_constant(air_pressure(elev));
    let saturation = (17.27 * tmean / (tmean + 237.3)).exp();
    let deficit = 0.61 * saturation - vp;
    let slope = 2499.78 * saturation / (tmean + 273.3).powi(2);
    let et0 = (0.408 * slope * srad + gamma * deficit * 900.0 / (273.0 + tmean)) / (slope + gamma);
    et0.max(0.0)
}

/// Crop evapotranspiration for a day in `period`.
pub fn et_daily(et0: f64, period: usize, constants: &StageConstants) -> Result<f64> {
    Ok(constants.get(StageKind::W, period)? * et0)
}

/// Maximum allowable depletion `p * RD[period] * awc`.
pub fn mad(p: f64, period: usize, awc: f64, constants: &StageConstants) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Parameter(format!("p = {p} outside (0, 1)")));
    }
    if !(awc > 0.0) {
        return Err(Error::Parameter(format!("awc = {awc} must be positive")));
    }
    Ok(p * constants.get(StageKind::RD, period)? * awc)
}

/// KSAT normalized onto `[0, 1]` between the given extremes.
pub fn runoff_fraction(ksat: f64, ksat_min: f64, ksat_max: f64) -> Result<f64> {
    if !(ksat_min < ksat_max) {
        return Err(Error::Parameter(format!(
            "degenerate KSAT bounds [{ksat_min}, {ksat_max}]"
        )));
    }
    Ok((ksat.clamp(ksat_min, ksat_max) - ksat_min) / (ksat_max - ksat_min))
}

/// One step of the available-water recursion.
pub fn aw_step(runoff: f64, aw_prev: f64, prec_prev: f64, et: f64) -> f64 {
    let aw = (1.0 - runoff) * aw_prev + prec_prev - et;
    if aw > 0.0 {
        aw
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterState {
    pub et0: Vec<f64>,
    pub et: Vec<f64>,
    pub mad: Vec<f64>,
    pub aw: Vec<f64>,
    pub runoff: f64,
}

/// Daily soil-water balance of one season. Day 0 starts at the configured
/// fraction of the period-0 depletion threshold; day `d > 0` drains the
/// previous day's water by runoff, adds the previous day's precipitation and
/// removes the day's evapotranspiration.
pub fn water_balance(
    env: &Environment,
    calendar: &GrowthCalendar,
    params: &DroughtParams,
    ksat_bounds: [f64; 2],
    constants: &StageConstants,
) -> Result<WaterState> {
    if calendar.len() != env.weather.len() {
        return Err(Error::Alignment(format!(
            "calendar has {} days, environment {} has {}",
            calendar.len(),
            env.env_id,
            env.weather.len()
        )));
    }
    let runoff = runoff_fraction(env.ksat, ksat_bounds[0], ksat_bounds[1])?;
    let n = env.weather.len();
    let mut state = WaterState {
        et0: Vec::with_capacity(n),
        et: Vec::with_capacity(n),
        mad: Vec::with_capacity(n),
        aw: Vec::with_capacity(n),
        runoff,
    };
    let initial = params.initial_aw_fraction * mad(params.p, 0, env.awc, constants)?;
    for (d, w) in env.weather.iter().enumerate() {
        let period = calendar.period[d];
        let et0 = et0_daily(w.tmean, env.elev, w.vp, w.srad);
        let et = et_daily(et0, period, constants)?;
        let aw = if d == 0 {
            initial
        } else {
            aw_step(runoff, state.aw[d - 1], env.weather[d - 1].prec, et)
        };
        state.et0.push(et0);
        state.et.push(et);
        state.mad.push(mad(params.p, period, env.awc, constants)?);
        state.aw.push(aw);
    }
    Ok(state)
}

/// Daily drought stress `[(MAD - AW)(1 - q * IRR)]_+`.
pub fn s_drought(mad: f64, aw: f64, irr: u8, q: f64) -> Result<f64> {
    if irr > 3 {
        return Err(Error::Parameter(format!("irrigation level {irr} outside 0..=3")));
    }
    let s = (mad - aw) * (1.0 - q * f64::from(irr));
    Ok(if s > 0.0 { s } else { 0.0 })
}

/// Sum daily values per growth period.
pub fn aggregate_periods(daily: &[f64], calendar: &GrowthCalendar) -> Result<PeriodVector> {
    if daily.len() != calendar.len() {
        return Err(Error::Alignment(format!(
            "series has {} days, calendar has {}",
            daily.len(),
            calendar.len()
        )));
    }
    let mut out = [0.0; N_PERIODS];
    for (v, &t) in daily.iter().zip(&calendar.period) {
        out[t] += v;
    }
    Ok(out)
}

/// All expert-model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DemParams {
    pub growth: GrowthParams,
    pub stages: StageConstants,
    pub heat: HeatParams,
    pub drought: DroughtParams,
    pub combine: CombineKind,
}

impl DemParams {
    pub fn validate(&self) -> Result<()> {
        self.stages.validate()?;
        self.heat.validate()?;
        self.drought.validate()
    }
}

/// Irrigation-independent daily quantities of one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentStress {
    pub calendar: GrowthCalendar,
    pub temp: Vec<f64>,
    pub heat: Vec<f64>,
    pub cold: Vec<f64>,
    pub accumulated_heat: Vec<f64>,
    pub water: WaterState,
}

pub fn environment_stress(
    env: &Environment,
    params: &DemParams,
    partition: &PeriodPartition,
    ksat_bounds: [f64; 2],
) -> Result<EnvironmentStress> {
    let calendar = build_calendar(env, &params.growth, partition)?;
    let h = &params.heat;
    let mut temp = Vec::with_capacity(env.weather.len());
    let mut heat = Vec::with_capacity(env.weather.len());
    let mut cold = Vec::with_capacity(env.weather.len());
    for w in &env.weather {
        temp.push(s_temp(w.tmean, &h.temp_thresholds));
        heat.push(s_heat(w.tmean, h.heat_thresholds[0], h.heat_thresholds[1])?);
        cold.push(s_cold(w.tmean, h.cold_thresholds[0], h.cold_thresholds[1])?);
    }
    let accumulated_heat = s_heat_accumulated(&heat, h.accumulation[0], h.accumulation[1]);
    let water = water_balance(env, &calendar, &params.drought, ksat_bounds, &params.stages)?;
    Ok(EnvironmentStress {
        calendar,
        temp,
        heat,
        cold,
        accumulated_heat,
        water,
    })
}

/// Daily values of every stress kind for one planting instance.
#[derive(Debug, Clone, PartialEq)]
pub struct StressSeries {
    series: [Vec<f64>; 6],
}

impl StressSeries {
    pub fn get(&self, kind: StressKind) -> &[f64] {
        &self.series[kind.slot()]
    }
}

pub fn daily_stresses(state: &EnvironmentStress, irr: u8, params: &DemParams) -> Result<StressSeries> {
    let drought = state
        .water
        .mad
        .iter()
        .zip(&state.water.aw)
        .map(|(&m, &aw)| s_drought(m, aw, irr, params.drought.q))
        .collect::<Result<Vec<_>>>()?;
    let combined = state
        .heat
        .iter()
        .zip(&drought)
        .map(|(&h, &d)| s_combined(h, d, params.combine))
        .collect();
    Ok(StressSeries {
        series: [
            state.temp.clone(),
            state.heat.clone(),
            state.cold.clone(),
            state.accumulated_heat.clone(),
            drought,
            combined,
        ],
    })
}

/// Period-aggregated stresses of one planting instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceStress {
    pub instance: usize,
    vectors: [PeriodVector; 6],
}

impl InstanceStress {
    pub fn new(instance: usize) -> Self {
        Self {
            instance,
            vectors: [[0.0; N_PERIODS]; 6],
        }
    }

    pub fn get(&self, kind: StressKind) -> &PeriodVector {
        &self.vectors[kind.slot()]
    }

    pub fn set(&mut self, kind: StressKind, v: PeriodVector) {
        self.vectors[kind.slot()] = v;
    }
}

/// Expert-model stresses for every instance of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DemStressTable {
    pub ksat_bounds: [f64; 2],
    pub calendars: Vec<GrowthCalendar>,
    pub instances: Vec<InstanceStress>,
}

impl DemStressTable {
    pub fn vectors(&self, kind: StressKind) -> Vec<PeriodVector> {
        self.instances.iter().map(|s| *s.get(kind)).collect()
    }
}

pub fn dem_stress_table(dataset: &Dataset, params: &DemParams) -> Result<DemStressTable> {
    params.validate()?;
    let ksat_bounds = params.drought.resolve_ksat_bounds(dataset)?;
    let partition = PeriodPartition::default();
    let env_states = (0..dataset.n_environments())
        .into_par_iter()
        .map(|e| environment_stress(dataset.environment(e), params, &partition, ksat_bounds))
        .collect::<Result<Vec<_>>>()?;
    let instances = dataset
        .instances()
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let state = &env_states[dataset.instance_env(i)];
            let daily = daily_stresses(state, inst.irr, params)?;
            let mut out = InstanceStress::new(i);
            for kind in StressKind::ALL {
                out.set(kind, aggregate_periods(daily.get(kind), &state.calendar)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DemStressTable {
        ksat_bounds,
        calendars: env_states.into_iter().map(|s| s.calendar).collect(),
        instances,
    })
}
