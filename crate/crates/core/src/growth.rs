//! Growing degree units, normalized accumulation and the 18-period growth
//! stage partition.

use serde::{Deserialize, Serialize};

use crate::data::Environment;
use crate::{Error, Result};

/// Number of growth periods in the stage partition.
pub const N_PERIODS: usize = 18;

/// Upper and lower bounds of the growth periods on the normalized AGDU axis.
pub const DEFAULT_BOUNDARIES: [f64; N_PERIODS + 1] = [
    0.0, 0.023111, 0.04411, 0.085111, 0.1075111, 0.1231111, 0.1334111, 0.1531111, 0.1635111,
    0.1660111, 0.1925111, 0.22111, 0.27111, 0.3111, 0.4111, 0.6111, 0.8111, 0.9111, 1.0,
];

/// Crop water factors applied to reference evapotranspiration, per period.
pub const CROP_WATER_FACTORS: [f64; N_PERIODS] = [
    1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 4.6, 5.0, 6.0, 6.0, 7.0, 8.0, 8.0, 9.8, 9.0, 6.0, 3.5,
];

/// Root depth per period.
pub const ROOT_DEPTHS: [f64; N_PERIODS] = [
    1.0, 1.0, 2.0, 2.0, 3.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 23.0, 24.0, 24.0,
    24.0,
];

/// Which daily GDU formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GduFormula {
    /// `(tmax - tmin) / 2 - t_base`, the form printed in the source model.
    #[default]
    AsWritten,
    /// `(tmax + tmin) / 2 - t_base`, the usual agronomic definition.
    MeanVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowthParams {
    pub t_base: f64,
    pub formula: GduFormula,
    pub clamp: bool,
}

impl Default for GrowthParams {
    fn default() -> Self {
        Self {
            t_base: 10.0,
            formula: GduFormula::AsWritten,
            clamp: true,
        }
    }
}

/// Daily growing degree units.
pub fn daily_gdu(tmax: f64, tmin: f64, t_base: f64, formula: GduFormula, clamp: bool) -> Result<f64> {
    if tmin > tmax {
        return Err(Error::Domain(format!("tmin {tmin} exceeds tmax {tmax}")));
    }
    let gdu = match formula {
        GduFormula::AsWritten => (tmax - tmin) / 2.0 - t_base,
        GduFormula::MeanVariant => (tmax + tmin) / 2.0 - t_base,
    };
    Ok(if clamp && gdu < 0.0 { 0.0 } else { gdu })
}

/// Partition of `[0, 1]` into half-open intervals `(lo, hi]`, with 0 itself
/// assigned to the first interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodPartition {
    boundaries: Vec<f64>,
}

impl Default for PeriodPartition {
    fn default() -> Self {
        Self {
            boundaries: DEFAULT_BOUNDARIES.to_vec(),
        }
    }
}

impl PeriodPartition {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() != N_PERIODS + 1 {
            return Err(Error::Parameter(format!(
                "partition needs {} boundaries, got {}",
                N_PERIODS + 1,
                boundaries.len()
            )));
        }
        if boundaries[0] != 0.0 || boundaries[N_PERIODS] != 1.0 {
            return Err(Error::Parameter(
                "partition must start at 0 and end at 1".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Parameter(
                "partition boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Self { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Interval `(lo, hi]` of period `t`.
    pub fn interval(&self, period: usize) -> (f64, f64) {
        (self.boundaries[period], self.boundaries[period + 1])
    }

    /// Period containing `agdu`. Values at or below 0 map to the first
    /// period, values above 1 (possible only without clamping) to the last.
    pub fn period_of(&self, agdu: f64) -> usize {
        let upper = &self.boundaries[1..];
        upper.partition_point(|&hi| hi < agdu).min(N_PERIODS - 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthCalendar {
    pub gdu: Vec<f64>,
    pub agdu: Vec<f64>,
    pub period: Vec<usize>,
    pub t_base: f64,
}

impl GrowthCalendar {
    pub fn len(&self) -> usize {
        self.gdu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gdu.is_empty()
    }
}

/// Daily GDU, normalized accumulated GDU and period index for one season.
pub fn build_calendar(
    env: &Environment,
    params: &GrowthParams,
    partition: &PeriodPartition,
) -> Result<GrowthCalendar> {
    if env.weather.is_empty() {
        return Err(Error::Data(format!(
            "environment {} has no weather days",
            env.env_id
        )));
    }
    let gdu = env
        .weather
        .iter()
        .map(|w| daily_gdu(w.tmax, w.tmin, params.t_base, params.formula, params.clamp))
        .collect::<Result<Vec<_>>>()?;

    let mut acc = 0.0;
    let cumulative: Vec<f64> = gdu
        .iter()
        .map(|g| {
            acc += g;
            acc
        })
        .collect();
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::DegenerateSeason {
            env_id: env.env_id.clone(),
        });
    }
    let agdu: Vec<f64> = cumulative.iter().map(|c| c / total).collect();
    let period = agdu.iter().map(|&a| partition.period_of(a)).collect();
    Ok(GrowthCalendar {
        gdu,
        agdu,
        period,
        t_base: params.t_base,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StageKind {
    /// Crop water factor.
    W,
    /// Root depth.
    RD,
}

/// Per-period crop constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageConstants {
    pub water_factors: Vec<f64>,
    pub root_depths: Vec<f64>,
}

impl Default for StageConstants {
    fn default() -> Self {
        Self {
            water_factors: CROP_WATER_FACTORS.to_vec(),
            root_depths: ROOT_DEPTHS.to_vec(),
        }
    }
}

impl StageConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("water_factors", &self.water_factors), ("root_depths", &self.root_depths)] {
            if list.len() != N_PERIODS {
                return Err(Error::Parameter(format!(
                    "{name} needs {N_PERIODS} entries, got {}",
                    list.len()
                )));
            }
            if list.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Parameter(format!("{name} entries must be positive")));
            }
        }
        if self.root_depths.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Parameter("root_depths must be nondecreasing".into()));
        }
        Ok(())
    }

    pub fn get(&self, kind: StageKind, period: usize) -> Result<f64> {
        let list = match kind {
            StageKind::W => &self.water_factors,
            StageKind::RD => &self.root_depths,
        };
        list.get(period).copied().ok_or(Error::Index {
            index: period,
            len: list.len(),
        })
    }
}

/// Listed stage constant for a period, from the default tables.
pub fn stage_constant(kind: StageKind, period: usize) -> Result<f64> {
    let table = match kind {
        StageKind::W => &CROP_WATER_FACTORS,
        StageKind::RD => &ROOT_DEPTHS,
    };
    table.get(period).copied().ok_or(Error::Index {
        index: period,
        len: N_PERIODS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::constant_env;

    #[test]
    fn gdu_modes() {
        assert_eq!(daily_gdu(30.0, 20.0, 10.0, GduFormula::AsWritten, true).unwrap(), 0.0);
        assert_eq!(daily_gdu(30.0, 20.0, 10.0, GduFormula::AsWritten, false).unwrap(), -5.0);
        assert_eq!(daily_gdu(30.0, 20.0, 10.0, GduFormula::MeanVariant, true).unwrap(), 15.0);
        assert_eq!(daily_gdu(20.0, 20.0, 10.0, GduFormula::MeanVariant, false).unwrap(), 10.0);
        assert!(matches!(
            daily_gdu(10.0, 20.0, 10.0, GduFormula::MeanVariant, true),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn partition_lookup() {
        let p = PeriodPartition::default();
        assert_eq!(p.period_of(0.0), 0);
        assert_eq!(p.period_of(0.5), 14);
        assert_eq!(p.interval(14), (0.4111, 0.6111));
        assert_eq!(p.period_of(1.0), 17);
        // Upper bounds belong to their own interval.
        assert_eq!(p.period_of(0.4111), 13);
        assert_eq!(p.period_of(0.41110001), 14);
    }

    #[test]
    fn partition_covers_unit_interval() {
        use rand::{Rng, SeedableRng};
        let p = PeriodPartition::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let u: f64 = 1.0 - rng.random::<f64>();
            let hits = (0..N_PERIODS)
                .filter(|&t| {
                    let (lo, hi) = p.interval(t);
                    u > lo && u <= hi
                })
                .count();
            assert_eq!(hits, 1, "u = {u}");
            let (lo, hi) = p.interval(p.period_of(u));
            assert!(u > lo && u <= hi);
        }
    }

    #[test]
    fn partition_rejects_bad_boundaries() {
        let mut b = DEFAULT_BOUNDARIES.to_vec();
        b.swap(3, 4);
        assert!(PeriodPartition::new(b).is_err());
        assert!(PeriodPartition::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn uniform_accumulation_is_linear() {
        // tmax - tmin = 40 gives an as-written GDU of 10 every day.
        let env = constant_env("E", 100, 40.0, 0.0);
        let cal = build_calendar(&env, &GrowthParams::default(), &PeriodPartition::default()).unwrap();
        for (d, a) in cal.agdu.iter().enumerate() {
            assert!((a - (d as f64 + 1.0) / 100.0).abs() < 1e-12);
        }
        assert_eq!(*cal.agdu.last().unwrap(), 1.0);
        assert_eq!(*cal.period.last().unwrap(), 17);
        assert!(cal.period.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn degenerate_season() {
        let env = constant_env("E", 30, 20.0, 15.0);
        let err = build_calendar(&env, &GrowthParams::default(), &PeriodPartition::default()).unwrap_err();
        assert!(matches!(err, Error::DegenerateSeason { .. }));
    }

    #[test]
    fn stage_constants() {
        assert_eq!(stage_constant(StageKind::W, 14).unwrap(), 9.8);
        assert_eq!(stage_constant(StageKind::RD, 0).unwrap(), 1.0);
        assert_eq!(stage_constant(StageKind::RD, 17).unwrap(), 24.0);
        assert!(matches!(stage_constant(StageKind::W, 18), Err(Error::Index { .. })));
        StageConstants::default().validate().unwrap();
    }
}
