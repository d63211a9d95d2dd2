use serde::{Deserialize, Serialize};

use crate::data::Environment;
use crate::growth::GrowthCalendar;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Feature {
    Tmax,
    Tmin,
    Tmean,
    Prec,
    Swe,
    Vp,
    Clay,
    Silt,
    Sand,
    Awc,
    Ph,
    Om,
    Cec,
    Ksat,
    Dayl,
    Srad,
    Gdu,
}

const HEAT_FEATURES: [Feature; 14] = [
    Feature::Tmax,
    Feature::Tmin,
    Feature::Tmean,
    Feature::Clay,
    Feature::Silt,
    Feature::Sand,
    Feature::Awc,
    Feature::Ph,
    Feature::Om,
    Feature::Cec,
    Feature::Ksat,
    Feature::Dayl,
    Feature::Srad,
    Feature::Gdu,
];

const DROUGHT_FEATURES: [Feature; 14] = [
    Feature::Prec,
    Feature::Swe,
    Feature::Vp,
    Feature::Clay,
    Feature::Silt,
    Feature::Sand,
    Feature::Awc,
    Feature::Ph,
    Feature::Om,
    Feature::Cec,
    Feature::Ksat,
    Feature::Dayl,
    Feature::Srad,
    Feature::Gdu,
];

/// Which stress module a tensor feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleKind {
    Heat,
    Drought,
}

impl ModuleKind {
    /// Column layout of the module's input matrix.
    pub fn features(self) -> &'static [Feature] {
        match self {
            ModuleKind::Heat => &HEAT_FEATURES,
            ModuleKind::Drought => &DROUGHT_FEATURES,
        }
    }
}

fn feature_value(env: &Environment, calendar: &GrowthCalendar, day: usize, f: Feature) -> f64 {
    let w = &env.weather[day];
    match f {
        Feature::Tmax => w.tmax,
        Feature::Tmin => w.tmin,
        Feature::Tmean => w.tmean,
        Feature::Prec => w.prec,
        Feature::Swe => w.swe,
        Feature::Vp => w.vp,
        Feature::Clay => env.clay,
        Feature::Silt => env.silt,
        Feature::Sand => env.sand,
        Feature::Awc => env.awc,
        Feature::Ph => env.ph,
        Feature::Om => env.om,
        Feature::Cec => env.cec,
        Feature::Ksat => env.ksat,
        Feature::Dayl => w.dayl,
        Feature::Srad => w.srad,
        Feature::Gdu => calendar.gdu[day],
    }
}

/// Per-column z-score statistics over real (unpadded) days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn identity(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Fit on every real day of the given seasons. Columns with zero spread
    /// keep unit scale.
    pub fn fit<'a>(
        kind: ModuleKind,
        seasons: impl IntoIterator<Item = (&'a Environment, &'a GrowthCalendar)>,
    ) -> Self {
        let features = kind.features();
        let n = features.len();
        let mut count = 0usize;
        let mut sum = vec![0.0; n];
        let mut sum_sq = vec![0.0; n];
        let seasons: Vec<_> = seasons.into_iter().collect();
        for (env, cal) in &seasons {
            for d in 0..env.weather.len() {
                for (j, &f) in features.iter().enumerate() {
                    sum[j] += feature_value(env, cal, d, f);
                }
                count += 1;
            }
        }
        if count == 0 {
            return Self::identity(n);
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        for (env, cal) in &seasons {
            for d in 0..env.weather.len() {
                for (j, &f) in features.iter().enumerate() {
                    let c = feature_value(env, cal, d, f) - mean[j];
                    sum_sq[j] += c * c;
                }
            }
        }
        let std = sum_sq
            .iter()
            .map(|s| {
                let sd = (s / count as f64).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }
}

/// Day-by-feature input matrix, zero-padded to a fixed number of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceTensor {
    pub kind: ModuleKind,
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub data: Vec<f64>,
    /// `true` for real days, `false` for padding.
    pub mask: Vec<bool>,
}

impl InstanceTensor {
    pub fn row(&self, d: usize) -> &[f64] {
        &self.data[d * self.cols..(d + 1) * self.cols]
    }
}

/// Normalized input matrix of one season for `kind`, padded to `d_max` rows.
pub fn build_instance_tensor(
    env: &Environment,
    calendar: &GrowthCalendar,
    kind: ModuleKind,
    d_max: usize,
    stats: &FeatureStats,
) -> Result<InstanceTensor> {
    let season = env.weather.len();
    if season > d_max {
        return Err(Error::config(
            "cnn.d_max",
            format!(
                "environment {} has a {season}-day season; increase d_max to at least {season}",
                env.env_id
            ),
        ));
    }
    if calendar.len() != season {
        return Err(Error::Alignment(format!(
            "calendar length {} differs from season length {season}",
            calendar.len()
        )));
    }
    let features = kind.features();
    let cols = features.len();
    if stats.mean.len() != cols || stats.std.len() != cols {
        return Err(Error::Shape(format!(
            "feature statistics have {} columns, layout has {cols}",
            stats.mean.len()
        )));
    }
    let mut data = vec![0.0; d_max * cols];
    for d in 0..season {
        for (j, &f) in features.iter().enumerate() {
            data[d * cols + j] = (feature_value(env, calendar, d, f) - stats.mean[j]) / stats.std[j];
        }
    }
    let mask = (0..d_max).map(|d| d < season).collect();
    Ok(InstanceTensor {
        kind,
        rows: d_max,
        cols,
        data,
        mask,
    })
}

/// Smallest padded length `>= max(season, height)` for which the filter
/// windows tile exactly, i.e. `(d_max - height) % stride == 0`.
pub fn padded_length(max_season: usize, height: usize, stride: usize) -> usize {
    let base = max_season.max(height);
    let excess = (base - height) % stride;
    if excess == 0 {
        base
    } else {
        base + stride - excess
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::constant_env;
    use crate::growth::{build_calendar, GrowthParams, PeriodPartition};

    #[test]
    fn padding_contract() {
        let env = constant_env("E", 100, 40.0, 0.0);
        let cal = build_calendar(&env, &GrowthParams::default(), &PeriodPartition::default()).unwrap();
        let t = build_instance_tensor(&env, &cal, ModuleKind::Heat, 330, &FeatureStats::identity(14)).unwrap();
        assert_eq!(t.rows, 330);
        assert_eq!(t.cols, 14);
        assert!((100..330).all(|d| t.row(d).iter().all(|&v| v == 0.0) && !t.mask[d]));
        assert!((0..100).all(|d| t.mask[d]));
        let err = build_instance_tensor(&env, &cal, ModuleKind::Heat, 99, &FeatureStats::identity(14));
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn feature_split() {
        let heat = ModuleKind::Heat.features();
        let drought = ModuleKind::Drought.features();
        assert_eq!(heat.len(), 14);
        assert_eq!(drought.len(), 14);
        assert!(!heat.contains(&Feature::Prec) && !heat.contains(&Feature::Vp) && !heat.contains(&Feature::Swe));
        assert!(!drought.contains(&Feature::Tmax) && !drought.contains(&Feature::Tmin) && !drought.contains(&Feature::Tmean));
        assert!(heat.contains(&Feature::Gdu) && drought.contains(&Feature::Gdu));
    }

    #[test]
    fn static_features_constant_over_real_days() {
        let env = constant_env("E", 40, 40.0, 0.0);
        let cal = build_calendar(&env, &GrowthParams::default(), &PeriodPartition::default()).unwrap();
        let stats = FeatureStats::fit(ModuleKind::Drought, [(&env, &cal)]);
        let t = build_instance_tensor(&env, &cal, ModuleKind::Drought, 60, &stats).unwrap();
        for j in 3..13 {
            assert!((0..40).all(|d| t.row(d)[j] == t.row(0)[j]));
        }
    }

    #[test]
    fn padded_length_tiles() {
        assert_eq!(padded_length(100, 15, 12), 111);
        assert_eq!(padded_length(111, 15, 12), 111);
        assert_eq!(padded_length(5, 15, 12), 15);
        for s in 15..200 {
            let d = padded_length(s, 15, 12);
            assert!(d >= s && (d - 15) % 12 == 0 && d < s + 12);
        }
    }
}
