use agrostress::analysis::{rank_hybrids, silhouette_samples, spearman, Norm};
use agrostress::data::{generate_synthetic, load_dataset, write_dataset, SynthConfig};
use agrostress::dem::{aggregate_periods, s_cold, s_drought, s_heat, s_heat_accumulated, s_temp};
use agrostress::growth::{build_calendar, GrowthParams, PeriodPartition};
use agrostress::sensitivity::{
    compute_delta_yield, population_covariance, ColumnSemantics, EnvFilter, MatrixKind, SensitivityMatrix,
};
use proptest::prelude::*;

fn tiny_synth() -> SynthConfig {
    SynthConfig {
        n_hybrids: 5,
        n_envs: 4,
        instances_per_hybrid: 3,
        season_length: 50,
        season_jitter: 6,
        ..SynthConfig::default()
    }
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn temperature_stress_is_bounded(t in -1e5f64..1e5, a in -50.0f64..50.0, gaps in prop::array::uniform3(0.1f64..20.0)) {
        let th = [a, a + gaps[0], a + gaps[0] + gaps[1], a + gaps[0] + gaps[1] + gaps[2]];
        let s = s_temp(t, &th);
        prop_assert!((0.0..=1.0).contains(&s));
        let h = s_heat(t, th[2], th[3]).unwrap();
        let c = s_cold(t, th[0], th[1]).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
        prop_assert!((0.0..=1.0).contains(&c));
        // Above the optimum the combined curve is the heat cut-off, below it the cold one.
        if t >= th[2] { prop_assert_eq!(s, h); }
        if t <= th[1] { prop_assert_eq!(s, c); }
    }

    #[test]
    fn heat_and_cold_are_monotone(t in -100.0f64..100.0, dt in 0.0f64..50.0) {
        prop_assert!(s_heat(t + dt, 25.0, 30.0).unwrap() >= s_heat(t, 25.0, 30.0).unwrap());
        prop_assert!(s_cold(t + dt, 10.0, 15.0).unwrap() <= s_cold(t, 10.0, 15.0).unwrap());
    }

    #[test]
    fn drought_stress_is_nonnegative(mad in -1e5f64..1e5, aw in -1e5f64..1e5, irr in 0u8..=3, q in 0.0f64..=1.0) {
        let s = s_drought(mad, aw, irr, q).unwrap();
        prop_assert!(s >= 0.0);
        prop_assert_eq!(s_drought(mad, aw, 3, 1.0 / 3.0).unwrap(), 0.0);
        if irr == 0 {
            prop_assert_eq!(s, (mad - aw).max(0.0));
        }
    }

    #[test]
    fn accumulation_keeps_support(daily in prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..1.0], 0..60)) {
        let out = s_heat_accumulated(&daily, 0.9, 0.1);
        prop_assert_eq!(out.len(), daily.len());
        for (o, d) in out.iter().zip(&daily) {
            prop_assert_eq!(*o == 0.0, *d == 0.0);
            prop_assert!(*o >= *d * 0.9);
        }
    }

    #[test]
    fn period_aggregation_conserves_totals(seed in 0u64..500, scale in 1e-3f64..1e3) {
        let (ds, _) = generate_synthetic(&tiny_synth(), seed).unwrap();
        for env in ds.environments() {
            let cal = build_calendar(env, &GrowthParams::default(), &PeriodPartition::default()).unwrap();
            let daily: Vec<f64> = env.weather.iter().map(|w| scale * (w.tmax - w.tmin).abs()).collect();
            let agg = aggregate_periods(&daily, &cal).unwrap();
            let total: f64 = daily.iter().sum();
            prop_assert!((agg.iter().sum::<f64>() - total).abs() <= 1e-9 * total.max(1.0));
            prop_assert!(cal.agdu.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!((cal.agdu.last().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_weather_is_physical(seed in 0u64..1000) {
        let (ds, truth) = generate_synthetic(&tiny_synth(), seed).unwrap();
        for env in ds.environments() {
            for w in &env.weather {
                prop_assert!(w.check().is_ok(), "{:?}", w.check());
                prop_assert!(w.tmin <= w.tmean && w.tmean <= w.tmax);
                prop_assert!(w.prec >= 0.0);
            }
        }
        prop_assert_eq!(truth.hybrids.len(), ds.n_hybrids());
        let dy = compute_delta_yield(&ds).values;
        for h in 0..ds.n_hybrids() {
            let own: Vec<f64> = ds.instances_of_hybrid(h).iter().map(|&p| dy[p]).collect();
            prop_assert!(own.iter().all(|&v| v >= 0.0));
            prop_assert!(own.contains(&0.0));
        }
    }

    #[test]
    fn spearman_is_bounded(pair in (2usize..40).prop_flat_map(|n| (permutation(n), permutation(n)))) {
        let (a, b) = pair;
        let r = spearman(&a, &b);
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert_eq!(spearman(&a, &a), 1.0);
        prop_assert_eq!(spearman(&a, &b), spearman(&b, &a));
    }

    #[test]
    fn ranking_is_sorted(rows in 1usize..20, cols in 1usize..10, data in prop::collection::vec(-100.0f64..100.0, 200)) {
        let m = SensitivityMatrix::new(
            MatrixKind::RHeat,
            EnvFilter::All,
            ColumnSemantics::GrowthPeriod,
            (0..rows).map(|i| format!("H{i}")).collect(),
            cols,
            data[..rows * cols].to_vec(),
        )
        .unwrap();
        for norm in [Norm::L1, Norm::L2, Norm::Linf] {
            let r = rank_hybrids(&m, norm);
            let mut seen = r.order.clone();
            seen.sort_unstable();
            prop_assert_eq!(seen, (0..rows).collect::<Vec<_>>());
            prop_assert!(r.order.windows(2).all(|w| r.scores[w[0]] >= r.scores[w[1]]));
        }
    }

    #[test]
    fn silhouette_is_bounded(points in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 4..30), split in 1usize..3) {
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let assignment: Vec<usize> = (0..refs.len()).map(|i| usize::from(i % (split + 1) == 0)).collect();
        for s in silhouette_samples(&refs, &assignment, 2) {
            prop_assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }

    #[test]
    fn covariance_is_symmetric(xy in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50), c in -10.0f64..10.0) {
        let (x, y): (Vec<f64>, Vec<f64>) = xy.into_iter().unzip();
        prop_assert_eq!(population_covariance(&x, &y), population_covariance(&y, &x));
        let constant = vec![c; x.len()];
        prop_assert!(population_covariance(&x, &constant).abs() < 1e-9);
        prop_assert!(population_covariance(&x, &x) >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dataset_survives_csv_round_trip(seed in 0u64..10_000) {
        let (ds, _) = generate_synthetic(&tiny_synth(), seed).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = write_dataset(&ds, dir.path(), Some("round trip")).unwrap();
        let back = load_dataset(&paths).unwrap();
        prop_assert_eq!(back.instances(), ds.instances());
        prop_assert_eq!(back.n_environments(), ds.n_environments());
        for (a, b) in back.environments().zip(ds.environments()) {
            prop_assert_eq!(a, b);
        }
    }
}
