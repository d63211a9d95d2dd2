use agrostress::data::{generate_synthetic, Dataset, PlantingInstance, SynthConfig};
use agrostress::growth::{build_calendar, GrowthParams, PeriodPartition};
use agrostress::neural::{
    build_instance_tensor, fit, load_bundle, padded_length, save_bundle, Activation, ConvStressModule, FeatureStats,
    ModelConfig, ModelKind, ModuleKind, TrainConfig,
};
use agrostress::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_dataset(seed: u64) -> Dataset {
    let cfg = SynthConfig {
        n_hybrids: 8,
        n_envs: 6,
        instances_per_hybrid: 4,
        season_length: 60,
        season_jitter: 5,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg, seed).unwrap().0
}

fn model(kind: ModelKind) -> ModelConfig {
    ModelConfig {
        kind,
        hidden: Some(vec![6, 4]),
        ..ModelConfig::default()
    }
}

fn quick_train(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        ..TrainConfig::default()
    }
}

#[test]
fn extra_padding_leaves_real_windows_unchanged() {
    let data = small_dataset(3);
    let env = data.environment(0);
    let cal = build_calendar(env, &GrowthParams::default(), &PeriodPartition::default()).unwrap();
    let (h, s) = (15, 12);
    let short = padded_length(env.season_length(), h, s);
    let long = short + 4 * s;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (kind, act) in [(ModuleKind::Heat, Activation::Rbf), (ModuleKind::Drought, Activation::Tanh)] {
        let stats = FeatureStats::identity(kind.features().len());
        let a = build_instance_tensor(env, &cal, kind, short, &stats).unwrap();
        let b = build_instance_tensor(env, &cal, kind, long, &stats).unwrap();
        let conv = ConvStressModule::init(act, h, s, a.cols, &mut rng);
        let ta = conv.forward(&a).unwrap();
        let tb = conv.forward(&b).unwrap();
        assert_eq!(tb.out.len(), ta.out.len() + 4);
        assert_eq!(&tb.out[..ta.out.len()], &ta.out[..]);
        // Windows over padding alone see only the bias.
        for t in ta.out.len()..tb.out.len() {
            if t * s >= env.season_length() {
                assert_eq!(tb.pre[t], conv.bias);
            }
        }
    }
}

#[test]
fn default_window_count_for_long_season() {
    let conv = ConvStressModule::zeros(Activation::Tanh, 15, 12, 4);
    assert_eq!(conv.n_windows(330), 27);
}

#[test]
fn activations_stay_in_range() {
    let data = small_dataset(5);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for e in 0..data.n_environments() {
        let env = data.environment(e);
        let cal = build_calendar(env, &GrowthParams::default(), &PeriodPartition::default()).unwrap();
        let d_max = padded_length(data.max_season_length(), 15, 12);
        for (kind, act) in [(ModuleKind::Heat, Activation::Rbf), (ModuleKind::Drought, Activation::Tanh)] {
            let x = build_instance_tensor(env, &cal, kind, d_max, &FeatureStats::identity(kind.features().len())).unwrap();
            let conv = ConvStressModule::init(act, 15, 12, x.cols, &mut rng);
            for v in conv.forward(&x).unwrap().out {
                match act {
                    Activation::Rbf => assert!((0.0..=1.0).contains(&v)),
                    Activation::Tanh => assert!((-1.0..=1.0).contains(&v)),
                }
            }
        }
    }
}

#[test]
fn training_is_bit_reproducible_across_thread_counts() {
    let data = small_dataset(9);
    for kind in [ModelKind::CnnMlp, ModelKind::DemMlp] {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| fit(&data, &model(kind), &quick_train(3)).unwrap())
        };
        let a = run(1);
        let b = run(3);
        let bits = |p: Vec<f64>| p.into_iter().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(a.bundle.params()), bits(b.bundle.params()));
        assert_eq!(a.history, b.history);
        assert_eq!(a.split, b.split);
    }
}

#[test]
fn bundle_round_trip_preserves_predictions() {
    let data = small_dataset(4);
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::CnnMlp, ModelKind::DemMlp] {
        let out = fit(&data, &model(kind), &quick_train(2)).unwrap();
        let path = dir.path().join(format!("{}.bundle", kind.name()));
        save_bundle(&out.bundle, &path, Some("test")).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back, out.bundle);
        let all: Vec<usize> = (0..data.n_instances()).collect();
        let p0 = out.bundle.predict_many(&out.bundle.prepare(&data).unwrap(), &all).unwrap();
        let p1 = back.predict_many(&back.prepare(&data).unwrap(), &all).unwrap();
        assert_eq!(p0, p1);
    }
}

#[test]
fn corrupt_bundle_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.bundle");
    std::fs::write(&path, b"NOTABUNDLE-at-all").unwrap();
    assert!(matches!(load_bundle(&path), Err(Error::Format(_))));
}

#[test]
fn constant_yields_are_fitted_to_zero() {
    let data = small_dataset(6);
    let envs: Vec<_> = data.environments().cloned().collect();
    let instances: Vec<PlantingInstance> = data
        .instances()
        .iter()
        .map(|p| PlantingInstance {
            yield_obs: 150.0,
            ..p.clone()
        })
        .collect();
    let flat = Dataset::new(envs, instances).unwrap();
    let out = fit(&flat, &model(ModelKind::DemMlp), &quick_train(60)).unwrap();
    assert!(out.delta_yield.iter().all(|&v| v == 0.0));
    let first = out.history[0].train_mse;
    let last = out.final_metrics().train_mse;
    assert!(last < first, "{last} vs {first}");
    assert!(last < 1e-3, "final mse {last}");
}

#[test]
fn full_batch_first_epoch_does_not_increase_loss() {
    let data = small_dataset(8);
    for kind in [ModelKind::CnnMlp, ModelKind::DemMlp] {
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 10_000,
            ..TrainConfig::default()
        };
        let out = fit(&data, &model(kind), &cfg).unwrap();
        assert!(out.history[1].train_mse <= out.history[0].train_mse);
        assert!(out.bundle.is_trained());
    }
}

#[test]
fn zero_output_layer_gives_zero_stress_gradient() {
    let data = small_dataset(2);
    for (kind, len) in [(ModelKind::CnnMlp, None), (ModelKind::DemMlp, Some(18))] {
        let mut bundle = fit(&data, &model(kind), &quick_train(1)).unwrap().bundle;
        let last = bundle.mlp.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        let inputs = bundle.prepare(&data).unwrap();
        let g = bundle.stress_gradient(&inputs, 0).unwrap();
        let expect = len.unwrap_or_else(|| bundle.stress_len());
        assert_eq!((g.heat.len(), g.drought.len(), g.combined.len()), (expect, expect, expect));
        for v in g.heat.iter().chain(&g.drought).chain(&g.combined) {
            assert_eq!(*v, 0.0);
        }
    }
}

#[test]
fn cnn_gradient_length_matches_window_count() {
    let data = small_dataset(2);
    let bundle = fit(&data, &model(ModelKind::CnnMlp), &quick_train(1)).unwrap().bundle;
    let d_max = padded_length(data.max_season_length(), 15, 12);
    assert_eq!(bundle.stress_len(), (d_max - 15) / 12 + 1);
    assert_eq!(bundle.input_len(), 3 * bundle.stress_len() + 2);
}

#[test]
fn dem_mlp_input_has_56_columns() {
    let data = small_dataset(2);
    let bundle = fit(&data, &model(ModelKind::DemMlp), &quick_train(1)).unwrap().bundle;
    assert_eq!(bundle.input_len(), 56);
}

#[test]
fn unknown_ids_are_lookup_errors() {
    let data = small_dataset(1);
    let bundle = fit(&data, &model(ModelKind::DemMlp), &quick_train(1)).unwrap().bundle;
    let envs: Vec<_> = data.environments().cloned().collect();
    let mut instances = data.instances().to_vec();
    instances[0].hybrid_id = "never-seen".into();
    let other = Dataset::new(envs.clone(), instances).unwrap();
    assert!(matches!(bundle.prepare(&other), Err(Error::Lookup(_))));

    let mut renamed = envs;
    let old = renamed[0].env_id.clone();
    renamed[0].env_id = "elsewhere".into();
    let instances: Vec<_> = data
        .instances()
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if p.env_id == old {
                p.env_id = "elsewhere".into();
            }
            p
        })
        .collect();
    let other = Dataset::new(renamed, instances).unwrap();
    assert!(matches!(bundle.prepare(&other), Err(Error::Lookup(_))));
}

#[test]
fn split_too_small_is_a_config_error() {
    let data = small_dataset(1);
    let cfg = TrainConfig {
        train_fraction: 0.001,
        ..quick_train(1)
    };
    assert!(matches!(fit(&data, &model(ModelKind::DemMlp), &cfg), Err(Error::Config { .. })));
}
