mod common;

use chrono::{Duration, TimeZone, Timelike, Utc};
use common::{best_stump, gradient_check, linear_data, pinv_fit, rng};
use ghicast::dataset::HORIZONS;
use ghicast::features::{FeatureConfig, Sample};
use ghicast::models::gbt::{fit_gbt_traced, Node};
use ghicast::models::mlp::{dropout_mask, Optimizer};
use ghicast::models::suite::{
    train_global, train_keyed_suite, train_local_mlps, KeyedFamily, KeyedParams, SiteSamples,
};
use ghicast::models::{
    fit_gbt, fit_linear_arx, mlp_train, persistence_forecast, GbtParams, MlpModel, TrainConfig, TrainData,
};
use ghicast::Error;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn forward_pass_matches_straight_line_arithmetic() {
    let mut r = rng(4_3_6);
    let m = MlpModel::init(&[4, 3, 6], &mut r, None).unwrap();
    let mut p = m.params_flat();
    p.iter_mut().for_each(|v| *v += r.random_range(-0.3..0.3));
    let mut m = m;
    m.set_params_flat(&p);
    let x = [0.7, -1.2, 0.05, 2.5];

    let (w1, b1, w2, b2) = (&m.weights()[0], &m.biases()[0], &m.weights()[1], &m.biases()[1]);
    let mut hidden = [0.0; 3];
    for j in 0..3 {
        let mut s = b1[j];
        for i in 0..4 {
            s += w1[[j, i]] * x[i];
        }
        hidden[j] = if s > 0.0 { s } else { 0.0 };
    }
    let mut expected = [0.0; 6];
    for k in 0..6 {
        let mut s = b2[k];
        for j in 0..3 {
            s += w2[[k, j]] * hidden[j];
        }
        expected[k] = s;
    }
    let out = m.forward(&x).unwrap();
    for (a, b) in out.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..20 {
        let err = gradient_check(seed);
        assert!(err < 1e-5, "seed {seed}: relative error {err}");
    }
}

#[test]
fn dropout_preserves_expected_preactivation() {
    let mut r = rng(11);
    let m = MlpModel::init(&[3, 12, 6], &mut r, None).unwrap();
    let x = [0.4, -0.9, 1.3];
    let w1 = &m.weights()[0];
    let hidden: Array1<f64> = (w1.dot(&Array1::from(x.to_vec())) + &m.biases()[0]).mapv(|v| v.max(0.0));
    let w2 = &m.weights()[1];
    let plain = w2.dot(&hidden);
    // 1% of the summed magnitude of the terms entering each output
    let scale = w2.mapv(f64::abs).dot(&hidden);
    for rate in [0.1, 0.14, 0.5] {
        let masks = dropout_mask((100_000, 12), rate, &mut r);
        let mean = w2.dot(&(masks.mean_axis(ndarray::Axis(0)).unwrap() * &hidden));
        for k in 0..6 {
            let tol = 0.01 * scale[k];
            assert!((mean[k] - plain[k]).abs() <= tol, "rate {rate}: {} vs {}", mean[k], plain[k]);
        }
    }
}

fn xor_data() -> TrainData {
    let pts = [([0.0, 0.0], 0.0), ([0.0, 1.0], 1.0), ([1.0, 0.0], 1.0), ([1.0, 1.0], 0.0)];
    let n = 64;
    let x = Array2::from_shape_fn((n, 2), |(i, j)| pts[i % 4].0[j]);
    let y = Array2::from_shape_fn((n, 6), |(i, _)| pts[i % 4].1);
    TrainData::new(x, y).unwrap()
}

#[test]
fn learns_xor() {
    let data = xor_data();
    let cfg = TrainConfig {
        learning_rate: 0.01,
        dropout: 0.0,
        batch_size: 16,
        max_epochs: 2000,
        patience: 1999,
        n_starts: 4,
        seed: 3,
        optimizer: Optimizer::Adam,
    };
    let (model, trace) = mlp_train(&data, &data, &[2, 8, 6], &cfg).unwrap();
    assert!(model.mse(&data) < 1e-2, "mse {}", model.mse(&data));
    assert!(trace.starts.iter().all(|s| s.train_mse.len() <= 2000));
}

#[test]
fn small_step_full_batch_descent_never_increases_loss() {
    let mut r = rng(5);
    let n = 40;
    let x = Array2::from_shape_simple_fn((n, 3), || r.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((n, 6), |(i, k)| x[[i, 0]] * (k as f64 + 1.0) - x[[i, 2]].abs());
    let data = TrainData::new(x, y).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        dropout: 0.0,
        batch_size: n,
        max_epochs: 300,
        patience: 299,
        n_starts: 1,
        seed: 9,
        optimizer: Optimizer::Sgd,
    };
    let (_, trace) = mlp_train(&data, &data, &[3, 10, 6], &cfg).unwrap();
    let mse = &trace.starts[0].train_mse;
    assert_eq!(mse.len(), 300);
    for w in mse.windows(2) {
        assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
    }
}

fn noisy_regression(seed: u64, n: usize) -> TrainData {
    let mut r = rng(seed);
    let x = Array2::from_shape_simple_fn((n, 4), || r.random_range(-1.0..1.0f64));
    let y = Array2::from_shape_fn((n, 6), |(i, k)| {
        f64::sin(x[[i, 0]] * 2.0 + x[[i, 1]] * x[[i, 2]]) * (1.0 + k as f64 / 6.0) + 0.3 * r.random_range(-1.0..1.0f64)
    });
    TrainData::new(x, y).unwrap()
}

#[test]
fn returned_weights_achieve_the_minimum_validation_error() {
    let train = noisy_regression(1, 120);
    let val = noisy_regression(2, 60);
    let cfg = TrainConfig {
        learning_rate: 0.02,
        max_epochs: 150,
        patience: 15,
        n_starts: 3,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let (model, trace) = mlp_train(&train, &val, &[4, 24, 6], &cfg).unwrap();
    let recorded_min = trace
        .starts
        .iter()
        .flat_map(|s| s.val_mse.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let chosen = &trace.starts[trace.chosen_start];
    let chosen_min = chosen.val_mse.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(trace.best_val_mse(), recorded_min);
    assert_eq!(chosen_min, recorded_min);
    assert!((model.mse(&val) - recorded_min).abs() <= 1e-12 * recorded_min);
}

#[test]
fn fixed_seed_training_is_reproducible() {
    let train = noisy_regression(1, 80);
    let val = noisy_regression(2, 40);
    let cfg = TrainConfig {
        max_epochs: 30,
        patience: 10,
        n_starts: 2,
        ..TrainConfig::default()
    };
    let a = mlp_train(&train, &val, &[4, 8, 6], &cfg).unwrap();
    let b = mlp_train(&train, &val, &[4, 8, 6], &cfg).unwrap();
    assert_eq!(a.1, b.1);
    assert_eq!(a.0, b.0);
}

#[test]
fn linear_recovers_exact_relationship() {
    let (rows, y) = linear_data(1, 50, 0.0);
    let m = fit_linear_arx(&rows, &y, 0.0).unwrap();
    assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
    assert!((m.coefficients[1] + 3.0).abs() < 1e-8);
    assert!((m.intercept - 5.0).abs() < 1e-8);
}

#[test]
fn constant_target_gives_zero_slopes() {
    let (rows, _) = linear_data(2, 30, 0.0);
    let m = fit_linear_arx(&rows, &vec![42.0; 30], 0.0).unwrap();
    assert!((m.intercept - 42.0).abs() < 1e-10);
    assert!(m.coefficients.iter().all(|c| c.abs() < 1e-10));
}

#[test]
fn collinear_design_needs_a_penalty() {
    let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, i as f64]).collect();
    let y: Vec<f64> = (0..30).map(|i| 3.0 * i as f64).collect();
    match fit_linear_arx(&rows, &y, 0.0) {
        Err(Error::Singular(msg)) => assert!(msg.contains("lambda > 0"), "{msg}"),
        other => panic!("expected a singular design error, got {other:?}"),
    }
    assert!(fit_linear_arx(&rows, &y, 1.0).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn persistence_ignores_clearsky_scale(
        i_h in 0.0..1200.0f64,
        ic_h in 2.0..1100.0f64,
        ic_hp in 0.0..1100.0f64,
        alpha in 0.01..100.0f64,
    ) {
        prop_assume!(alpha * ic_h > 1.0);
        let a = persistence_forecast(i_h, ic_h, ic_hp);
        let b = persistence_forecast(i_h, alpha * ic_h, alpha * ic_hp);
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
        prop_assert!(!a.fallback);
    }

    #[test]
    fn linear_fit_matches_pseudo_inverse(seed in any::<u64>()) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
        let y: Vec<f64> = (0..20).map(|_| r.random_range(-10.0..10.0)).collect();
        let m = fit_linear_arx(&rows, &y, 0.0).unwrap();
        let (coef, icpt) = pinv_fit(&rows, &y);
        for (a, b) in m.coefficients.iter().zip(&coef) {
            prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
        }
        prop_assert!((m.intercept - icpt).abs() < 1e-8);
    }

    #[test]
    fn staged_predictions_add_one_tree_at_a_time(seed in any::<u64>(), depth in 1usize..4) {
        let mut r = rng(seed);
        let rows: Vec<Vec<f64>> = (0..120).map(|_| (0..3).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = rows.iter().map(|x| (6.0 * x[0]).sin() + x[1] * x[2] + 0.1 * r.random::<f64>()).collect();
        let params = GbtParams { n_trees: 25, max_depth: depth, shrinkage: 0.3, min_leaf: 5 };
        let m = fit_gbt(&rows, &y, &params).unwrap();
        for x in rows.iter().take(20) {
            for k in 1..=m.trees.len() {
                let step = m.predict_staged(x, k - 1) + m.shrinkage * m.trees[k - 1].predict(x);
                prop_assert_eq!(m.predict_staged(x, k), step);
            }
            prop_assert_eq!(m.predict(x), m.predict_staged(x, m.trees.len()));
        }
    }
}

#[test]
fn gbt_stump_matches_exhaustive_split_search() {
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let n = r.random_range(20..80);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.sin() * 3.0 + r.random_range(-1.0..1.0)).collect();
        let rows: Vec<[f64; 1]> = x.iter().map(|v| [*v]).collect();
        let params = GbtParams { n_trees: 1, max_depth: 1, shrinkage: 1.0, min_leaf: 1 };
        let m = fit_gbt(&rows, &y, &params).unwrap();
        let (threshold, sse) = best_stump(&x, &y, 1).unwrap();
        let Node::Split { threshold: t, .. } = m.trees[0].nodes[0] else {
            panic!("seed {seed}: root is a leaf");
        };
        assert_eq!(t, threshold, "seed {seed}");
        let fit_sse: f64 = rows.iter().zip(&y).map(|(x, y)| (y - m.predict(x)).powi(2)).sum();
        assert!((fit_sse - sse).abs() <= 1e-9 * sse.max(1.0), "seed {seed}: {fit_sse} vs {sse}");
    }
}

#[test]
fn step_function_is_split_at_the_step() {
    let x: Vec<[f64; 1]> = (0..40).map(|i| [i as f64]).collect();
    let y: Vec<f64> = (0..40).map(|i| if i < 17 { 2.0 } else { 9.0 }).collect();
    let params = GbtParams { n_trees: 1, max_depth: 1, shrinkage: 1.0, min_leaf: 1 };
    let fit = fit_gbt_traced(&x, &y, &params).unwrap();
    assert!(fit.train_mse[1] < 1e-6);
    let Node::Split { threshold, .. } = fit.model.trees[0].nodes[0] else { panic!() };
    assert_eq!(threshold, 16.5);
}

#[test]
fn gbt_null_ensemble_and_training_error() {
    let x: Vec<[f64; 1]> = (0..30).map(|i| [i as f64]).collect();
    let y: Vec<f64> = (0..30).map(|i| (i as f64 * 0.4).sin()).collect();
    let mean = y.iter().sum::<f64>() / 30.0;
    let none = fit_gbt(&x, &y, &GbtParams { n_trees: 0, ..GbtParams::default() }).unwrap();
    assert!((none.predict(&[3.0]) - mean).abs() < 1e-12);

    let boosted = GbtParams { n_trees: 200, max_depth: 3, shrinkage: 1.0, min_leaf: 1 };
    let fit = fit_gbt_traced(&x, &y, &boosted).unwrap();
    assert!(fit.train_mse.windows(2).all(|w| w[1] <= w[0]));
    assert!(*fit.train_mse.last().unwrap() <= fit.train_mse[1]);
    assert!(matches!(
        fit_gbt(&x, &y, &GbtParams { max_depth: 0, ..boosted }),
        Err(Error::Parameter(_))
    ));
}

fn site_samples(site: &str, days: usize, hours: &[u32], seed: u64) -> SiteSamples {
    let mut r = rng(seed);
    let dim = FeatureConfig::local_default().input_dim();
    let t0 = Utc.with_ymd_and_hms(2015, 4, 1, 0, 0, 0).unwrap();
    let make = |day_offset: usize, r: &mut rand_chacha::ChaCha8Rng| {
        let mut out = Vec::new();
        for d in 0..days {
            for &h in hours {
                let issue_time = t0 + Duration::days((day_offset + d) as i64) + Duration::hours(h.into());
                let x: Vec<f64> = (0..dim).map(|_| r.random_range(0.0..800.0)).collect();
                let mut y = [0.0; HORIZONS];
                for (p, v) in y.iter_mut().enumerate() {
                    *v = 0.5 * x[p] + 0.3 * x[12] + r.random_range(-20.0..20.0);
                }
                out.push(Sample {
                    x,
                    y,
                    site_id: site.to_string(),
                    slot: (day_offset + d) * 24 + h as usize,
                    issue_time,
                    target_retained: [true; HORIZONS],
                });
            }
        }
        out
    };
    SiteSamples {
        site_id: site.to_string(),
        train: make(0, &mut r),
        validation: make(days, &mut r),
    }
}

#[test]
fn keyed_suites_have_one_model_per_site_hour_and_horizon() {
    let hours = [7, 8, 9, 10, 11, 12];
    let sites: Vec<SiteSamples> = (0..25)
        .map(|i| site_samples(&format!("S{i:02}"), 40, &hours, i as u64))
        .collect();
    let features = FeatureConfig::local_default();
    let suite = train_keyed_suite(&sites, KeyedFamily::Linear, &features, &KeyedParams::default()).unwrap();
    assert_eq!(suite.models.len(), 900);
    assert!(suite.untrained.is_empty());

    let one = train_keyed_suite(&sites[..1], KeyedFamily::Gbt, &features, &KeyedParams::default()).unwrap();
    assert_eq!(one.models.len(), 36);
    let single_hour = vec![site_samples("A", 40, &[9], 99)];
    let six = train_keyed_suite(&single_hour, KeyedFamily::Linear, &features, &KeyedParams::default()).unwrap();
    assert_eq!(six.models.len(), 6);
}

#[test]
fn sparse_keys_are_left_untrained() {
    let mut s = site_samples("A", 40, &[9, 10], 5);
    // three samples at 10:00 are too few for a 7-column design
    s.train.retain(|x| x.issue_time.hour() != 10 || x.slot < 24 * 3);
    let suite = train_keyed_suite(&[s], KeyedFamily::Linear, &FeatureConfig::local_default(), &KeyedParams::default())
        .unwrap();
    assert_eq!(suite.models.len(), 6);
    assert_eq!(suite.untrained.len(), 6);
}

fn quick() -> TrainConfig {
    TrainConfig {
        max_epochs: 8,
        patience: 3,
        n_starts: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn one_local_network_per_site() {
    let sites: Vec<SiteSamples> = (0..25)
        .map(|i| site_samples(&format!("S{i:02}"), 6, &[9, 10], i as u64))
        .collect();
    let nets = train_local_mlps(&sites, &FeatureConfig::local_default(), &[8], &quick()).unwrap();
    assert_eq!(nets.len(), 25);
    assert_eq!(nets[3].site_id, "S03");
}

#[test]
fn global_training_needs_a_site() {
    let f = FeatureConfig::global_default();
    assert!(matches!(train_global(&[], &f, &[8], &quick()), Err(Error::Parameter(_))));
    let one = vec![site_samples("A", 6, &[9, 10], 1)];
    let g = train_global(&one, &f, &[8], &quick()).unwrap();
    assert_eq!(g.model.layer_sizes(), &[22, 8, 6]);
    assert_eq!(g.train_sites, vec!["A".to_string()]);
    let ground = FeatureConfig::local_default();
    assert!(matches!(train_global(&one, &ground, &[8], &quick()), Err(Error::Parameter(_))));
}
