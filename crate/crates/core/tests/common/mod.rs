//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use chrono::{DateTime, Duration, TimeZone, Utc};
use ghicast::metrics::EvalRecord;
use ghicast::models::loss_and_gradient;
use ghicast::models::MlpModel;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A small random network (at most 200 parameters) with non-zero biases.
pub fn random_net(r: &mut impl Rng) -> MlpModel {
    loop {
        let depth = r.random_range(1..=2);
        let mut sizes = vec![r.random_range(1..=5)];
        sizes.extend((0..depth).map(|_| r.random_range(2..=8)));
        sizes.push(r.random_range(1..=6));
        let mut m = MlpModel::init(&sizes, r, None).unwrap();
        if m.n_params() > 200 {
            continue;
        }
        let p: Vec<f64> = m
            .params_flat()
            .iter()
            .map(|v| v + 0.1 * r.random::<f64>() - 0.05)
            .collect();
        m.set_params_flat(&p);
        return m;
    }
}

fn random_batch(r: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(-1.5..1.5))
}

/// Largest relative disagreement between the analytic MSE gradient and a
/// central finite difference with step 1e-5, for one random network.
pub fn gradient_check(seed: u64) -> f64 {
    const STEP: f64 = 1e-5;
    let mut r = rng(seed);
    let model = random_net(&mut r);
    let x = random_batch(&mut r, 8, model.input_dim());
    let y = random_batch(&mut r, 8, model.output_dim());
    let (_, grad) = loss_and_gradient::<ChaCha8Rng>(&model, x.view(), y.view(), None);
    let analytic: Vec<f64> = grad
        .weights
        .iter()
        .zip(&grad.biases)
        .flat_map(|(w, b)| w.iter().chain(b.iter()).copied().collect::<Vec<_>>())
        .collect();
    let theta = model.params_flat();
    let loss_at = |p: &[f64]| {
        let mut m = model.clone();
        m.set_params_flat(p);
        loss_and_gradient::<ChaCha8Rng>(&m, x.view(), y.view(), None).0
    };
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        let mut plus = theta.clone();
        let mut minus = theta.clone();
        plus[i] += STEP;
        minus[i] -= STEP;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * STEP);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Least-squares coefficients with an intercept column, via the SVD
/// pseudo-inverse. Returns (coefficients, intercept).
pub fn pinv_fit(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let beta = x.pseudo_inverse(1e-12).unwrap() * DVector::from_column_slice(y);
    (beta.iter().skip(1).copied().collect(), beta[0])
}

/// OLS standard errors of (intercept, coefficients...) with the residual
/// variance estimated from the fit.
pub fn ols_standard_errors(rows: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let x = DMatrix::from_fn(n, d + 1, |i, j| if j == 0 { 1.0 } else { rows[i][j - 1] });
    let yv = DVector::from_column_slice(y);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let beta = &xtx_inv * x.transpose() * &yv;
    let resid = yv - &x * beta;
    let s2 = resid.norm_squared() / (n - d - 1) as f64;
    (0..=d).map(|j| (s2 * xtx_inv[(j, j)]).sqrt()).collect()
}

/// Rows of `(x1, x2)` with targets `2 x1 - 3 x2 + 5 + sigma * noise`.
pub fn linear_data(seed: u64, n: usize, sigma: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![r.sample::<f64, _>(StandardNormal), r.sample::<f64, _>(StandardNormal)])
        .collect();
    let y = rows
        .iter()
        .map(|x| 2.0 * x[0] - 3.0 * x[1] + 5.0 + sigma * r.sample::<f64, _>(StandardNormal))
        .collect();
    (rows, y)
}

/// Exhaustive search over every threshold between distinct sorted values of
/// a 1-D sample; returns (threshold, sum of squared errors) of the best split.
pub fn best_stump(x: &[f64], y: &[f64], min_leaf: usize) -> Option<(f64, f64)> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let sse = |ids: &[usize]| {
        let m = ids.iter().map(|&i| y[i]).sum::<f64>() / ids.len() as f64;
        ids.iter().map(|&i| (y[i] - m).powi(2)).sum::<f64>()
    };
    let mut best: Option<(f64, f64)> = None;
    for k in min_leaf..=idx.len() - min_leaf {
        if k == 0 || k == idx.len() || x[idx[k - 1]] == x[idx[k]] {
            continue;
        }
        let total = sse(&idx[..k]) + sse(&idx[k..]);
        if best.is_none_or(|(_, b)| total < b) {
            best = Some((0.5 * (x[idx[k - 1]] + x[idx[k]]), total));
        }
    }
    best
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2017, 6, 1, 6, 0, 0).unwrap()
}

pub fn record(y_true: f64, y_pred: f64) -> EvalRecord {
    EvalRecord {
        site_id: "S".into(),
        issue_time: t0(),
        horizon: 1,
        y_true,
        y_pred,
        clearsky_at_target: 800.0,
        clearsky_index_step: 0.0,
    }
}

/// Records of a persistence forecaster on a random clear-sky-index walk,
/// plus the matching perfect forecasts.
pub fn persistence_records(seed: u64, n: usize, horizon: usize) -> (Vec<EvalRecord>, Vec<EvalRecord>) {
    let mut r = rng(seed);
    let mut pers = Vec::with_capacity(n);
    let mut perfect = Vec::with_capacity(n);
    for i in 0..n {
        let ic_hp: f64 = r.random_range(100.0..900.0);
        let kc_h: f64 = r.random_range(0.05..1.1);
        let kc_hp: f64 = r.random_range(0.05..1.1);
        let rec = EvalRecord {
            site_id: format!("S{:02}", i % 3),
            issue_time: t0() + Duration::hours(i as i64),
            horizon,
            y_true: kc_hp * ic_hp,
            y_pred: kc_h * ic_hp,
            clearsky_at_target: ic_hp,
            clearsky_index_step: kc_hp - kc_h,
        };
        perfect.push(EvalRecord {
            y_pred: rec.y_true,
            ..rec.clone()
        });
        pers.push(rec);
    }
    (pers, perfect)
}
