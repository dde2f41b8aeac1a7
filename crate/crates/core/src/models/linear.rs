//! Ridge-regularized linear ARX model for one (site, issue hour, horizon) key.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Cholesky;

/// Pivot tolerance relative to the largest diagonal of the normal matrix.
const PIVOT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearArxModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearArxModel {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.coefficients.len());
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intercept.is_finite() || self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::Contract("linear model has non-finite coefficients".into()));
        }
        Ok(())
    }
}

/// Smallest sample count accepted for a design of `dim` columns.
pub fn min_samples(dim: usize) -> usize {
    (2 * dim).max(10)
}

/// Fits `y = b0 + x.b` minimizing squared error plus `lambda * |b|^2`.
///
/// The intercept is not penalized. Columns are centered before forming the
/// normal equations, which are then solved by Cholesky factorization.
pub fn fit_linear_arx<R: AsRef<[f64]>>(rows: &[R], y: &[f64], lambda: f64) -> Result<LinearArxModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("ridge penalty must be >= 0, got {lambda}")));
    }
    if rows.len() != y.len() {
        return Err(Error::Contract(format!(
            "{} rows but {} targets",
            rows.len(),
            y.len()
        )));
    }
    let n = rows.len();
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    if n < min_samples(dim) {
        return Err(Error::Parameter(format!(
            "linear fit needs at least {} samples for {dim} features, got {n}",
            min_samples(dim)
        )));
    }
    if rows.iter().any(|r| r.as_ref().len() != dim) {
        return Err(Error::Contract("ragged design matrix".into()));
    }

    let inv_n = 1.0 / n as f64;
    let mut mean_x = vec![0.0; dim];
    for r in rows {
        for (m, v) in mean_x.iter_mut().zip(r.as_ref()) {
            *m += v;
        }
    }
    mean_x.iter_mut().for_each(|m| *m *= inv_n);
    let mean_y = y.iter().sum::<f64>() * inv_n;

    let mut a = vec![0.0; dim * dim];
    let mut b = vec![0.0; dim];
    let mut c = vec![0.0; dim];
    for (r, &t) in rows.iter().zip(y) {
        for (ci, (v, m)) in c.iter_mut().zip(r.as_ref().iter().zip(&mean_x)) {
            *ci = v - m;
        }
        let dy = t - mean_y;
        for i in 0..dim {
            b[i] += c[i] * dy;
            for j in 0..=i {
                a[i * dim + j] += c[i] * c[j];
            }
        }
    }
    for i in 0..dim {
        a[i * dim + i] += lambda;
    }

    let coefficients = if dim == 0 {
        Vec::new()
    } else {
        let chol = Cholesky::factor(&a, dim, PIVOT_REL_TOL).map_err(|e| match e {
            Error::Singular(msg) => Error::Singular(format!(
                "rank-deficient design ({msg}); use a ridge penalty lambda > 0"
            )),
            other => other,
        })?;
        chol.solve(&b)
    };
    let intercept = mean_y
        - coefficients
            .iter()
            .zip(&mean_x)
            .map(|(c, m)| c * m)
            .sum::<f64>();
    let model = LinearArxModel {
        coefficients,
        intercept,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let t = i as f64;
                vec![(t * 0.37).sin() * 3.0, (t * 0.11).cos() + 0.01 * t]
            })
            .collect()
    }

    #[test]
    fn exact_recovery() {
        let rows = grid(50);
        let y: Vec<f64> = rows.iter().map(|r| 2.0 * r[0] - 3.0 * r[1] + 5.0).collect();
        let m = fit_linear_arx(&rows, &y, 0.0).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((m.coefficients[1] + 3.0).abs() < 1e-8);
        assert!((m.intercept - 5.0).abs() < 1e-8);
    }

    #[test]
    fn constant_target() {
        let rows = grid(30);
        let y = vec![7.5; 30];
        let m = fit_linear_arx(&rows, &y, 0.0).unwrap();
        assert!((m.intercept - 7.5).abs() < 1e-12);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn duplicate_columns_are_singular() {
        let rows: Vec<Vec<f64>> = grid(30).into_iter().map(|r| vec![r[0], r[0], r[1]]).collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[2]).collect();
        let err = fit_linear_arx(&rows, &y, 0.0).unwrap_err();
        assert!(matches!(err, Error::Singular(ref m) if m.contains("lambda > 0")));
        assert!(fit_linear_arx(&rows, &y, 1e-3).is_ok());
    }

    #[test]
    fn too_few_samples() {
        let rows = grid(9);
        let y = vec![1.0; 9];
        assert!(matches!(fit_linear_arx(&rows, &y, 0.0), Err(Error::Parameter(_))));
    }
}
