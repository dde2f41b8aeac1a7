//! Small dense symmetric positive-definite solves.

use crate::error::{Error, Result};

/// Row-major lower-triangular Cholesky factor of an `n x n` SPD matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Factors `a` (row-major, only the lower triangle is read).
    ///
    /// A pivot at or below `rel_tol * max(diag)` is treated as singular.
    pub fn factor(a: &[f64], n: usize, rel_tol: f64) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix is not n x n");
        let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
        let tol = rel_tol * scale.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > tol) {
                return Err(Error::Singular(format!(
                    "pivot {j} is {d:e} (tolerance {tol:e})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Self { n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Entry (i, j) of the lower factor.
    pub fn l(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.n + j]
    }

    /// `L * v`.
    pub fn mul_lower(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| (0..=i).map(|k| self.lower[i * self.n + k] * v[k]).sum())
            .collect()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                y[i] -= self.lower[i * n + k] * y[k];
            }
            y[i] /= self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                y[i] -= self.lower[k * n + i] * y[k];
            }
            y[i] /= self.lower[i * n + i];
        }
        y
    }
}
