//! Differenced vector autoregression fitted by ordinary least squares.

use serde::{Deserialize, Serialize};

pub const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub dim: usize,
    pub p: usize,
    pub d: usize,
    /// Intercept (`dim`) then `A_1..A_p`, each `dim x dim` row-major, so
    /// `y_t = c + sum_k A_k y_{t-k} + e_t`.
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SingularDesign;

/// Applies `(1 - B)^d` to a `len x dim` row-major series.
pub fn difference(series: &[f64], dim: usize, d: usize) -> Vec<f64> {
    let mut cur = series.to_vec();
    for _ in 0..d {
        let rows = cur.len() / dim;
        if rows < 2 {
            return Vec::new();
        }
        cur = (1..rows)
            .flat_map(|t| (0..dim).map(move |j| (t, j)))
            .map(|(t, j)| cur[t * dim + j] - cur[(t - 1) * dim + j])
            .collect();
    }
    cur
}

/// Rows of the least-squares design for one (already differenced) series:
/// regressor `[1, y_{t-1}, .., y_{t-p}]` and target `y_t`.
pub fn design_rows(y: &[f64], dim: usize, p: usize) -> impl Iterator<Item = (Vec<f64>, &[f64])> + '_ {
    let rows = y.len() / dim;
    (p..rows).map(move |t| {
        let mut x = Vec::with_capacity(1 + p * dim);
        x.push(1.0);
        for k in 1..=p {
            x.extend_from_slice(&y[(t - k) * dim..(t - k + 1) * dim]);
        }
        (x, &y[t * dim..(t + 1) * dim])
    })
}

/// Least-squares VAR(p) with intercept over several differenced series.
/// Solves the normal equations by Cholesky; a singular design is retried
/// once with a small ridge.
pub fn fit_var(series: &[Vec<f64>], dim: usize, p: usize) -> Result<Vec<f64>, SingularDesign> {
    let k = 1 + p * dim;
    let mut xtx = vec![0.0; k * k];
    let mut xty = vec![0.0; k * dim];
    for y in series {
        for (x, target) in design_rows(y, dim, p) {
            for a in 0..k {
                let xa = x[a];
                if xa == 0.0 {
                    continue;
                }
                for b in 0..=a {
                    xtx[a * k + b] += xa * x[b];
                }
                for (j, t) in target.iter().enumerate() {
                    xty[a * dim + j] += xa * t;
                }
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtx[b * k + a] = xtx[a * k + b];
        }
    }
    let beta = match cholesky_solve(&xtx, &xty, k, dim) {
        Some(b) => b,
        None => {
            let mut ridged = xtx.clone();
            for a in 0..k {
                ridged[a * k + a] += RIDGE;
            }
            cholesky_solve(&ridged, &xty, k, dim).ok_or(SingularDesign)?
        }
    };
    // beta is k x dim with rows [c; A_1^T; ..]; store A_k row-major by output.
    let mut params = Vec::with_capacity(dim + p * dim * dim);
    params.extend((0..dim).map(|j| beta[j]));
    for lag in 0..p {
        for out in 0..dim {
            for inp in 0..dim {
                params.push(beta[(1 + lag * dim + inp) * dim + out]);
            }
        }
    }
    Ok(params)
}

/// Solves `A X = B` for symmetric positive definite `A` (`n x n`) and
/// `B` (`n x m`). Returns `None` when a pivot is not clearly positive.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize, m: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i * n + j];
            for q in 0..j {
                s -= l[i * n + q] * l[j * n + q];
            }
            if i == j {
                if s <= 1e-12 * scale {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut x = b.to_vec();
    for c in 0..m {
        for i in 0..n {
            let mut s = x[i * m + c];
            for q in 0..i {
                s -= l[i * n + q] * x[q * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i * m + c];
            for q in i + 1..n {
                s -= l[q * n + i] * x[q * m + c];
            }
            x[i * m + c] = s / l[i * n + i];
        }
    }
    Some(x)
}

impl VarModel {
    pub fn intercept(&self) -> &[f64] {
        &self.params[..self.dim]
    }

    /// Coefficient matrix for lag `k` (1-based).
    pub fn coefficients(&self, k: usize) -> &[f64] {
        let n = self.dim * self.dim;
        &self.params[self.dim + (k - 1) * n..self.dim + k * n]
    }

    /// Mean Euclidean norm of one-step-ahead residuals over a window.
    pub fn raw_error(&self, window: &[f64]) -> f64 {
        let dim = self.dim;
        let y = difference(window, dim, self.d);
        let rows = y.len() / dim;
        if rows <= self.p {
            return 0.0;
        }
        let mut total = 0.0;
        let mut pred = vec![0.0; dim];
        for t in self.p..rows {
            pred.copy_from_slice(self.intercept());
            for k in 1..=self.p {
                let a = self.coefficients(k);
                let prev = &y[(t - k) * dim..(t - k + 1) * dim];
                for (o, pv) in pred.iter_mut().enumerate() {
                    *pv += a[o * dim..(o + 1) * dim].iter().zip(prev).map(|(w, v)| w * v).sum::<f64>();
                }
            }
            let r2: f64 = pred.iter().zip(&y[t * dim..(t + 1) * dim]).map(|(a, b)| (b - a) * (b - a)).sum();
            total += r2.sqrt();
        }
        total / (rows - self.p) as f64
    }
}
