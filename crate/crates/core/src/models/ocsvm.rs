//! One-class SVM with an RBF kernel, trained by SMO on the nu-parameterized
//! dual.

use serde::{Deserialize, Serialize};

use super::nn::sq_dist;

/// Stored model: support vectors with normalized weights (summing to 1)
/// and the matching offset `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ocsvm {
    pub dim: usize,
    pub gamma: f64,
    pub rho: f64,
    pub alpha: Vec<f64>,
    /// `alpha.len() x dim` row-major.
    pub support: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, max_iter: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveError {
    /// Iteration cap reached with the given KKT violation.
    NonConvergence { violation: f64 },
}

/// Above this violation a capped run counts as failed.
pub const KKT_TOLERANCE: f64 = 1e-3;

#[inline]
pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * sq_dist(a, b)).exp()
}

impl Ocsvm {
    pub fn decision_value(&self, x: &[f64]) -> f64 {
        self.alpha.iter().zip(self.support.chunks_exact(self.dim)).map(|(a, sv)| a * rbf(self.gamma, sv, x)).sum()
    }

    pub fn raw_error(&self, x: &[f64]) -> f64 {
        (self.rho - self.decision_value(x)).max(0.0)
    }

    pub fn support_count(&self) -> usize {
        self.alpha.len()
    }

    /// Solves `min 1/2 a'Qa` s.t. `0 <= a_i <= 1`, `sum a = nu * l` with the
    /// maximal-violating-pair / second-order working set rule. `points` is
    /// `l x dim` row-major.
    pub fn fit(points: &[f64], dim: usize, nu: f64, gamma: f64, opts: SolverOptions) -> Result<Self, SolveError> {
        let l = points.len() / dim;
        let row = |i: usize| &points[i * dim..(i + 1) * dim];
        let mut q = vec![0.0; l * l];
        for i in 0..l {
            q[i * l + i] = 1.0;
            for j in 0..i {
                let k = rbf(gamma, row(i), row(j));
                q[i * l + j] = k;
                q[j * l + i] = k;
            }
        }
        let total = nu * l as f64;
        let mut alpha = vec![0.0; l];
        let full = (total.floor() as usize).min(l);
        alpha[..full].iter_mut().for_each(|a| *a = 1.0);
        if full < l {
            alpha[full] = total - full as f64;
        }
        let mut grad = vec![0.0; l];
        for (i, a) in alpha.iter().enumerate() {
            if *a != 0.0 {
                for t in 0..l {
                    grad[t] += a * q[i * l + t];
                }
            }
        }
        // Stopping is measured on the normalized scale (weights summing to 1).
        let tol = opts.tolerance * total;
        let mut iter = 0;
        loop {
            let (i, j, violation) = select_pair(&alpha, &grad, &q, l);
            if violation < tol {
                break;
            }
            if iter >= opts.max_iter {
                let v = violation / total;
                if v > KKT_TOLERANCE {
                    return Err(SolveError::NonConvergence { violation: v });
                }
                break;
            }
            iter += 1;
            let (i, j) = (i.unwrap(), j.unwrap());
            let quad = (q[i * l + i] + q[j * l + j] - 2.0 * q[i * l + j]).max(1e-12);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let mut ai = old_i - delta;
            let mut aj = old_j + delta;
            if sum > 1.0 {
                if ai > 1.0 {
                    ai = 1.0;
                    aj = sum - 1.0;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > 1.0 {
                if aj > 1.0 {
                    aj = 1.0;
                    ai = sum - 1.0;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
            alpha[i] = ai;
            alpha[j] = aj;
            let (di, dj) = (ai - old_i, aj - old_j);
            for t in 0..l {
                grad[t] += q[i * l + t] * di + q[j * l + t] * dj;
            }
        }
        let rho = offset(&alpha, &grad);
        let mut weights = Vec::new();
        let mut support = Vec::new();
        for (i, a) in alpha.iter().enumerate() {
            if *a > 0.0 {
                weights.push(a / total);
                support.extend_from_slice(row(i));
            }
        }
        Ok(Self { dim, gamma, rho: rho / total, alpha: weights, support })
    }
}

/// Returns the working pair and the current maximal KKT violation.
fn select_pair(alpha: &[f64], grad: &[f64], q: &[f64], l: usize) -> (Option<usize>, Option<usize>, f64) {
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..l {
        if alpha[t] < 1.0 && -grad[t] >= gmax {
            gmax = -grad[t];
            i_sel = Some(t);
        }
    }
    let Some(i) = i_sel else { return (None, None, 0.0) };
    let mut gmax2 = f64::NEG_INFINITY;
    let mut best = f64::INFINITY;
    let mut j_sel = None;
    for t in 0..l {
        if alpha[t] > 0.0 {
            gmax2 = gmax2.max(grad[t]);
            let b = gmax + grad[t];
            if b > 0.0 {
                let a = (q[i * l + i] + q[t * l + t] - 2.0 * q[i * l + t]).max(1e-12);
                let obj = -(b * b) / a;
                if obj <= best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
    }
    (Some(i), j_sel, if j_sel.is_some() { gmax + gmax2 } else { 0.0 })
}

/// Mean gradient over free variables, or the midpoint of the feasible
/// interval when every variable sits at a bound.
fn offset(alpha: &[f64], grad: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum, mut free) = (0.0, 0usize);
    for (a, g) in alpha.iter().zip(grad) {
        if *a >= 1.0 {
            lb = lb.max(*g);
        } else if *a <= 0.0 {
            ub = ub.min(*g);
        } else {
            sum += g;
            free += 1;
        }
    }
    if free > 0 {
        sum / free as f64
    } else {
        (ub + lb) / 2.0
    }
}
