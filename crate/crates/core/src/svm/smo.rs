//! Dual coordinate solver for the C-SVC problem
//! `min ½αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C`, with second-order
//! working-set selection.

use super::kernel::Gram;
use crate::error::{check_dim, Error, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    /// Offset `b` of `g(v) = Σ αᵢyᵢ k(v, vᵢ) + b`.
    pub bias: f64,
    /// Gradient of the dual objective at the solution.
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Maximal KKT violation `m(α) − M(α)`.
    pub kkt_gap: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SmoParams {
    pub c: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

fn in_up(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a < c) || (y < 0.0 && a > 0.0)
}

fn in_low(y: f64, a: f64, c: f64) -> bool {
    (y > 0.0 && a > 0.0) || (y < 0.0 && a < c)
}

/// `(i, j, m, M)`: the selected pair and the extreme values of `−yG`.
fn select_pair(
    k: &Gram,
    y: &[f64],
    alpha: &[f64],
    grad: &[f64],
    c: f64,
) -> (Option<usize>, Option<usize>, f64, f64) {
    let n = y.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i_sel = None;
    for t in 0..n {
        if in_up(y[t], alpha[t], c) {
            let v = -y[t] * grad[t];
            if v >= gmax {
                gmax = v;
                i_sel = Some(t);
            }
        }
    }
    let mut gmin = f64::INFINITY;
    let mut j_sel = None;
    let mut best = f64::INFINITY;
    if let Some(i) = i_sel {
        let kii = k.get(i, i);
        let ki = k.row(i);
        for t in 0..n {
            if !in_low(y[t], alpha[t], c) {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let quad = kii + k.get(t, t) - 2.0 * ki[t];
                let quad = if quad > 0.0 { quad } else { TAU };
                let obj = -diff * diff / quad;
                if obj <= best {
                    best = obj;
                    j_sel = Some(t);
                }
            }
        }
    }
    (i_sel, j_sel, gmax, gmin)
}

pub fn solve(k: &Gram, y: &[f64], params: SmoParams) -> Result<SmoSolution> {
    let n = y.len();
    check_dim(n, k.n())?;
    if !(params.c > 0.0) || !(params.tolerance > 0.0) {
        return Err(Error::param("C and tolerance must be positive"));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::param("labels must be +1 or -1"));
    }
    let c = params.c;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut gap = f64::INFINITY;
    while iterations < params.max_iterations {
        let (i, j, gmax, gmin) = select_pair(k, y, &alpha, &grad, c);
        gap = gmax - gmin;
        let (Some(i), Some(j)) = (i, j) else {
            converged = true;
            break;
        };
        if gap < params.tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let kij = k.get(i, j);
        let quad = k.get(i, i) + k.get(j, j) - 2.0 * kij;
        let quad = if quad > 0.0 { quad } else { TAU };
        let (mut ai, mut aj) = (old_i, old_j);
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        let (ri, rj) = (k.row(i), k.row(j));
        for t in 0..n {
            grad[t] += y[t] * (y[i] * ri[t] * di + y[j] * rj[t] * dj);
        }
    }
    if !converged {
        let (_, _, gmax, gmin) = select_pair(k, y, &alpha, &grad, c);
        gap = gmax - gmin;
        converged = gap < params.tolerance;
        if !converged {
            log::warn!("SMO stopped after {iterations} iterations with KKT gap {gap:.3e}");
        }
    }
    let rho = compute_rho(y, &alpha, &grad, c);
    Ok(SmoSolution {
        alpha,
        bias: -rho,
        gradient: grad,
        iterations,
        converged,
        kkt_gap: gap.max(0.0),
    })
}

fn compute_rho(y: &[f64], alpha: &[f64], grad: &[f64], c: f64) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..y.len() {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    if n_free > 0 {
        sum_free / n_free as f64
    } else {
        (ub + lb) / 2.0
    }
}

/// Largest per-example violation of the KKT conditions of the dual, measured
/// against the offset `b`: free vectors need `y g(x) = 1`, bounded ones the
/// matching inequality. Zero for an exact solution.
pub fn kkt_residuals(k: &Gram, y: &[f64], alpha: &[f64], bias: f64, c: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|t| {
            let row = k.row(t);
            let g: f64 = (0..n).map(|s| alpha[s] * y[s] * row[s]).sum::<f64>() + bias;
            let m = y[t] * g;
            if alpha[t] <= 0.0 {
                (1.0 - m).max(0.0)
            } else if alpha[t] >= c {
                (m - 1.0).max(0.0)
            } else {
                (m - 1.0).abs()
            }
        })
        .collect()
}
