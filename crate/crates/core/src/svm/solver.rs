//! Binary soft-margin SVM duals.
//!
//! Kernel path: `min ½ αᵀQα − eᵀα` s.t. `yᵀα = 0`, `0 ≤ α ≤ C`, with
//! `Q_ij = y_i y_j K_ij`, solved by SMO with second-order working-set
//! selection. Linear path: the same dual without the equality constraint on
//! bias-augmented inputs, solved by cyclic dual coordinate descent.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

pub const KKT_TOLERANCE: f64 = 1e-3;
pub const MAX_STEPS: u64 = 10_000_000;
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision offset: `f(x) = Σ α_i y_i K(x_i, x) − rho`. Always 0 on the
    /// linear path, where the bias lives in the augmented weight.
    pub rho: f64,
    pub objective: f64,
    pub steps: u64,
}

fn check(k: ArrayView2<'_, f64>, y: &[f64], c: f64) -> Result<()> {
    let n = y.len();
    if k.dim() != (n, n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: k.nrows(),
        });
    }
    if n == 0 {
        return Err(Error::Empty("SVM training set"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidArgument("binary labels must be ±1".into()));
    }
    Ok(())
}

/// `½ αᵀQα − eᵀα` evaluated directly.
pub fn dual_objective(k: ArrayView2<'_, f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[[i, j]];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// SMO on a precomputed kernel matrix.
pub fn solve_kernel_dual(k: ArrayView2<'_, f64>, y: &[f64], c: f64) -> Result<DualSolution> {
    check(k, y, c)?;
    let n = y.len();
    let q = |i: usize, j: usize| y[i] * y[j] * k[[i, j]];
    let mut alpha = vec![0.0; n];
    let mut g = vec![-1.0; n];
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;
    let mut steps = 0u64;

    loop {
        // i: maximal violator in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut gi = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !upper(alpha[t]) } else { !lower(alpha[t]) };
            if in_up && -y[t] * g[t] > gmax {
                gmax = -y[t] * g[t];
                gi = Some(t);
            }
        }
        // j: second-order choice in I_low
        let mut gmax2 = f64::NEG_INFINITY;
        let mut gj = None;
        let mut best = f64::INFINITY;
        if let Some(i) = gi {
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !lower(alpha[t]) } else { !upper(alpha[t]) };
                if !in_low {
                    continue;
                }
                let v = y[t] * g[t];
                gmax2 = gmax2.max(v);
                let diff = gmax + v;
                if diff > 0.0 {
                    let mut quad = k[[i, i]] + k[[t, t]] - 2.0 * k[[i, t]];
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj < best {
                        best = obj;
                        gj = Some(t);
                    }
                }
            }
        }
        let (i, j) = match (gi, gj) {
            (Some(i), Some(j)) if gmax + gmax2 >= KKT_TOLERANCE => (i, j),
            _ => break,
        };
        if steps >= MAX_STEPS {
            return Err(Error::NoConvergence { steps });
        }
        steps += 1;

        let (ai, aj) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = k[[i, i]] + k[[j, j]] + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-g[i] - g[j]) / quad;
            let diff = ai - aj;
            let (mut ni, mut nj) = (ai + delta, aj + delta);
            if diff > 0.0 {
                if nj < 0.0 {
                    nj = 0.0;
                    ni = diff;
                }
            } else if ni < 0.0 {
                ni = 0.0;
                nj = -diff;
            }
            if diff > 0.0 {
                if ni > c {
                    ni = c;
                    nj = c - diff;
                }
            } else if nj > c {
                nj = c;
                ni = c + diff;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        } else {
            let mut quad = k[[i, i]] + k[[j, j]] - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (g[i] - g[j]) / quad;
            let sum = ai + aj;
            let (mut ni, mut nj) = (ai - delta, aj + delta);
            if sum > c {
                if ni > c {
                    ni = c;
                    nj = sum - c;
                }
            } else if nj < 0.0 {
                nj = 0.0;
                ni = sum;
            }
            if sum > c {
                if nj > c {
                    nj = c;
                    ni = sum - c;
                }
            } else if ni < 0.0 {
                ni = 0.0;
                nj = sum;
            }
            alpha[i] = ni;
            alpha[j] = nj;
        }
        let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
        for t in 0..n {
            g[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = y[t] * g[t];
        if upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else {
        lb
    };
    let objective = 0.5 * alpha.iter().zip(&g).map(|(a, gv)| a * (gv - 1.0)).sum::<f64>();
    Ok(DualSolution {
        alpha,
        rho,
        objective,
        steps,
    })
}

/// Dual coordinate descent for the hinge-loss linear SVM. `k` is the Gram
/// matrix of the bias-augmented inputs (`x_iᵀx_j + 1`).
pub fn solve_linear_dual(k: ArrayView2<'_, f64>, y: &[f64], c: f64) -> Result<DualSolution> {
    check(k, y, c)?;
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // s_t = Σ_j α_j y_j k_tj, so the gradient is y_t s_t − 1
    let mut s = vec![0.0; n];
    let mut steps = 0u64;
    loop {
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for i in 0..n {
            if steps >= MAX_STEPS {
                return Err(Error::NoConvergence { steps });
            }
            steps += 1;
            let g = y[i] * s[i] - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            let kii = k[[i, i]];
            if pg.abs() > 1e-12 && kii > 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / kii).clamp(0.0, c);
                let d = (alpha[i] - old) * y[i];
                if d != 0.0 {
                    for (t, st) in s.iter_mut().enumerate() {
                        *st += d * k[[t, i]];
                    }
                }
            }
        }
        if pg_max - pg_min < KKT_TOLERANCE {
            break;
        }
    }
    let objective = dual_objective(k, y, &alpha);
    Ok(DualSolution {
        alpha,
        rho: 0.0,
        objective,
        steps,
    })
}
