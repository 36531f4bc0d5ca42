//! Exponentiated χ² kernel.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// `½ Σ (a_n − b_n)² / (a_n + b_n)`, with empty bin pairs contributing 0.
pub fn chi2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.iter().chain(b).any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("χ² distance needs finite non-negative histograms".into()));
    }
    Ok(chi2_unchecked(a.iter().copied(), b.iter().copied()))
}

pub(crate) fn chi2_unchecked(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.zip(b) {
        let den = x + y;
        if den > 0.0 {
            s += (x - y) * (x - y) / den;
        }
    }
    0.5 * s
}

fn check_histograms(m: ArrayView2<'_, f64>) -> Result<()> {
    if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("χ² kernel needs finite non-negative histograms".into()));
    }
    Ok(())
}

fn row_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    chi2_unchecked(a.iter().copied(), b.iter().copied())
}

/// Pairwise χ² distances between rows of `a` and rows of `b`.
pub fn chi2_distances(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            actual: b.ncols(),
        });
    }
    check_histograms(a)?;
    check_histograms(b)?;
    let mut out = Array2::zeros((a.nrows(), b.nrows()));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(a.axis_iter(Axis(0)))
        .for_each(|(mut o, ra)| {
            for (v, rb) in o.iter_mut().zip(b.outer_iter()) {
                *v = row_dist(ra, rb);
            }
        });
    Ok(out)
}

/// Kernel values against the training set, plus the normalizer `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGram {
    pub matrix: Array2<f64>,
    pub a: f64,
}

/// Mean of the off-diagonal distances.
fn mean_offdiag(d: &Array2<f64>) -> f64 {
    let n = d.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += d[[i, j]];
            }
        }
    }
    s / (n * (n - 1)) as f64
}

/// `exp(−dist / (2A))` applied elementwise.
pub fn chi2_kernel_from_distances(d: &Array2<f64>, a: f64) -> Array2<f64> {
    d.mapv(|v| (-v / (2.0 * a)).exp())
}

/// Training Gram matrix. `A` is the mean distance over distinct training
/// pairs.
pub fn chi2_gram(train: ArrayView2<'_, f64>) -> Result<KernelGram> {
    if train.nrows() < 2 {
        return Err(Error::Empty("χ² Gram needs at least two training histograms"));
    }
    let mut d = chi2_distances(train, train)?;
    // exact symmetry regardless of summation order
    let n = d.nrows();
    for i in 0..n {
        d[[i, i]] = 0.0;
        for j in 0..i {
            d[[i, j]] = d[[j, i]];
        }
    }
    let a = mean_offdiag(&d);
    if a <= 0.0 {
        return Err(Error::Degenerate("all training histograms are identical (A = 0)".into()));
    }
    Ok(KernelGram {
        matrix: chi2_kernel_from_distances(&d, a),
        a,
    })
}

/// Test-versus-train kernel rows using the training `A`.
pub fn chi2_cross(test: ArrayView2<'_, f64>, train: ArrayView2<'_, f64>, a: f64) -> Result<KernelGram> {
    if a <= 0.0 || !a.is_finite() {
        return Err(Error::InvalidArgument(format!("kernel normalizer must be positive, got {a}")));
    }
    let d = chi2_distances(test, train)?;
    Ok(KernelGram {
        matrix: chi2_kernel_from_distances(&d, a),
        a,
    })
}
