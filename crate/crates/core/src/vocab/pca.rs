//! Randomized PCA (range finder with power iterations, then a small SVD).

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Stage};

pub const DEFAULT_PCA_DIMS: usize = 24;
pub const OVERSAMPLING: usize = 10;
pub const POWER_ITERATIONS: usize = 2;

const CHUNK: usize = 4096;
/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-6;

/// Mean and orthonormal projection onto the leading principal directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub mean: Array1<f64>,
    /// `target × d`, orthonormal rows.
    pub projection: Array2<f64>,
    pub component: String,
}

impl PcaModel {
    pub fn input_dims(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dims(&self) -> usize {
        self.projection.nrows()
    }

    /// Projects `x` (raw input dims) into `out` (output dims).
    pub fn project_into<T: Copy + Into<f64>>(&self, x: &[T], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.input_dims());
        for (o, p) in out.iter_mut().zip(self.projection.outer_iter()) {
            *o = p
                .iter()
                .zip(x.iter().zip(self.mean.iter()))
                .map(|(&w, (&v, &m))| w * (v.into() - m))
                .sum();
        }
    }

    pub fn project<T: Copy + Into<f64>>(&self, x: &[T]) -> Vec<f64> {
        let mut out = vec![0.0; self.output_dims()];
        self.project_into(x, &mut out);
        out
    }

    /// Maps reduced coordinates back to the input space.
    pub fn reconstruct(&self, z: &[f64]) -> Vec<f64> {
        let mut out = self.mean.to_vec();
        for (&c, p) in z.iter().zip(self.projection.outer_iter()) {
            for (o, &w) in out.iter_mut().zip(p.iter()) {
                *o += c * w;
            }
        }
        out
    }

    /// Projects every row, returning an `n × target` matrix in `f32`.
    pub fn transform(&self, rows: ArrayView2<'_, f32>) -> Array2<f32> {
        let t = self.output_dims();
        let mut out = Array2::<f32>::zeros((rows.nrows(), t));
        out.axis_chunks_iter_mut(ndarray::Axis(0), CHUNK)
            .into_par_iter()
            .enumerate()
            .for_each(|(ci, mut block)| {
                let mut buf = vec![0f64; t];
                for (j, mut o) in block.outer_iter_mut().enumerate() {
                    let row = rows.row(ci * CHUNK + j);
                    self.project_into(row.as_slice().expect("standard layout"), &mut buf);
                    for (dst, &v) in o.iter_mut().zip(&buf) {
                        *dst = v as f32;
                    }
                }
            });
        out
    }
}

fn column_mean(rows: ArrayView2<'_, f32>) -> Array1<f64> {
    let d = rows.ncols();
    let partial: Vec<Vec<f64>> = rows
        .axis_chunks_iter(ndarray::Axis(0), CHUNK)
        .into_par_iter()
        .map(|b| {
            let mut s = vec![0f64; d];
            for r in b.outer_iter() {
                for (a, &v) in s.iter_mut().zip(r.iter()) {
                    *a += v as f64;
                }
            }
            s
        })
        .collect();
    let mut s = vec![0f64; d];
    for p in partial {
        for (a, b) in s.iter_mut().zip(p) {
            *a += b;
        }
    }
    let n = rows.nrows() as f64;
    Array1::from_iter(s.into_iter().map(|v| v / n))
}

/// `(X - 1 mean') M` for `M: d × l`, returned as `n × l`.
fn centered_times(rows: ArrayView2<'_, f32>, mean: &Array1<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = rows.nrows();
    let l = m.ncols();
    let mut out = vec![0f64; n * l];
    out.par_chunks_mut(CHUNK * l).enumerate().for_each(|(ci, block)| {
        let mut x = vec![0f64; rows.ncols()];
        for (j, o) in block.chunks_mut(l).enumerate() {
            for ((xi, &v), &mu) in x.iter_mut().zip(rows.row(ci * CHUNK + j).iter()).zip(mean.iter()) {
                *xi = v as f64 - mu;
            }
            for (c, oc) in o.iter_mut().enumerate() {
                *oc = m.column(c).iter().zip(&x).map(|(a, b)| a * b).sum();
            }
        }
    });
    DMatrix::from_row_slice(n, l, &out)
}

/// `(X - 1 mean')' Q` for `Q: n × l`, returned as `d × l`.
fn centered_t_times(rows: ArrayView2<'_, f32>, mean: &Array1<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let d = rows.ncols();
    let l = q.ncols();
    let partial: Vec<Vec<f64>> = (0..rows.nrows().div_ceil(CHUNK))
        .into_par_iter()
        .map(|ci| {
            let mut acc = vec![0f64; d * l];
            let end = ((ci + 1) * CHUNK).min(rows.nrows());
            let mut x = vec![0f64; d];
            for i in ci * CHUNK..end {
                for ((xi, &v), &mu) in x.iter_mut().zip(rows.row(i).iter()).zip(mean.iter()) {
                    *xi = v as f64 - mu;
                }
                for c in 0..l {
                    let qc = q[(i, c)];
                    if qc == 0.0 {
                        continue;
                    }
                    for (a, &xv) in acc[c * d..(c + 1) * d].iter_mut().zip(&x) {
                        *a += qc * xv;
                    }
                }
            }
            acc
        })
        .collect();
    let mut acc = vec![0f64; d * l];
    for p in partial {
        for (a, b) in acc.iter_mut().zip(p) {
            *a += b;
        }
    }
    // acc is column-major d × l
    DMatrix::from_column_slice(d, l, &acc)
}

fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Fits a `target`-dimensional PCA to `rows` with the randomized range
/// finder: Gaussian sketch of width `target + 10`, two power iterations, then
/// an exact SVD of the small projected matrix.
pub fn pca_fit(rows: ArrayView2<'_, f32>, target: usize, seed: u64, component: &str) -> Result<PcaModel> {
    let (n, d) = rows.dim();
    if target == 0 {
        return Err(Error::InvalidArgument("PCA target dims must be positive".into()));
    }
    if target > d {
        return Err(Error::InvalidArgument(format!(
            "cannot reduce {d} dims to {target}"
        )));
    }
    if n < target {
        return Err(Error::TooFewRows { needed: target, got: n });
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite PCA input".into()));
    }
    let mean = column_mean(rows);
    let width = (target + OVERSAMPLING).min(d).min(n);
    let mut rng = stream(seed, Stage::Pca, 0);
    let omega = DMatrix::<f64>::from_fn(d, width, |_, _| StandardNormal.sample(&mut rng));

    let mut q = orthonormalize(centered_times(rows, &mean, &omega));
    for _ in 0..POWER_ITERATIONS {
        let z = orthonormalize(centered_t_times(rows, &mean, &q));
        q = orthonormalize(centered_times(rows, &mean, &z));
    }
    // B' = X_c' Q is d × width; its left singular vectors are the principal axes.
    let bt = centered_t_times(rows, &mean, &q);
    let svd = bt.svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values[order[0]];
    if order.len() < target || top <= 0.0 || svd.singular_values[order[target - 1]] <= RANK_TOL * top {
        return Err(Error::RankDeficient { target });
    }
    let mut projection = Array2::<f64>::zeros((target, d));
    for (r, &c) in order.iter().take(target).enumerate() {
        let col = u.column(c);
        // sign convention: largest-magnitude entry positive
        let (imax, _) = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, &v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
        let sign = if col[imax] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..d {
            projection[[r, j]] = sign * col[j];
        }
    }
    Ok(PcaModel {
        mean,
        projection,
        component: component.to_string(),
    })
}

/// Mean squared reconstruction error of `rows` under `model`.
pub fn reconstruction_error(model: &PcaModel, rows: ArrayView2<'_, f32>) -> f64 {
    let total: f64 = rows
        .outer_iter()
        .map(|r| {
            let x = r.as_slice().expect("standard layout");
            let back = model.reconstruct(&model.project(x));
            x.iter().zip(&back).map(|(&a, b)| (a as f64 - b).powi(2)).sum::<f64>()
        })
        .sum();
    total / rows.nrows() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian(n: usize, d: usize, seed: u64) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, d), |_| {
            let v: f64 = StandardNormal.sample(&mut rng);
            v as f32
        })
    }

    #[test]
    fn orthonormal_rows() {
        let x = gaussian(500, 40, 1);
        let m = pca_fit(x.view(), 24, 3, "c").unwrap();
        let g = m.projection.dot(&m.projection.t());
        for i in 0..24 {
            for j in 0..24 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn exact_subspace_reconstructs() {
        // 24 informative dims followed by 6 zero dims
        let mut x = Array2::<f32>::zeros((300, 30));
        x.slice_mut(ndarray::s![.., ..24]).assign(&gaussian(300, 24, 5));
        let m = pca_fit(x.view(), 24, 0, "traj").unwrap();
        assert!(reconstruction_error(&m, x.view()) < 1e-8);
    }

    #[test]
    fn rank_deficient_rejected() {
        let mut x = Array2::<f32>::zeros((300, 30));
        x.slice_mut(ndarray::s![.., ..20]).assign(&gaussian(300, 20, 5));
        assert!(matches!(pca_fit(x.view(), 24, 0, "c"), Err(Error::RankDeficient { .. })));
        assert!(pca_fit(gaussian(10, 30, 0).view(), 24, 0, "c").is_err());
    }

    #[test]
    fn projection_is_non_expansive() {
        let x = gaussian(400, 30, 9);
        let m = pca_fit(x.view(), 24, 1, "c").unwrap();
        for r in x.outer_iter().take(50) {
            let v = r.as_slice().unwrap();
            let back = m.reconstruct(&m.project(v));
            let centered: f64 = v.iter().zip(m.mean.iter()).map(|(&a, b)| (a as f64 - b).powi(2)).sum();
            let proj: f64 = back.iter().zip(m.mean.iter()).map(|(a, b)| (a - b).powi(2)).sum();
            assert!(proj <= centered + 1e-9);
        }
    }
}
