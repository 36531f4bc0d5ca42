//! Diagonal-covariance Gaussian mixtures fitted by EM, initialized from
//! k-means.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use super::kmeans::{assign, kmeans_fit, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::rng::derive;

pub const MAX_EM_ITERATIONS: usize = 100;
pub const REL_TOLERANCE: f64 = 1e-6;
/// Variance floor as a fraction of the per-dimension data variance.
pub const VARIANCE_FLOOR_FRACTION: f64 = 1e-4;
/// Components whose weight falls below this are degenerate.
pub const MIN_WEIGHT: f64 = 1e-8;
const ABS_VARIANCE_FLOOR: f64 = 1e-10;
const CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub weights: Array1<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
    pub component: String,
}

/// A fitted model together with its EM trace.
#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean log-likelihood per row: the initial value, then one per EM step.
    pub log_likelihoods: Vec<f64>,
    pub variance_floor: Array1<f64>,
    pub reseeded: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.means.ncols()
    }

    fn log_norms(&self) -> Vec<f64> {
        let d = self.dims() as f64;
        self.variances
            .outer_iter()
            .zip(self.weights.iter())
            .map(|(v, &w)| w.ln() - 0.5 * (d * (2.0 * PI).ln() + v.iter().map(|s| s.ln()).sum::<f64>()))
            .collect()
    }

    /// Writes posterior responsibilities of `x` into `out` and returns
    /// `log p(x)`.
    pub fn posteriors_into(&self, x: &[f64], out: &mut [f64]) -> f64 {
        let norms = self.log_norms();
        self.posteriors_with(&norms, x, out)
    }

    fn posteriors_with(&self, norms: &[f64], x: &[f64], out: &mut [f64]) -> f64 {
        let mut max = f64::NEG_INFINITY;
        for (k, o) in out.iter_mut().enumerate() {
            let m = self.means.row(k);
            let v = self.variances.row(k);
            let q: f64 = x
                .iter()
                .zip(m.iter().zip(v.iter()))
                .map(|(&xi, (&mi, &vi))| (xi - mi) * (xi - mi) / vi)
                .sum();
            *o = norms[k] - 0.5 * q;
            max = max.max(*o);
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        max + total.ln()
    }

    pub fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k()];
        self.posteriors_into(x, &mut out);
        out
    }

    /// Mean log-likelihood of the rows.
    pub fn mean_log_likelihood(&self, rows: ArrayView2<'_, f32>) -> f64 {
        self.e_step(rows).0 / rows.nrows() as f64
    }

    /// Total log-likelihood and sufficient statistics (Σγ, Σγx, Σγx²).
    fn e_step(&self, rows: ArrayView2<'_, f32>) -> (f64, Stats) {
        let k = self.k();
        let d = self.dims();
        let norms = self.log_norms();
        let partials: Vec<(f64, Stats)> = rows
            .axis_chunks_iter(Axis(0), CHUNK)
            .into_par_iter()
            .map(|block| {
                let mut st = Stats::zeros(k, d);
                let mut ll = 0.0;
                let mut x = vec![0f64; d];
                let mut g = vec![0f64; k];
                for r in block.outer_iter() {
                    for (xi, &v) in x.iter_mut().zip(r.iter()) {
                        *xi = v as f64;
                    }
                    ll += self.posteriors_with(&norms, &x, &mut g);
                    for (j, &gj) in g.iter().enumerate() {
                        st.n[j] += gj;
                        let mut s1 = st.sx.row_mut(j);
                        for (a, &xi) in s1.iter_mut().zip(&x) {
                            *a += gj * xi;
                        }
                        let mut s2 = st.sxx.row_mut(j);
                        for (a, &xi) in s2.iter_mut().zip(&x) {
                            *a += gj * xi * xi;
                        }
                    }
                }
                (ll, st)
            })
            .collect();
        let mut total = Stats::zeros(k, d);
        let mut ll = 0.0;
        for (l, s) in partials {
            ll += l;
            total.add(&s);
        }
        (ll, total)
    }
}

struct Stats {
    n: Vec<f64>,
    sx: Array2<f64>,
    sxx: Array2<f64>,
}

impl Stats {
    fn zeros(k: usize, d: usize) -> Self {
        Self {
            n: vec![0.0; k],
            sx: Array2::zeros((k, d)),
            sxx: Array2::zeros((k, d)),
        }
    }

    fn add(&mut self, o: &Stats) {
        for (a, b) in self.n.iter_mut().zip(&o.n) {
            *a += b;
        }
        self.sx += &o.sx;
        self.sxx += &o.sxx;
    }
}

fn variance_floor(rows: ArrayView2<'_, f32>) -> Array1<f64> {
    let x = rows.mapv(|v| v as f64);
    x.var_axis(Axis(0), 0.0)
        .mapv(|v| (VARIANCE_FLOOR_FRACTION * v).max(ABS_VARIANCE_FLOOR))
}

fn init_from_kmeans(rows: ArrayView2<'_, f32>, k: usize, seed: u64, floor: &Array1<f64>, component: &str) -> Result<GmmModel> {
    let cb = kmeans_fit(rows, k, DEFAULT_RESTARTS, seed)?;
    let (labels, _) = assign(rows, cb.centroids.view());
    let d = rows.ncols();
    let mut counts = vec![0usize; k];
    let mut sq = Array2::<f64>::zeros((k, d));
    for (r, &l) in rows.outer_iter().zip(&labels) {
        counts[l] += 1;
        let c = cb.centroids.row(l);
        let mut s = sq.row_mut(l);
        for ((a, &v), &m) in s.iter_mut().zip(r.iter()).zip(c.iter()) {
            *a += (v as f64 - m).powi(2);
        }
    }
    let n = rows.nrows() as f64;
    let weights = Array1::from_iter(counts.iter().map(|&c| c as f64 / n));
    let mut variances = sq;
    for (j, mut v) in variances.outer_iter_mut().enumerate() {
        let c = counts[j].max(1) as f64;
        for (vi, &f) in v.iter_mut().zip(floor.iter()) {
            *vi = (*vi / c).max(f);
        }
    }
    Ok(GmmModel {
        weights,
        means: cb.centroids,
        variances,
        component: component.to_string(),
    })
}

fn run_em(rows: ArrayView2<'_, f32>, mut model: GmmModel, floor: &Array1<f64>) -> (GmmModel, Vec<f64>) {
    let n = rows.nrows() as f64;
    let (mut ll, mut st) = model.e_step(rows);
    let mut trace = vec![ll / n];
    for _ in 0..MAX_EM_ITERATIONS {
        for j in 0..model.k() {
            let nj = st.n[j];
            model.weights[j] = nj / n;
            if nj <= 0.0 {
                continue;
            }
            for dd in 0..model.dims() {
                let mu = st.sx[[j, dd]] / nj;
                let var = st.sxx[[j, dd]] / nj - mu * mu;
                model.means[[j, dd]] = mu;
                model.variances[[j, dd]] = var.max(floor[dd]);
            }
        }
        let (next, next_st) = model.e_step(rows);
        trace.push(next / n);
        let rel = (next - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        st = next_st;
        if rel < REL_TOLERANCE {
            break;
        }
    }
    (model, trace)
}

/// EM for a `k`-component diagonal GMM. Degenerate solutions (a weight under
/// [`MIN_WEIGHT`]) are retried once from a different k-means seed.
pub fn gmm_fit(rows: ArrayView2<'_, f32>, k: usize, seed: u64, component: &str) -> Result<GmmFit> {
    if rows.nrows() < k {
        return Err(Error::TooFewRows {
            needed: k,
            got: rows.nrows(),
        });
    }
    let floor = variance_floor(rows);
    for attempt in 0..2u64 {
        let s = if attempt == 0 { seed } else { derive(seed, 0x6d6d) };
        let init = init_from_kmeans(rows, k, s, &floor, component)?;
        let (model, trace) = run_em(rows, init, &floor);
        if model.weights.iter().all(|&w| w >= MIN_WEIGHT) {
            return Ok(GmmFit {
                model,
                log_likelihoods: trace,
                variance_floor: floor,
                reseeded: attempt == 1,
            });
        }
        log::warn!("GMM component collapsed (K = {k}); re-seeding");
    }
    Err(Error::Degenerate(format!("GMM with K = {k} collapsed twice")))
}
