//! Lloyd k-means with random restarts.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Stage};

/// Number of independent restarts; the lowest-error run is kept.
pub const DEFAULT_RESTARTS: usize = 8;
/// Lloyd iteration cap per restart.
pub const MAX_ITERATIONS: usize = 300;

const CHUNK: usize = 1024;

/// K centroids learned from one slice of the feature pool.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Array2<f64>,
    /// Component name, or `"joint"`.
    pub component: String,
    pub category: Option<usize>,
    /// Sum of squared distances of the training rows to their nearest centroid.
    pub training_error: f64,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dims(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(self.centroids.view(), x)
    }
}

/// Result of one Lloyd run.
#[derive(Debug, Clone)]
pub struct LloydRun {
    pub centroids: Array2<f64>,
    pub labels: Vec<usize>,
    pub error: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Squared Euclidean distance over equal-length slices.
pub(crate) fn sq_dist_slice(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, ra) = a.split_at(a.len() - a.len() % 4);
    let (cb, rb) = b.split_at(ca.len());
    for (x, y) in ca.chunks_exact(4).zip(cb.chunks_exact(4)) {
        for l in 0..4 {
            let d = x[l] - y[l];
            acc[l] += d * d;
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Index and squared distance of the closest centroid; ties go to the
/// lowest index.
pub fn nearest(centroids: ArrayView2<'_, f64>, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    let d = centroids.ncols();
    match centroids.as_slice() {
        Some(flat) => {
            for (k, c) in flat.chunks_exact(d.max(1)).enumerate() {
                let dist = sq_dist_slice(x, c);
                if dist < best.1 {
                    best = (k, dist);
                }
            }
        }
        None => {
            for (k, c) in centroids.outer_iter().enumerate() {
                let dist = sq_dist_slice(x, &c.to_vec());
                if dist < best.1 {
                    best = (k, dist);
                }
            }
        }
    }
    best
}

fn row_f64(row: ArrayView1<'_, f32>, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend(row.iter().map(|&v| v as f64));
}

/// Nearest-centroid assignment of every row, in parallel over fixed chunks.
pub fn assign(rows: ArrayView2<'_, f32>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    let n = rows.nrows();
    let mut labels = vec![0usize; n];
    let mut dists = vec![0f64; n];
    labels
        .par_chunks_mut(CHUNK)
        .zip(dists.par_chunks_mut(CHUNK))
        .enumerate()
        .for_each(|(ci, (lab, dis))| {
            let mut buf = Vec::with_capacity(rows.ncols());
            for (j, (l, d)) in lab.iter_mut().zip(dis.iter_mut()).enumerate() {
                row_f64(rows.row(ci * CHUNK + j), &mut buf);
                let (k, dd) = nearest(centroids, &buf);
                *l = k;
                *d = dd;
            }
        });
    (labels, dists)
}

/// Per-cluster sums and counts. Chunk partials are reduced in chunk order so
/// the result does not depend on thread scheduling.
fn cluster_sums(rows: ArrayView2<'_, f32>, labels: &[usize], k: usize) -> (Array2<f64>, Vec<usize>) {
    let d = rows.ncols();
    let partials: Vec<(Array2<f64>, Vec<usize>)> = labels
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, lab)| {
            let mut sums = Array2::<f64>::zeros((k, d));
            let mut counts = vec![0usize; k];
            for (j, &l) in lab.iter().enumerate() {
                let row = rows.row(ci * CHUNK + j);
                let mut s = sums.row_mut(l);
                for (acc, &v) in s.iter_mut().zip(row.iter()) {
                    *acc += v as f64;
                }
                counts[l] += 1;
            }
            (sums, counts)
        })
        .collect();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (s, c) in partials {
        sums += &s;
        for (a, b) in counts.iter_mut().zip(c) {
            *a += b;
        }
    }
    (sums, counts)
}

fn check_input(rows: ArrayView2<'_, f32>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if rows.nrows() < k {
        return Err(Error::TooFewRows {
            needed: k,
            got: rows.nrows(),
        });
    }
    if let Some(pos) = rows.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            record: pos / rows.ncols().max(1),
            dim: pos % rows.ncols().max(1),
        });
    }
    Ok(())
}

/// Picks `k` rows with pairwise distinct values, in random order.
fn init_centroids(rows: ArrayView2<'_, f32>, k: usize, seed: u64, restart: usize) -> Result<Array2<f64>> {
    let n = rows.nrows();
    let mut rng = stream(seed, Stage::KMeans, restart as u64);
    let mut seen: HashSet<Vec<u32>> = HashSet::with_capacity(k);
    let mut picked = Vec::with_capacity(k);
    // most draws succeed immediately; fall back to a full permutation when
    // the data holds many duplicate rows
    for i in index::sample(&mut rng, n, k) {
        if seen.insert(rows.row(i).iter().map(|v| v.to_bits()).collect()) {
            picked.push(i);
        }
    }
    if picked.len() < k {
        for i in index::sample(&mut rng, n, n) {
            if picked.len() == k {
                break;
            }
            if seen.insert(rows.row(i).iter().map(|v| v.to_bits()).collect()) {
                picked.push(i);
            }
        }
    }
    if picked.len() < k {
        return Err(Error::Degenerate(format!(
            "only {} distinct rows for K = {k}",
            picked.len()
        )));
    }
    let mut c = Array2::<f64>::zeros((k, rows.ncols()));
    for (j, &i) in picked.iter().enumerate() {
        c.row_mut(j).assign(&rows.row(i).mapv(|v| v as f64));
    }
    Ok(c)
}

/// One Lloyd run from random distinct rows. Stops when the assignment no
/// longer changes or after [`MAX_ITERATIONS`]. Empty clusters are re-seeded
/// from the points farthest from their current centroid.
pub fn lloyd(rows: ArrayView2<'_, f32>, k: usize, seed: u64, restart: usize) -> Result<LloydRun> {
    check_input(rows, k)?;
    let mut centroids = init_centroids(rows, k, seed, restart)?;
    let mut prev: Option<Vec<usize>> = None;
    let mut iterations = 0;
    loop {
        let (labels, dists) = assign(rows, centroids.view());
        let converged = prev.as_ref() == Some(&labels);
        if converged || iterations == MAX_ITERATIONS {
            return Ok(LloydRun {
                centroids,
                error: dists.iter().sum(),
                labels,
                iterations,
                converged,
            });
        }
        iterations += 1;
        let (sums, counts) = cluster_sums(rows, &labels, k);
        let mut far: Option<Vec<usize>> = None;
        let mut next_far = 0;
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                centroids.row_mut(j).assign(&sums.row(j).mapv(|s| s * inv));
            } else {
                let order = far.get_or_insert_with(|| {
                    let mut o: Vec<usize> = (0..rows.nrows()).collect();
                    o.sort_by(|&a, &b| dists[b].total_cmp(&dists[a]).then(a.cmp(&b)));
                    o
                });
                let i = order[next_far.min(order.len() - 1)];
                next_far += 1;
                centroids.row_mut(j).assign(&rows.row(i).mapv(|v| v as f64));
            }
        }
        prev = Some(labels);
    }
}

/// Every restart's result, in restart order.
pub fn kmeans_restarts(
    rows: ArrayView2<'_, f32>,
    k: usize,
    restarts: usize,
    seed: u64,
) -> Result<Vec<LloydRun>> {
    if restarts == 0 {
        return Err(Error::InvalidArgument("need at least one restart".into()));
    }
    (0..restarts).map(|r| lloyd(rows, k, seed, r)).collect()
}

/// Best of `restarts` Lloyd runs by training error (first run wins ties).
pub fn kmeans_fit(rows: ArrayView2<'_, f32>, k: usize, restarts: usize, seed: u64) -> Result<Codebook> {
    let runs = kmeans_restarts(rows, k, restarts, seed)?;
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.error < a.error { b } else { a })
        .expect("at least one restart");
    if !best.converged {
        log::debug!("k-means hit the iteration cap (K = {k}, n = {})", rows.nrows());
    }
    Ok(Codebook {
        centroids: best.centroids,
        component: "joint".into(),
        category: None,
        training_error: best.error,
    })
}
