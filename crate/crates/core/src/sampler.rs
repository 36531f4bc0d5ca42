//! Memory-bounded feature sampling for vocabulary learning.
//!
//! The mean feature count per video fixes how many videos fit in the memory
//! budget (`V_max`). Balanced sampling (1a) draws an equal number of videos per
//! class and at most `⌊μ⌋` features per video, then a class-balanced final
//! subsample. Uniform sampling (1b) draws videos from the whole training set,
//! loads all of their features and subsamples uniformly.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use byteorder::{LittleEndian, WriteBytesExt};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layout::ComponentLayout;
use crate::manifest::DatasetManifest;
use crate::rng::{stream, Stage};
use crate::store::{read_all, read_selected, FeatureStream};

/// Hard ceiling on the final pool size.
pub const MAX_POOL: usize = 1_000_000;
/// Pool rows allowed per cluster centre.
pub const ROWS_PER_CLUSTER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMode {
    /// 1a: class-balanced videos and features.
    Balanced,
    /// 1b: uniform over the training set.
    Uniform,
}

impl SamplingMode {
    pub fn tag(self) -> &'static str {
        match self {
            SamplingMode::Balanced => "1a",
            SamplingMode::Uniform => "1b",
        }
    }
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Balanced => "balanced",
            SamplingMode::Uniform => "uniform",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "balanced" | "1a" => Ok(SamplingMode::Balanced),
            "uniform" | "1b" => Ok(SamplingMode::Uniform),
            _ => Err(Error::InvalidArgument(format!("unknown sampling mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    pub memory_gb: f64,
    pub k: usize,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.memory_gb.is_finite() && self.memory_gb > 0.0) {
            return Err(Error::InvalidArgument("memory budget must be positive".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        Ok(())
    }
}

/// Where one pool row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Provenance {
    /// Index into [`FeaturePool::video_ids`].
    pub video: u32,
    pub class: u32,
}

/// Sampled feature rows with per-row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePool {
    pub rows: Array2<f32>,
    pub provenance: Vec<Provenance>,
    pub video_ids: Vec<String>,
    pub num_classes: usize,
}

impl FeaturePool {
    pub fn len(&self) -> usize {
        self.rows.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.nrows() == 0
    }

    pub fn dims(&self) -> usize {
        self.rows.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f32> {
        self.rows.view()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for p in &self.provenance {
            counts[p.class as usize] += 1;
        }
        counts
    }

    /// Row indices grouped by class.
    pub fn rows_by_class(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_classes];
        for (i, p) in self.provenance.iter().enumerate() {
            groups[p.class as usize].push(i);
        }
        groups
    }

    /// New pool holding the given rows, in the given order. The video table
    /// is compacted to the videos still referenced.
    pub fn select(&self, rows: &[usize]) -> FeaturePool {
        let mut remap = vec![u32::MAX; self.video_ids.len()];
        let mut video_ids = Vec::new();
        let provenance = rows
            .iter()
            .map(|&r| {
                let p = self.provenance[r];
                let slot = &mut remap[p.video as usize];
                if *slot == u32::MAX {
                    *slot = video_ids.len() as u32;
                    video_ids.push(self.video_ids[p.video as usize].clone());
                }
                Provenance { video: *slot, class: p.class }
            })
            .collect();
        FeaturePool {
            rows: self.rows.select(Axis(0), rows),
            provenance,
            video_ids,
            num_classes: self.num_classes,
        }
    }

    /// Writes rows in the feature-file format to `path` and provenance to
    /// `<path>.prov`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for &v in self.rows.iter() {
            w.write_f32::<LittleEndian>(v).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;

        let prov = provenance_path(path);
        let file = File::create(&prov).map_err(|e| Error::io(&prov, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(&prov, e);
        writeln!(w, "# dims {} classes {}", self.dims(), self.num_classes).map_err(io)?;
        for p in &self.provenance {
            writeln!(w, "{}\t{}", self.video_ids[p.video as usize], p.class).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<FeaturePool> {
        let prov = provenance_path(path);
        let file = File::open(&prov).map_err(|e| Error::io(&prov, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty provenance file".into()))?
            .map_err(|e| Error::io(&prov, e))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (dims, num_classes) = match fields.as_slice() {
            ["#", "dims", d, "classes", c] => (
                d.parse().map_err(|_| Error::Format("bad dims".into()))?,
                c.parse().map_err(|_| Error::Format("bad classes".into()))?,
            ),
            _ => return Err(Error::Format(format!("bad provenance header {header:?}"))),
        };
        let mut video_ids: Vec<String> = Vec::new();
        let mut slot = std::collections::HashMap::new();
        let mut provenance = Vec::new();
        for line in lines {
            let line = line.map_err(|e| Error::io(&prov, e))?;
            let (id, class) = line
                .split_once('\t')
                .ok_or_else(|| Error::Format(format!("bad provenance line {line:?}")))?;
            let class: u32 = class.parse().map_err(|_| Error::Format("bad class".into()))?;
            let video = *slot.entry(id.to_string()).or_insert_with(|| {
                video_ids.push(id.to_string());
                (video_ids.len() - 1) as u32
            });
            provenance.push(Provenance { video, class });
        }
        let layout = ComponentLayout::new(vec![("pool".into(), dims)])?;
        let mut s = FeatureStream::open_path(path, &layout)?;
        if s.remaining() != provenance.len() {
            return Err(Error::CountMismatch {
                path: path.to_path_buf(),
                declared: provenance.len(),
                actual: s.remaining(),
            });
        }
        let mut rows = Array2::<f32>::zeros((provenance.len(), dims));
        for mut row in rows.rows_mut() {
            s.read_into(row.as_slice_mut().expect("standard layout"))?;
        }
        Ok(FeaturePool {
            rows,
            provenance,
            video_ids,
            num_classes,
        })
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f32> {
        self.rows.row(i)
    }
}

fn provenance_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".prov");
    PathBuf::from(s)
}

/// Final pool size cap for `k` clusters: `min(10⁶, k × 10⁴)`.
pub fn pool_cap(k: usize) -> usize {
    MAX_POOL.min(k.saturating_mul(ROWS_PER_CLUSTER))
}

/// Mean feature count over every video in the manifest.
pub fn mean_feature_count(manifest: &DatasetManifest) -> Result<f64> {
    if manifest.videos.is_empty() {
        return Err(Error::Empty("manifest has no videos"));
    }
    let sum: u64 = manifest.videos.iter().map(|v| v.feature_count as u64).sum();
    Ok(sum as f64 / manifest.videos.len() as f64)
}

/// `⌊M / (μ × S)⌋`: how many average videos fit in `memory_gb`.
pub fn compute_vmax(memory_gb: f64, mean_count: f64, record_gb: f64) -> Result<usize> {
    for (name, v) in [("memory budget", memory_gb), ("mean feature count", mean_count), ("record size", record_gb)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
        }
    }
    Ok((memory_gb / (mean_count * record_gb)).floor() as usize)
}

/// Picks training videos of `split`. Returns sorted manifest indices.
pub fn sample_videos(
    manifest: &DatasetManifest,
    split: usize,
    v_max: usize,
    mode: SamplingMode,
    seed: u64,
) -> Result<Vec<usize>> {
    if v_max == 0 {
        return Err(Error::InvalidArgument("V_max is 0".into()));
    }
    let train = &manifest.split(split)?.train;
    let mut rng = stream(seed, Stage::SampleVideos, split as u64);
    let mut chosen = match mode {
        SamplingMode::Balanced => {
            let c = manifest.num_classes();
            let per_class = v_max / c;
            if per_class == 0 {
                return Err(Error::InvalidArgument(format!(
                    "V_max = {v_max} is smaller than the {c} classes"
                )));
            }
            let mut by_class = vec![Vec::new(); c];
            for &t in train {
                by_class[manifest.videos[t].class_label].push(t);
            }
            let mut out = Vec::new();
            for (cls, members) in by_class.iter().enumerate() {
                if members.is_empty() {
                    return Err(Error::InvalidManifest(format!(
                        "class {cls} has no training video in split {split}"
                    )));
                }
                let take = per_class.min(members.len());
                out.extend(index::sample(&mut rng, members.len(), take).into_iter().map(|i| members[i]));
            }
            out
        }
        SamplingMode::Uniform => {
            let take = v_max.min(train.len());
            index::sample(&mut rng, train.len(), take)
                .into_iter()
                .map(|i| train[i])
                .collect()
        }
    };
    chosen.sort_unstable();
    Ok(chosen)
}

/// Loads features of the selected videos: at most `⌊μ⌋` uniformly chosen
/// features per video in balanced mode, all features in uniform mode.
/// Rows appear in the order of `selected`.
pub fn load_pool(
    manifest: &DatasetManifest,
    selected: &[usize],
    mode: SamplingMode,
    mean_count: f64,
    seed: u64,
) -> Result<FeaturePool> {
    if selected.is_empty() {
        return Err(Error::Empty("no videos selected"));
    }
    let layout = &manifest.layout;
    let cap = mean_count.floor() as usize;
    let chunks: Vec<Vec<f32>> = selected
        .par_iter()
        .map(|&vi| {
            let entry = &manifest.videos[vi];
            let out = match mode {
                SamplingMode::Balanced if entry.feature_count > cap => {
                    let mut rng = stream(seed, Stage::LoadPool, vi as u64);
                    let mut idx = index::sample(&mut rng, entry.feature_count, cap).into_vec();
                    idx.sort_unstable();
                    let mut buf = Vec::with_capacity(cap * layout.total_dims());
                    read_selected(entry, layout, &idx, &mut buf).map(|_| buf)
                }
                _ => read_all(entry, layout),
            };
            out.map_err(|e| e.in_video(&entry.video_id))
        })
        .collect::<Result<_>>()?;

    let dims = layout.total_dims();
    let n: usize = chunks.iter().map(|c| c.len() / dims).sum();
    let mut flat = Vec::with_capacity(n * dims);
    let mut provenance = Vec::with_capacity(n);
    let mut video_ids = Vec::with_capacity(selected.len());
    for (slot, (&vi, chunk)) in selected.iter().zip(&chunks).enumerate() {
        let entry = &manifest.videos[vi];
        video_ids.push(entry.video_id.clone());
        flat.extend_from_slice(chunk);
        provenance.extend(std::iter::repeat_n(
            Provenance {
                video: slot as u32,
                class: entry.class_label as u32,
            },
            chunk.len() / dims,
        ));
    }
    drop(chunks);
    let rows = Array2::from_shape_vec((n, dims), flat).expect("row-major buffer");
    Ok(FeaturePool {
        rows,
        provenance,
        video_ids,
        num_classes: manifest.num_classes(),
    })
}

/// Splits `total` rows over classes with availability `avail`, as evenly as
/// the caps allow. Leftover single rows go to randomly chosen classes.
pub(crate) fn balanced_allocation<R: Rng>(avail: &[usize], total: usize, rng: &mut R) -> Vec<usize> {
    let mut alloc = vec![0usize; avail.len()];
    let mut remaining = total.min(avail.iter().sum());
    let mut active: Vec<usize> = (0..avail.len()).filter(|&c| avail[c] > 0).collect();
    while remaining > 0 && !active.is_empty() {
        let share = remaining / active.len();
        if share == 0 {
            for i in index::sample(rng, active.len(), remaining) {
                alloc[active[i]] += 1;
            }
            break;
        }
        for &c in &active {
            let give = share.min(avail[c] - alloc[c]);
            alloc[c] += give;
            remaining -= give;
        }
        active.retain(|&c| alloc[c] < avail[c]);
    }
    alloc
}

/// Reduces the pool to `min(10⁶, K × 10⁴, |pool|)` rows, class-balanced in
/// balanced mode, uniformly otherwise. Surviving rows keep their relative order.
pub fn final_subsample(pool: &FeaturePool, k: usize, mode: SamplingMode, seed: u64) -> Result<FeaturePool> {
    if pool.is_empty() {
        return Err(Error::Empty("feature pool is empty"));
    }
    let target = pool_cap(k).min(pool.len());
    let mut rng = stream(seed, Stage::FinalSubsample, k as u64);
    let mut keep: Vec<usize> = match mode {
        SamplingMode::Balanced => {
            let groups = pool.rows_by_class();
            let avail: Vec<usize> = groups.iter().map(Vec::len).collect();
            let alloc = balanced_allocation(&avail, target, &mut rng);
            let mut keep = Vec::with_capacity(target);
            for (members, &take) in groups.iter().zip(&alloc) {
                keep.extend(index::sample(&mut rng, members.len(), take).into_iter().map(|i| members[i]));
            }
            keep
        }
        SamplingMode::Uniform => index::sample(&mut rng, pool.len(), target).into_vec(),
    };
    keep.sort_unstable();
    Ok(pool.select(&keep))
}

/// Runs video selection, loading and the final subsample for one split.
pub fn sample_pool(manifest: &DatasetManifest, split: usize, config: &SamplingConfig) -> Result<FeaturePool> {
    let loaded = load_split_pool(manifest, split, config.mode, config.memory_gb, config.seed)?;
    final_subsample(&loaded, config.k, config.mode, config.seed)
}

/// Video selection and loading only (the K-independent part of sampling).
pub fn load_split_pool(
    manifest: &DatasetManifest,
    split: usize,
    mode: SamplingMode,
    memory_gb: f64,
    seed: u64,
) -> Result<FeaturePool> {
    let mean = mean_feature_count(manifest)?;
    let v_max = compute_vmax(memory_gb, mean, manifest.layout.record_gb())?;
    if v_max == 0 {
        return Err(Error::BudgetTooSmall {
            memory_gb,
            mean_count: mean,
        });
    }
    let videos = sample_videos(manifest, split, v_max, mode, seed)?;
    load_pool(manifest, &videos, mode, mean, seed)
}
