//! Synthetic datasets with tunable class separability and count skew.
//!
//! Each class owns a small Gaussian mixture ("words") per descriptor
//! component; a pool of shared words is common to all classes. A feature
//! picks, independently per component, a class word with probability
//! `class_specific_fraction` or a shared word otherwise, then adds isotropic
//! noise.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::layout::ComponentLayout;
use crate::manifest::{DatasetManifest, Split, VideoEntry};
use crate::rng::{stream, Stage};
use crate::store::write_features;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub name: String,
    pub layout: ComponentLayout,
    pub classes: usize,
    /// One entry per class, or a single entry applied to every class.
    pub videos_per_class: Vec<usize>,
    /// Base number of features per video.
    pub features_per_video: usize,
    /// Per-class multiplier of `features_per_video`; empty means all 1.
    pub class_length_scale: Vec<f64>,
    /// Counts are drawn uniformly from `mean × [1 - jitter, 1 + jitter]`.
    pub count_jitter: f64,
    pub words_per_class: usize,
    pub shared_words: usize,
    pub class_specific_fraction: f64,
    /// Per-component override of `class_specific_fraction`; empty means none.
    pub component_class_fraction: Vec<f64>,
    /// Per-component multiplier of centres and noise; empty means all 1.
    pub component_scale: Vec<f64>,
    /// Standard deviation of word centres.
    pub separation: f64,
    /// Within-word standard deviation.
    pub noise: f64,
    pub splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            layout: ComponentLayout::default(),
            classes: 6,
            videos_per_class: vec![40],
            features_per_video: 100,
            class_length_scale: Vec::new(),
            count_jitter: 0.0,
            words_per_class: 12,
            shared_words: 8,
            class_specific_fraction: 0.5,
            component_class_fraction: Vec::new(),
            component_scale: Vec::new(),
            separation: 1.0,
            noise: 0.5,
            splits: 1,
            train_fraction: 0.5,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synth spec: {m}")));
        if self.classes < 2 {
            return bad("need at least 2 classes");
        }
        if self.videos_per_class.len() != 1 && self.videos_per_class.len() != self.classes {
            return bad("videos_per_class must have 1 or C entries");
        }
        if self.videos_per_class.contains(&0) {
            return bad("every class needs at least one video");
        }
        if !self.class_length_scale.is_empty() && self.class_length_scale.len() != self.classes {
            return bad("class_length_scale must be empty or have C entries");
        }
        if self.class_length_scale.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return bad("class_length_scale entries must be positive");
        }
        if !(0.0..1.0).contains(&self.count_jitter) {
            return bad("count_jitter must lie in [0, 1)");
        }
        if self.words_per_class == 0 {
            return bad("words_per_class must be positive");
        }
        if !(0.0..=1.0).contains(&self.class_specific_fraction) {
            return bad("class_specific_fraction must lie in [0, 1]");
        }
        let parts = self.layout.len();
        if !self.component_class_fraction.is_empty() && self.component_class_fraction.len() != parts {
            return bad("component_class_fraction must be empty or have one entry per component");
        }
        if self.component_class_fraction.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("component_class_fraction entries must lie in [0, 1]");
        }
        if !self.component_scale.is_empty() && self.component_scale.len() != parts {
            return bad("component_scale must be empty or have one entry per component");
        }
        if self.component_scale.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return bad("component_scale entries must be positive");
        }
        if self.shared_words == 0 && (0..parts).any(|i| self.class_fraction(i) < 1.0) {
            return bad("shared words required when class_specific_fraction < 1");
        }
        if !(self.separation.is_finite() && self.separation >= 0.0) {
            return bad("separation must be non-negative");
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return bad("noise must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train_fraction must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn class_fraction(&self, component: usize) -> f64 {
        self.component_class_fraction
            .get(component)
            .copied()
            .unwrap_or(self.class_specific_fraction)
    }

    pub fn scale(&self, component: usize) -> f64 {
        self.component_scale.get(component).copied().unwrap_or(1.0)
    }

    pub fn videos_in_class(&self, c: usize) -> usize {
        if self.videos_per_class.len() == 1 {
            self.videos_per_class[0]
        } else {
            self.videos_per_class[c]
        }
    }

    /// Expected feature count of a video in class `c`.
    pub fn mean_count(&self, c: usize) -> f64 {
        let scale = self.class_length_scale.get(c).copied().unwrap_or(1.0);
        self.features_per_video as f64 * scale
    }
}

/// Word centres: `[component][word] -> centre`, class words first
/// (`class * words_per_class + w`), shared words after.
struct WordModel {
    centres: Vec<Vec<Vec<f32>>>,
}

impl WordModel {
    fn new(spec: &SynthSpec) -> Self {
        let mut rng = stream(spec.seed, Stage::Synth, u32::MAX as u64);
        let normal = Normal::new(0.0f64, spec.separation).unwrap();
        let words = spec.classes * spec.words_per_class + spec.shared_words;
        let centres = spec
            .layout
            .components()
            .iter()
            .enumerate()
            .map(|(ci, comp)| {
                let scale = spec.scale(ci);
                (0..words)
                    .map(|_| {
                        (0..comp.dims)
                            .map(|_| (scale * normal.sample(&mut rng)) as f32)
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self { centres }
    }
}

/// Generates the dataset under `dir`: feature files in `dir/features/` and
/// the manifest at `dir/manifest.txt`. Output is a pure function of `spec`.
pub fn synth_generate(spec: &SynthSpec, dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let feat_dir = dir.join("features");
    std::fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let words = WordModel::new(spec);

    let mut plan: Vec<(String, usize)> = Vec::new();
    for c in 0..spec.classes {
        for v in 0..spec.videos_in_class(c) {
            plan.push((format!("c{c:02}_v{v:04}"), c));
        }
    }

    let videos: Vec<VideoEntry> = plan
        .par_iter()
        .enumerate()
        .map(|(idx, (id, class))| {
            let mut rng = stream(spec.seed, Stage::Synth, idx as u64);
            let mean = spec.mean_count(*class);
            let count = if spec.count_jitter > 0.0 {
                let lo = mean * (1.0 - spec.count_jitter);
                let hi = mean * (1.0 + spec.count_jitter);
                rng.random_range(lo..=hi).round() as usize
            } else {
                mean.round() as usize
            };
            let path: PathBuf = feat_dir.join(format!("{id}.bin"));
            let records = VideoFeatures {
                spec,
                words: &words,
                class: *class,
                rng,
                left: count,
            };
            write_features(id, *class, &path, &spec.layout, records)
        })
        .collect::<Result<_>>()?;

    let mut splits = Vec::with_capacity(spec.splits);
    for s in 0..spec.splits.max(1) {
        let mut rng = stream(spec.seed, Stage::Synth, (1u64 << 31) + s as u64);
        let mut split = Split::default();
        for c in 0..spec.classes {
            let mut members: Vec<usize> = (0..videos.len())
                .filter(|&i| videos[i].class_label == c)
                .collect();
            members.shuffle(&mut rng);
            let n = members.len();
            let mut n_train = (n as f64 * spec.train_fraction).round() as usize;
            n_train = n_train.clamp(1, n.saturating_sub(1).max(1));
            split.train.extend_from_slice(&members[..n_train]);
            split.test.extend_from_slice(&members[n_train..]);
        }
        split.train.sort_unstable();
        split.test.sort_unstable();
        splits.push(split);
    }

    let manifest = DatasetManifest {
        name: spec.name.clone(),
        layout: spec.layout.clone(),
        class_names: (0..spec.classes).map(|c| format!("class{c:02}")).collect(),
        videos,
        splits,
    };
    manifest.validate()?;
    manifest.save(&dir.join("manifest.txt"))?;
    Ok(manifest)
}

struct VideoFeatures<'a> {
    spec: &'a SynthSpec,
    words: &'a WordModel,
    class: usize,
    rng: rand_chacha::ChaCha8Rng,
    left: usize,
}

impl Iterator for VideoFeatures<'_> {
    type Item = Vec<f32>;

    fn next(&mut self) -> Option<Vec<f32>> {
        if self.left == 0 {
            return None;
        }
        self.left -= 1;
        let spec = self.spec;
        let noise = Normal::new(0.0f64, spec.noise).unwrap();
        let mut out = Vec::with_capacity(spec.layout.total_dims());
        for (ci, comp_words) in self.words.centres.iter().enumerate() {
            let scale = spec.scale(ci);
            let word = if self.rng.random_bool(spec.class_fraction(ci)) {
                self.class * spec.words_per_class + self.rng.random_range(0..spec.words_per_class)
            } else {
                spec.classes * spec.words_per_class + self.rng.random_range(0..spec.shared_words)
            };
            for &mu in &comp_words[word] {
                out.push(mu + (scale * noise.sample(&mut self.rng)) as f32);
            }
        }
        Some(out)
    }
}
