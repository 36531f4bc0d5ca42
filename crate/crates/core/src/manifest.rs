//! Dataset manifest: classes, per-video feature files and train/test splits.
//!
//! The on-disk form is tab-separated and line oriented. Each line starts with
//! a record tag; `#` starts a comment line:
//!
//! ```text
//! name    kth
//! layout  traj:30,hog:96,hof:108,mbhx:96,mbhy:96
//! class   0   boxing
//! video   v0001   0   9120    features/v0001.bin
//! split   0   train   v0001 v0002 ...
//! split   0   test    v0003 ...
//! ```
//!
//! Video columns are always `video_id, class, count, path`. Relative paths are
//! resolved against the manifest's directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layout::ComponentLayout;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoEntry {
    pub video_id: String,
    pub class_label: usize,
    pub feature_count: usize,
    pub feature_path: PathBuf,
}

/// One train/test partition, as indices into [`DatasetManifest::videos`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub layout: ComponentLayout,
    pub class_names: Vec<String>,
    pub videos: Vec<VideoEntry>,
    pub splits: Vec<Split>,
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.videos.iter().map(|v| v.class_label).collect()
    }

    pub fn split(&self, idx: usize) -> Result<&Split> {
        self.splits.get(idx).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "split {idx} requested but manifest has {}",
                self.splits.len()
            ))
        })
    }

    pub fn index_of(&self, video_id: &str) -> Option<usize> {
        self.videos.iter().position(|v| v.video_id == video_id)
    }

    /// Checks the structural invariants: unique ids, labels in range, at
    /// least two classes, disjoint splits and a training video for every
    /// class in every split.
    pub fn validate(&self) -> Result<()> {
        let c = self.num_classes();
        if c < 2 {
            return Err(Error::InvalidManifest(format!("need at least 2 classes, got {c}")));
        }
        let mut seen = HashSet::new();
        for v in &self.videos {
            if v.video_id.is_empty() || v.video_id.contains(char::is_whitespace) {
                return Err(Error::InvalidManifest(format!("bad video id {:?}", v.video_id)));
            }
            if !seen.insert(v.video_id.as_str()) {
                return Err(Error::InvalidManifest(format!("duplicate video id {}", v.video_id)));
            }
            if v.class_label >= c {
                return Err(Error::InvalidManifest(format!(
                    "video {} has class {} but only {c} classes exist",
                    v.video_id, v.class_label
                )));
            }
        }
        for (si, split) in self.splits.iter().enumerate() {
            let train: HashSet<usize> = split.train.iter().copied().collect();
            if train.len() != split.train.len() {
                return Err(Error::InvalidManifest(format!("split {si}: repeated train video")));
            }
            for &t in split.train.iter().chain(&split.test) {
                if t >= self.videos.len() {
                    return Err(Error::InvalidManifest(format!("split {si}: index {t} out of range")));
                }
            }
            if let Some(&t) = split.test.iter().find(|t| train.contains(t)) {
                return Err(Error::InvalidManifest(format!(
                    "split {si}: video {} is in both train and test",
                    self.videos[t].video_id
                )));
            }
            let mut has_train = vec![false; c];
            for &t in &split.train {
                has_train[self.videos[t].class_label] = true;
            }
            if let Some(cls) = has_train.iter().position(|h| !h) {
                return Err(Error::InvalidManifest(format!(
                    "split {si}: class {} has no training video",
                    self.class_names[cls]
                )));
            }
        }
        Ok(())
    }

    /// Serializes to the text form. Paths under `base` are written relative
    /// to it.
    pub fn to_text(&self, base: Option<&Path>) -> String {
        let mut s = String::new();
        writeln!(s, "name\t{}", self.name).unwrap();
        writeln!(s, "layout\t{}", self.layout).unwrap();
        for (i, c) in self.class_names.iter().enumerate() {
            writeln!(s, "class\t{i}\t{c}").unwrap();
        }
        for v in &self.videos {
            let p = match base {
                Some(b) => v.feature_path.strip_prefix(b).unwrap_or(&v.feature_path),
                None => &v.feature_path,
            };
            writeln!(
                s,
                "video\t{}\t{}\t{}\t{}",
                v.video_id,
                v.class_label,
                v.feature_count,
                p.display()
            )
            .unwrap();
        }
        for (i, sp) in self.splits.iter().enumerate() {
            for (kind, ids) in [("train", &sp.train), ("test", &sp.test)] {
                let names: Vec<&str> = ids.iter().map(|&t| self.videos[t].video_id.as_str()).collect();
                writeln!(s, "split\t{i}\t{kind}\t{}", names.join(" ")).unwrap();
            }
        }
        s
    }

    /// Parses the text form, resolving relative paths against `base`.
    pub fn parse(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut name = String::new();
        let mut layout = None;
        let mut classes: BTreeMap<usize, String> = BTreeMap::new();
        let mut videos = Vec::new();
        let mut raw_splits: BTreeMap<usize, (Vec<String>, Vec<String>)> = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line_no = ln + 1;
            let err = |msg: String| Error::ManifestParse { line: line_no, msg };
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            match cols[0] {
                "name" if cols.len() == 2 => name = cols[1].to_string(),
                "layout" if cols.len() == 2 => layout = Some(cols[1].parse::<ComponentLayout>()?),
                "class" if cols.len() == 3 => {
                    let idx = cols[1]
                        .parse()
                        .map_err(|_| err(format!("bad class index {:?}", cols[1])))?;
                    if classes.insert(idx, cols[2].to_string()).is_some() {
                        return Err(err(format!("class {idx} defined twice")));
                    }
                }
                "video" if cols.len() == 5 => {
                    let class_label = cols[2]
                        .parse()
                        .map_err(|_| err(format!("bad class {:?}", cols[2])))?;
                    let feature_count = cols[3]
                        .parse()
                        .map_err(|_| err(format!("bad count {:?}", cols[3])))?;
                    let p = PathBuf::from(cols[4]);
                    let feature_path = match base {
                        Some(b) if p.is_relative() => b.join(p),
                        _ => p,
                    };
                    videos.push(VideoEntry {
                        video_id: cols[1].to_string(),
                        class_label,
                        feature_count,
                        feature_path,
                    });
                }
                "split" if cols.len() == 4 => {
                    let idx = cols[1]
                        .parse()
                        .map_err(|_| err(format!("bad split index {:?}", cols[1])))?;
                    let ids: Vec<String> = cols[3].split_whitespace().map(str::to_string).collect();
                    let entry = raw_splits.entry(idx).or_default();
                    match cols[2] {
                        "train" => entry.0.extend(ids),
                        "test" => entry.1.extend(ids),
                        other => return Err(err(format!("unknown split part {other:?}"))),
                    }
                }
                tag => return Err(err(format!("unexpected record {tag:?} with {} columns", cols.len()))),
            }
        }
        let layout = layout.ok_or_else(|| Error::ManifestParse {
            line: 0,
            msg: "missing layout line".into(),
        })?;
        let class_names: Vec<String> = classes.values().cloned().collect();
        if classes.keys().enumerate().any(|(i, &k)| i != k) {
            return Err(Error::InvalidManifest("class indices must be 0..C".into()));
        }
        let index: HashMap<&str, usize> = videos
            .iter()
            .enumerate()
            .map(|(i, v)| (v.video_id.as_str(), i))
            .collect();
        let lookup = |ids: &[String]| -> Result<Vec<usize>> {
            ids.iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::InvalidManifest(format!("split names unknown video {id}")))
                })
                .collect()
        };
        let mut splits = Vec::new();
        for (i, (idx, (train, test))) in raw_splits.iter().enumerate() {
            if i != *idx {
                return Err(Error::InvalidManifest("split indices must be 0..S".into()));
            }
            splits.push(Split {
                train: lookup(train)?,
                test: lookup(test)?,
            });
        }
        let m = Self {
            name,
            layout,
            class_names,
            videos,
            splits,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent())
    }

    /// Writes the manifest next to its feature files, with paths relative to
    /// the manifest's directory where possible.
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_text(path.parent());
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Content hash of the manifest (layout, classes, videos and splits).
    /// Feature paths enter only by file name so relocated datasets hash
    /// identically.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update(self.layout.to_string().as_bytes());
        for c in &self.class_names {
            h.update(b"\0c");
            h.update(c.as_bytes());
        }
        for v in &self.videos {
            h.update(b"\0v");
            h.update(v.video_id.as_bytes());
            h.update(v.class_label.to_le_bytes());
            h.update(v.feature_count.to_le_bytes());
            if let Some(f) = v.feature_path.file_name() {
                h.update(f.to_string_lossy().as_bytes());
            }
        }
        for s in &self.splits {
            h.update(b"\0s");
            for &t in &s.train {
                h.update((t as u64).to_le_bytes());
            }
            h.update(b"|");
            for &t in &s.test {
                h.update((t as u64).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
