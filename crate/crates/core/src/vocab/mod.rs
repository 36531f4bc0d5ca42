//! Visual vocabularies: per-component (2a) or joint (2b) codebooks, optional
//! per-category codebooks, PCA models and GMMs.

pub mod gmm;
pub mod kmeans;
pub mod pca;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;

pub use gmm::{gmm_fit, GmmFit, GmmModel};
pub use kmeans::{kmeans_fit, Codebook, DEFAULT_RESTARTS};
pub use pca::{pca_fit, PcaModel, DEFAULT_PCA_DIMS};

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::layout::ComponentLayout;
use crate::rng::derive;
use crate::sampler::FeaturePool;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VocabScheme {
    /// 2a: one model per descriptor component.
    PerComponent,
    /// 2b: one model over the concatenated descriptor.
    Joint,
}

impl VocabScheme {
    pub fn tag(self) -> &'static str {
        match self {
            VocabScheme::PerComponent => "2a",
            VocabScheme::Joint => "2b",
        }
    }
}

impl fmt::Display for VocabScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for VocabScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2a" | "per-component" | "separate" => Ok(VocabScheme::PerComponent),
            "2b" | "joint" => Ok(VocabScheme::Joint),
            _ => Err(Error::InvalidArgument(format!("unknown vocabulary scheme {s:?}"))),
        }
    }
}

/// Which models a vocabulary holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VocabKind {
    /// k-means on raw descriptors (BoF).
    KMeans,
    /// PCA then k-means in the reduced space (VLAD).
    PcaKMeans,
    /// PCA then a diagonal GMM (Fisher).
    PcaGmm,
}

impl VocabKind {
    fn code(self) -> u8 {
        match self {
            VocabKind::KMeans => 0,
            VocabKind::PcaKMeans => 1,
            VocabKind::PcaGmm => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(VocabKind::KMeans),
            1 => Ok(VocabKind::PcaKMeans),
            2 => Ok(VocabKind::PcaGmm),
            _ => Err(Error::Format(format!("unknown vocabulary kind {c}"))),
        }
    }

    pub fn uses_pca(self) -> bool {
        !matches!(self, VocabKind::KMeans)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabularySpec {
    pub k: usize,
    pub scheme: VocabScheme,
    pub kind: VocabKind,
    pub per_category: bool,
    pub pca_dims: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl VocabularySpec {
    pub fn new(k: usize, scheme: VocabScheme, kind: VocabKind, per_category: bool, seed: u64) -> Self {
        Self {
            k,
            scheme,
            kind,
            per_category,
            pca_dims: DEFAULT_PCA_DIMS,
            restarts: DEFAULT_RESTARTS,
            seed,
        }
    }
}

/// Models for one descriptor slice: a component under 2a, the whole record
/// under 2b.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabPart {
    pub name: String,
    pub columns: Range<usize>,
    pub pca: Option<PcaModel>,
    /// One codebook, or one per category in category order.
    pub codebooks: Vec<Codebook>,
    pub gmm: Option<GmmModel>,
}

impl VocabPart {
    /// Dimensionality the codebook/GMM operates in.
    pub fn model_dims(&self) -> usize {
        match &self.pca {
            Some(p) => p.output_dims(),
            None => self.columns.len(),
        }
    }

    /// Total centroids across categories.
    pub fn words(&self) -> usize {
        self.codebooks.iter().map(Codebook::k).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VocabularySet {
    pub layout: ComponentLayout,
    pub scheme: VocabScheme,
    pub kind: VocabKind,
    pub per_category: bool,
    pub k: usize,
    pub num_classes: usize,
    pub parts: Vec<VocabPart>,
}

const MAGIC: &[u8] = b"AVVOCAB\0";
const VERSION: u32 = 1;

fn slice_columns(rows: ArrayView2<'_, f32>, cols: &Range<usize>) -> Array2<f32> {
    rows.slice(s![.., cols.clone()]).to_owned()
}

/// Fits one part: optional PCA, then codebooks or a GMM.
fn fit_part(
    pool: &FeaturePool,
    name: &str,
    columns: Range<usize>,
    spec: &VocabularySpec,
    part_seed: u64,
    class_rows: &[Vec<usize>],
) -> Result<VocabPart> {
    let raw = slice_columns(pool.view(), &columns);
    let (pca, data) = if spec.kind.uses_pca() {
        let model = pca_fit(raw.view(), spec.pca_dims, part_seed, name)?;
        let reduced = model.transform(raw.view());
        (Some(model), reduced)
    } else {
        (None, raw)
    };
    let mut codebooks = Vec::new();
    let mut gmm = None;
    match spec.kind {
        VocabKind::PcaGmm => {
            gmm = Some(gmm_fit(data.view(), spec.k, part_seed, name)?.model);
        }
        _ if spec.per_category => {
            codebooks = class_rows
                .par_iter()
                .enumerate()
                .map(|(c, rows)| {
                    if rows.len() < spec.k {
                        return Err(Error::TooFewRows {
                            needed: spec.k,
                            got: rows.len(),
                        });
                    }
                    let sub = data.select(ndarray::Axis(0), rows);
                    let mut cb = kmeans_fit(sub.view(), spec.k, spec.restarts, part_seed.wrapping_add(c as u64))?;
                    cb.component = name.to_string();
                    cb.category = Some(c);
                    Ok(cb)
                })
                .collect::<Result<_>>()?;
        }
        _ => {
            let mut cb = kmeans_fit(data.view(), spec.k, spec.restarts, part_seed)?;
            cb.component = name.to_string();
            codebooks.push(cb);
        }
    }
    Ok(VocabPart {
        name: name.to_string(),
        columns,
        pca,
        codebooks,
        gmm,
    })
}

/// Learns the vocabulary described by `spec` from `pool`.
///
/// Under 2a every layout component gets its own models; under 2b one set of
/// models covers the concatenated descriptor. With `per_category`, codebooks
/// are fitted on each class's rows separately and together form a universal
/// vocabulary of `K × C` words per part.
pub fn fit_vocabularies(pool: &FeaturePool, layout: &ComponentLayout, spec: &VocabularySpec) -> Result<VocabularySet> {
    if pool.dims() != layout.total_dims() {
        return Err(Error::DimensionMismatch {
            expected: layout.total_dims(),
            actual: pool.dims(),
        });
    }
    if spec.k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if spec.per_category && spec.kind == VocabKind::PcaGmm {
        return Err(Error::InvalidArgument("per-category vocabularies are k-means only".into()));
    }
    let parts: Vec<(String, Range<usize>)> = match spec.scheme {
        VocabScheme::PerComponent => layout
            .components()
            .iter()
            .zip(layout.ranges())
            .map(|(c, r)| (c.name.clone(), r))
            .collect(),
        VocabScheme::Joint => vec![("joint".to_string(), 0..layout.total_dims())],
    };
    let class_rows = if spec.per_category {
        pool.rows_by_class()
    } else {
        Vec::new()
    };
    let parts = parts
        .par_iter()
        .enumerate()
        .map(|(i, (name, cols))| fit_part(pool, name, cols.clone(), spec, derive(spec.seed, i as u64), &class_rows))
        .collect::<Result<Vec<_>>>()?;
    Ok(VocabularySet {
        layout: layout.clone(),
        scheme: spec.scheme,
        kind: spec.kind,
        per_category: spec.per_category,
        k: spec.k,
        num_classes: pool.num_classes,
        parts,
    })
}

impl VocabularySet {
    pub fn write_to<W: Write>(&self, w: W) -> Result<W> {
        let mut w = BinWriter::new(w);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.str(&self.layout.to_string())?;
        w.u8(match self.scheme {
            VocabScheme::PerComponent => 0,
            VocabScheme::Joint => 1,
        })?;
        w.u8(self.kind.code())?;
        w.u8(self.per_category as u8)?;
        w.u64(self.k as u64)?;
        w.u64(self.num_classes as u64)?;
        w.u32(self.parts.len() as u32)?;
        for p in &self.parts {
            w.str(&p.name)?;
            w.u64(p.columns.start as u64)?;
            w.u64(p.columns.end as u64)?;
            match &p.pca {
                Some(m) => {
                    w.u8(1)?;
                    w.vec(&m.mean)?;
                    w.mat(&m.projection)?;
                }
                None => w.u8(0)?,
            }
            w.u32(p.codebooks.len() as u32)?;
            for cb in &p.codebooks {
                w.u64(cb.category.map_or(u64::MAX, |c| c as u64))?;
                w.f64(cb.training_error)?;
                w.mat(&cb.centroids)?;
            }
            match &p.gmm {
                Some(g) => {
                    w.u8(1)?;
                    w.vec(&g.weights)?;
                    w.mat(&g.means)?;
                    w.mat(&g.variances)?;
                }
                None => w.u8(0)?,
            }
        }
        Ok(w.into_inner())
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.expect_magic(MAGIC, VERSION)?;
        let layout: ComponentLayout = r.str()?.parse()?;
        let scheme = match r.u8()? {
            0 => VocabScheme::PerComponent,
            1 => VocabScheme::Joint,
            c => return Err(Error::Format(format!("unknown scheme code {c}"))),
        };
        let kind = VocabKind::from_code(r.u8()?)?;
        let per_category = r.u8()? != 0;
        let k = r.u64()? as usize;
        let num_classes = r.u64()? as usize;
        let n_parts = r.u32()?;
        let mut parts = Vec::new();
        for _ in 0..n_parts {
            let name = r.str()?;
            let columns = r.u64()? as usize..r.u64()? as usize;
            let pca = if r.u8()? == 1 {
                Some(PcaModel {
                    mean: r.vec()?,
                    projection: r.mat()?,
                    component: name.clone(),
                })
            } else {
                None
            };
            let n_cb = r.u32()?;
            let mut codebooks = Vec::new();
            for _ in 0..n_cb {
                let cat = r.u64()?;
                let training_error = r.f64()?;
                codebooks.push(Codebook {
                    category: (cat != u64::MAX).then_some(cat as usize),
                    training_error,
                    centroids: r.mat()?,
                    component: name.clone(),
                });
            }
            let gmm = if r.u8()? == 1 {
                Some(GmmModel {
                    weights: r.vec()?,
                    means: r.mat()?,
                    variances: r.mat()?,
                    component: name.clone(),
                })
            } else {
                None
            };
            if columns.end > layout.total_dims() || columns.start >= columns.end {
                return Err(Error::Format(format!("part {name} has bad columns {columns:?}")));
            }
            parts.push(VocabPart {
                name,
                columns,
                pca,
                codebooks,
                gmm,
            });
        }
        Ok(Self {
            layout,
            scheme,
            kind,
            per_category,
            k,
            num_classes,
            parts,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = self.write_to(BufWriter::new(file))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file))
    }
}
