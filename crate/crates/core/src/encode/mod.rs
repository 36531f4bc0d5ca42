//! Fixed-length video encodings: BoF, BoF per category, VLAD and Fisher
//! vectors.
//!
//! Every encoder is an accumulator fed one descriptor at a time, so a video
//! is encoded in memory proportional to the vocabulary, never to its length.

mod dataset;

use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;

pub use dataset::{encode_dataset, EncodedDataset};

use crate::error::{Error, Result};
use crate::layout::ComponentLayout;
use crate::vocab::{GmmModel, VocabKind, VocabScheme, VocabularySet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Representation {
    /// 3a
    Bof,
    /// 3b
    BofPerCategory,
    /// 3c
    Vlad,
    /// 3d
    Fisher,
}

impl Representation {
    pub const ALL: [Representation; 4] = [
        Representation::Bof,
        Representation::BofPerCategory,
        Representation::Vlad,
        Representation::Fisher,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Representation::Bof => "3a",
            Representation::BofPerCategory => "3b",
            Representation::Vlad => "3c",
            Representation::Fisher => "3d",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Representation::Bof => "bof",
            Representation::BofPerCategory => "bof-per-category",
            Representation::Vlad => "vlad",
            Representation::Fisher => "fisher",
        }
    }

    /// Vocabulary models this representation needs.
    pub fn vocab_kind(self) -> VocabKind {
        match self {
            Representation::Bof | Representation::BofPerCategory => VocabKind::KMeans,
            Representation::Vlad => VocabKind::PcaKMeans,
            Representation::Fisher => VocabKind::PcaGmm,
        }
    }

    pub fn per_category(self) -> bool {
        self == Representation::BofPerCategory
    }

    /// Histogram encodings go through the χ² kernel SVM, the rest through a
    /// linear SVM.
    pub fn uses_chi2_kernel(self) -> bool {
        matches!(self, Representation::Bof | Representation::BofPerCategory)
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.tag() == s || r.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown representation {s:?}")))
    }
}

/// Encoding length for a representation.
///
/// With `P` parts (number of layout components under 2a, one under 2b) and
/// PCA output size `r`: BoF `K·P`, BoF per category `K·C·P`, VLAD `r·K·P`,
/// Fisher `2·r·K·P`.
pub fn representation_dims(
    method: Representation,
    scheme: VocabScheme,
    k: usize,
    classes: usize,
    components: usize,
    pca_dims: usize,
) -> usize {
    let parts = match scheme {
        VocabScheme::PerComponent => components,
        VocabScheme::Joint => 1,
    };
    match method {
        Representation::Bof => k * parts,
        Representation::BofPerCategory => k * classes * parts,
        Representation::Vlad => pca_dims * k * parts,
        Representation::Fisher => 2 * pca_dims * k * parts,
    }
}

/// A fixed-length encoding of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub vector: Vec<f64>,
    pub method: Representation,
    pub scheme: VocabScheme,
    /// Set when the video had no usable features; `vector` is then all zero.
    pub empty: bool,
}

impl Encoding {
    pub fn dims(&self) -> usize {
        self.vector.len()
    }
}

fn check_compatible(vocab: &VocabularySet, method: Representation) -> Result<()> {
    if vocab.kind != method.vocab_kind() || vocab.per_category != method.per_category() {
        return Err(Error::InvalidArgument(format!(
            "vocabulary ({:?}, per_category = {}) cannot produce {method} encodings",
            vocab.kind, vocab.per_category
        )));
    }
    for p in &vocab.parts {
        let ok = match method.vocab_kind() {
            VocabKind::PcaGmm => p.gmm.is_some() && p.pca.is_some(),
            VocabKind::PcaKMeans => p.pca.is_some() && p.codebooks.len() == 1,
            VocabKind::KMeans => !p.codebooks.is_empty(),
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("vocabulary part {} is incomplete", p.name)));
        }
    }
    Ok(())
}

fn check_gmm(g: &GmmModel) -> Result<()> {
    if g.weights.iter().any(|&w| w.is_nan() || w < crate::vocab::gmm::MIN_WEIGHT)
        || g.variances.iter().any(|&v| v.is_nan() || v <= 0.0)
    {
        return Err(Error::Degenerate(format!("GMM for {} has a collapsed component", g.component)));
    }
    Ok(())
}

/// Streaming encoder state for one video.
pub struct Accumulator<'a> {
    vocab: &'a VocabularySet,
    method: Representation,
    /// One raw block per vocabulary part.
    blocks: Vec<Vec<f64>>,
    count: usize,
    z: Vec<f64>,
    x: Vec<f64>,
    post: Vec<f64>,
}

impl<'a> Accumulator<'a> {
    pub fn new(vocab: &'a VocabularySet, method: Representation) -> Result<Self> {
        check_compatible(vocab, method)?;
        if method == Representation::Fisher {
            for p in &vocab.parts {
                check_gmm(p.gmm.as_ref().expect("checked"))?;
            }
        }
        let blocks = vocab
            .parts
            .iter()
            .map(|p| {
                let len = match method {
                    Representation::Bof | Representation::BofPerCategory => p.words(),
                    Representation::Vlad => p.codebooks[0].k() * p.model_dims(),
                    Representation::Fisher => 2 * p.gmm.as_ref().expect("checked").k() * p.model_dims(),
                };
                vec![0.0; len]
            })
            .collect();
        let max_dims = vocab.parts.iter().map(|p| p.columns.len()).max().unwrap_or(0);
        let max_k = vocab.parts.iter().filter_map(|p| p.gmm.as_ref()).map(|g| g.k()).max().unwrap_or(0);
        Ok(Self {
            vocab,
            method,
            blocks,
            count: 0,
            z: vec![0.0; max_dims],
            x: vec![0.0; max_dims],
            post: vec![0.0; max_k],
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one descriptor (all `total_dims` values).
    pub fn push(&mut self, feature: &[f32]) -> Result<()> {
        let total = self.vocab.layout.total_dims();
        if feature.len() != total {
            return Err(Error::DimensionMismatch {
                expected: total,
                actual: feature.len(),
            });
        }
        self.count += 1;
        for (p, block) in self.vocab.parts.iter().zip(self.blocks.iter_mut()) {
            let raw = &feature[p.columns.clone()];
            let z: &[f64] = match &p.pca {
                Some(pca) => {
                    let z = &mut self.z[..pca.output_dims()];
                    pca.project_into(raw, z);
                    z
                }
                None => {
                    let x = &mut self.x[..raw.len()];
                    for (a, &b) in x.iter_mut().zip(raw) {
                        *a = b as f64;
                    }
                    x
                }
            };
            match self.method {
                Representation::Bof | Representation::BofPerCategory => {
                    let mut best = (0usize, f64::INFINITY);
                    let mut offset = 0;
                    for cb in &p.codebooks {
                        let (i, d) = cb.nearest(z);
                        if d < best.1 {
                            best = (offset + i, d);
                        }
                        offset += cb.k();
                    }
                    block[best.0] += 1.0;
                }
                Representation::Vlad => {
                    let cb = &p.codebooks[0];
                    let (i, _) = cb.nearest(z);
                    let dims = z.len();
                    let c = cb.centroids.row(i);
                    for ((acc, &zi), &ci) in block[i * dims..(i + 1) * dims].iter_mut().zip(z).zip(c.iter()) {
                        *acc += zi - ci;
                    }
                }
                Representation::Fisher => {
                    let g = p.gmm.as_ref().expect("checked");
                    let k = g.k();
                    let post = &mut self.post[..k];
                    g.posteriors_into(z, post);
                    let dims = z.len();
                    for (j, &gamma) in post.iter().enumerate() {
                        if gamma == 0.0 {
                            continue;
                        }
                        let base = 2 * j * dims;
                        let (mu, var) = (g.means.row(j), g.variances.row(j));
                        for d in 0..dims {
                            let t = (z[d] - mu[d]) / var[d].sqrt();
                            block[base + d] += gamma * t;
                            block[base + dims + d] += gamma * (t * t - 1.0);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Unnormalized Fisher statistics: blocks scaled by `1/(n√w)` and
    /// `1/(n√(2w))`, before power and L2 normalization.
    fn fisher_scaled(&mut self) {
        let n = self.count as f64;
        for (p, block) in self.vocab.parts.iter().zip(self.blocks.iter_mut()) {
            let g = p.gmm.as_ref().expect("checked");
            let dims = p.model_dims();
            for (j, &w) in g.weights.iter().enumerate() {
                let base = 2 * j * dims;
                let su = 1.0 / (n * w.sqrt());
                let sv = 1.0 / (n * (2.0 * w).sqrt());
                block[base..base + dims].iter_mut().for_each(|v| *v *= su);
                block[base + dims..base + 2 * dims].iter_mut().for_each(|v| *v *= sv);
            }
        }
    }

    /// Concatenated Fisher gradient before any normalization.
    pub fn finish_fisher_raw(mut self) -> Result<Vec<f64>> {
        if self.method != Representation::Fisher {
            return Err(Error::InvalidArgument("not a Fisher accumulator".into()));
        }
        if self.count > 0 {
            self.fisher_scaled();
        }
        Ok(self.blocks.concat())
    }

    pub fn finish(mut self) -> Encoding {
        let scheme = self.vocab.scheme;
        let method = self.method;
        let empty_result = |blocks: Vec<Vec<f64>>| Encoding {
            vector: vec![0.0; blocks.iter().map(Vec::len).sum()],
            method,
            scheme,
            empty: true,
        };
        if self.count == 0 {
            return empty_result(self.blocks);
        }
        match method {
            Representation::Bof | Representation::BofPerCategory => {
                for b in &mut self.blocks {
                    l1_normalize(b);
                }
                let mut v = self.blocks.concat();
                l1_normalize(&mut v);
                Encoding { vector: v, method, scheme, empty: false }
            }
            Representation::Vlad | Representation::Fisher => {
                if method == Representation::Fisher {
                    self.fisher_scaled();
                    for b in &mut self.blocks {
                        power_normalize(b);
                    }
                }
                for b in &mut self.blocks {
                    l2_normalize(b);
                }
                let mut v = self.blocks.concat();
                if !l2_normalize(&mut v) {
                    return empty_result(self.blocks);
                }
                Encoding { vector: v, method, scheme, empty: false }
            }
        }
    }
}

/// Scales to unit L1 norm. Returns false (leaving `v` untouched) for a zero vector.
pub fn l1_normalize(v: &mut [f64]) -> bool {
    let s: f64 = v.iter().map(|x| x.abs()).sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

/// Scales to unit L2 norm. Returns false (leaving `v` untouched) for a zero vector.
pub fn l2_normalize(v: &mut [f64]) -> bool {
    let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
        true
    } else {
        false
    }
}

/// Signed square root, `sign(x)·|x|^0.5`.
pub fn power_normalize(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.signum() * x.abs().sqrt());
}

/// Encodes a video given as an `n × total_dims` matrix.
pub fn encode_features(features: ArrayView2<'_, f32>, vocab: &VocabularySet, method: Representation) -> Result<Encoding> {
    let mut acc = Accumulator::new(vocab, method)?;
    for row in features.outer_iter() {
        match row.as_slice() {
            Some(s) => acc.push(s)?,
            None => acc.push(&row.to_vec())?,
        }
    }
    Ok(acc.finish())
}

pub fn bof_encode(features: ArrayView2<'_, f32>, vocab: &VocabularySet) -> Result<Encoding> {
    let method = if vocab.per_category {
        Representation::BofPerCategory
    } else {
        Representation::Bof
    };
    encode_features(features, vocab, method)
}

pub fn vlad_encode(features: ArrayView2<'_, f32>, vocab: &VocabularySet) -> Result<Encoding> {
    encode_features(features, vocab, Representation::Vlad)
}

pub fn fisher_encode(features: ArrayView2<'_, f32>, vocab: &VocabularySet) -> Result<Encoding> {
    encode_features(features, vocab, Representation::Fisher)
}

/// Length of encodings this vocabulary produces for `method`.
pub fn vocab_dims(vocab: &VocabularySet, method: Representation) -> usize {
    let pca_dims = vocab.parts.first().map_or(0, |p| p.model_dims());
    representation_dims(method, vocab.scheme, vocab.k, vocab.num_classes, vocab.layout.len(), pca_dims)
}

/// Short hash of the layout string, used in encoded-file headers.
pub fn layout_hash(layout: &ComponentLayout) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(&Sha256::digest(layout.to_string().as_bytes())[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn dims_formula() {
        use Representation::*;
        use VocabScheme::*;
        assert_eq!(representation_dims(Fisher, PerComponent, 128, 6, 5, 24), 30_720);
        assert_eq!(representation_dims(BofPerCategory, Joint, 32, 6, 5, 24), 192);
        assert_eq!(representation_dims(Vlad, PerComponent, 64, 6, 5, 24), 7_680);
        assert_eq!(representation_dims(Bof, PerComponent, 4, 6, 5, 24), 20);
        assert_eq!(representation_dims(Bof, Joint, 4, 6, 5, 24), 4);
        assert_eq!(representation_dims(Fisher, Joint, 4, 12, 5, 24), 192);
    }

    #[test]
    fn power_norm_on_non_negative_is_sqrt() {
        let mut v = vec![0.0, 1.0, 4.0, 0.25];
        power_normalize(&mut v);
        assert_eq!(v, vec![0.0, 1.0, 2.0, 0.5]);
        let mut w = vec![-9.0];
        power_normalize(&mut w);
        assert_eq!(w, vec![-3.0]);
    }

    #[test]
    fn zero_vectors_not_normalized() {
        let mut v = vec![0.0; 3];
        assert!(!l1_normalize(&mut v));
        assert!(!l2_normalize(&mut v));
        assert_eq!(v, vec![0.0; 3]);
    }

    #[test]
    fn representation_parsing() {
        assert_eq!("3d".parse::<Representation>().unwrap(), Representation::Fisher);
        assert_eq!("bof-per-category".parse::<Representation>().unwrap(), Representation::BofPerCategory);
        assert!("3e".parse::<Representation>().is_err());
    }

    fn tiny_vocab(kind: VocabKind) -> VocabularySet {
        use crate::vocab::{Codebook, PcaModel, VocabPart};
        let layout = ComponentLayout::new(vec![("a".into(), 2), ("b".into(), 2)]).unwrap();
        let parts = layout
            .components()
            .iter()
            .zip(layout.ranges())
            .map(|(c, r)| VocabPart {
                name: c.name.clone(),
                columns: r,
                pca: kind.uses_pca().then(|| PcaModel {
                    mean: array![0.0, 0.0],
                    projection: array![[1.0, 0.0], [0.0, 1.0]],
                    component: c.name.clone(),
                }),
                codebooks: vec![Codebook {
                    centroids: array![[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [9.0, 0.0]],
                    component: c.name.clone(),
                    category: None,
                    training_error: 0.0,
                }],
                gmm: None,
            })
            .collect();
        VocabularySet {
            layout,
            scheme: VocabScheme::PerComponent,
            kind,
            per_category: false,
            k: 4,
            num_classes: 2,
            parts,
        }
    }

    #[test]
    fn single_feature_bof() {
        let v = tiny_vocab(VocabKind::KMeans);
        let e = bof_encode(array![[0.9f32, 1.2, 8.0, 0.5]].view(), &v).unwrap();
        assert_eq!(e.vector, vec![0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        assert!(!e.empty);
    }

    #[test]
    fn features_at_centroids_give_uniform_histogram() {
        let v = tiny_vocab(VocabKind::KMeans);
        let f = array![[0.0f32, 0.0, 0.0, 0.0], [1.0, 1.0, 1.0, 1.0], [5.0, 5.0, 5.0, 5.0], [9.0, 0.0, 9.0, 0.0]];
        let e = bof_encode(f.view(), &v).unwrap();
        assert!(e.vector.iter().all(|&x| (x - 0.125).abs() < 1e-15));
    }

    #[test]
    fn empty_video_is_flagged_zero() {
        let v = tiny_vocab(VocabKind::KMeans);
        let e = bof_encode(Array2::<f32>::zeros((0, 4)).view(), &v).unwrap();
        assert!(e.empty);
        assert_eq!(e.vector, vec![0.0; 8]);
    }

    #[test]
    fn vlad_zero_residuals_flagged() {
        let v = tiny_vocab(VocabKind::PcaKMeans);
        let f = array![[1.0f32, 1.0, 5.0, 5.0], [9.0, 0.0, 0.0, 0.0]];
        let e = vlad_encode(f.view(), &v).unwrap();
        assert!(e.empty);
        assert_eq!(e.dims(), 16);
        assert!(e.vector.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn incompatible_vocab_rejected() {
        let v = tiny_vocab(VocabKind::KMeans);
        let f = array![[0.0f32; 4]];
        assert!(vlad_encode(f.view(), &v).is_err());
        assert!(fisher_encode(f.view(), &v).is_err());
        assert!(bof_encode(array![[0.0f32; 3]].view(), &v).is_err());
    }
}
