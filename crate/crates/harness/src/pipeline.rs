//! One grid cell: sample, fit vocabularies, encode, train, evaluate, for
//! every requested split.

use std::path::Path;
use std::time::Instant;

use actvocab_core::encode::{encode_dataset, EncodedDataset};
use actvocab_core::eval::{aggregate, evaluate_split, EvalReport, Fingerprint, SplitMetrics};
use actvocab_core::rng::derive;
use actvocab_core::sampler::{final_subsample, load_split_pool, FeaturePool};
use actvocab_core::svm::{svm_predict, svm_train, SvmKind, DEFAULT_C};
use actvocab_core::vocab::{fit_vocabularies, VocabularySet, VocabularySpec};
use actvocab_core::DatasetManifest;
use anyhow::{Context as _, Result};
use serde::{Deserialize, Serialize};

use crate::cache::{content_key, ArtifactCache};
use crate::config::CellSpec;

/// Shared, read-only inputs of a grid run.
pub struct RunContext {
    pub manifest: DatasetManifest,
    pub manifest_hash: String,
    pub cache: ArtifactCache,
    pub memory_gb: f64,
    pub seed: u64,
    pub splits: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub sample: f64,
    pub fit: f64,
    pub encode: f64,
    pub train: f64,
    pub eval: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.sample + self.fit + self.encode + self.train + self.eval
    }

    fn add(&mut self, o: &StageTimings) {
        self.sample += o.sample;
        self.fit += o.fit;
        self.encode += o.encode;
        self.train += o.train;
        self.eval += o.eval;
    }
}

/// Whether every split found its pool, vocabulary and encoding in the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheHits {
    pub pool: bool,
    pub vocab: bool,
    pub encode: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub split: usize,
    pub acc: f64,
    pub map: f64,
    pub mf1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub per_split: Vec<SplitRecord>,
    pub acc: Summary,
    pub map: Summary,
    pub mf1: Summary,
}

impl ReportRecord {
    pub fn from_eval(report: &EvalReport, splits: &[usize]) -> Self {
        let s = |m: actvocab_core::eval::MeanStd| Summary { mean: m.mean, std: m.std };
        Self {
            per_split: report
                .per_split
                .iter()
                .zip(splits)
                .map(|(m, &split)| SplitRecord {
                    split,
                    acc: m.acc,
                    map: m.map,
                    mf1: m.mf1,
                })
                .collect(),
            acc: s(report.acc),
            map: s(report.map),
            mf1: s(report.mf1),
        }
    }

    pub fn metric(&self, name: &str) -> Option<Summary> {
        match name {
            "acc" => Some(self.acc),
            "map" => Some(self.map),
            "mf1" => Some(self.mf1),
            _ => None,
        }
    }
}

pub const METRICS: [&str; 3] = ["acc", "map", "mf1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variables: String,
    pub representation: String,
    pub scheme: String,
    pub sampling: String,
    pub k: usize,
    pub d: Option<usize>,
    pub seed: u64,
    pub cell_key: String,
    pub timings: StageTimings,
    pub cache_hits: Option<CacheHits>,
    /// Pool, vocabulary and encoding keys, per split.
    pub cache_keys: Vec<String>,
    pub report: Option<ReportRecord>,
    pub error: Option<String>,
    #[serde(default)]
    pub resumed: bool,
}

struct SplitOutcome {
    metrics: SplitMetrics,
    d: usize,
    timings: StageTimings,
    hits: CacheHits,
    keys: [String; 3],
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

pub fn cell_key(ctx: &RunContext, cell: &CellSpec) -> String {
    let splits: Vec<String> = ctx.splits.iter().map(usize::to_string).collect();
    content_key(&[
        "cell",
        &ctx.manifest_hash,
        &cell.variables(),
        &cell.k.to_string(),
        &ctx.seed.to_string(),
        &ctx.memory_gb.to_bits().to_string(),
        &splits.join(","),
    ])
}

pub fn pool_key(ctx: &RunContext, cell: &CellSpec, split: usize) -> String {
    content_key(&[
        "pool",
        &ctx.manifest_hash,
        cell.sampling.tag(),
        &ctx.seed.to_string(),
        &split.to_string(),
        &ctx.memory_gb.to_bits().to_string(),
    ])
}

fn vocab_spec(ctx: &RunContext, cell: &CellSpec, split: usize) -> VocabularySpec {
    let r = cell.representation;
    VocabularySpec::new(
        cell.k,
        cell.scheme,
        r.vocab_kind(),
        r.per_category(),
        derive(ctx.seed, 0x766f_6361_0000 + split as u64),
    )
}

pub fn vocab_key(pool_key: &str, spec: &VocabularySpec) -> String {
    content_key(&[
        "vocab",
        pool_key,
        spec.scheme.tag(),
        &spec.k.to_string(),
        &format!("{:?}", spec.kind),
        &spec.per_category.to_string(),
        &spec.pca_dims.to_string(),
        &spec.restarts.to_string(),
        &spec.seed.to_string(),
    ])
}

pub fn encode_key(vocab_key: &str, cell: &CellSpec) -> String {
    content_key(&["encode", vocab_key, cell.representation.name()])
}

fn pool_file(dir: &Path) -> std::path::PathBuf {
    dir.join("pool.bin")
}

/// The K-independent sampled pool of `split`, built or read from the cache.
pub fn cached_pool(ctx: &RunContext, cell: &CellSpec, split: usize) -> Result<(FeaturePool, String, bool)> {
    let key = pool_key(ctx, cell, split);
    let (dir, hit) = ctx.cache.get_or_build("pools", &key, |dir| {
        let pool = load_split_pool(&ctx.manifest, split, cell.sampling, ctx.memory_gb, ctx.seed)?;
        pool.save(&pool_file(dir))?;
        Ok(())
    })?;
    let pool = FeaturePool::load(&pool_file(&dir)).context("reading cached pool")?;
    Ok((pool, key, hit))
}

fn run_split(ctx: &RunContext, cell: &CellSpec, split: usize) -> Result<SplitOutcome> {
    let mut t = StageTimings::default();

    let start = Instant::now();
    let (loaded, pkey, pool_hit) = cached_pool(ctx, cell, split)?;
    t.sample = secs(start);

    let spec = vocab_spec(ctx, cell, split);
    let vkey = vocab_key(&pkey, &spec);
    let start = Instant::now();
    let (vdir, vocab_hit) = ctx.cache.get_or_build("vocab", &vkey, |dir| {
        let pool = final_subsample(&loaded, cell.k, cell.sampling, ctx.seed)?;
        let vocab = fit_vocabularies(&pool, &ctx.manifest.layout, &spec)?;
        vocab.save(&dir.join("vocab.bin"))?;
        Ok(())
    })?;
    drop(loaded);
    let vocab = VocabularySet::load(&vdir.join("vocab.bin"))?;
    t.fit = secs(start);

    let ekey = encode_key(&vkey, cell);
    let start = Instant::now();
    let (edir, enc_hit) = ctx.cache.get_or_build("encodings", &ekey, |dir| {
        let enc = encode_dataset(&ctx.manifest, &vocab, cell.representation)?;
        enc.save(&dir.join("encoding.bin"))?;
        Ok(())
    })?;
    let enc = EncodedDataset::load(&edir.join("encoding.bin"))?;
    t.encode = secs(start);

    let sp = ctx.manifest.split(split)?;
    let (train_x, train_y) = enc.subset(&sp.train);
    let (test_x, test_y) = enc.subset(&sp.test);
    let kind = if cell.representation.uses_chi2_kernel() {
        SvmKind::Chi2Kernel
    } else {
        SvmKind::Linear
    };
    let start = Instant::now();
    let model = svm_train(train_x.view(), &train_y, enc.num_classes, kind, DEFAULT_C)?;
    t.train = secs(start);

    let start = Instant::now();
    let pred = svm_predict(&model, test_x.view())?;
    let metrics = evaluate_split(&pred.labels, pred.scores.view(), &test_y)?;
    t.eval = secs(start);

    Ok(SplitOutcome {
        metrics,
        d: enc.dims(),
        timings: t,
        hits: CacheHits {
            pool: pool_hit,
            vocab: vocab_hit,
            encode: enc_hit,
        },
        keys: [pkey, vkey, ekey],
    })
}

/// Runs one cell over every split. Failures are captured in the record.
pub fn run_cell(ctx: &RunContext, cell: &CellSpec) -> RunRecord {
    let mut record = RunRecord {
        variables: cell.variables(),
        representation: cell.representation.tag().into(),
        scheme: cell.scheme.tag().into(),
        sampling: cell.sampling.tag().into(),
        k: cell.k,
        d: None,
        seed: ctx.seed,
        cell_key: cell_key(ctx, cell),
        timings: StageTimings::default(),
        cache_hits: None,
        cache_keys: Vec::new(),
        report: None,
        error: None,
        resumed: false,
    };
    let mut per_split = Vec::new();
    let mut hits = CacheHits {
        pool: true,
        vocab: true,
        encode: true,
    };
    for &split in &ctx.splits {
        match run_split(ctx, cell, split) {
            Ok(out) => {
                record.timings.add(&out.timings);
                record.d = Some(out.d);
                record.cache_keys.extend(out.keys);
                hits.pool &= out.hits.pool;
                hits.vocab &= out.hits.vocab;
                hits.encode &= out.hits.encode;
                per_split.push(out.metrics);
            }
            Err(e) => {
                log::error!("cell {} split {split} failed: {e:#}", record.variables);
                record.error = Some(format!("split {split}: {e:#}"));
                return record;
            }
        }
    }
    record.cache_hits = Some(hits);
    let fingerprint = Fingerprint {
        method: cell.representation.name().into(),
        scheme: cell.scheme.tag().into(),
        sampling: cell.sampling.tag().into(),
        k: cell.k,
        d: record.d.unwrap_or(0),
        seed: ctx.seed,
    };
    match aggregate(per_split, fingerprint) {
        Ok(rep) => record.report = Some(ReportRecord::from_eval(&rep, &ctx.splits)),
        Err(e) => record.error = Some(e.to_string()),
    }
    record
}
