use std::fs;
use std::path::{Path, PathBuf};

use actvocab_core::DatasetManifest;
use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use crate::cache::{write_atomic, ArtifactCache};
use crate::config::ExperimentConfig;
use crate::pipeline::{cell_key, run_cell, RunContext, RunRecord};
use crate::report::emit_results;

pub const RESULTS_FILE: &str = "results.jsonl";

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Reuse finished cell records instead of re-running those cells.
    pub resume: bool,
    /// Overrides the configured worker count.
    pub workers: Option<usize>,
}

pub fn context_for(config: &ExperimentConfig) -> Result<RunContext> {
    config.validate()?;
    let manifest = DatasetManifest::load(&config.manifest)
        .with_context(|| format!("reading manifest {}", config.manifest.display()))?;
    manifest.validate()?;
    let splits = if config.splits.is_empty() {
        (0..manifest.splits.len()).collect()
    } else {
        config.splits.clone()
    };
    if splits.is_empty() {
        bail!("manifest defines no splits");
    }
    for &s in &splits {
        manifest.split(s)?;
    }
    Ok(RunContext {
        manifest_hash: manifest.content_hash(),
        manifest,
        cache: ArtifactCache::new(config.output_dir.join("cache"))?,
        memory_gb: config.memory_gb,
        seed: config.seed,
        splits,
    })
}

fn cell_path(dir: &Path, key: &str) -> PathBuf {
    dir.join("cells").join(format!("{key}.json"))
}

fn finished_record(path: &Path) -> Option<RunRecord> {
    let text = fs::read_to_string(path).ok()?;
    let rec: RunRecord = serde_json::from_str(&text).ok()?;
    rec.error.is_none().then_some(rec)
}

/// Runs every cell of the grid (in parallel up to the worker count), writes
/// per-cell records, `results.jsonl` and the summary files, and returns the
/// records in grid order.
pub fn run_grid(config: &ExperimentConfig, opts: RunOptions) -> Result<Vec<RunRecord>> {
    let ctx = context_for(config)?;
    let out = &config.output_dir;
    fs::create_dir_all(out.join("cells"))?;
    let cells = config.cells()?;
    let workers = opts.workers.unwrap_or(config.workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("building worker pool")?;
    log::info!("running {} cells on {workers} workers", cells.len());

    let records: Vec<RunRecord> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let key = cell_key(&ctx, cell);
                let path = cell_path(out, &key);
                if opts.resume {
                    if let Some(mut rec) = finished_record(&path) {
                        log::info!("{} K={}: resumed", rec.variables, rec.k);
                        rec.resumed = true;
                        return rec;
                    }
                }
                let rec = run_cell(&ctx, cell);
                match &rec.report {
                    Some(r) => log::info!(
                        "{} K={} D={}: acc {:.4} map {:.4} mf1 {:.4} ({:.1}s)",
                        rec.variables,
                        rec.k,
                        rec.d.unwrap_or(0),
                        r.acc.mean,
                        r.map.mean,
                        r.mf1.mean,
                        rec.timings.total()
                    ),
                    None => log::warn!("{} K={}: failed", rec.variables, rec.k),
                }
                let json = serde_json::to_vec_pretty(&rec).expect("record serializes");
                if let Err(e) = write_atomic(&path, &json) {
                    log::error!("could not write cell record: {e:#}");
                }
                rec
            })
            .collect()
    });

    write_results(out, &records)?;
    emit_results(&records, out)?;
    Ok(records)
}

pub fn write_results(dir: &Path, records: &[RunRecord]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_atomic(&dir.join(RESULTS_FILE), text.as_bytes())
}

pub fn read_results(dir: &Path) -> Result<Vec<RunRecord>> {
    let path = dir.join(RESULTS_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}: line {}", path.display(), i + 1)))
        .collect()
}
