use std::path::{Path, PathBuf};

use actvocab::cache::write_atomic;
use actvocab::{emit_results, read_results, run_grid, ExperimentConfig, RunOptions};
use actvocab_core::encode::{encode_dataset, EncodedDataset, Representation};
use actvocab_core::eval::evaluate_split;
use actvocab_core::sampler::{sample_pool, FeaturePool, SamplingConfig, SamplingMode};
use actvocab_core::stats::dataset_stats;
use actvocab_core::svm::{svm_predict, svm_train, SvmKind, SvmModel, DEFAULT_C};
use actvocab_core::synth::{synth_generate, SynthSpec};
use actvocab_core::vocab::{fit_vocabularies, VocabScheme, VocabularySet, VocabularySpec};
use actvocab_core::DatasetManifest;
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actvocab", version, about = "Visual vocabularies, video encodings and SVM evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-dataset feature statistics.
    Stats {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Generate a synthetic dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        classes: usize,
        #[arg(long, default_value_t = 40)]
        videos_per_class: usize,
        #[arg(long, default_value_t = 100)]
        features_per_video: usize,
        #[arg(long, default_value_t = 1)]
        splits: usize,
        /// Class-specific visual words per class and component.
        #[arg(long, default_value_t = 12)]
        words_per_class: usize,
        /// Words shared by all classes, per component.
        #[arg(long, default_value_t = 8)]
        shared_words: usize,
    },
    /// Sample a vocabulary-training pool from one split.
    Sample {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "balanced")]
        mode: SamplingMode,
        #[arg(long, default_value_t = 1.0)]
        memory_gb: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        split: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit vocabularies for a representation from a pool.
    FitVocab {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "2a")]
        scheme: VocabScheme,
        #[arg(long)]
        representation: Representation,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode every video of a manifest.
    Encode {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        representation: Representation,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train 1-vs-all SVMs on a split's training videos.
    Train {
        #[arg(long)]
        encodings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        split: usize,
        #[arg(long, default_value_t = DEFAULT_C)]
        c: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Predict a split's test videos and report Acc/mAP/mF1.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        encodings: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0)]
        split: usize,
        /// Optional per-video predictions (tab-separated).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        resume: bool,
    },
    /// Rebuild the table and plot data from a run directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    DatasetManifest::load(path).with_context(|| format!("reading manifest {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Stats { manifest } => {
            let m = load_manifest(&manifest)?;
            println!("{}", dataset_stats(&m)?);
        }
        Command::Synth {
            out,
            seed,
            classes,
            videos_per_class,
            features_per_video,
            splits,
            words_per_class,
            shared_words,
        } => {
            let spec = SynthSpec {
                words_per_class,
                shared_words,
                classes,
                videos_per_class: vec![videos_per_class],
                features_per_video,
                splits,
                seed,
                ..SynthSpec::default()
            };
            let m = synth_generate(&spec, &out)?;
            println!("wrote {} videos to {}", m.videos.len(), out.join("manifest.txt").display());
        }
        Command::Sample {
            manifest,
            mode,
            memory_gb,
            k,
            seed,
            split,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let cfg = SamplingConfig { mode, memory_gb, k, seed };
            cfg.validate()?;
            let pool = sample_pool(&m, split, &cfg)?;
            pool.save(&out)?;
            println!("pool: {} rows, per class {:?}", pool.len(), pool.class_counts());
        }
        Command::FitVocab {
            pool,
            manifest,
            scheme,
            representation,
            k,
            seed,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let pool = FeaturePool::load(&pool)?;
            let spec = VocabularySpec::new(k, scheme, representation.vocab_kind(), representation.per_category(), seed);
            let vocab = fit_vocabularies(&pool, &m.layout, &spec)?;
            vocab.save(&out)?;
            println!("vocabulary: {} parts written to {}", vocab.parts.len(), out.display());
        }
        Command::Encode {
            manifest,
            vocab,
            representation,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let v = VocabularySet::load(&vocab)?;
            let enc = encode_dataset(&m, &v, representation)?;
            enc.save(&out)?;
            println!("encoded {} videos, D = {}", enc.len(), enc.dims());
        }
        Command::Train {
            encodings,
            manifest,
            split,
            c,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let enc = EncodedDataset::load(&encodings)?;
            let (x, y) = enc.subset(&m.split(split)?.train);
            let kind = if enc.method.uses_chi2_kernel() {
                SvmKind::Chi2Kernel
            } else {
                SvmKind::Linear
            };
            let model = svm_train(x.view(), &y, enc.num_classes, kind, c)?;
            model.save(&out)?;
            println!("{kind} model for {} classes written to {}", model.num_classes, out.display());
        }
        Command::Predict {
            model,
            encodings,
            manifest,
            split,
            out,
        } => {
            let m = load_manifest(&manifest)?;
            let enc = EncodedDataset::load(&encodings)?;
            let model = SvmModel::load(&model)?;
            let test = &m.split(split)?.test;
            let (x, y) = enc.subset(test);
            let pred = svm_predict(&model, x.view())?;
            let metrics = evaluate_split(&pred.labels, pred.scores.view(), &y)?;
            println!("acc {:.4}  map {:.4}  mf1 {:.4}", metrics.acc, metrics.map, metrics.mf1);
            if let Some(out) = out {
                let mut text = String::from("video\ttruth\tpredicted\n");
                for ((&i, &t), &p) in test.iter().zip(&y).zip(&pred.labels) {
                    text.push_str(&format!("{}\t{t}\t{p}\n", enc.video_ids[i]));
                }
                write_atomic(&out, text.as_bytes())?;
            }
        }
        Command::Run { config, workers, resume } => {
            let cfg = ExperimentConfig::load(&config)?;
            let records = run_grid(&cfg, RunOptions { resume, workers })?;
            let failed = records.iter().filter(|r| r.error.is_some()).count();
            print!("{}", std::fs::read_to_string(cfg.output_dir.join(actvocab::report::TABLE_FILE))?);
            if failed > 0 {
                eprintln!("{failed} of {} cells failed", records.len());
            }
        }
        Command::Report { dir } => {
            let records = read_results(&dir)?;
            print!("{}", emit_results(&records, &dir)?);
        }
    }
    Ok(())
}
