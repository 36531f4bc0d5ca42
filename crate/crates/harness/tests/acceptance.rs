//! Acceptance suite: one PASS/FAIL line per criterion, each with its time
//! budget. Run with `cargo test -p actvocab --test acceptance`.

use std::path::Path;
use std::time::{Duration, Instant};

use actvocab::{run_grid, ExperimentConfig, RunOptions, RunRecord};
use actvocab_core::encode::{representation_dims, Accumulator, Representation};
use actvocab_core::eval::{mean_average_precision, mean_f1};
use actvocab_core::layout::ComponentLayout;
use actvocab_core::sampler::{
    compute_vmax, final_subsample, mean_feature_count, pool_cap, sample_pool, FeaturePool, Provenance,
    SamplingConfig, SamplingMode,
};
use actvocab_core::svm::{chi2_distance, chi2_gram, solve_kernel_dual, svm_predict, svm_train, SvmKind};
use actvocab_core::synth::{synth_generate, SynthSpec};
use actvocab_core::vocab::kmeans::{kmeans_fit, kmeans_restarts};
use actvocab_core::vocab::{Codebook, GmmModel, PcaModel, VocabKind, VocabPart, VocabScheme, VocabularySet};
use actvocab_core::DatasetManifest;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

// 1 ------------------------------------------------------------------------

fn toy_pool(n: usize, classes: usize) -> FeaturePool {
    FeaturePool {
        rows: Array2::from_shape_fn((n, 1), |(i, _)| i as f32),
        provenance: (0..n)
            .map(|i| Provenance {
                video: 0,
                class: (i % classes) as u32,
            })
            .collect(),
        video_ids: vec!["v".into()],
        num_classes: classes,
    }
}

fn sampling_arithmetic() -> Check {
    let layout = ComponentLayout::dense_trajectory();
    let vmax = compute_vmax(1.6, 9_000.0, layout.record_gb()).map_err(|e| e.to_string())?;
    ensure!(vmax == 112, "V_max = {vmax}, expected 112");
    ensure!(pool_cap(4) == 40_000, "cap(4) = {}", pool_cap(4));
    ensure!(pool_cap(256) == 1_000_000, "cap(256) = {}", pool_cap(256));
    for mode in [SamplingMode::Balanced, SamplingMode::Uniform] {
        let small = final_subsample(&toy_pool(50_000, 2), 4, mode, 1).map_err(|e| e.to_string())?;
        ensure!(small.len() == 40_000, "{mode} K=4 pool has {} rows", small.len());
        let big = final_subsample(&toy_pool(1_100_000, 2), 256, mode, 1).map_err(|e| e.to_string())?;
        ensure!(big.len() == 1_000_000, "{mode} K=256 pool has {} rows", big.len());
    }
    Ok("V_max 112, caps 40,000 and 1,000,000".into())
}

// 2 ------------------------------------------------------------------------

/// 10:1 skew in video counts and 20:1 skew in per-video feature counts.
fn skewed_manifest(dir: &Path) -> DatasetManifest {
    let spec = SynthSpec {
        layout: ComponentLayout::new(vec![("x".into(), 1)]).unwrap(),
        classes: 3,
        videos_per_class: vec![100, 10, 10],
        features_per_video: 400,
        class_length_scale: vec![1.0, 20.0, 20.0],
        words_per_class: 1,
        shared_words: 1,
        seed: 17,
        ..SynthSpec::default()
    };
    synth_generate(&spec, dir).unwrap()
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Expected class shares of a uniform pool: `v` videos drawn without
/// replacement, all of their features kept, then a uniform subsample.
fn analytic_uniform_shares(train: &[usize], lengths: &[f64], v: usize) -> Vec<f64> {
    let total: usize = train.iter().sum();
    let all = binomial(total, v);
    let mut expect = vec![0.0; train.len()];
    for k1 in 0..=train[1].min(v) {
        for k2 in 0..=train[2].min(v - k1) {
            let k0 = v - k1 - k2;
            let p = binomial(train[0], k0) * binomial(train[1], k1) * binomial(train[2], k2) / all;
            if p == 0.0 {
                continue;
            }
            let ks = [k0, k1, k2];
            let rows: f64 = (0..3).map(|c| ks[c] as f64 * lengths[c]).sum();
            for c in 0..3 {
                expect[c] += p * ks[c] as f64 * lengths[c] / rows;
            }
        }
    }
    expect
}

fn balance_property() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let m = skewed_manifest(tmp.path());
    let split = m.split(0).unwrap();

    for k in [1, 2] {
        for seed in 0..10 {
            let cfg = SamplingConfig {
                mode: SamplingMode::Balanced,
                memory_gb: 1.0,
                k,
                seed,
            };
            let pool = sample_pool(&m, 0, &cfg).map_err(|e| e.to_string())?;
            let counts = pool.class_counts();
            let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
            ensure!(spread <= 1, "1a K={k} seed {seed}: class counts {counts:?}");
        }
    }

    let mut train = vec![0usize; 3];
    let mut lengths = vec![0.0; 3];
    for &i in &split.train {
        let v = &m.videos[i];
        train[v.class_label] += 1;
        lengths[v.class_label] = v.feature_count as f64;
    }
    for v in &m.videos {
        ensure!(v.feature_count as f64 == lengths[v.class_label], "feature counts vary within a class");
    }
    let v = 30;
    let mean = mean_feature_count(&m).unwrap();
    let memory_gb = (v as f64 + 0.5) * mean * m.layout.record_gb();
    let expect = analytic_uniform_shares(&train, &lengths, v);
    let seeds = 50;
    let mut shares = vec![Vec::new(); 3];
    for seed in 0..seeds {
        let cfg = SamplingConfig {
            mode: SamplingMode::Uniform,
            memory_gb,
            k: 1,
            seed,
        };
        let pool = sample_pool(&m, 0, &cfg).map_err(|e| e.to_string())?;
        let counts = pool.class_counts();
        for c in 0..3 {
            shares[c].push(counts[c] as f64 / pool.len() as f64);
        }
    }
    let mut worst = 0.0f64;
    for c in 0..3 {
        let n = seeds as f64;
        let mu = shares[c].iter().sum::<f64>() / n;
        let sd = (shares[c].iter().map(|s| (s - mu).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let se = sd / n.sqrt();
        let z = (mu - expect[c]).abs() / se;
        worst = worst.max(z);
        ensure!(z <= 3.0, "1b class {c}: mean share {mu:.4} vs analytic {:.4} ({z:.2} sigma)", expect[c]);
    }
    Ok(format!("1a spread <= 1; 1b worst deviation {worst:.2} sigma"))
}

// 3 ------------------------------------------------------------------------

fn clustering_oracle() -> Check {
    let mut r = rng(3);
    for inst in 0..20 {
        let n = r.random_range(8..=100);
        let k = r.random_range(1..=4);
        let d = r.random_range(1..=5);
        let centres: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| 4.0 * normal(&mut r)).collect()).collect();
        let rows = Array2::from_shape_fn((n, d), |(i, j)| (centres[i % k][j] + normal(&mut r)) as f32);
        let runs = kmeans_restarts(rows.view(), k, 8, 99 + inst).map_err(|e| e.to_string())?;
        for (ri, run) in runs.iter().enumerate() {
            let mut err = 0.0;
            for i in 0..n {
                let mut best = (0, f64::INFINITY);
                for c in 0..k {
                    let dist: f64 = (0..d).map(|j| (rows[[i, j]] as f64 - run.centroids[[c, j]]).powi(2)).sum();
                    if dist < best.1 {
                        best = (c, dist);
                    }
                }
                ensure!(
                    run.labels[i] == best.0,
                    "instance {inst} restart {ri}: point {i} assigned {} but nearest is {}",
                    run.labels[i],
                    best.0
                );
                err += best.1;
            }
            ensure!((run.error - err).abs() <= 1e-9 * err.max(1.0), "instance {inst}: error bookkeeping");
        }
        let fit = kmeans_fit(rows.view(), k, 8, 99 + inst).map_err(|e| e.to_string())?;
        for (ri, run) in runs.iter().enumerate() {
            ensure!(
                fit.training_error <= run.error,
                "instance {inst}: best {} > restart {ri} {}",
                fit.training_error,
                run.error
            );
        }
    }
    Ok("20 instances".into())
}

// 4 ------------------------------------------------------------------------

fn random_vocab(
    r: &mut ChaCha8Rng,
    layout: &ComponentLayout,
    method: Representation,
    scheme: VocabScheme,
    k: usize,
    classes: usize,
) -> VocabularySet {
    let pca_dims = 24;
    let kind = method.vocab_kind();
    let slices: Vec<(String, std::ops::Range<usize>)> = match scheme {
        VocabScheme::PerComponent => layout
            .components()
            .iter()
            .zip(layout.ranges())
            .map(|(c, range)| (c.name.clone(), range))
            .collect(),
        VocabScheme::Joint => vec![("joint".into(), 0..layout.total_dims())],
    };
    let parts = slices
        .into_iter()
        .map(|(name, columns)| {
            let input = columns.len();
            let pca = kind.uses_pca().then(|| PcaModel {
                mean: Array1::from_shape_fn(input, |_| 0.1 * normal(r)),
                projection: Array2::from_shape_fn((pca_dims, input), |_| normal(r) / (input as f64).sqrt()),
                component: name.clone(),
            });
            let dims = if kind.uses_pca() { pca_dims } else { input };
            let books = if method.per_category() { classes } else { 1 };
            let codebooks = if kind == VocabKind::PcaGmm {
                Vec::new()
            } else {
                (0..books)
                    .map(|c| Codebook {
                        centroids: Array2::from_shape_fn((k, dims), |_| normal(r)),
                        component: name.clone(),
                        category: method.per_category().then_some(c),
                        training_error: 0.0,
                    })
                    .collect()
            };
            let gmm = (kind == VocabKind::PcaGmm).then(|| {
                let w: Vec<f64> = (0..k).map(|_| r.random_range(0.5..2.0)).collect();
                let s: f64 = w.iter().sum();
                GmmModel {
                    weights: Array1::from_iter(w.iter().map(|v| v / s)),
                    means: Array2::from_shape_fn((k, dims), |_| normal(r)),
                    variances: Array2::from_shape_fn((k, dims), |_| r.random_range(0.5..2.0)),
                    component: name.clone(),
                }
            });
            VocabPart {
                name,
                columns,
                pca,
                codebooks,
                gmm,
            }
        })
        .collect();
    VocabularySet {
        layout: layout.clone(),
        scheme,
        kind,
        per_category: method.per_category(),
        k,
        num_classes: classes,
        parts,
    }
}

fn encoding_contracts() -> Check {
    let layout = ComponentLayout::dense_trajectory();
    let mut r = rng(4);
    let mut vocabs = Vec::new();
    for method in Representation::ALL {
        for scheme in [VocabScheme::PerComponent, VocabScheme::Joint] {
            for k in [1, 4, 32, 128] {
                for classes in [2, 6] {
                    vocabs.push((method, scheme, k, classes, random_vocab(&mut r, &layout, method, scheme, k, classes)));
                }
            }
        }
    }
    ensure!(
        representation_dims(Representation::Fisher, VocabScheme::PerComponent, 128, 6, 5, 24) == 30_720,
        "Fisher 2a K=128 dims"
    );
    ensure!(
        representation_dims(Representation::BofPerCategory, VocabScheme::Joint, 32, 6, 5, 24) == 192,
        "per-category joint K=32 C=6 dims"
    );
    let mut seen_30720 = false;
    let mut seen_192 = false;
    let dims = layout.total_dims();
    for video in 0..1000 {
        let (method, scheme, k, classes, vocab) = &vocabs[video % vocabs.len()];
        let n = r.random_range(1..=20);
        let mut acc = Accumulator::new(vocab, *method).map_err(|e| e.to_string())?;
        for _ in 0..n {
            let f: Vec<f32> = (0..dims).map(|_| normal(&mut r) as f32).collect();
            acc.push(&f).map_err(|e| e.to_string())?;
        }
        let enc = acc.finish();
        let want = representation_dims(*method, *scheme, *k, *classes, layout.len(), 24);
        ensure!(enc.vector.len() == want, "{method} {scheme:?} K={k} C={classes}: D = {} != {want}", enc.vector.len());
        seen_30720 |= enc.vector.len() == 30_720 && *method == Representation::Fisher;
        seen_192 |= enc.vector.len() == 192 && *method == Representation::BofPerCategory;
        ensure!(!enc.empty, "video {video} flagged empty");
        ensure!(enc.vector.iter().all(|v| v.is_finite()), "non-finite entry");
        match method {
            Representation::Bof | Representation::BofPerCategory => {
                let s: f64 = enc.vector.iter().sum();
                ensure!((s - 1.0).abs() <= 1e-12, "{method} sum {s}");
            }
            Representation::Vlad | Representation::Fisher => {
                let norm = enc.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
                ensure!((norm - 1.0).abs() <= 1e-10, "{method} norm {norm}");
            }
        }
    }
    ensure!(seen_30720 && seen_192, "reference dimensions not exercised");
    Ok(format!("1000 videos over {} vocabularies", vocabs.len()))
}

// 5 ------------------------------------------------------------------------

fn random_histogram(r: &mut ChaCha8Rng, dims: usize) -> Vec<f64> {
    let mut h: Vec<f64> = (0..dims)
        .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random::<f64>() })
        .collect();
    if h.iter().all(|&v| v == 0.0) {
        h[0] = 1.0;
    }
    let s: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= s);
    h
}

fn kernel_correctness() -> Check {
    let mut r = rng(5);
    let (a, b) = (random_histogram(&mut r, 16), random_histogram(&mut r, 16));
    let d = chi2_distance(&a, &b).map_err(|e| e.to_string())?;
    let x = Array2::from_shape_vec((2, 16), [a, b].concat()).unwrap();
    let g = chi2_gram(x.view()).map_err(|e| e.to_string())?;
    ensure!((g.a - d).abs() <= 1e-12, "A = {} but the distance is {d}", g.a);
    let off = g.matrix[[0, 1]];
    ensure!((off - (-0.5f64).exp()).abs() <= 1e-12, "off-diagonal {off}");

    let mut min_eig = f64::INFINITY;
    for _ in 0..20 {
        let n = r.random_range(2..=50);
        let dims = r.random_range(4..=64);
        let rows: Vec<f64> = (0..n).flat_map(|_| random_histogram(&mut r, dims)).collect();
        let x = Array2::from_shape_vec((n, dims), rows).unwrap();
        let g = chi2_gram(x.view()).map_err(|e| e.to_string())?;
        let m = DMatrix::from_fn(n, n, |i, j| g.matrix[[i, j]]);
        let e = m.symmetric_eigen().eigenvalues.min();
        min_eig = min_eig.min(e);
        ensure!(e >= -1e-8, "minimum eigenvalue {e} on a {n}-point set");
    }
    Ok(format!("minimum eigenvalue {min_eig:.3e}"))
}

// 6 ------------------------------------------------------------------------

fn objective(k: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// Minimum of the dual over every face of the box: each coordinate at 0, at
/// C or free, with the free block solved from its KKT system.
fn qp_oracle(k: &DMatrix<f64>, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let mut best = f64::INFINITY;
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut alpha: Vec<f64> = state.iter().map(|&s| if s == 1 { c } else { 0.0 }).collect();
        let fixed_sum: f64 = (0..n).filter(|&i| state[i] != 2).map(|i| alpha[i] * y[i]).sum();
        let feasible = if free.is_empty() {
            fixed_sum.abs() < 1e-9
        } else {
            let m = free.len();
            let mut sys = DMatrix::zeros(m + 1, m + 1);
            let mut rhs = DVector::zeros(m + 1);
            for (a, &i) in free.iter().enumerate() {
                for (b, &j) in free.iter().enumerate() {
                    sys[(a, b)] = y[i] * y[j] * k[(i, j)];
                }
                sys[(a, m)] = y[i];
                sys[(m, a)] = y[i];
                let fixed: f64 = (0..n)
                    .filter(|&j| state[j] != 2)
                    .map(|j| y[i] * y[j] * k[(i, j)] * alpha[j])
                    .sum();
                rhs[a] = 1.0 - fixed;
            }
            rhs[m] = -fixed_sum;
            match sys.lu().solve(&rhs) {
                Some(sol) => {
                    for (a, &i) in free.iter().enumerate() {
                        alpha[i] = sol[a];
                    }
                    free.iter().all(|&i| alpha[i] >= -1e-9 && alpha[i] <= c + 1e-9)
                }
                None => false,
            }
        };
        if feasible {
            best = best.min(objective(k, y, &alpha));
        }
        let mut i = 0;
        while i < n && state[i] == 2 {
            state[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
        state[i] += 1;
    }
}

fn svm_oracle() -> Check {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for p in 0..10 {
        let n = r.random_range(4..=10);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [normal(&mut r), normal(&mut r)]).collect();
        let mut y: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
        y[0] = 1.0;
        y[1] = -1.0;
        let km = DMatrix::from_fn(n, n, |i, j| {
            let d = (pts[i][0] - pts[j][0]).powi(2) + (pts[i][1] - pts[j][1]).powi(2);
            (-0.5 * d).exp()
        });
        let k = Array2::from_shape_fn((n, n), |(i, j)| km[(i, j)]);
        let c = [1.0, 10.0, 100.0][p % 3];
        let sol = solve_kernel_dual(k.view(), &y, c).map_err(|e| e.to_string())?;
        ensure!(
            sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)),
            "problem {p}: alpha outside [0, C]"
        );
        let balance: f64 = sol.alpha.iter().zip(&y).map(|(a, y)| a * y).sum();
        ensure!(balance.abs() < 1e-8, "problem {p}: sum(alpha y) = {balance}");
        let got = objective(&km, &y, &sol.alpha);
        let want = qp_oracle(&km, &y, c);
        worst = worst.max((got - want).abs());
        ensure!((got - want).abs() <= 1e-4, "problem {p} (n={n}, C={c}): objective {got} vs oracle {want}");
    }

    // three separated 2-D clusters in the positive quadrant
    let centres = [[1.0, 1.0], [5.0, 1.0], [3.0, 5.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, ctr) in centres.iter().enumerate() {
        for _ in 0..15 {
            rows.push(ctr[0] + 0.3 * normal(&mut r).clamp(-2.0, 2.0));
            rows.push(ctr[1] + 0.3 * normal(&mut r).clamp(-2.0, 2.0));
            labels.push(c);
        }
    }
    let x = Array2::from_shape_vec((labels.len(), 2), rows).unwrap();
    for kind in [SvmKind::Linear, SvmKind::Chi2Kernel] {
        let model = svm_train(x.view(), &labels, 3, kind, 100.0).map_err(|e| e.to_string())?;
        let pred = svm_predict(&model, x.view()).map_err(|e| e.to_string())?;
        let acc = pred.labels.iter().zip(&labels).filter(|(a, b)| a == b).count() as f64 / labels.len() as f64;
        ensure!(acc == 1.0, "{kind} training accuracy {acc}");
    }
    Ok(format!("worst objective gap {worst:.2e}; separable accuracy 1.0"))
}

// 7 ------------------------------------------------------------------------

fn ap_oracle(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n = scores.len();
    // rank = items strictly ahead: higher score, or equal score and lower index
    let rank = |i: usize| (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut sum = 0.0;
    for i in (0..n).filter(|&i| positive[i]) {
        let k = rank(i) + 1;
        let hits = (0..n).filter(|&j| positive[j] && rank(j) < k).count();
        sum += hits as f64 / k as f64;
    }
    Some(sum / total as f64)
}

fn f1_oracle(pred: &[usize], truth: &[usize], classes: usize) -> f64 {
    let mut conf = vec![vec![0usize; classes]; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        conf[t][p] += 1;
    }
    let mut total = 0.0;
    for c in 0..classes {
        let tp = conf[c][c] as f64;
        let predicted: f64 = (0..classes).map(|t| conf[t][c] as f64).sum();
        let actual: f64 = conf[c].iter().sum::<usize>() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = if actual > 0.0 { tp / actual } else { 0.0 };
        if precision + recall > 0.0 {
            total += 2.0 * precision * recall / (precision + recall);
        }
    }
    total / classes as f64
}

fn metric_oracles() -> Check {
    let mut r = rng(7);
    for set in 0..100 {
        let n = r.random_range(1..=100);
        let classes = r.random_range(2..=8);
        let truth: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let pred: Vec<usize> = (0..n).map(|_| r.random_range(0..classes)).collect();
        let tied = set % 2 == 0;
        let scores = Array2::from_shape_fn((n, classes), |_| {
            if tied {
                r.random_range(0..4) as f64
            } else {
                normal(&mut r)
            }
        });
        let aps: Vec<f64> = (0..classes)
            .filter_map(|c| {
                let col: Vec<f64> = scores.column(c).to_vec();
                let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
                ap_oracle(&col, &pos)
            })
            .collect();
        let want_map = aps.iter().sum::<f64>() / aps.len() as f64;
        let got_map = mean_average_precision(scores.view(), &truth).map_err(|e| e.to_string())?;
        ensure!((got_map - want_map).abs() <= 1e-12, "set {set}: mAP {got_map} vs {want_map}");
        let got_f1 = mean_f1(&pred, &truth, classes).map_err(|e| e.to_string())?;
        let want_f1 = f1_oracle(&pred, &truth, classes);
        ensure!((got_f1 - want_f1).abs() <= 1e-12, "set {set}: mF1 {got_f1} vs {want_f1}");
    }
    Ok("100 sets".into())
}

// 8 ------------------------------------------------------------------------

fn accuracy_of(records: &[RunRecord], vars: &str) -> Result<f64, String> {
    let rec = records
        .iter()
        .find(|r| r.variables == vars)
        .ok_or_else(|| format!("no {vars} cell"))?;
    match (&rec.report, &rec.error) {
        (Some(rep), _) => Ok(rep.acc.mean),
        (None, e) => Err(format!("{vars} failed: {e:?}")),
    }
}

fn end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut best_overall = 0.0f64;
    for seed in 0..5u64 {
        let data = tmp.path().join(format!("data{seed}"));
        let spec = SynthSpec {
            classes: 6,
            videos_per_class: vec![40],
            features_per_video: 50,
            seed,
            ..SynthSpec::default()
        };
        synth_generate(&spec, &data).map_err(|e| e.to_string())?;
        let mut cfg = ExperimentConfig::new(data.join("manifest.txt"), tmp.path().join(format!("run{seed}")));
        cfg.sampling = vec!["1a".into()];
        cfg.schemes = vec!["2a".into(), "2b".into()];
        cfg.representations = vec!["3d".into()];
        cfg.k = vec![32];
        cfg.seed = seed;
        let records = run_grid(&cfg, RunOptions::default()).map_err(|e| format!("{e:#}"))?;
        let a = accuracy_of(&records, "3d-2a-1a")?;
        let b = accuracy_of(&records, "3d-2b-1a")?;
        best_overall = best_overall.max(a.max(b));
        lines.push(format!("seed {seed}: 2a {:.1}% 2b {:.1}%", 100.0 * a, 100.0 * b));
        ensure!(a >= b - 0.01, "seed {seed}: Fisher 2a {a:.4} < 2b {b:.4} - 1pp");
        ensure!(a.max(b) >= 0.90, "seed {seed}: best accuracy {:.4} below 90%", a.max(b));
    }
    Ok(lines.join(", "))
}

// 9 ------------------------------------------------------------------------

fn report_bits(r: &RunRecord) -> Vec<u64> {
    let rep = r.report.as_ref().expect("checked");
    let mut out = Vec::new();
    for s in &rep.per_split {
        out.extend([s.acc.to_bits(), s.map.to_bits(), s.mf1.to_bits()]);
    }
    for m in [rep.acc, rep.map, rep.mf1] {
        out.extend([m.mean.to_bits(), m.std.to_bits()]);
    }
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data = tmp.path().join("data");
    let spec = SynthSpec {
        layout: ComponentLayout::new(vec![("a".into(), 24), ("b".into(), 30)]).unwrap(),
        classes: 4,
        videos_per_class: vec![10],
        features_per_video: 40,
        splits: 2,
        seed: 9,
        ..SynthSpec::default()
    };
    synth_generate(&spec, &data).map_err(|e| e.to_string())?;
    let run = |name: &str| -> Result<Vec<RunRecord>, String> {
        let mut cfg = ExperimentConfig::new(data.join("manifest.txt"), tmp.path().join(name));
        cfg.k = vec![4];
        cfg.seed = 3;
        run_grid(&cfg, RunOptions::default()).map_err(|e| format!("{e:#}"))
    };
    let first = run("first")?;
    let second = run("second")?;
    ensure!(first.len() == second.len(), "cell counts differ");
    for (a, b) in first.iter().zip(&second) {
        ensure!(a.error.is_none() && b.error.is_none(), "{} failed: {:?} {:?}", a.variables, a.error, b.error);
        ensure!(report_bits(a) == report_bits(b), "{}: reports differ", a.variables);
    }
    Ok(format!("{} cells x 2 splits", first.len()))
}

// ---------------------------------------------------------------------------

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 9] = [
        ("sampling arithmetic", Duration::from_secs(1), sampling_arithmetic),
        ("balance property", Duration::from_secs(30), balance_property),
        ("clustering oracle", Duration::from_secs(10), clustering_oracle),
        ("encoding contracts", Duration::from_secs(60), encoding_contracts),
        ("kernel correctness", Duration::from_secs(30), kernel_correctness),
        ("svm oracle", Duration::from_secs(60), svm_oracle),
        ("metric oracles", Duration::from_secs(10), metric_oracles),
        ("end-to-end", Duration::from_secs(15 * 60), end_to_end),
        ("determinism", Duration::from_secs(5 * 60), determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let took = start.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if took <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; over the time budget")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "{status} {} {name} ({:.2}s of {}s): {detail}",
            i + 1,
            took.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
    println!("all 9 criteria passed");
}
