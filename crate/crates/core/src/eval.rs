//! Accuracy, mean average precision and macro-F1, with split aggregation.

use ndarray::ArrayView2;

use crate::error::{Error, Result};

fn check_pair(predicted: &[usize], truth: &[usize]) -> Result<()> {
    if predicted.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    if predicted.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: predicted.len(),
        });
    }
    Ok(())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    check_pair(predicted, truth)?;
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Non-interpolated AP of one ranking: `scores` sorted descending, ties by
/// original index.
pub fn average_precision(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let total = positive.iter().filter(|&&p| p).count();
    if total == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if positive[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / total as f64)
}

/// Unweighted mean of per-class AP over classes present in `truth`. Absent
/// classes are skipped with a warning.
pub fn mean_average_precision(scores: ArrayView2<'_, f64>, truth: &[usize]) -> Result<f64> {
    if scores.nrows() == 0 {
        return Err(Error::Empty("score matrix"));
    }
    if scores.nrows() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: scores.nrows(),
        });
    }
    if let Some(&bad) = truth.iter().find(|&&t| t >= scores.ncols()) {
        return Err(Error::InvalidArgument(format!("label {bad} has no score column")));
    }
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..scores.ncols() {
        let col: Vec<f64> = scores.column(c).to_vec();
        let pos: Vec<bool> = truth.iter().map(|&t| t == c).collect();
        match average_precision(&col, &pos) {
            Some(ap) => {
                sum += ap;
                present += 1;
            }
            None => log::warn!("class {c} absent from ground truth; excluded from mAP"),
        }
    }
    Ok(sum / present as f64)
}

/// Macro-F1 over `num_classes` classes (F1 = 0 when precision + recall = 0).
pub fn mean_f1(predicted: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    check_pair(predicted, truth)?;
    if num_classes == 0 {
        return Err(Error::InvalidArgument("no classes".into()));
    }
    let mut tp = vec![0usize; num_classes];
    let mut fp = vec![0usize; num_classes];
    let mut fneg = vec![0usize; num_classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::InvalidArgument(format!("label out of range for {num_classes} classes")));
        }
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let total: f64 = (0..num_classes)
        .map(|c| {
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            if tp[c] == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            }
        })
        .sum();
    Ok(total / num_classes as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitMetrics {
    pub acc: f64,
    pub map: f64,
    pub mf1: f64,
}

/// All three metrics for one split.
pub fn evaluate_split(predicted: &[usize], scores: ArrayView2<'_, f64>, truth: &[usize]) -> Result<SplitMetrics> {
    Ok(SplitMetrics {
        acc: accuracy(predicted, truth)?,
        map: mean_average_precision(scores, truth)?,
        mf1: mean_f1(predicted, truth, scores.ncols())?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    MeanStd { mean, std }
}

/// Identifies the configuration a report belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Fingerprint {
    pub method: String,
    pub scheme: String,
    pub sampling: String,
    pub k: usize,
    pub d: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_split: Vec<SplitMetrics>,
    pub acc: MeanStd,
    pub map: MeanStd,
    pub mf1: MeanStd,
    pub fingerprint: Fingerprint,
}

pub fn aggregate(per_split: Vec<SplitMetrics>, fingerprint: Fingerprint) -> Result<EvalReport> {
    if per_split.is_empty() {
        return Err(Error::Empty("split reports"));
    }
    let col = |f: fn(&SplitMetrics) -> f64| mean_std(&per_split.iter().map(f).collect::<Vec<_>>());
    Ok(EvalReport {
        acc: col(|m| m.acc),
        map: col(|m| m.map),
        mf1: col(|m| m.mf1),
        per_split,
        fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    /// Counts positives in every prefix ending at a positive, from scratch.
    fn ap_oracle(scores: &[f64], positive: &[bool]) -> Option<f64> {
        let n = scores.len();
        // rank of item i: number of items strictly ahead of it
        let ahead = |i: usize, j: usize| scores[j] > scores[i] || (scores[j] == scores[i] && j < i);
        let npos = positive.iter().filter(|&&p| p).count();
        if npos == 0 {
            return None;
        }
        let mut total = 0.0;
        for i in (0..n).filter(|&i| positive[i]) {
            let prefix: Vec<usize> = (0..n).filter(|&j| j == i || ahead(i, j)).collect();
            let hits = prefix.iter().filter(|&&j| positive[j]).count();
            total += hits as f64 / prefix.len() as f64;
        }
        Some(total / npos as f64)
    }

    fn f1_oracle(pred: &[usize], truth: &[usize], c: usize) -> f64 {
        let mut conf = vec![vec![0usize; c]; c];
        for (&p, &t) in pred.iter().zip(truth) {
            conf[t][p] += 1;
        }
        let mut s = 0.0;
        for k in 0..c {
            let tp = conf[k][k] as f64;
            let col: usize = (0..c).map(|t| conf[t][k]).sum();
            let row: usize = conf[k].iter().sum();
            let p = if col > 0 { tp / col as f64 } else { 0.0 };
            let r = if row > 0 { tp / row as f64 } else { 0.0 };
            s += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        }
        s / c as f64
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 0]).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy(&[2, 2], &[2, 2]).unwrap(), 1.0);
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn ap_positive_second_of_four() {
        let ap = average_precision(&[0.9, 0.8, 0.3, 0.1], &[false, true, false, false]).unwrap();
        assert_eq!(ap, 0.5);
    }

    #[test]
    fn perfect_ranking_map_is_one() {
        let s = array![[0.9, 0.1], [0.8, 0.2], [0.1, 0.7]];
        assert_eq!(mean_average_precision(s.view(), &[0, 0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn absent_class_skipped() {
        let s = array![[0.9, 0.1, 0.5], [0.2, 0.8, 0.5]];
        assert_eq!(mean_average_precision(s.view(), &[0, 1]).unwrap(), 1.0);
    }

    #[test]
    fn f1_degenerate_class_counts_zero() {
        // class 2 never predicted and never true
        assert_eq!(mean_f1(&[0, 1], &[0, 1], 3).unwrap(), 2.0 / 3.0);
        assert_eq!(mean_f1(&[0, 1, 1], &[0, 1, 1], 2).unwrap(), 1.0);
    }

    #[test]
    fn aggregate_examples() {
        let m = |v| SplitMetrics { acc: v, map: v, mf1: v };
        let one = aggregate(vec![m(0.4)], Fingerprint::default()).unwrap();
        assert_eq!((one.acc.mean, one.acc.std), (0.4, 0.0));
        let two = aggregate(vec![m(0.5), m(0.7)], Fingerprint::default()).unwrap();
        assert!((two.acc.mean - 0.6).abs() < 1e-15);
        assert!((two.acc.std - 0.02f64.sqrt()).abs() < 1e-12);
        let rev = aggregate(vec![m(0.7), m(0.5)], Fingerprint::default()).unwrap();
        assert_eq!(rev.acc, two.acc);
        assert!(aggregate(vec![], Fingerprint::default()).is_err());
    }

    fn labelled(max_n: usize, classes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>, Vec<f64>)> {
        (1..=max_n).prop_flat_map(move |n| {
            (
                prop::collection::vec(0..classes, n),
                prop::collection::vec(0..classes, n),
                // coarse grid so ties occur
                prop::collection::vec((0u32..8).prop_map(|v| v as f64 / 8.0), n * classes),
            )
        })
    }

    proptest! {
        #[test]
        fn metrics_match_oracles((truth, pred, raw) in labelled(100, 4)) {
            let n = truth.len();
            let scores = Array2::from_shape_vec((n, 4), raw).unwrap();
            let got = mean_average_precision(scores.view(), &truth).unwrap();
            let aps: Vec<f64> = (0..4)
                .filter_map(|c| ap_oracle(&scores.column(c).to_vec(), &truth.iter().map(|&t| t == c).collect::<Vec<_>>()))
                .collect();
            let want = aps.iter().sum::<f64>() / aps.len() as f64;
            prop_assert!((got - want).abs() <= 1e-12);
            let f1 = mean_f1(&pred, &truth, 4).unwrap();
            prop_assert!((f1 - f1_oracle(&pred, &truth, 4)).abs() <= 1e-12);
            for v in [got, f1, accuracy(&pred, &truth).unwrap()] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        #[test]
        fn map_invariant_to_monotone_transform((truth, _p, raw) in labelled(40, 3)) {
            let n = truth.len();
            let s = Array2::from_shape_vec((n, 3), raw).unwrap();
            let t = s.mapv(|v| (3.0 * v).exp() - 7.0);
            prop_assert_eq!(
                mean_average_precision(s.view(), &truth).unwrap(),
                mean_average_precision(t.view(), &truth).unwrap()
            );
        }

        #[test]
        fn f1_invariant_to_relabeling((truth, pred, _r) in labelled(50, 4), perm in Just([2usize, 0, 3, 1]).prop_shuffle()) {
            let pt: Vec<usize> = truth.iter().map(|&t| perm[t]).collect();
            let pp: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            let a = mean_f1(&pred, &truth, 4).unwrap();
            let b = mean_f1(&pp, &pt, 4).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn accuracy_pairing_invariant((truth, pred, _r) in labelled(30, 3), rot in 0usize..30) {
            let n = truth.len();
            let r = rot % n;
            let mut t2 = truth.clone();
            let mut p2 = pred.clone();
            t2.rotate_left(r);
            p2.rotate_left(r);
            prop_assert_eq!(accuracy(&pred, &truth).unwrap(), accuracy(&p2, &t2).unwrap());
        }
    }
}
