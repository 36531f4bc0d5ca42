//! 1-vs-all SVMs: χ² kernel for histogram encodings, linear otherwise.

mod kernel;
mod solver;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;

use crate::binio::{BinReader, BinWriter};
use crate::error::{Error, Result};

pub use kernel::{chi2_cross, chi2_distance, chi2_distances, chi2_gram, chi2_kernel_from_distances, KernelGram};
pub use solver::{dual_objective, solve_kernel_dual, solve_linear_dual, DualSolution, KKT_TOLERANCE, MAX_STEPS};

pub const DEFAULT_C: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SvmKind {
    Chi2Kernel,
    Linear,
}

impl SvmKind {
    pub fn name(self) -> &'static str {
        match self {
            SvmKind::Chi2Kernel => "chi2",
            SvmKind::Linear => "linear",
        }
    }
}

impl fmt::Display for SvmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SvmKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chi2" | "chi2_kernel" | "kernel" => Ok(SvmKind::Chi2Kernel),
            "linear" => Ok(SvmKind::Linear),
            _ => Err(Error::InvalidArgument(format!("unknown SVM kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Machines {
    /// `score_c(x) = Σ_s coef[c, s] K(support_s, x) − rho[c]`.
    Kernel {
        support: Array2<f64>,
        coef: Array2<f64>,
        rho: Array1<f64>,
    },
    /// `score_c(x) = w_c · x + bias[c]`.
    Linear { weights: Array2<f64>, bias: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kind: SvmKind,
    pub c: f64,
    /// χ² normalizer from training; `None` for linear models.
    pub a: Option<f64>,
    pub num_classes: usize,
    pub dims: usize,
    pub machines: Machines,
    /// Solver update steps per class.
    pub steps: Vec<u64>,
}

fn check_labels(labels: &[usize], n: usize, num_classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::InvalidArgument(format!("label {bad} out of range for {num_classes} classes")));
    }
    let first = labels.first().ok_or(Error::Empty("SVM training set"))?;
    if labels.iter().all(|l| l == first) {
        return Err(Error::InvalidArgument("SVM training needs at least two classes".into()));
    }
    Ok(())
}

fn binary_targets(labels: &[usize], class: usize) -> Vec<f64> {
    labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect()
}

/// One binary dual per class on the precomputed kernel matrix. Classes absent
/// from `labels` get `None`.
pub fn train_kernel_machines(
    k: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    c: f64,
) -> Result<Vec<Option<DualSolution>>> {
    check_labels(labels, k.nrows(), num_classes)?;
    (0..num_classes)
        .into_par_iter()
        .map(|class| {
            if !labels.contains(&class) {
                log::warn!("class {class} has no training examples");
                return Ok(None);
            }
            solve_kernel_dual(k, &binary_targets(labels, class), c).map(Some)
        })
        .collect()
}

/// Trains a χ² kernel model from a training Gram computed on `train`.
pub fn svm_train_kernel(
    gram: &KernelGram,
    train: ArrayView2<'_, f64>,
    labels: &[usize],
    num_classes: usize,
    c: f64,
) -> Result<SvmModel> {
    if gram.matrix.nrows() != train.nrows() {
        return Err(Error::DimensionMismatch {
            expected: train.nrows(),
            actual: gram.matrix.nrows(),
        });
    }
    let sols = train_kernel_machines(gram.matrix.view(), labels, num_classes, c)?;
    // support set: rows with a non-zero coefficient in any machine
    let n = train.nrows();
    let used: Vec<usize> = (0..n)
        .filter(|&i| sols.iter().flatten().any(|s| s.alpha[i] != 0.0))
        .collect();
    let mut coef = Array2::<f64>::zeros((num_classes, used.len()));
    let mut rho = Array1::<f64>::zeros(num_classes);
    let mut steps = vec![0; num_classes];
    for (class, sol) in sols.iter().enumerate() {
        match sol {
            Some(s) => {
                for (col, &i) in used.iter().enumerate() {
                    let y = if labels[i] == class { 1.0 } else { -1.0 };
                    coef[[class, col]] = s.alpha[i] * y;
                }
                rho[class] = s.rho;
                steps[class] = s.steps;
            }
            None => rho[class] = 1.0,
        }
    }
    Ok(SvmModel {
        kind: SvmKind::Chi2Kernel,
        c,
        a: Some(gram.a),
        num_classes,
        dims: train.ncols(),
        machines: Machines::Kernel {
            support: train.select(Axis(0), &used),
            coef,
            rho,
        },
        steps,
    })
}

/// Trains a linear model; the bias is learned as the weight of a constant
/// feature.
pub fn svm_train_linear(train: ArrayView2<'_, f64>, labels: &[usize], num_classes: usize, c: f64) -> Result<SvmModel> {
    check_labels(labels, train.nrows(), num_classes)?;
    let k = train.dot(&train.t()).mapv(|v| v + 1.0);
    let sols: Vec<Option<DualSolution>> = (0..num_classes)
        .into_par_iter()
        .map(|class| {
            if !labels.contains(&class) {
                log::warn!("class {class} has no training examples");
                return Ok(None);
            }
            solve_linear_dual(k.view(), &binary_targets(labels, class), c).map(Some)
        })
        .collect::<Result<_>>()?;
    let mut weights = Array2::<f64>::zeros((num_classes, train.ncols()));
    let mut bias = Array1::<f64>::zeros(num_classes);
    let mut steps = vec![0; num_classes];
    for (class, sol) in sols.iter().enumerate() {
        let Some(s) = sol else {
            bias[class] = -1.0;
            continue;
        };
        let mut w = weights.row_mut(class);
        for (i, row) in train.outer_iter().enumerate() {
            let ay = s.alpha[i] * if labels[i] == class { 1.0 } else { -1.0 };
            if ay != 0.0 {
                w.scaled_add(ay, &row);
                bias[class] += ay;
            }
        }
        steps[class] = s.steps;
    }
    Ok(SvmModel {
        kind: SvmKind::Linear,
        c,
        a: None,
        num_classes,
        dims: train.ncols(),
        machines: Machines::Linear { weights, bias },
        steps,
    })
}

/// Trains `kind` on the rows of `train`.
pub fn svm_train(train: ArrayView2<'_, f64>, labels: &[usize], num_classes: usize, kind: SvmKind, c: f64) -> Result<SvmModel> {
    match kind {
        SvmKind::Chi2Kernel => {
            let gram = chi2_gram(train)?;
            svm_train_kernel(&gram, train, labels, num_classes, c)
        }
        SvmKind::Linear => svm_train_linear(train, labels, num_classes, c),
    }
}

/// Predicted labels and the `N × C` decision-score matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub scores: Array2<f64>,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in row.into_iter().enumerate() {
        if v > best_v || i == 0 {
            best = i;
            best_v = v;
        }
    }
    best
}

pub fn svm_predict(model: &SvmModel, x: ArrayView2<'_, f64>) -> Result<Prediction> {
    if x.ncols() != model.dims {
        return Err(Error::DimensionMismatch {
            expected: model.dims,
            actual: x.ncols(),
        });
    }
    let scores = match &model.machines {
        Machines::Kernel { support, coef, rho } => {
            let a = model.a.ok_or_else(|| Error::Format("kernel model without A".into()))?;
            let k = if support.nrows() == 0 {
                Array2::zeros((x.nrows(), 0))
            } else {
                chi2_cross(x, support.view(), a)?.matrix
            };
            let mut s = k.dot(&coef.t());
            s -= &rho.view().insert_axis(Axis(0));
            s
        }
        Machines::Linear { weights, bias } => {
            let mut s = x.dot(&weights.t());
            s += &bias.view().insert_axis(Axis(0));
            s
        }
    };
    let labels = scores.outer_iter().map(|r| argmax(r.iter().copied())).collect();
    Ok(Prediction { labels, scores })
}

const MAGIC: &[u8] = b"AVSVM\0\0\0";
const VERSION: u32 = 1;

impl SvmModel {
    pub fn write_to<W: Write>(&self, w: W) -> Result<W> {
        let mut w = BinWriter::new(w);
        w.bytes(MAGIC)?;
        w.u32(VERSION)?;
        w.str(self.kind.name())?;
        w.f64(self.c)?;
        w.f64(self.a.unwrap_or(0.0))?;
        w.u64(self.num_classes as u64)?;
        w.u64(self.dims as u64)?;
        w.u64(self.steps.len() as u64)?;
        for &s in &self.steps {
            w.u64(s)?;
        }
        match &self.machines {
            Machines::Kernel { support, coef, rho } => {
                w.mat(support)?;
                w.mat(coef)?;
                w.vec(rho)?;
            }
            Machines::Linear { weights, bias } => {
                w.mat(weights)?;
                w.vec(bias)?;
            }
        }
        Ok(w.into_inner())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BinReader::new(r);
        r.expect_magic(MAGIC, VERSION)?;
        let kind: SvmKind = r.str()?.parse()?;
        let c = r.f64()?;
        let a = r.f64()?;
        let num_classes = r.u64()? as usize;
        let dims = r.u64()? as usize;
        let n_steps = r.u64()? as usize;
        if n_steps != num_classes {
            return Err(Error::Format("step count per class mismatch".into()));
        }
        let steps = (0..n_steps).map(|_| r.u64()).collect::<Result<_>>()?;
        let machines = match kind {
            SvmKind::Chi2Kernel => {
                let support = r.mat()?;
                let coef = r.mat()?;
                let rho = r.vec()?;
                if support.ncols() != dims && support.nrows() > 0
                    || coef.dim() != (num_classes, support.nrows())
                    || rho.len() != num_classes
                {
                    return Err(Error::Format("inconsistent kernel model shapes".into()));
                }
                Machines::Kernel { support, coef, rho }
            }
            SvmKind::Linear => {
                let weights = r.mat()?;
                let bias = r.vec()?;
                if weights.dim() != (num_classes, dims) || bias.len() != num_classes {
                    return Err(Error::Format("inconsistent linear model shapes".into()));
                }
                Machines::Linear { weights, bias }
            }
        };
        Ok(Self {
            kind,
            c,
            a: (kind == SvmKind::Chi2Kernel).then_some(a),
            num_classes,
            dims,
            machines,
            steps,
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
