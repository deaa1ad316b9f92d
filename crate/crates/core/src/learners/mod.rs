//! Models fitted on a selected context set.
//!
//! * [`PrototypeClassifier`]: per-class mean, nearest-prototype prediction.
//!   Robust to contexts that miss classes (it just never predicts them).
//! * [`LinearClassifier`] via [`max_margin::fit_max_margin`]: multiclass
//!   max-margin weights from a dual coordinate solver, plus the closed form
//!   for orthonormal inputs.
//! * [`BayesGaussianClassifier`]: the nearest-true-mean reference rule for
//!   isotropic Gaussian tasks.
//! * [`kernel_ridge::KernelRidgeRegressor`]: RBF kernel ridge for the
//!   regression tasks.

pub mod kernel_ridge;
pub mod max_margin;

pub use kernel_ridge::{fit_kernel_ridge, KernelRidgeRegressor};
pub use max_margin::{
    fit_max_margin, fit_max_margin_with_info, orthonormal_max_margin, LinearClassifier,
    MaxMarginInfo, MaxMarginOptions,
};

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// A labeled context: `n x d` points with class labels in `[0, classes)`.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    x: Array2<f64>,
    y: Vec<u32>,
    classes: usize,
}

impl LabeledSet {
    pub fn new(x: Array2<f64>, y: Vec<u32>, classes: usize) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput("context must be at least 1x1".into()));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                got: y.len(),
            });
        }
        if classes == 0 {
            return Err(Error::InvalidInput("classes must be at least 1".into()));
        }
        if let Some(&bad) = y.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("context contains non-finite values".into()));
        }
        Ok(Self { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn y(&self) -> &[u32] {
        &self.y
    }

    /// Class ids that actually appear, ascending.
    pub fn present_classes(&self) -> Vec<u32> {
        let mut seen = vec![false; self.classes];
        for &l in &self.y {
            seen[l as usize] = true;
        }
        (0..self.classes as u32)
            .filter(|&c| seen[c as usize])
            .collect()
    }
}

/// Per-class mean prototypes; predicts the nearest one.
#[derive(Debug, Clone)]
pub struct PrototypeClassifier {
    prototypes: Array2<f64>,
    present: Vec<bool>,
    classes: usize,
}

/// Averages each present class; classes missing from the context are never
/// predicted.
pub fn fit_prototypes(context: &LabeledSet) -> Result<PrototypeClassifier> {
    let classes = context.classes();
    let d = context.dim();
    let mut sums = Array2::<f64>::zeros((classes, d));
    let mut counts = vec![0usize; classes];
    for (i, &label) in context.y().iter().enumerate() {
        counts[label as usize] += 1;
        for t in 0..d {
            sums[[label as usize, t]] += context.x()[[i, t]];
        }
    }
    let mut present = vec![false; classes];
    for c in 0..classes {
        if counts[c] > 0 {
            present[c] = true;
            for t in 0..d {
                sums[[c, t]] /= counts[c] as f64;
            }
        }
    }
    Ok(PrototypeClassifier {
        prototypes: sums,
        present,
        classes,
    })
}

impl PrototypeClassifier {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn prototypes(&self) -> ArrayView2<'_, f64> {
        self.prototypes.view()
    }

    /// Nearest present prototype, ties to the lowest class id.
    pub fn predict(&self, x: ArrayView1<f64>) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for c in 0..self.classes {
            if !self.present[c] {
                continue;
            }
            let mut d2 = 0.0;
            for t in 0..x.len() {
                let diff = x[t] - self.prototypes[[c, t]];
                d2 += diff * diff;
            }
            if d2 < best_d {
                best_d = d2;
                best = c as u32;
            }
        }
        best
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, y: &[u32]) -> f64 {
        accuracy_of(|q| self.predict(q), x, y)
    }
}

/// The reference rule for isotropic Gaussian class conditionals: predict the
/// nearest true mean, which is the accuracy-optimal decision.
#[derive(Debug, Clone)]
pub struct BayesGaussianClassifier {
    means: Array2<f64>,
    sigma: f64,
}

impl BayesGaussianClassifier {
    pub fn new(means: Array2<f64>, sigma: f64) -> Result<Self> {
        if means.nrows() == 0 {
            return Err(Error::InvalidInput("need at least one mean".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        Ok(Self { means, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn means(&self) -> ArrayView2<'_, f64> {
        self.means.view()
    }

    /// Nearest mean, ties to the lowest class id.
    pub fn predict(&self, x: ArrayView1<f64>) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for c in 0..self.means.nrows() {
            let mut d2 = 0.0;
            for t in 0..x.len() {
                let diff = x[t] - self.means[[c, t]];
                d2 += diff * diff;
            }
            if d2 < best_d {
                best_d = d2;
                best = c as u32;
            }
        }
        best
    }
}

/// Fraction of labeled points the reference rule classifies correctly.
pub fn bayes_accuracy(clf: &BayesGaussianClassifier, x: ArrayView2<f64>, y: &[u32]) -> f64 {
    accuracy_of(|q| clf.predict(q), x, y)
}

pub(crate) fn accuracy_of<F: Fn(ArrayView1<f64>) -> u32>(
    predict: F,
    x: ArrayView2<f64>,
    y: &[u32],
) -> f64 {
    assert_eq!(x.nrows(), y.len(), "points and labels differ in length");
    if y.is_empty() {
        return 0.0;
    }
    let correct = x
        .rows()
        .into_iter()
        .zip(y)
        .filter(|(row, &label)| predict(row.view()) == label)
        .count();
    correct as f64 / y.len() as f64
}
