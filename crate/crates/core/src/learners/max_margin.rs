//! Multiclass max-margin classifier trained in the dual.
//!
//! One weight vector per class, fitted by block coordinate descent on the
//! dual of the single-slack multiclass hinge problem
//!
//! ```text
//! min   1/2 sum_m ||w_m||^2  +  sum_{i,m} e_i^m a_i^m
//! s.t.  sum_m a_i^m = 0,   a_i^m <= C * [m == y_i]
//! ```
//!
//! with `e_i^m = [m != y_i]` and `w_m = sum_i a_i^m x_i`. Each block
//! sub-problem has a closed form found by sorting, so every sweep lowers the
//! dual objective exactly. A large `c_penalty` makes the margin effectively
//! hard.
//!
//! For inputs with an orthonormal Gram matrix the optimum is available in
//! closed form (each class weight is its point minus the mean of all points);
//! [`orthonormal_max_margin`] builds that directly and the iterative solver
//! is expected to land on it.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::learners::LabeledSet;

pub const ORTHONORMAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct MaxMarginOptions {
    /// Penalty on margin violations; the default is large enough to act as a
    /// hard margin on separable data.
    pub c_penalty: f64,
    /// Stop once the largest per-example optimality violation falls below
    /// this.
    pub tol: f64,
    pub max_epochs: usize,
    /// Learn a per-class intercept by appending a constant feature.
    pub add_intercept: bool,
}

impl Default for MaxMarginOptions {
    fn default() -> Self {
        Self {
            c_penalty: 1e6,
            tol: 1e-6,
            max_epochs: 10_000,
            add_intercept: false,
        }
    }
}

/// Linear scores `w_m . x + b_m`, argmax prediction.
#[derive(Debug, Clone)]
pub struct LinearClassifier {
    weights: Array2<f64>,
    intercepts: Vec<f64>,
    classes: usize,
}

impl LinearClassifier {
    pub fn new(weights: Array2<f64>, intercepts: Vec<f64>) -> Result<Self> {
        if weights.nrows() == 0 || weights.nrows() != intercepts.len() {
            return Err(Error::DimensionMismatch {
                expected: weights.nrows(),
                got: intercepts.len(),
            });
        }
        let classes = weights.nrows();
        Ok(Self {
            weights,
            intercepts,
            classes,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn decision_function(&self, x: ArrayView1<f64>) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "query dimension mismatch");
        (0..self.classes)
            .map(|m| self.weights.row(m).dot(&x) + self.intercepts[m])
            .collect()
    }

    /// Highest score wins, ties to the lowest class id.
    pub fn predict(&self, x: ArrayView1<f64>) -> u32 {
        let scores = self.decision_function(x);
        let mut best = 0usize;
        for (m, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = m;
            }
        }
        best as u32
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, y: &[u32]) -> f64 {
        crate::learners::accuracy_of(|q| self.predict(q), x, y)
    }
}

/// Solver diagnostics alongside the fitted classifier.
#[derive(Debug, Clone)]
pub struct MaxMarginInfo {
    /// Dual objective at entry and after each sweep; non-increasing.
    pub dual_objective_trace: Vec<f64>,
    /// Largest per-example optimality violation at the last sweep.
    pub kkt_violation: f64,
    pub epochs: usize,
    /// Final dual variables, one row per example and one column per class.
    pub dual_vars: Array2<f64>,
}

pub fn fit_max_margin(
    context: &LabeledSet,
    opts: &MaxMarginOptions,
) -> Result<LinearClassifier> {
    fit_max_margin_with_info(context, opts).map(|(clf, _)| clf)
}

pub fn fit_max_margin_with_info(
    context: &LabeledSet,
    opts: &MaxMarginOptions,
) -> Result<(LinearClassifier, MaxMarginInfo)> {
    if !(opts.c_penalty > 0.0) || !opts.c_penalty.is_finite() {
        return Err(Error::InvalidInput("c_penalty must be positive".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    if opts.max_epochs == 0 {
        return Err(Error::InvalidInput("max_epochs must be at least 1".into()));
    }
    let present = context.present_classes();
    if present.len() < 2 {
        let class = present.first().copied().unwrap_or(0);
        let count = context.y().iter().filter(|&&l| l == class).count();
        return Err(Error::DegenerateContext { class, count });
    }

    let n = context.len();
    let classes = context.classes();
    let d_in = context.dim();
    let d = if opts.add_intercept { d_in + 1 } else { d_in };
    let mut x = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for t in 0..d_in {
            x[[i, t]] = context.x()[[i, t]];
        }
        if opts.add_intercept {
            x[[i, d_in]] = 1.0;
        }
    }
    let y = context.y();
    let c = opts.c_penalty;

    let norms: Vec<f64> = (0..n).map(|i| x.row(i).dot(&x.row(i))).collect();
    let mut alpha = Array2::<f64>::zeros((n, classes));
    let mut w = Array2::<f64>::zeros((classes, d));

    let mut trace = vec![dual_objective(&w, &alpha, y)];
    let mut violation = f64::INFINITY;
    let mut epochs = 0;
    let mut grad = vec![0.0; classes];
    let mut caps = vec![0.0; classes];
    let mut b = vec![0.0; classes];
    let mut sorted = vec![0.0; classes];

    for epoch in 1..=opts.max_epochs {
        violation = 0.0;
        for i in 0..n {
            let a_i = norms[i];
            // A zero feature row contributes nothing to any weight vector and
            // a fixed amount of slack to every solution, so it is left out.
            if a_i == 0.0 {
                continue;
            }
            let yi = y[i] as usize;
            let xi = x.row(i);
            for (m, g) in grad.iter_mut().enumerate() {
                *g = w.row(m).dot(&xi) + if m == yi { 0.0 } else { 1.0 };
                caps[m] = if m == yi { c } else { 0.0 };
            }
            let max_g = grad.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut min_open = f64::INFINITY;
            for m in 0..classes {
                if alpha[[i, m]] < caps[m] && grad[m] < min_open {
                    min_open = grad[m];
                }
            }
            let block_violation = max_g - min_open;
            if block_violation > violation {
                violation = block_violation;
            }
            if block_violation <= 1e-12 {
                continue;
            }

            for m in 0..classes {
                b[m] = grad[m] - a_i * alpha[[i, m]];
                sorted[m] = b[m];
            }
            sorted[yi] += a_i * c;
            sorted.sort_unstable_by(|p, q| q.partial_cmp(p).unwrap());
            let mut beta = sorted[0] - a_i * c;
            let mut r = 1;
            while r < classes && beta < r as f64 * sorted[r] {
                beta += sorted[r];
                r += 1;
            }
            beta /= r as f64;

            for m in 0..classes {
                let new = (beta - b[m]) / a_i;
                let new = new.min(caps[m]);
                let delta = new - alpha[[i, m]];
                if delta != 0.0 {
                    alpha[[i, m]] = new;
                    for t in 0..d {
                        w[[m, t]] += delta * xi[t];
                    }
                }
            }
        }
        epochs = epoch;
        trace.push(dual_objective(&w, &alpha, y));
        if violation < opts.tol {
            break;
        }
    }

    if violation >= opts.tol {
        return Err(Error::NonConvergence {
            violation,
            tol: opts.tol,
            epochs,
        });
    }

    let mut weights = Array2::<f64>::zeros((classes, d_in));
    let mut intercepts = vec![0.0; classes];
    for m in 0..classes {
        for t in 0..d_in {
            weights[[m, t]] = w[[m, t]];
        }
        if opts.add_intercept {
            intercepts[m] = w[[m, d_in]];
        }
    }
    let clf = LinearClassifier::new(weights, intercepts)?;
    let info = MaxMarginInfo {
        dual_objective_trace: trace,
        kkt_violation: violation,
        epochs,
        dual_vars: alpha,
    };
    Ok((clf, info))
}

fn dual_objective(w: &Array2<f64>, alpha: &Array2<f64>, y: &[u32]) -> f64 {
    let mut obj = 0.0;
    for row in w.rows() {
        obj += 0.5 * row.dot(&row);
    }
    for (i, &yi) in y.iter().enumerate() {
        for m in 0..alpha.ncols() {
            if m != yi as usize {
                obj += alpha[[i, m]];
            }
        }
    }
    obj
}

/// Closed-form max-margin weights for one point per class with an orthonormal
/// Gram matrix: `w_m = x_m - mean(x)`. Rejects inputs whose Gram deviates
/// from the identity by more than [`ORTHONORMAL_TOL`].
pub fn orthonormal_max_margin(points: ArrayView2<f64>) -> Result<LinearClassifier> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::InvalidInput("need at least one point".into()));
    }
    let mut deviation = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let g = points.row(i).dot(&points.row(j));
            let target = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((g - target).abs());
        }
    }
    if deviation > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal {
            deviation,
            tol: ORTHONORMAL_TOL,
        });
    }
    let mean: Array1<f64> = points.mean_axis(ndarray::Axis(0)).unwrap();
    let mut weights = points.to_owned();
    for mut row in weights.rows_mut() {
        row -= &mean;
    }
    LinearClassifier::new(weights, vec![0.0; n])
}
