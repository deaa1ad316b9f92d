//! Gaussian mixtures with a covariance shared by all components, fitted by
//! EM.
//!
//! The covariance is a single diagonal pooled across components (or a single
//! spherical scalar for the soft-k-means flavor), re-estimated each M-step
//! from all responsibilities. Per-dimension variances are floored at
//! `max(floor, floor * pooled variance)` so degenerate pools produce a
//! degenerate-but-finite model instead of an error.
//!
//! The E-step works in the log domain (log-sum-exp), and the log-likelihood
//! of the parameters entering each iteration is recorded; constrained EM
//! keeps that trace non-decreasing up to rounding.

use ndarray::{Array1, Array2, ArrayView1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{DiagonalMetric, FeatureMatrix};
use crate::rng;

const LN_2PI: f64 = 1.8378770664093453;
/// Stop when the relative log-likelihood improvement drops below this.
const REL_TOL: f64 = 1e-7;

/// Covariance structure shared by all components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CovarianceMode {
    /// One variance per dimension.
    Diagonal,
    /// One scalar variance for all dimensions.
    Spherical,
}

/// Per-point, per-component membership weights; rows sum to 1.
#[derive(Debug, Clone)]
pub struct Responsibilities(Array2<f64>);

impl Responsibilities {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }
}

/// A fitted mixture: component weights, means, one shared diagonal
/// covariance, and the EM log-likelihood trace.
#[derive(Debug, Clone, Serialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Array2<f64>,
    pub cov_diag: Vec<f64>,
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    /// Inverse-covariance metric of the shared diagonal.
    pub fn metric(&self) -> DiagonalMetric {
        DiagonalMetric::from_variances(&self.cov_diag).expect("EM floors variances above zero")
    }

    /// `ln(w_j) + ln N(x | mu_j, cov)` for every component.
    pub fn component_log_densities(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let d = self.dim();
        let log_det: f64 = self.cov_diag.iter().map(|&c| c.ln()).sum();
        let norm = -0.5 * (d as f64 * LN_2PI + log_det);
        (0..self.k())
            .map(|j| {
                let mut quad = 0.0;
                for t in 0..d {
                    let diff = x[t] - self.means[[j, t]];
                    quad += diff * diff / self.cov_diag[t];
                }
                self.weights[j].ln() + norm - 0.5 * quad
            })
            .collect()
    }

    /// Log of the mixture density at `x`.
    pub fn log_density(&self, x: ArrayView1<f64>) -> f64 {
        log_sum_exp(&self.component_log_densities(x))
    }

    /// E-step responsibilities for the given points.
    pub fn responsibilities(&self, features: &FeatureMatrix) -> Responsibilities {
        let x = features.to_f64();
        let n = x.nrows();
        let mut resp = Array2::zeros((n, self.k()));
        for i in 0..n {
            let logs = self.component_log_densities(x.row(i));
            let total = log_sum_exp(&logs);
            for j in 0..self.k() {
                resp[[i, j]] = (logs[j] - total).exp();
            }
        }
        Responsibilities(resp)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("model serializes")
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Per-dimension biased variance of the pool.
fn pooled_variance(x: &Array2<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    let mean = x.sum_axis(ndarray::Axis(0)) / n;
    let mut var = Array1::zeros(x.ncols());
    for row in x.rows() {
        for t in 0..x.ncols() {
            let diff = row[t] - mean[t];
            var[t] += diff * diff;
        }
    }
    var / n
}

/// Fits a `k`-component mixture with one shared diagonal covariance.
///
/// Means are initialized by k-means++ seeding plus Lloyd iterations on the
/// same seed. Stops after `max_iter` EM iterations or when the relative
/// log-likelihood improvement falls below 1e-7.
pub fn gmm_fit(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    floor: f64,
) -> Result<GmmModel> {
    fit_mode(features, k, seed, max_iter, floor, CovarianceMode::Diagonal)
}

/// The soft-k-means flavor: a shared spherical covariance.
pub fn soft_kmeans_fit(features: &FeatureMatrix, k: usize, seed: u64) -> Result<GmmModel> {
    fit_mode(features, k, seed, 100, 1e-6, CovarianceMode::Spherical)
}

/// Mixture density of every pool point under the soft-k-means fit.
///
/// Values are clamped to `f64::MIN_POSITIVE` so callers can rely on strictly
/// positive weights.
pub fn soft_kmeans_density(features: &FeatureMatrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    let model = soft_kmeans_fit(features, k, seed)?;
    let x = features.to_f64();
    Ok((0..x.nrows())
        .map(|i| model.log_density(x.row(i)).exp().max(f64::MIN_POSITIVE))
        .collect())
}

fn fit_mode(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    floor: f64,
    mode: CovarianceMode,
) -> Result<GmmModel> {
    let n = features.len();
    let d = features.dim();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "component count must be in 1..={n}, got {k}"
        )));
    }
    if !(floor > 0.0) || !floor.is_finite() {
        return Err(Error::InvalidInput(
            "variance floor must be positive and finite".into(),
        ));
    }
    if max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }

    let x = features.to_f64();
    let pooled = pooled_variance(&x);
    let floors: Vec<f64> = match mode {
        CovarianceMode::Diagonal => pooled.iter().map(|&v| floor.max(floor * v)).collect(),
        CovarianceMode::Spherical => {
            let mean_var = pooled.mean().unwrap_or(0.0);
            vec![floor.max(floor * mean_var); d]
        }
    };

    let init = crate::clustering::kmeans(features, k, rng::split(seed, 0x6d65616e), 100, 1e-10)?;
    let mut means = init.centers;
    let mut weights = vec![1.0 / k as f64; k];
    let mut cov: Vec<f64> = match mode {
        CovarianceMode::Diagonal => pooled
            .iter()
            .zip(&floors)
            .map(|(&v, &f)| v.max(f))
            .collect(),
        CovarianceMode::Spherical => {
            let mean_var = pooled.mean().unwrap_or(0.0);
            vec![mean_var.max(floors[0]); d]
        }
    };

    let mut trace: Vec<f64> = Vec::with_capacity(max_iter);
    let mut resp = Array2::<f64>::zeros((n, k));
    let mut converged = false;

    for _ in 0..max_iter {
        // E-step with the current parameters, tracking the log-likelihood.
        let model = GmmModel {
            weights: weights.clone(),
            means: means.clone(),
            cov_diag: cov.clone(),
            log_likelihood_trace: Vec::new(),
            converged: false,
        };
        let mut ll = 0.0;
        for i in 0..n {
            let logs = model.component_log_densities(x.row(i));
            let total = log_sum_exp(&logs);
            ll += total;
            for j in 0..k {
                resp[[i, j]] = (logs[j] - total).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            let rel = (ll - prev) / f64::max(prev.abs(), 1e-12);
            if rel < REL_TOL {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);

        // M-step: weights, means, then the pooled shared covariance.
        let mut mass = vec![0.0f64; k];
        for i in 0..n {
            for j in 0..k {
                mass[j] += resp[[i, j]];
            }
        }
        for j in 0..k {
            weights[j] = mass[j] / n as f64;
            if mass[j] <= f64::MIN_POSITIVE {
                continue; // dead component keeps its mean
            }
            for t in 0..d {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += resp[[i, j]] * x[[i, t]];
                }
                means[[j, t]] = acc / mass[j];
            }
        }
        match mode {
            CovarianceMode::Diagonal => {
                for t in 0..d {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..k {
                            let diff = x[[i, t]] - means[[j, t]];
                            acc += resp[[i, j]] * diff * diff;
                        }
                    }
                    cov[t] = (acc / n as f64).max(floors[t]);
                }
            }
            CovarianceMode::Spherical => {
                let mut acc = 0.0;
                for i in 0..n {
                    for j in 0..k {
                        let mut q = 0.0;
                        for t in 0..d {
                            let diff = x[[i, t]] - means[[j, t]];
                            q += diff * diff;
                        }
                        acc += resp[[i, j]] * q;
                    }
                }
                let s = (acc / (n as f64 * d as f64)).max(floors[0]);
                cov.iter_mut().for_each(|c| *c = s);
            }
        }
    }

    Ok(GmmModel {
        weights,
        means,
        cov_diag: cov,
        log_likelihood_trace: trace,
        converged,
    })
}
