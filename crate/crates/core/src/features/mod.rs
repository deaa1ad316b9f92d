//! Feature pools, diagonal metrics and probability matrices.
//!
//! A [`FeatureMatrix`] is the label-free view every selector operates on:
//! an `n x d` single-precision matrix plus one stable `u64` id per row. Ids
//! survive subsetting, which is what keeps id-keyed randomness (see
//! [`crate::rng`]) consistent between a pool and its strata.
//!
//! A [`FeaturePool`] wraps a matrix together with optional class labels.
//! Labels are only reachable through the pool, never through the matrix, so
//! passing `&FeatureMatrix` to a selector is a compile-time guarantee that
//! the selector cannot peek at them.
//!
//! Feature payloads stay in `f32` (matching exported deep features and the
//! on-disk formats in [`io`]); all arithmetic on top of them accumulates in
//! `f64`.

pub mod io;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};

/// Label-free feature rows with stable per-row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f32>,
    ids: Vec<u64>,
}

impl FeatureMatrix {
    /// Wraps an `n x d` matrix, assigning sequential ids `0..n`.
    pub fn new(data: Array2<f32>) -> Result<Self> {
        let ids = (0..data.nrows() as u64).collect();
        Self::with_ids(data, ids)
    }

    /// Wraps an `n x d` matrix with caller-provided ids (must be unique).
    pub fn with_ids(data: Array2<f32>, ids: Vec<u64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "feature matrix must be at least 1x1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if ids.len() != data.nrows() {
            return Err(Error::DimensionMismatch {
                expected: data.nrows(),
                got: ids.len(),
            });
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("row ids must be unique".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "feature matrix contains a non-finite value".into(),
            ));
        }
        Ok(Self { data, ids })
    }

    /// Number of rows (pool points).
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    /// Feature dimension `d`.
    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<f32> {
        &self.data
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    /// The matrix widened to `f64`, for numerical work.
    pub fn to_f64(&self) -> Array2<f64> {
        self.data.mapv(f64::from)
    }

    /// Row `i` widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Array1<f64> {
        self.data.row(i).mapv(f64::from)
    }

    /// A new matrix holding the given rows (ids carried along).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("subset of zero rows".into()));
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::InvalidInput(format!(
                "subset row {bad} out of range for {} rows",
                self.len()
            )));
        }
        let data = self.data.select(ndarray::Axis(0), rows);
        let ids = rows.iter().map(|&r| self.ids[r]).collect();
        Ok(Self { data, ids })
    }

    /// Rows scaled to unit Euclidean norm. Zero rows are left unchanged.
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for mut row in data.rows_mut() {
            let norm = row
                .iter()
                .map(|&v| f64::from(v) * f64::from(v))
                .sum::<f64>()
                .sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| (f64::from(v) / norm) as f32);
            }
        }
        Self {
            data,
            ids: self.ids.clone(),
        }
    }
}

/// Class labels attached to a pool: values in `[0, classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassLabels {
    classes: usize,
    labels: Vec<u32>,
}

impl ClassLabels {
    pub fn new(labels: Vec<u32>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidInput("classes must be at least 1".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self { classes, labels })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn values(&self) -> &[u32] {
        &self.labels
    }
}

/// A feature matrix plus optional hidden labels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePool {
    features: FeatureMatrix,
    labels: Option<ClassLabels>,
}

impl FeaturePool {
    pub fn unlabeled(features: FeatureMatrix) -> Self {
        Self {
            features,
            labels: None,
        }
    }

    pub fn labeled(features: FeatureMatrix, labels: Vec<u32>, classes: usize) -> Result<Self> {
        if labels.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: labels.len(),
            });
        }
        let labels = ClassLabels::new(labels, classes)?;
        Ok(Self {
            features,
            labels: Some(labels),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    /// The label-free view handed to selectors.
    pub fn features(&self) -> &FeatureMatrix {
        &self.features
    }

    pub fn labels(&self) -> Option<&[u32]> {
        self.labels.as_ref().map(ClassLabels::values)
    }

    pub fn classes(&self) -> Option<usize> {
        self.labels.as_ref().map(ClassLabels::classes)
    }

    /// Subset of rows, labels carried along.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        let features = self.features.subset(rows)?;
        let labels = match &self.labels {
            Some(l) => Some(ClassLabels::new(
                rows.iter().map(|&r| l.labels[r]).collect(),
                l.classes,
            )?),
            None => None,
        };
        Ok(Self { features, labels })
    }
}

/// A positive per-dimension scale for squared distances, typically inverse
/// variances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMetric {
    scale: Vec<f64>,
}

impl DiagonalMetric {
    pub fn new(scale: Vec<f64>) -> Result<Self> {
        if scale.is_empty() {
            return Err(Error::InvalidInput("metric scale must be non-empty".into()));
        }
        if scale.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidInput(
                "metric scale entries must be positive and finite".into(),
            ));
        }
        Ok(Self { scale })
    }

    /// The plain Euclidean metric in `d` dimensions (all scales 1).
    pub fn euclidean(d: usize) -> Self {
        Self {
            scale: vec![1.0; d],
        }
    }

    /// Inverse-variance metric. Variances must be strictly positive.
    pub fn from_variances(variances: &[f64]) -> Result<Self> {
        if variances.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "variances must be positive and finite".into(),
            ));
        }
        Self::new(variances.iter().map(|&v| 1.0 / v).collect())
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }
}

/// Scaled squared distance `sum_t s_t (x_t - y_t)^2`.
pub fn squared_mahalanobis(x: ArrayView1<f64>, y: ArrayView1<f64>, metric: &DiagonalMetric) -> f64 {
    assert_eq!(x.len(), y.len(), "point dimensions differ");
    assert_eq!(x.len(), metric.dim(), "metric dimension differs");
    let mut acc = 0.0;
    for t in 0..x.len() {
        let diff = x[t] - y[t];
        acc += metric.scale[t] * diff * diff;
    }
    acc
}

/// Dense `n x n` Euclidean distance matrix (not squared).
pub fn pairwise_euclidean(features: &FeatureMatrix) -> Array2<f64> {
    let n = features.len();
    let x = features.to_f64();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for t in 0..x.ncols() {
                let diff = x[[i, t]] - x[[j, t]];
                acc += diff * diff;
            }
            let d = acc.sqrt();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    out
}

/// Row-stochastic class-probability matrix (`n x classes`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    probs: Array2<f64>,
}

impl ProbabilityMatrix {
    /// Validates non-negativity and unit row sums (tolerance 1e-9).
    pub fn new(probs: Array2<f64>) -> Result<Self> {
        if probs.nrows() == 0 || probs.ncols() == 0 {
            return Err(Error::BadProbabilities(format!(
                "must be at least 1x1, got {}x{}",
                probs.nrows(),
                probs.ncols()
            )));
        }
        for (i, row) in probs.rows().into_iter().enumerate() {
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::BadProbabilities(format!(
                        "row {i} contains a negative or non-finite entry"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::BadProbabilities(format!(
                    "row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::BadProbabilities("ragged rows".into()));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let arr = Array2::from_shape_vec((n, c), flat)
            .map_err(|e| Error::BadProbabilities(e.to_string()))?;
        Self::new(arr)
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn classes(&self) -> usize {
        self.probs.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.probs.row(i)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.probs
    }

    /// The given rows as a new matrix (row sums are preserved).
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.len()) {
            return Err(Error::BadProbabilities(format!(
                "subset row {bad} out of range for {} rows",
                self.len()
            )));
        }
        Ok(Self {
            probs: self.probs.select(ndarray::Axis(0), rows),
        })
    }
}
