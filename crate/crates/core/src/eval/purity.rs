//! Purity of neighborhoods under k-means pseudo-labels.
//!
//! A point is pure at radius `delta` when its closed ball contains only
//! points sharing its pseudo-label. The curve of the pure fraction against a
//! radius grid is non-increasing, and `delta_star` is the largest grid radius
//! still meeting the threshold. This is how a coverage radius is chosen for
//! ball-coverage selection when none is given.

use serde::{Deserialize, Serialize};

use crate::clustering::kmeans;
use crate::error::{Error, Result};
use crate::features::{pairwise_euclidean, FeatureMatrix};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityCurve {
    pub deltas: Vec<f64>,
    pub purity: Vec<f64>,
    pub delta_star: f64,
    /// Set when no grid radius met the threshold; `delta_star` is then the
    /// smallest grid value.
    pub below_threshold_everywhere: bool,
}

impl PurityCurve {
    /// Two-column CSV of the curve, one `delta,purity` row per grid radius.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("delta,purity\n");
        for (d, p) in self.deltas.iter().zip(&self.purity) {
            out.push_str(&format!("{d},{p}\n"));
        }
        out
    }
}

/// 64 log-spaced radii from the smallest positive pairwise distance to the
/// pool diameter. A degenerate pool (one point, or all points identical)
/// gets the single radius 1.0.
pub fn default_delta_grid(features: &FeatureMatrix) -> Vec<f64> {
    let dist = pairwise_euclidean(features);
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for i in 0..features.len() {
        for j in (i + 1)..features.len() {
            let d = dist[[i, j]];
            if d > 0.0 && d < lo {
                lo = d;
            }
            if d > hi {
                hi = d;
            }
        }
    }
    if !lo.is_finite() || hi <= 0.0 {
        return vec![1.0];
    }
    if lo >= hi {
        return vec![hi];
    }
    let points = 64;
    let (ln_lo, ln_hi) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| {
            let t = i as f64 / (points - 1) as f64;
            (ln_lo + t * (ln_hi - ln_lo)).exp()
        })
        .collect()
}

/// Pseudo-labels come from k-means with `classes` clusters seeded by `seed`.
pub fn purity_curve(
    features: &FeatureMatrix,
    classes: usize,
    grid: &[f64],
    threshold: f64,
    seed: u64,
) -> Result<PurityCurve> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("radius grid must be non-empty".into()));
    }
    for w in grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidInput(
                "radius grid must be strictly increasing".into(),
            ));
        }
    }
    if !(grid[0] > 0.0) || !grid[grid.len() - 1].is_finite() {
        return Err(Error::InvalidInput("radii must be positive and finite".into()));
    }
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidInput("threshold must be in (0, 1]".into()));
    }

    let n = features.len();
    let labels = kmeans(features, classes, seed, 100, 1e-10)?.assignment;
    let dist = pairwise_euclidean(features);

    // A point stays pure exactly while delta is below its distance to the
    // nearest differently-labeled point.
    let mut pure_until = vec![f64::INFINITY; n];
    for i in 0..n {
        for j in 0..n {
            if labels[j] != labels[i] && dist[[i, j]] < pure_until[i] {
                pure_until[i] = dist[[i, j]];
            }
        }
    }

    let purity: Vec<f64> = grid
        .iter()
        .map(|&delta| {
            let pure = pure_until.iter().filter(|&&r| r > delta).count();
            pure as f64 / n as f64
        })
        .collect();

    let mut delta_star = None;
    for (i, &p) in purity.iter().enumerate() {
        if p >= threshold {
            delta_star = Some(grid[i]);
        }
    }
    let below = delta_star.is_none();
    Ok(PurityCurve {
        deltas: grid.to_vec(),
        purity,
        delta_star: delta_star.unwrap_or(grid[0]),
        below_threshold_everywhere: below,
    })
}
