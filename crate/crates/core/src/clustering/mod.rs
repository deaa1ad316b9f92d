//! k-means++ seeding and Lloyd iterations.
//!
//! Seeding draws are keyed by point id (see [`crate::rng`]): the first center
//! is uniform over the pool and every later center is drawn with probability
//! proportional to the squared distance to the nearest chosen center, the
//! classic D^2 weighting. Already-chosen indices are never redrawn, so asking
//! for `k = n` centers enumerates the whole pool. If all remaining weights
//! are zero (every leftover point coincides with a center) the draw falls
//! back to uniform so exhaustion still works on duplicated points.

pub mod gmm;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::rng;

/// Result of Lloyd iterations.
#[derive(Debug, Clone)]
pub struct KMeansModel {
    /// `k x d` cluster centers.
    pub centers: Array2<f64>,
    /// Cluster index per pool point.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to assigned centers.
    pub inertia: f64,
    /// Inertia after each assignment step, non-increasing.
    pub inertia_trace: Vec<f64>,
    pub iterations: usize,
}

fn squared_distance(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut acc = 0.0;
    for t in 0..a.len() {
        let diff = a[t] - b[t];
        acc += diff * diff;
    }
    acc
}

/// k-means++ seeding over raw `f64` rows; returns the chosen row indices in
/// pick order.
pub fn kmeans_pp_indices(
    data: ArrayView2<f64>,
    ids: &[u64],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let n = data.nrows();
    if ids.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: ids.len(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::BadBudget { budget: k, pool: n });
    }

    let mut taken = vec![false; n];
    let mut chosen = Vec::with_capacity(k);
    // Uniform first pick, then D^2-weighted picks.
    let mut weights = vec![1.0; n];
    for round in 0..k as u64 {
        let pick = rng::race_pick(&weights, &taken, ids, seed, round)
            .expect("k <= n leaves a live point");
        taken[pick] = true;
        chosen.push(pick);
        let center = data.row(pick);
        for i in 0..n {
            let d2 = squared_distance(data.row(i), center);
            if round == 0 || d2 < weights[i] {
                weights[i] = d2;
            }
        }
    }
    Ok(chosen)
}

/// k-means++ initial centers for a feature matrix (`k x d`, rows are pool
/// points).
pub fn kmeans_pp_init(features: &FeatureMatrix, k: usize, seed: u64) -> Result<Array2<f64>> {
    let x = features.to_f64();
    let picks = kmeans_pp_indices(x.view(), features.ids(), k, seed)?;
    Ok(x.select(ndarray::Axis(0), &picks))
}

/// Lloyd iterations from the given centers.
///
/// Assignment ties go to the lowest center index. A cluster left empty by an
/// assignment step is reseeded at the point farthest from its own center
/// (taken from a cluster with at least two members, lowest point index on
/// ties). Stops when the assignment reaches a fixed point, when one sweep
/// improves inertia by less than `tol`, or after `max_iter` center updates.
pub fn lloyd(
    features: &FeatureMatrix,
    init_centers: Array2<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let n = features.len();
    let k = init_centers.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    if init_centers.ncols() != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: features.dim(),
            got: init_centers.ncols(),
        });
    }

    let x = features.to_f64();
    let mut centers = init_centers;
    let mut assignment = vec![0usize; n];
    assign_and_repair(&x, &mut centers, &mut assignment);
    let mut inertia = sse(&x, &centers, &assignment);
    let mut trace = vec![inertia];
    let mut iterations = 0;

    for iter in 1..=max_iter {
        update_means(&x, &assignment, &mut centers);
        let mut next = vec![0usize; n];
        assign_and_repair(&x, &mut centers, &mut next);
        let next_inertia = sse(&x, &centers, &next);
        trace.push(next_inertia);
        iterations = iter;
        let fixed_point = next == assignment;
        let small_step = inertia - next_inertia < tol;
        assignment = next;
        inertia = next_inertia;
        if fixed_point || small_step {
            break;
        }
    }

    Ok(KMeansModel {
        centers,
        assignment,
        inertia,
        inertia_trace: trace,
        iterations,
    })
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans(
    features: &FeatureMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansModel> {
    let init = kmeans_pp_init(features, k, seed)?;
    lloyd(features, init, max_iter, tol)
}

fn assign_and_repair(x: &Array2<f64>, centers: &mut Array2<f64>, assignment: &mut [usize]) {
    let n = x.nrows();
    let k = centers.nrows();
    for i in 0..n {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for j in 0..k {
            let d = squared_distance(x.row(i), centers.row(j));
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        assignment[i] = best;
    }

    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for j in 0..k {
        if sizes[j] > 0 {
            continue;
        }
        // Reseed at the point farthest from its own center, stealing only
        // from clusters that keep at least one member.
        let mut far: Option<(f64, usize)> = None;
        for i in 0..n {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let d = squared_distance(x.row(i), centers.row(assignment[i]));
            if far.map_or(true, |(fd, _)| d > fd) {
                far = Some((d, i));
            }
        }
        let (_, i) = far.expect("k <= n guarantees a donor cluster");
        sizes[assignment[i]] -= 1;
        assignment[i] = j;
        sizes[j] = 1;
        for t in 0..x.ncols() {
            centers[[j, t]] = x[[i, t]];
        }
    }
}

fn update_means(x: &Array2<f64>, assignment: &[usize], centers: &mut Array2<f64>) {
    let k = centers.nrows();
    let d = x.ncols();
    let mut sums = Array2::<f64>::zeros((k, d));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignment.iter().enumerate() {
        counts[a] += 1;
        for t in 0..d {
            sums[[a, t]] += x[[i, t]];
        }
    }
    for j in 0..k {
        if counts[j] == 0 {
            continue; // repair keeps clusters non-empty; belt and braces
        }
        for t in 0..d {
            centers[[j, t]] = sums[[j, t]] / counts[j] as f64;
        }
    }
}

fn sse(x: &Array2<f64>, centers: &Array2<f64>, assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_distance(x.row(i), centers.row(a)))
        .sum()
}
