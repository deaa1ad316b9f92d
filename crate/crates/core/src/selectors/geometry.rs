//! Representation-only strategies built on pool geometry.

use serde_json::json;

use crate::clustering::kmeans;
use crate::error::{Error, Result};
use crate::features::{pairwise_euclidean, FeatureMatrix};
use crate::rng::race_pick;
use crate::selectors::{validate_budget, Method, PointDiagnostic, SelectionResult};

/// Greedy k-center: a uniform first pick, then always the point farthest
/// from everything selected so far.
pub fn select_coreset(
    features: &FeatureMatrix,
    budget: usize,
    seed: u64,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    let n = features.len();
    let weights = vec![1.0; n];
    let mut taken = vec![false; n];
    let first = race_pick(&weights, &taken, features.ids(), seed, 0)
        .expect("non-empty pool");
    taken[first] = true;
    let mut indices = vec![first];
    let mut diagnostics = vec![PointDiagnostic {
        index: first,
        score: 0.0,
        component: None,
    }];

    let mut nearest = vec![f64::INFINITY; n];
    let mut latest = first;
    while indices.len() < budget {
        let latest_row = features.row_f64(latest);
        let mut best: Option<usize> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let diff = &features.row_f64(i) - &latest_row;
            let d = diff.dot(&diff).sqrt();
            if d < nearest[i] {
                nearest[i] = d;
            }
            if best.is_none_or(|b| nearest[i] > nearest[b]) {
                best = Some(i);
            }
        }
        let pick = best.expect("budget is at most the pool size");
        taken[pick] = true;
        indices.push(pick);
        diagnostics.push(PointDiagnostic {
            index: pick,
            score: nearest[pick],
            component: None,
        });
        latest = pick;
    }
    Ok(SelectionResult {
        method: Method::Coreset.tag().into(),
        params: json!({ "budget": budget, "seed": seed }),
        indices,
        diagnostics,
    })
}

/// Greedy max-coverage with closed `delta`-balls. When every point is
/// already covered before the budget runs out, coverage is reset and the
/// remaining picks again maximize coverage of the whole pool.
pub fn select_probcover(
    features: &FeatureMatrix,
    budget: usize,
    delta: f64,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidInput("delta must be positive".into()));
    }
    let n = features.len();
    let dist = pairwise_euclidean(features);
    let ball: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| dist[[i, j]] <= delta).collect())
        .collect();

    let mut covered = vec![false; n];
    let mut selected = vec![false; n];
    let mut indices = Vec::with_capacity(budget);
    let mut diagnostics = Vec::with_capacity(budget);
    while indices.len() < budget {
        let gain = |i: usize| ball[i].iter().filter(|&&j| !covered[j]).count();
        let mut best = usize::MAX;
        let mut best_gain = 0usize;
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let g = gain(i);
            if g > best_gain {
                best_gain = g;
                best = i;
            } else if best == usize::MAX {
                best = i;
            }
        }
        if best_gain == 0 {
            covered.iter_mut().for_each(|c| *c = false);
            continue;
        }
        selected[best] = true;
        for &j in &ball[best] {
            covered[j] = true;
        }
        indices.push(best);
        diagnostics.push(PointDiagnostic {
            index: best,
            score: best_gain as f64,
            component: None,
        });
    }
    Ok(SelectionResult {
        method: Method::Probcover.tag().into(),
        params: json!({ "budget": budget, "delta": delta }),
        indices,
        diagnostics,
    })
}

/// Per-point typicality: the inverse mean distance to the nearest
/// `knn_size` neighbors inside the point's own cluster.
pub fn typicality_scores(
    features: &FeatureMatrix,
    assignment: &[usize],
    knn_size: usize,
) -> Vec<f64> {
    let n = features.len();
    let dist = pairwise_euclidean(features);
    (0..n)
        .map(|i| {
            let mut others: Vec<f64> = (0..n)
                .filter(|&j| j != i && assignment[j] == assignment[i])
                .map(|j| dist[[i, j]])
                .collect();
            if others.is_empty() {
                return 0.0;
            }
            others.sort_by(f64::total_cmp);
            others.truncate(knn_size);
            let mean = others.iter().sum::<f64>() / others.len() as f64;
            1.0 / mean.max(f64::MIN_POSITIVE)
        })
        .collect()
}

/// Clusters the pool into `budget` groups and takes each group's most
/// typical member; singleton clusters contribute their only point.
pub fn select_typiclust(
    features: &FeatureMatrix,
    budget: usize,
    seed: u64,
    knn_size: usize,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    if knn_size == 0 {
        return Err(Error::InvalidInput("knn_size must be at least 1".into()));
    }
    let model = kmeans(features, budget, seed, 100, 1e-10)?;
    let scores = typicality_scores(features, &model.assignment, knn_size);
    let mut indices = Vec::with_capacity(budget);
    let mut diagnostics = Vec::with_capacity(budget);
    for cluster in 0..budget {
        let mut best: Option<usize> = None;
        for i in 0..features.len() {
            if model.assignment[i] != cluster {
                continue;
            }
            if best.is_none_or(|b| scores[i] > scores[b]) {
                best = Some(i);
            }
        }
        let i = best.expect("every cluster keeps at least one member");
        indices.push(i);
        diagnostics.push(PointDiagnostic {
            index: i,
            score: scores[i],
            component: Some(cluster),
        });
    }
    Ok(SelectionResult {
        method: Method::Typiclust.tag().into(),
        params: json!({ "budget": budget, "seed": seed, "knn_size": knn_size }),
        indices,
        diagnostics,
    })
}
