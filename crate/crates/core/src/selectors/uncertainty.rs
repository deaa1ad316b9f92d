//! Strategies that score points with model probabilities.

use serde_json::json;

use crate::clustering::{gmm::soft_kmeans_density, kmeans, kmeans_pp_indices};
use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ProbabilityMatrix};
use crate::selectors::{rank_indices, validate_budget, Method, PointDiagnostic, SelectionResult};

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn row_entropy(row: ndarray::ArrayView1<f64>) -> f64 {
    row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

fn check_rows(features: &FeatureMatrix, probs: &ProbabilityMatrix) -> Result<()> {
    if probs.len() != features.len() {
        return Err(Error::DimensionMismatch {
            expected: features.len(),
            got: probs.len(),
        });
    }
    Ok(())
}

/// Picks the `budget` highest-entropy rows.
pub fn select_entropy(
    features: &FeatureMatrix,
    budget: usize,
    probs: &ProbabilityMatrix,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    check_rows(features, probs)?;
    let scores: Vec<f64> = (0..probs.len()).map(|i| row_entropy(probs.row(i))).collect();
    let indices = rank_indices(&scores, budget, true);
    let diagnostics = indices
        .iter()
        .map(|&i| PointDiagnostic {
            index: i,
            score: scores[i],
            component: None,
        })
        .collect();
    Ok(SelectionResult {
        method: Method::Entropy.tag().into(),
        params: json!({ "budget": budget }),
        indices,
        diagnostics,
    })
}

/// Picks the `budget` rows with the smallest gap between the two largest
/// probabilities.
pub fn select_margin(
    features: &FeatureMatrix,
    budget: usize,
    probs: &ProbabilityMatrix,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    check_rows(features, probs)?;
    if probs.classes() < 2 {
        return Err(Error::BadProbabilities(
            "margin needs at least two classes".into(),
        ));
    }
    let scores: Vec<f64> = (0..probs.len())
        .map(|i| {
            let mut top = f64::NEG_INFINITY;
            let mut second = f64::NEG_INFINITY;
            for &p in probs.row(i) {
                if p > top {
                    second = top;
                    top = p;
                } else if p > second {
                    second = p;
                }
            }
            top - second
        })
        .collect();
    let indices = rank_indices(&scores, budget, false);
    let diagnostics = indices
        .iter()
        .map(|&i| PointDiagnostic {
            index: i,
            score: scores[i],
            component: None,
        })
        .collect();
    Ok(SelectionResult {
        method: Method::Margin.tag().into(),
        params: json!({ "budget": budget }),
        indices,
        diagnostics,
    })
}

/// Entropy weighted by a soft k-means density with `budget` components, so
/// uncertain points in dense regions win.
pub fn select_weighted_entropy(
    features: &FeatureMatrix,
    budget: usize,
    probs: &ProbabilityMatrix,
    seed: u64,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    check_rows(features, probs)?;
    let density = soft_kmeans_density(features, budget, seed)?;
    let scores: Vec<f64> = (0..probs.len())
        .map(|i| density[i] * row_entropy(probs.row(i)))
        .collect();
    let indices = rank_indices(&scores, budget, true);
    let diagnostics = indices
        .iter()
        .map(|&i| PointDiagnostic {
            index: i,
            score: scores[i],
            component: None,
        })
        .collect();
    Ok(SelectionResult {
        method: Method::WeightedEntropy.tag().into(),
        params: json!({ "budget": budget, "seed": seed }),
        indices,
        diagnostics,
    })
}

/// The last-layer cross-entropy gradient of a linear-softmax head at the
/// pseudo-label: `(p - onehot(argmax p))` outer `x`, flattened.
pub fn badge_embeddings(
    features: &FeatureMatrix,
    probs: &ProbabilityMatrix,
) -> Result<ndarray::Array2<f64>> {
    check_rows(features, probs)?;
    let n = features.len();
    let d = features.dim();
    let classes = probs.classes();
    let mut emb = ndarray::Array2::<f64>::zeros((n, classes * d));
    for i in 0..n {
        let row = probs.row(i);
        let mut pseudo = 0;
        for (c, &p) in row.iter().enumerate() {
            if p > row[pseudo] {
                pseudo = c;
            }
        }
        let x = features.row_f64(i);
        for c in 0..classes {
            let coeff = row[c] - if c == pseudo { 1.0 } else { 0.0 };
            for t in 0..d {
                emb[[i, c * d + t]] = coeff * x[t];
            }
        }
    }
    Ok(emb)
}

/// Seeds k-means++ in gradient-embedding space and returns the seeds.
pub fn select_badge(
    features: &FeatureMatrix,
    budget: usize,
    probs: &ProbabilityMatrix,
    seed: u64,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    let emb = badge_embeddings(features, probs)?;
    let indices = kmeans_pp_indices(emb.view(), features.ids(), budget, seed)?;
    let mut diagnostics = Vec::with_capacity(budget);
    for (pick, &i) in indices.iter().enumerate() {
        // The squared distance to the nearest earlier seed, the weight the
        // pick was drawn with (zero for the uniform first pick).
        let mut score = 0.0;
        if pick > 0 {
            score = indices[..pick]
                .iter()
                .map(|&j| {
                    let diff = &emb.row(i) - &emb.row(j);
                    diff.dot(&diff)
                })
                .fold(f64::INFINITY, f64::min);
        }
        diagnostics.push(PointDiagnostic {
            index: i,
            score,
            component: None,
        });
    }
    Ok(SelectionResult {
        method: Method::Badge.tag().into(),
        params: json!({ "budget": budget, "seed": seed }),
        indices,
        diagnostics,
    })
}

/// Clusters the pool into `budget` groups and takes each group's
/// highest-entropy member.
pub fn select_kmeans_entropy(
    features: &FeatureMatrix,
    budget: usize,
    probs: &ProbabilityMatrix,
    seed: u64,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    check_rows(features, probs)?;
    let model = kmeans(features, budget, seed, 100, 1e-10)?;
    let entropies: Vec<f64> = (0..probs.len()).map(|i| row_entropy(probs.row(i))).collect();
    let mut indices = Vec::with_capacity(budget);
    let mut diagnostics = Vec::with_capacity(budget);
    for cluster in 0..budget {
        let mut best: Option<usize> = None;
        for i in 0..features.len() {
            if model.assignment[i] != cluster {
                continue;
            }
            if best.is_none_or(|b| entropies[i] > entropies[b]) {
                best = Some(i);
            }
        }
        let i = best.expect("every cluster keeps at least one member");
        indices.push(i);
        diagnostics.push(PointDiagnostic {
            index: i,
            score: entropies[i],
            component: Some(cluster),
        });
    }
    Ok(SelectionResult {
        method: Method::KmeansEntropy.tag().into(),
        params: json!({ "budget": budget, "seed": seed }),
        indices,
        diagnostics,
    })
}
