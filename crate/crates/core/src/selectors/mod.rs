//! Context-set selection strategies behind one dispatch surface.
//!
//! All selectors see only a [`FeatureMatrix`] (and, for the uncertainty
//! family, a [`ProbabilityMatrix`]); labels are unrepresentable at this
//! layer. Every strategy returns exactly `budget` distinct in-range indices,
//! is deterministic given `(pool, budget, config, seed)`, and breaks score
//! ties toward the lowest index.
//!
//! Randomized picks go through per-id exponential races ([`crate::rng`]), so
//! randomized selectors keep choosing the same underlying points when the
//! pool rows are permuted.

pub mod dpp;
pub mod geometry;
pub mod gmm;
pub mod uncertainty;

pub use dpp::{select_dpp, DppMode};
pub use geometry::{select_coreset, select_probcover, select_typiclust};
pub use gmm::select_gmm;
pub use uncertainty::{
    select_badge, select_entropy, select_kmeans_entropy, select_margin, select_weighted_entropy,
};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, ProbabilityMatrix};
use crate::rng::{race_pick, split, unit};

/// Pools larger than this fall back to greedy MAP when no DPP mode is set;
/// exact sampling needs a full eigendecomposition.
pub const DPP_EXACT_LIMIT: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Random,
    Entropy,
    Margin,
    Kdpp,
    Coreset,
    Typiclust,
    Probcover,
    Gmm,
    WeightedEntropy,
    Badge,
    KmeansEntropy,
}

impl Method {
    pub const ALL: [Method; 11] = [
        Method::Random,
        Method::Entropy,
        Method::Margin,
        Method::Kdpp,
        Method::Coreset,
        Method::Typiclust,
        Method::Probcover,
        Method::Gmm,
        Method::WeightedEntropy,
        Method::Badge,
        Method::KmeansEntropy,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Random => "random",
            Method::Entropy => "entropy",
            Method::Margin => "margin",
            Method::Kdpp => "kdpp",
            Method::Coreset => "coreset",
            Method::Typiclust => "typiclust",
            Method::Probcover => "probcover",
            Method::Gmm => "gmm",
            Method::WeightedEntropy => "weighted-entropy",
            Method::Badge => "badge",
            Method::KmeansEntropy => "kmeans-entropy",
        }
    }

    /// Whether the strategy scores points with model probabilities.
    pub fn needs_probabilities(&self) -> bool {
        matches!(
            self,
            Method::Entropy
                | Method::Margin
                | Method::WeightedEntropy
                | Method::Badge
                | Method::KmeansEntropy
        )
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown selection method '{s}'")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub method: Method,
    /// Neighborhood size for typicality scores.
    #[serde(default = "default_knn_size")]
    pub knn_size: usize,
    /// Coverage radius; derived from the purity curve when absent.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_purity_threshold")]
    pub purity_threshold: f64,
    /// Exact sampling or greedy MAP; pool size decides when unset.
    #[serde(default)]
    pub dpp_mode: Option<DppMode>,
    #[serde(default = "default_em_max_iter")]
    pub em_max_iter: usize,
    #[serde(default = "default_variance_floor")]
    pub variance_floor: f64,
    #[serde(default)]
    pub normalize_features: bool,
}

fn default_knn_size() -> usize {
    20
}

fn default_purity_threshold() -> f64 {
    0.95
}

fn default_em_max_iter() -> usize {
    100
}

fn default_variance_floor() -> f64 {
    1e-6
}

impl SelectorConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            knn_size: default_knn_size(),
            delta: None,
            purity_threshold: default_purity_threshold(),
            dpp_mode: None,
            em_max_iter: default_em_max_iter(),
            variance_floor: default_variance_floor(),
            normalize_features: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.knn_size == 0 {
            return Err(Error::InvalidInput("knn_size must be at least 1".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::InvalidInput("delta must be positive".into()));
            }
        }
        if !(self.purity_threshold > 0.0 && self.purity_threshold <= 1.0) {
            return Err(Error::InvalidInput(
                "purity_threshold must be in (0, 1]".into(),
            ));
        }
        if self.em_max_iter == 0 {
            return Err(Error::InvalidInput("em_max_iter must be at least 1".into()));
        }
        if !(self.variance_floor > 0.0) {
            return Err(Error::InvalidInput("variance_floor must be positive".into()));
        }
        Ok(())
    }
}

/// Score (and mixture component or cluster, when one applies) behind a pick.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PointDiagnostic {
    pub index: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionResult {
    pub method: String,
    pub params: serde_json::Value,
    pub indices: Vec<usize>,
    pub diagnostics: Vec<PointDiagnostic>,
}

impl SelectionResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("selection result serializes")
    }
}

pub(crate) fn validate_budget(budget: usize, pool: usize) -> Result<()> {
    if budget == 0 || budget > pool {
        return Err(Error::BadBudget { budget, pool });
    }
    Ok(())
}

/// Runs the configured strategy on a pool.
pub fn select(
    features: &FeatureMatrix,
    budget: usize,
    cfg: &SelectorConfig,
    probs: Option<&ProbabilityMatrix>,
    seed: u64,
) -> Result<SelectionResult> {
    cfg.validate()?;
    validate_budget(budget, features.len())?;
    let probs = if cfg.method.needs_probabilities() {
        let p = probs.ok_or(Error::MissingProbabilities {
            method: cfg.method.tag(),
        })?;
        if p.len() != features.len() {
            return Err(Error::DimensionMismatch {
                expected: features.len(),
                got: p.len(),
            });
        }
        Some(p)
    } else {
        None
    };
    let normalized;
    let pool = if cfg.normalize_features {
        normalized = features.l2_normalized();
        &normalized
    } else {
        features
    };

    match cfg.method {
        Method::Random => select_random(pool, budget, seed),
        Method::Entropy => select_entropy(pool, budget, probs.unwrap()),
        Method::Margin => select_margin(pool, budget, probs.unwrap()),
        Method::Kdpp => {
            let mode = cfg.dpp_mode.unwrap_or(if pool.len() <= DPP_EXACT_LIMIT {
                DppMode::Exact
            } else {
                DppMode::GreedyMap
            });
            select_dpp(pool, budget, seed, mode)
        }
        Method::Coreset => select_coreset(pool, budget, seed),
        Method::Typiclust => select_typiclust(pool, budget, seed, cfg.knn_size),
        Method::Probcover => {
            let delta = match cfg.delta {
                Some(d) => d,
                None => {
                    let grid = crate::eval::default_delta_grid(pool);
                    crate::eval::purity_curve(pool, budget, &grid, cfg.purity_threshold, seed)?
                        .delta_star
                }
            };
            select_probcover(pool, budget, delta)
        }
        Method::Gmm => select_gmm(pool, budget, seed, cfg.em_max_iter, cfg.variance_floor),
        Method::WeightedEntropy => select_weighted_entropy(pool, budget, probs.unwrap(), seed),
        Method::Badge => select_badge(pool, budget, probs.unwrap(), seed),
        Method::KmeansEntropy => select_kmeans_entropy(pool, budget, probs.unwrap(), seed),
    }
}

/// Uniform sampling without replacement.
pub fn select_random(features: &FeatureMatrix, budget: usize, seed: u64) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    let weights = vec![1.0; features.len()];
    let mut taken = vec![false; features.len()];
    let mut indices = Vec::with_capacity(budget);
    let mut diagnostics = Vec::with_capacity(budget);
    for round in 0..budget {
        let pos = race_pick(&weights, &taken, features.ids(), seed, round as u64)
            .expect("pool cannot be exhausted before the budget");
        taken[pos] = true;
        indices.push(pos);
        diagnostics.push(PointDiagnostic {
            index: pos,
            score: -unit(seed, features.ids()[pos], round as u64).ln(),
            component: None,
        });
    }
    Ok(SelectionResult {
        method: Method::Random.tag().into(),
        params: json!({ "budget": budget, "seed": seed }),
        indices,
        diagnostics,
    })
}

/// Repeatedly applies the base strategy to the not-yet-selected remainder,
/// `step` picks at a time; the final round is truncated when `step` does not
/// divide `total_budget`. Returned indices refer to the original pool.
pub fn select_sequential(
    features: &FeatureMatrix,
    total_budget: usize,
    step: usize,
    cfg: &SelectorConfig,
    probs: Option<&ProbabilityMatrix>,
    seed: u64,
) -> Result<Vec<SelectionResult>> {
    validate_budget(total_budget, features.len())?;
    if step == 0 {
        return Err(Error::InvalidInput("step must be at least 1".into()));
    }
    let mut remaining: Vec<usize> = (0..features.len()).collect();
    let mut rounds = Vec::new();
    let mut picked = 0;
    let mut round = 0u64;
    while picked < total_budget {
        let k = step.min(total_budget - picked);
        let sub_pool = features.subset(&remaining)?;
        let sub_probs = match probs {
            Some(p) => Some(p.subset(&remaining)?),
            None => None,
        };
        let mut result = select(&sub_pool, k, cfg, sub_probs.as_ref(), split(seed, round))?;
        for idx in result.indices.iter_mut() {
            *idx = remaining[*idx];
        }
        for diag in result.diagnostics.iter_mut() {
            diag.index = remaining[diag.index];
        }
        let chosen: std::collections::HashSet<usize> = result.indices.iter().copied().collect();
        remaining.retain(|i| !chosen.contains(i));
        picked += result.indices.len();
        rounds.push(result);
        round += 1;
    }
    Ok(rounds)
}

/// Indices of the `k` best scores; `descending` picks the largest. Equal
/// scores resolve to the lowest index.
pub(crate) fn rank_indices(scores: &[f64], k: usize, descending: bool) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        let primary = if descending {
            scores[b].total_cmp(&scores[a])
        } else {
            scores[a].total_cmp(&scores[b])
        };
        primary.then(a.cmp(&b))
    });
    order.truncate(k);
    order
}
