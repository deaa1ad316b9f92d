//! The meta-test loop: generate episodes, pick contexts, fit a learner per
//! episode, and aggregate scores with coverage diagnostics.

pub mod purity;

pub use purity::{default_delta_grid, purity_curve, PurityCurve};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::episodes::{
    gen_episode, pick_context, probe_probabilities, Episode, PickMode, Targets, TaskSpec,
};
use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::learners::{fit_kernel_ridge, fit_max_margin, fit_prototypes, MaxMarginOptions};
use crate::rng::split;
use crate::selectors::SelectorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Learner {
    /// One prototype per revealed class, nearest-prototype prediction.
    Prototype,
    /// Multiclass max-margin linear classifier; scores are accuracies.
    MaxMargin,
    /// RBF kernel ridge for the sinusoid kind; scores are mean squared
    /// errors, so lower is better.
    KernelRidge { gamma: f64, lambda: f64 },
}

impl Learner {
    pub fn is_regression(&self) -> bool {
        matches!(self, Learner::KernelRidge { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Learner::Prototype => "prototype",
            Learner::MaxMargin => "max-margin",
            Learner::KernelRidge { .. } => "kernel-ridge",
        }
    }
}

fn default_shots() -> usize {
    1
}

fn default_episodes() -> usize {
    600
}

fn default_probe_noise() -> f64 {
    0.25
}

fn default_mode() -> PickMode {
    PickMode::Unstratified
}

fn default_learner() -> Learner {
    Learner::Prototype
}

/// Everything one meta-test run needs besides the seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaTestConfig {
    pub task: TaskSpec,
    pub selector: SelectorConfig,
    #[serde(default = "default_learner")]
    pub learner: Learner,
    #[serde(default = "default_mode")]
    pub mode: PickMode,
    /// Context points per class (or in total for regression tasks).
    #[serde(default = "default_shots")]
    pub shots: usize,
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Uniform blend weight applied to probe probabilities.
    #[serde(default = "default_probe_noise")]
    pub probe_noise: f64,
}

impl MetaTestConfig {
    pub fn budget(&self) -> usize {
        if self.task.kind.is_classification() {
            self.shots * self.task.ways
        } else {
            self.shots
        }
    }

    fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.selector.validate()?;
        if self.shots == 0 {
            return Err(Error::InvalidInput("shots must be positive".into()));
        }
        if self.episodes == 0 {
            return Err(Error::InvalidInput("episodes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.probe_noise) {
            return Err(Error::InvalidInput("probe_noise must be in [0, 1]".into()));
        }
        let classification = self.task.kind.is_classification();
        if classification == self.learner.is_regression() {
            return Err(Error::InvalidInput(
                "learner and task kind disagree about classification".into(),
            ));
        }
        if !classification && self.mode == PickMode::Stratified {
            return Err(Error::InvalidInput(
                "stratified picking needs class labels".into(),
            ));
        }
        Ok(())
    }
}

/// Aggregated meta-test outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub mode: PickMode,
    pub shots: usize,
    pub budget: usize,
    pub episodes: usize,
    pub failed_episodes: usize,
    /// Mean accuracy, or mean squared error for regression learners.
    pub mean: f64,
    pub ci95: f64,
    pub per_episode: Vec<f64>,
    pub label_entropy_mean: Option<f64>,
    /// Entry `c` counts episodes whose context covered exactly `c` distinct
    /// classes; empty for regression tasks.
    pub class_count_histogram: Vec<usize>,
    pub runtime_seconds: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_header() -> &'static str {
        "method,mode,shots,mean,ci95,episodes,label_entropy_mean"
    }

    pub fn csv_row(&self) -> String {
        let entropy = self
            .label_entropy_mean
            .map(|v| v.to_string())
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{}",
            self.method, self.mode, self.shots, self.mean, self.ci95, self.episodes, entropy
        )
    }
}

struct EpisodeOutcome {
    score: Option<f64>,
    entropy: Option<f64>,
    distinct: Option<usize>,
}

fn fit_and_score(cfg: &MetaTestConfig, episode: &Episode, picked: &[usize]) -> Result<f64> {
    match cfg.learner {
        Learner::Prototype | Learner::MaxMargin => {
            let context = episode.reveal_labels(picked)?;
            let Targets::Classification { x, y } = episode.targets() else {
                return Err(Error::InvalidInput(
                    "classification learner on a regression episode".into(),
                ));
            };
            let x = x.to_f64();
            match cfg.learner {
                Learner::Prototype => {
                    Ok(fit_prototypes(&context)?.accuracy(x.view(), y))
                }
                _ => Ok(fit_max_margin(&context, &MaxMarginOptions::default())?
                    .accuracy(x.view(), y)),
            }
        }
        Learner::KernelRidge { gamma, lambda } => {
            let (cx, cy) = episode.reveal_values(picked)?;
            let Targets::Regression { x, y } = episode.targets() else {
                return Err(Error::InvalidInput(
                    "regression learner on a classification episode".into(),
                ));
            };
            let model = fit_kernel_ridge(cx.view(), &cy, gamma, lambda)?;
            Ok(model.mse(x.to_f64().view(), y))
        }
    }
}

fn run_episode(cfg: &MetaTestConfig, budget: usize, episode_seed: u64) -> Result<EpisodeOutcome> {
    let episode = gen_episode(&cfg.task, split(episode_seed, 0))?;
    let probs = if cfg.selector.method.needs_probabilities() {
        Some(probe_probabilities(&episode, cfg.probe_noise)?)
    } else {
        None
    };
    let picked = pick_context(
        &episode,
        cfg.mode,
        budget,
        &cfg.selector,
        probs.as_ref(),
        split(episode_seed, 1),
    )?;

    let (entropy, distinct) = match episode.pool_labels() {
        Some(labels) => {
            let chosen: Vec<u32> = picked.indices.iter().map(|&i| labels[i]).collect();
            let mut seen: Vec<u32> = chosen.clone();
            seen.sort_unstable();
            seen.dedup();
            (
                Some(coverage_entropy(&chosen, episode.classes())),
                Some(seen.len()),
            )
        }
        None => (None, None),
    };

    // A selector that ran is still reported when the learner cannot be fit
    // on what it picked (say, a single-class context for the max-margin
    // solver); the episode only drops out of the score average.
    let score = fit_and_score(cfg, &episode, &picked.indices).ok();
    Ok(EpisodeOutcome {
        score,
        entropy,
        distinct,
    })
}

pub fn run_meta_test(cfg: &MetaTestConfig, seed: u64) -> Result<EvalReport> {
    cfg.validate()?;
    let budget = cfg.budget();
    let start = Instant::now();

    let outcomes = (0..cfg.episodes)
        .into_par_iter()
        .map(|e| run_episode(cfg, budget, split(seed, e as u64)))
        .collect::<Result<Vec<_>>>()?;

    let per_episode: Vec<f64> = outcomes.iter().filter_map(|o| o.score).collect();
    if per_episode.is_empty() {
        return Err(Error::InvalidInput(
            "every episode failed; nothing to average".into(),
        ));
    }
    let count = per_episode.len() as f64;
    let mean = per_episode.iter().sum::<f64>() / count;
    let ci95 = if per_episode.len() > 1 {
        let var = per_episode
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (count - 1.0);
        1.96 * var.sqrt() / count.sqrt()
    } else {
        0.0
    };

    let entropies: Vec<f64> = outcomes.iter().filter_map(|o| o.entropy).collect();
    let label_entropy_mean = if entropies.is_empty() {
        None
    } else {
        Some(entropies.iter().sum::<f64>() / entropies.len() as f64)
    };
    let class_count_histogram = if cfg.task.kind.is_classification() {
        let mut hist = vec![0usize; cfg.task.ways + 1];
        for o in &outcomes {
            hist[o.distinct.expect("classification episodes count classes")] += 1;
        }
        hist
    } else {
        Vec::new()
    };

    Ok(EvalReport {
        method: cfg.selector.method.tag().into(),
        mode: cfg.mode,
        shots: cfg.shots,
        budget,
        episodes: cfg.episodes,
        failed_episodes: cfg.episodes - per_episode.len(),
        mean,
        ci95,
        per_episode,
        label_entropy_mean,
        class_count_histogram,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Natural-log entropy of the empirical label distribution.
pub fn coverage_entropy(labels: &[u32], classes: usize) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let width = classes.max(labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0));
    let mut counts = vec![0usize; width];
    for &l in labels {
        counts[l as usize] += 1;
    }
    let total = labels.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// How well a selection stands in for the rest of its pool.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionQuality {
    /// Distance from each unselected point to its nearest selected point.
    pub distances: Vec<f64>,
    /// Whether that nearest selected point carries the same label.
    pub label_matches: Vec<bool>,
    pub mean_distance: f64,
    pub match_rate: f64,
}

pub fn selection_quality(
    features: &FeatureMatrix,
    selection: &[usize],
    labels: &[u32],
) -> Result<SelectionQuality> {
    let n = features.len();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len(),
        });
    }
    if selection.is_empty() {
        return Err(Error::InvalidInput("selection is empty".into()));
    }
    if let Some(&bad) = selection.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!(
            "selection index {bad} out of range"
        )));
    }
    let mut in_selection = vec![false; n];
    for &i in selection {
        in_selection[i] = true;
    }

    let mut distances = Vec::new();
    let mut label_matches = Vec::new();
    for i in 0..n {
        if in_selection[i] {
            continue;
        }
        let xi = features.row_f64(i);
        let mut best = f64::INFINITY;
        let mut best_label = 0u32;
        for &s in selection {
            let xs = features.row_f64(s);
            let d = xi
                .iter()
                .zip(xs.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if d < best {
                best = d;
                best_label = labels[s];
            }
        }
        distances.push(best);
        label_matches.push(best_label == labels[i]);
    }

    let (mean_distance, match_rate) = if distances.is_empty() {
        (0.0, 1.0)
    } else {
        (
            distances.iter().sum::<f64>() / distances.len() as f64,
            label_matches.iter().filter(|&&m| m).count() as f64 / label_matches.len() as f64,
        )
    };
    Ok(SelectionQuality {
        distances,
        label_matches,
        mean_distance,
        match_rate,
    })
}
