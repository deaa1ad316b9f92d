//! Synthetic task generators and context-picking semantics.
//!
//! An [`Episode`] is one task: an unlabeled pool whose labels stay hidden
//! until a selection pays for them, a labeled target set for scoring, and
//! the generative truth for reference rules and probe probabilities. Pools
//! and targets are class-balanced and row-shuffled; everything derives
//! deterministically from a single seed.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FeaturePool, ProbabilityMatrix};
use crate::learners::LabeledSet;
use crate::rng::{seeded, split};
use crate::selectors::{select, PointDiagnostic, SelectionResult, SelectorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Class means drawn from a standard normal, spherical class noise.
    IsotropicGaussian,
    /// Two fixed means split vertically, shared diagonal covariance that is
    /// wide across the boundary-parallel axis and tight across the boundary.
    AnisotropicGaussian,
    /// Class means with an exactly orthonormal Gram matrix.
    OrthonormalMeans,
    /// Scalar regression `y = a sin(x + p)`.
    Sinusoid,
}

impl TaskKind {
    pub fn is_classification(&self) -> bool {
        !matches!(self, TaskKind::Sinusoid)
    }
}

pub const ANISOTROPIC_OFFSET: f64 = 1.5;
pub const ANISOTROPIC_COV: [f64; 2] = [2.25, 0.1225];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Classes per task; ignored by the sinusoid kind.
    #[serde(default = "default_ways")]
    pub ways: usize,
    #[serde(default = "default_pool_size")]
    pub pool_size: usize,
    /// Defaults to 15 target points per class.
    #[serde(default)]
    pub target_size: Option<usize>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Per-dimension variances for the anisotropic kind.
    #[serde(default)]
    pub cov_diag: Option<Vec<f64>>,
}

fn default_ways() -> usize {
    5
}

fn default_pool_size() -> usize {
    100
}

fn default_dim() -> usize {
    2
}

fn default_sigma() -> f64 {
    1.0
}

impl TaskSpec {
    pub fn new(kind: TaskKind) -> Self {
        Self {
            kind,
            ways: if kind == TaskKind::AnisotropicGaussian {
                2
            } else {
                default_ways()
            },
            pool_size: default_pool_size(),
            target_size: None,
            dim: if kind == TaskKind::Sinusoid {
                1
            } else {
                default_dim()
            },
            sigma: default_sigma(),
            cov_diag: None,
        }
    }

    pub fn target_size(&self) -> usize {
        self.target_size.unwrap_or(if self.kind.is_classification() {
            15 * self.ways
        } else {
            15
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 || self.target_size() == 0 {
            return Err(Error::InvalidInput(
                "pool and target sizes must be positive".into(),
            ));
        }
        if self.dim == 0 {
            return Err(Error::InvalidInput("dim must be positive".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidInput("sigma must be positive".into()));
        }
        match self.kind {
            TaskKind::Sinusoid => {
                if self.dim != 1 {
                    return Err(Error::InvalidInput("sinusoid tasks are 1-D".into()));
                }
            }
            TaskKind::AnisotropicGaussian => {
                if self.ways != 2 || self.dim != 2 {
                    return Err(Error::InvalidInput(
                        "the anisotropic layout is 2-class, 2-D".into(),
                    ));
                }
                if let Some(cov) = &self.cov_diag {
                    if cov.len() != 2 || cov.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                        return Err(Error::InvalidInput(
                            "cov_diag needs two positive entries".into(),
                        ));
                    }
                }
            }
            TaskKind::IsotropicGaussian | TaskKind::OrthonormalMeans => {
                if self.ways < 2 {
                    return Err(Error::InvalidInput(
                        "classification tasks need at least 2 classes".into(),
                    ));
                }
                if self.cov_diag.is_some() {
                    return Err(Error::InvalidInput(
                        "cov_diag only applies to the anisotropic kind".into(),
                    ));
                }
                if self.kind == TaskKind::OrthonormalMeans && self.dim < self.ways {
                    return Err(Error::DimensionMismatch {
                        expected: self.ways,
                        got: self.dim,
                    });
                }
                if self.pool_size < self.ways {
                    return Err(Error::InvalidInput(
                        "pool must hold at least one point per class".into(),
                    ));
                }
            }
        }
        if self.kind == TaskKind::AnisotropicGaussian && self.pool_size < self.ways {
            return Err(Error::InvalidInput(
                "pool must hold at least one point per class".into(),
            ));
        }
        Ok(())
    }
}

/// Generative parameters behind an episode.
#[derive(Debug, Clone)]
pub enum TaskTruth {
    Gaussian {
        means: Array2<f64>,
        cov_diag: Vec<f64>,
    },
    Sinusoid {
        amplitude: f64,
        phase: f64,
    },
}

#[derive(Debug, Clone)]
pub enum Targets {
    Classification { x: FeatureMatrix, y: Vec<u32> },
    Regression { x: FeatureMatrix, y: Vec<f64> },
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classification { y, .. } => y.len(),
            Targets::Regression { y, .. } => y.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Episode {
    pool: FeaturePool,
    pool_values: Option<Vec<f64>>,
    targets: Targets,
    truth: TaskTruth,
}

impl Episode {
    /// The label-free view selectors are allowed to see.
    pub fn features(&self) -> &FeatureMatrix {
        self.pool.features()
    }

    pub fn pool(&self) -> &FeaturePool {
        &self.pool
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn truth(&self) -> &TaskTruth {
        &self.truth
    }

    pub fn classes(&self) -> usize {
        self.pool.classes().unwrap_or(0)
    }

    /// Pays for the labels of the chosen pool points.
    pub fn reveal_labels(&self, indices: &[usize]) -> Result<LabeledSet> {
        let labels = self
            .pool
            .labels()
            .ok_or_else(|| Error::InvalidInput("episode has no class labels".into()))?;
        let classes = self.pool.classes().expect("labeled pool has a class count");
        let n = self.pool.features().len();
        let mut x = Array2::<f64>::zeros((indices.len(), self.pool.features().dim()));
        let mut y = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidInput(format!("pool index {i} out of range")));
            }
            x.row_mut(row).assign(&self.pool.features().row_f64(i));
            y.push(labels[i]);
        }
        LabeledSet::new(x, y, classes)
    }

    /// Pays for the regression values of the chosen pool points.
    pub fn reveal_values(&self, indices: &[usize]) -> Result<(Array2<f64>, Vec<f64>)> {
        let values = self
            .pool_values
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("episode has no regression values".into()))?;
        let n = self.pool.features().len();
        let mut x = Array2::<f64>::zeros((indices.len(), self.pool.features().dim()));
        let mut y = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            if i >= n {
                return Err(Error::InvalidInput(format!("pool index {i} out of range")));
            }
            x.row_mut(row).assign(&self.pool.features().row_f64(i));
            y.push(values[i]);
        }
        Ok((x, y))
    }

    /// True pool labels, for scoring diagnostics only.
    pub fn pool_labels(&self) -> Option<&[u32]> {
        self.pool.labels()
    }
}

/// Spreads `total` as evenly as possible, leftovers to the lowest ids.
fn balanced_counts(total: usize, classes: usize) -> Vec<usize> {
    let base = total / classes;
    let rem = total % classes;
    (0..classes).map(|c| base + usize::from(c < rem)).collect()
}

pub fn gen_episode(spec: &TaskSpec, seed: u64) -> Result<Episode> {
    spec.validate()?;
    match spec.kind {
        TaskKind::Sinusoid => gen_sinusoid_episode(spec, seed),
        _ => gen_gaussian_episode(spec, seed),
    }
}

pub fn gen_gaussian_episode(spec: &TaskSpec, seed: u64) -> Result<Episode> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let d = spec.dim;
    let n = spec.ways;
    let standard = Normal::new(0.0, 1.0).expect("unit normal");

    let (means, cov_diag) = match spec.kind {
        TaskKind::IsotropicGaussian => {
            let mut means = Array2::<f64>::zeros((n, d));
            for v in means.iter_mut() {
                *v = standard.sample(&mut rng);
            }
            (means, vec![spec.sigma * spec.sigma; d])
        }
        TaskKind::OrthonormalMeans => {
            let mut raw = nalgebra::DMatrix::<f64>::zeros(d, n);
            for v in raw.iter_mut() {
                *v = standard.sample(&mut rng);
            }
            let q = raw.qr().q();
            let mut means = Array2::<f64>::zeros((n, d));
            for c in 0..n {
                for r in 0..d {
                    means[[c, r]] = q[(r, c)];
                }
            }
            (means, vec![spec.sigma * spec.sigma; d])
        }
        TaskKind::AnisotropicGaussian => {
            let mut means = Array2::<f64>::zeros((2, 2));
            means[[0, 1]] = -ANISOTROPIC_OFFSET;
            means[[1, 1]] = ANISOTROPIC_OFFSET;
            let cov = spec
                .cov_diag
                .clone()
                .unwrap_or_else(|| ANISOTROPIC_COV.to_vec());
            (means, cov)
        }
        TaskKind::Sinusoid => unreachable!("dispatched by gen_episode"),
    };
    let stds: Vec<f64> = cov_diag.iter().map(|v| v.sqrt()).collect();

    let sample_split = |rng: &mut rand_chacha::ChaCha8Rng,
                            total: usize|
     -> (Array2<f32>, Vec<u32>) {
        let counts = balanced_counts(total, n);
        let mut x = Array2::<f32>::zeros((total, d));
        let mut y = Vec::with_capacity(total);
        let mut row = 0;
        for (class, &count) in counts.iter().enumerate() {
            for _ in 0..count {
                for t in 0..d {
                    let v = means[[class, t]] + stds[t] * standard.sample(rng);
                    x[[row, t]] = v as f32;
                }
                y.push(class as u32);
                row += 1;
            }
        }
        let mut perm: Vec<usize> = (0..total).collect();
        perm.shuffle(rng);
        let mut sx = Array2::<f32>::zeros((total, d));
        let mut sy = Vec::with_capacity(total);
        for (new_row, &old_row) in perm.iter().enumerate() {
            sx.row_mut(new_row).assign(&x.row(old_row));
            sy.push(y[old_row]);
        }
        (sx, sy)
    };

    let (pool_x, pool_y) = sample_split(&mut rng, spec.pool_size);
    let (target_x, target_y) = sample_split(&mut rng, spec.target_size());

    let pool = FeaturePool::labeled(FeatureMatrix::new(pool_x)?, pool_y, n)?;
    Ok(Episode {
        pool,
        pool_values: None,
        targets: Targets::Classification {
            x: FeatureMatrix::new(target_x)?,
            y: target_y,
        },
        truth: TaskTruth::Gaussian { means, cov_diag },
    })
}

pub fn sinusoid_value(amplitude: f64, phase: f64, x: f64) -> f64 {
    amplitude * (x + phase).sin()
}

pub fn gen_sinusoid_episode(spec: &TaskSpec, seed: u64) -> Result<Episode> {
    spec.validate()?;
    let mut rng = seeded(seed);
    let amplitude = rng.random_range(0.1..5.0);
    let phase = rng.random_range(0.0..std::f64::consts::PI);

    let draw = |rng: &mut rand_chacha::ChaCha8Rng, total: usize| -> (Array2<f32>, Vec<f64>) {
        let mut x = Array2::<f32>::zeros((total, 1));
        let mut y = Vec::with_capacity(total);
        for row in 0..total {
            let v: f64 = rng.random_range(-5.0..5.0);
            x[[row, 0]] = v as f32;
            y.push(sinusoid_value(amplitude, phase, f64::from(x[[row, 0]])));
        }
        (x, y)
    };

    let (pool_x, pool_y) = draw(&mut rng, spec.pool_size);
    let (target_x, target_y) = draw(&mut rng, spec.target_size());
    Ok(Episode {
        pool: FeaturePool::unlabeled(FeatureMatrix::new(pool_x)?),
        pool_values: Some(pool_y),
        targets: Targets::Regression {
            x: FeatureMatrix::new(target_x)?,
            y: target_y,
        },
        truth: TaskTruth::Sinusoid { amplitude, phase },
    })
}

/// Bayes posteriors from the generative truth, blended toward uniform:
/// `(1 - noise) p + noise / N`.
pub fn probe_probabilities(episode: &Episode, noise: f64) -> Result<ProbabilityMatrix> {
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidInput("noise must be in [0, 1]".into()));
    }
    let TaskTruth::Gaussian { means, cov_diag } = &episode.truth else {
        return Err(Error::InvalidInput(
            "probe probabilities need a classification episode".into(),
        ));
    };
    let n = episode.features().len();
    let classes = means.nrows();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let x = episode.features().row_f64(i);
        let mut log_lik: Vec<f64> = (0..classes)
            .map(|c| {
                let mut q = 0.0;
                for t in 0..x.len() {
                    let diff = x[t] - means[[c, t]];
                    q += diff * diff / cov_diag[t];
                }
                -0.5 * q
            })
            .collect();
        let max = log_lik.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in log_lik.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        let row: Vec<f64> = log_lik
            .iter()
            .map(|&v| (1.0 - noise) * v / total + noise / classes as f64)
            .collect();
        rows.push(row);
    }
    ProbabilityMatrix::from_rows(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PickMode {
    Stratified,
    Unstratified,
}

impl PickMode {
    pub fn tag(&self) -> &'static str {
        match self {
            PickMode::Stratified => "stratified",
            PickMode::Unstratified => "unstratified",
        }
    }
}

impl std::fmt::Display for PickMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Runs the configured selector over the episode pool. Unstratified mode
/// hands the selector the whole pool with no label access; stratified mode
/// runs it separately inside each hidden-label stratum, `budget / N` picks
/// per class.
pub fn pick_context(
    episode: &Episode,
    mode: PickMode,
    budget: usize,
    cfg: &SelectorConfig,
    probs: Option<&ProbabilityMatrix>,
    seed: u64,
) -> Result<SelectionResult> {
    match mode {
        PickMode::Unstratified => select(episode.features(), budget, cfg, probs, seed),
        PickMode::Stratified => {
            let labels = episode.pool_labels().ok_or_else(|| {
                Error::InvalidInput("stratified picking needs a labeled pool".into())
            })?;
            let classes = episode.classes();
            if budget % classes != 0 {
                return Err(Error::InvalidInput(format!(
                    "stratified budget {budget} is not divisible by {classes} classes"
                )));
            }
            let per_class = budget / classes;
            let mut indices = Vec::with_capacity(budget);
            let mut diagnostics: Vec<PointDiagnostic> = Vec::with_capacity(budget);
            for class in 0..classes {
                let members: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter(|(_, &l)| l as usize == class)
                    .map(|(i, _)| i)
                    .collect();
                if members.len() < per_class {
                    return Err(Error::StratumTooSmall {
                        class: class as u32,
                        available: members.len(),
                        needed: per_class,
                    });
                }
                let sub_pool = episode.features().subset(&members)?;
                let sub_probs = match probs {
                    Some(p) => Some(p.subset(&members)?),
                    None => None,
                };
                let sub = select(
                    &sub_pool,
                    per_class,
                    cfg,
                    sub_probs.as_ref(),
                    split(seed, class as u64),
                )?;
                for &i in &sub.indices {
                    indices.push(members[i]);
                }
                for diag in sub.diagnostics {
                    diagnostics.push(PointDiagnostic {
                        index: members[diag.index],
                        ..diag
                    });
                }
            }
            Ok(SelectionResult {
                method: cfg.method.tag().into(),
                params: json!({
                    "budget": budget,
                    "seed": seed,
                    "mode": "stratified",
                    "per_class": per_class,
                }),
                indices,
                diagnostics,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selectors::Method;
    use approx::assert_abs_diff_eq;

    fn spec(kind: TaskKind) -> TaskSpec {
        TaskSpec::new(kind)
    }

    #[test]
    fn tiny_sigma_collapses_onto_the_means() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.sigma = 1e-9;
        s.dim = 3;
        let ep = gen_episode(&s, 7).unwrap();
        let TaskTruth::Gaussian { means, .. } = ep.truth() else {
            panic!("gaussian truth expected")
        };
        let labels = ep.pool_labels().unwrap();
        for i in 0..ep.features().len() {
            let x = ep.features().row_f64(i);
            let c = labels[i] as usize;
            for t in 0..3 {
                assert!((x[t] - means[[c, t]]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn orthonormal_means_have_identity_gram() {
        let mut s = spec(TaskKind::OrthonormalMeans);
        s.ways = 5;
        s.dim = 16;
        let ep = gen_episode(&s, 11).unwrap();
        let TaskTruth::Gaussian { means, .. } = ep.truth() else {
            panic!("gaussian truth expected")
        };
        for i in 0..5 {
            for j in 0..5 {
                let dot = means.row(i).dot(&means.row(j));
                let target = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot, target, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn empirical_bayes_accuracy_matches_the_gaussian_integral() {
        // Two orthonormal means are sqrt(2) apart; with sigma = sqrt(2)/2
        // the midpoint sits one noise-sigma from each mean along the
        // separating axis, so Bayes accuracy is Phi(1) = 0.841345.
        let mut s = spec(TaskKind::OrthonormalMeans);
        s.ways = 2;
        s.dim = 4;
        s.sigma = std::f64::consts::SQRT_2 / 2.0;
        s.pool_size = 2;
        s.target_size = Some(100_000);
        let ep = gen_episode(&s, 3).unwrap();
        let TaskTruth::Gaussian { means, cov_diag } = ep.truth() else {
            panic!("gaussian truth expected")
        };
        let clf = crate::learners::BayesGaussianClassifier::new(
            means.clone(),
            cov_diag[0].sqrt(),
        )
        .unwrap();
        let Targets::Classification { x, y } = ep.targets() else {
            panic!("classification targets expected")
        };
        let acc = crate::learners::bayes_accuracy(&clf, x.to_f64().view(), y);
        assert!((acc - 0.841345).abs() < 0.01, "accuracy {acc}");
    }

    #[test]
    fn anisotropic_layout_is_fixed() {
        let mut s = spec(TaskKind::AnisotropicGaussian);
        s.ways = 2;
        let ep = gen_episode(&s, 5).unwrap();
        let TaskTruth::Gaussian { means, cov_diag } = ep.truth() else {
            panic!("gaussian truth expected")
        };
        assert_eq!(means[[0, 1]], -1.5);
        assert_eq!(means[[1, 1]], 1.5);
        assert_eq!(means[[0, 0]], 0.0);
        assert_eq!(cov_diag, &vec![2.25, 0.1225]);
    }

    #[test]
    fn sinusoid_amplitude_lower_bound_is_reachable() {
        let mut lowest = f64::INFINITY;
        for seed in 0..10_000 {
            let ep = gen_episode(&spec(TaskKind::Sinusoid), seed).unwrap();
            let TaskTruth::Sinusoid { amplitude, .. } = ep.truth() else {
                panic!("sinusoid truth expected")
            };
            lowest = lowest.min(*amplitude);
        }
        assert!((0.1..0.2).contains(&lowest), "min amplitude {lowest}");
    }

    #[test]
    fn sinusoid_values_follow_the_curve() {
        assert_abs_diff_eq!(sinusoid_value(1.0, 0.0, 0.0), 0.0);
        assert_abs_diff_eq!(
            sinusoid_value(1.0, 0.0, std::f64::consts::FRAC_PI_2),
            1.0,
            epsilon = 1e-12
        );
        let ep = gen_episode(&spec(TaskKind::Sinusoid), 9).unwrap();
        let TaskTruth::Sinusoid { amplitude, phase } = *ep.truth() else {
            panic!("sinusoid truth expected")
        };
        let (x, y) = ep.reveal_values(&[0, 3, 7]).unwrap();
        for (row, &target) in x.rows().into_iter().zip(&y) {
            assert_abs_diff_eq!(
                sinusoid_value(amplitude, phase, row[0]),
                target,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn episodes_are_reproducible_bit_for_bit() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 3;
        let a = gen_episode(&s, 1234).unwrap();
        let b = gen_episode(&s, 1234).unwrap();
        assert_eq!(a.features().data(), b.features().data());
        assert_eq!(
            a.pool_labels().unwrap(),
            b.pool_labels().unwrap()
        );
        let c = gen_episode(&s, 1235).unwrap();
        assert_ne!(a.features().data(), c.features().data());
    }

    #[test]
    fn pools_and_targets_are_balanced() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 3;
        s.pool_size = 10;
        s.target_size = Some(7);
        let ep = gen_episode(&s, 21).unwrap();
        let mut pool_counts = [0usize; 3];
        for &l in ep.pool_labels().unwrap() {
            pool_counts[l as usize] += 1;
        }
        assert_eq!(pool_counts, [4, 3, 3]);
        let Targets::Classification { y, .. } = ep.targets() else {
            panic!("classification targets expected")
        };
        let mut target_counts = [0usize; 3];
        for &l in y {
            target_counts[l as usize] += 1;
        }
        assert_eq!(target_counts, [3, 2, 2]);
    }

    #[test]
    fn stratified_one_shot_hits_every_class_once() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 5;
        let ep = gen_episode(&s, 31).unwrap();
        let cfg = SelectorConfig::new(Method::Random);
        let r = pick_context(&ep, PickMode::Stratified, 5, &cfg, None, 8).unwrap();
        assert_eq!(r.indices.len(), 5);
        let labels = ep.pool_labels().unwrap();
        let mut seen: Vec<u32> = r
            .indices
            .iter()
            .map(|&i| labels[i])
            .collect();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn stratified_budget_must_divide() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 5;
        let ep = gen_episode(&s, 33).unwrap();
        let cfg = SelectorConfig::new(Method::Random);
        assert!(pick_context(&ep, PickMode::Stratified, 7, &cfg, None, 8).is_err());
    }

    #[test]
    fn stratified_reports_thin_strata() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 2;
        s.pool_size = 3;
        let ep = gen_episode(&s, 35).unwrap();
        let cfg = SelectorConfig::new(Method::Random);
        match pick_context(&ep, PickMode::Stratified, 4, &cfg, None, 8) {
            Err(Error::StratumTooSmall {
                class,
                available,
                needed,
            }) => {
                assert_eq!(class, 1);
                assert_eq!(available, 1);
                assert_eq!(needed, 2);
            }
            other => panic!("expected StratumTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn unstratified_gmm_covers_separated_blobs() {
        // Orthonormal means sit sqrt(2) apart, 28 noise sigmas here, so a
        // 5-point mixture selection should take one point per class nearly
        // always.
        let mut s = spec(TaskKind::OrthonormalMeans);
        s.ways = 5;
        s.dim = 5;
        s.sigma = 0.05;
        s.pool_size = 100;
        let cfg = SelectorConfig::new(Method::Gmm);
        let mut perfect = 0;
        let seeds = 100;
        for seed in 0..seeds {
            let ep = gen_episode(&s, split(1000, seed)).unwrap();
            let r = pick_context(&ep, PickMode::Unstratified, 5, &cfg, None, seed).unwrap();
            let labels = ep.pool_labels().unwrap();
            let picked: Vec<u32> = r.indices.iter().map(|&i| labels[i]).collect();
            let entropy = crate::eval::coverage_entropy(&picked, 5);
            if (entropy - 5f64.ln()).abs() < 0.05 {
                perfect += 1;
            }
        }
        assert!(perfect >= 95, "full coverage on only {perfect}/{seeds} seeds");
    }

    #[test]
    fn probe_noise_one_is_uniform() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 4;
        let ep = gen_episode(&s, 41).unwrap();
        let probs = probe_probabilities(&ep, 1.0).unwrap();
        for i in 0..probs.len() {
            for &p in probs.row(i) {
                assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn probe_noise_zero_with_tiny_sigma_is_one_hot() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 3;
        s.sigma = 1e-6;
        let ep = gen_episode(&s, 43).unwrap();
        let probs = probe_probabilities(&ep, 0.0).unwrap();
        let labels = ep.pool_labels().unwrap();
        for i in 0..probs.len() {
            let row = probs.row(i);
            let label = labels[i] as usize;
            assert!(row[label] > 1.0 - 1e-9);
        }
    }

    #[test]
    fn probe_matches_the_two_class_logistic_form() {
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.ways = 2;
        s.dim = 1;
        s.sigma = 0.8;
        let ep = gen_episode(&s, 45).unwrap();
        let TaskTruth::Gaussian { means, cov_diag } = ep.truth() else {
            panic!("gaussian truth expected")
        };
        let probs = probe_probabilities(&ep, 0.0).unwrap();
        for i in 0..ep.features().len() {
            let x = ep.features().row_f64(i)[0];
            let d0 = (x - means[[0, 0]]).powi(2);
            let d1 = (x - means[[1, 0]]).powi(2);
            let expect = 1.0 / (1.0 + ((d0 - d1) / (2.0 * cov_diag[0])).exp());
            assert_abs_diff_eq!(probs.row(i)[0], expect, epsilon = 1e-9);
        }
    }

    #[test]
    fn spec_validation_rejects_bad_shapes() {
        let mut s = spec(TaskKind::OrthonormalMeans);
        s.ways = 5;
        s.dim = 3;
        assert!(gen_episode(&s, 1).is_err());
        let mut s = spec(TaskKind::Sinusoid);
        s.dim = 2;
        assert!(gen_episode(&s, 1).is_err());
        let mut s = spec(TaskKind::AnisotropicGaussian);
        s.ways = 3;
        assert!(gen_episode(&s, 1).is_err());
        let mut s = spec(TaskKind::IsotropicGaussian);
        s.sigma = 0.0;
        assert!(gen_episode(&s, 1).is_err());
    }
}
