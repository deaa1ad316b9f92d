//! Command-line driver: benchmark grids over selectors, one-off selections
//! on feature files, purity curves, and the closed-form self-checks.
//!
//! Exit codes: 0 on success, 2 for configuration or input-parsing problems,
//! 1 for failures at run time.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ctxpick::episodes::{gen_episode, PickMode, TaskKind, TaskSpec, TaskTruth, Targets};
use ctxpick::eval::{
    default_delta_grid, purity_curve, run_meta_test, EvalReport, Learner, MetaTestConfig,
};
use ctxpick::features::io::{decode_feature_csv, read_feature_file};
use ctxpick::features::ProbabilityMatrix;
use ctxpick::learners::{
    bayes_accuracy, fit_max_margin, orthonormal_max_margin, BayesGaussianClassifier, LabeledSet,
    MaxMarginOptions,
};
use ctxpick::rng::split;
use ctxpick::selectors::{select, Method, SelectorConfig};
use ctxpick::Error;

#[derive(Parser)]
#[command(name = "ctxpick", version, about = "Low-budget context selection toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark grid described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Directory receiving per-cell reports and the combined CSV.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Worker threads; defaults to one per core.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Select a context set from a feature file and print it as JSON.
    Select {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        seed: u64,
        /// CSV of per-point class probabilities, one row per pool point.
        #[arg(long)]
        probs: Option<PathBuf>,
        /// L2-normalize feature rows before selecting.
        #[arg(long)]
        normalize: bool,
    },
    /// Print the purity curve of a feature file and the chosen radius.
    Purity {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        classes: usize,
        #[arg(long, default_value_t = 0.95)]
        threshold: f64,
    },
    /// Check the solver against its closed forms; exit 0 iff all pass.
    TheoryCheck {
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Also verify that a skewed context is rejected.
        #[arg(long)]
        inject_non_orthonormal: bool,
    },
}

enum CliError {
    /// Bad flags, unparseable config or input files: exit 2.
    Config(String),
    /// Failures while running: exit 1.
    Runtime(String),
}

impl CliError {
    fn config(err: impl std::fmt::Display) -> Self {
        CliError::Config(err.to_string())
    }

    fn runtime(err: impl std::fmt::Display) -> Self {
        CliError::Runtime(err.to_string())
    }
}

/// Core errors that mean the invocation itself was wrong, not the run.
fn classify(err: Error) -> CliError {
    match err {
        Error::MissingProbabilities { .. }
        | Error::BadProbabilities(_)
        | Error::FileFormat { .. } => CliError::Config(err.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bench {
            config,
            out,
            seed,
            jobs,
        } => cmd_bench(&config, &out, seed, jobs),
        Command::Select {
            features,
            method,
            budget,
            seed,
            probs,
            normalize,
        } => cmd_select(&features, &method, budget, seed, probs.as_deref(), normalize),
        Command::Purity {
            features,
            classes,
            threshold,
        } => cmd_purity(&features, classes, threshold),
        Command::TheoryCheck {
            seeds,
            inject_non_orthonormal,
        } => cmd_theory_check(seeds, inject_non_orthonormal),
    }
}

fn default_modes() -> Vec<PickMode> {
    vec![PickMode::Unstratified]
}

fn default_shots_list() -> Vec<usize> {
    vec![1]
}

fn default_episodes() -> usize {
    600
}

fn default_learner() -> Learner {
    Learner::Prototype
}

fn default_probe_noise() -> f64 {
    0.25
}

/// The benchmark grid: every selector crossed with every mode and shot
/// count, all sharing one task and learner.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    task: TaskSpec,
    selectors: Vec<SelectorConfig>,
    #[serde(default = "default_modes")]
    modes: Vec<PickMode>,
    #[serde(default = "default_shots_list")]
    shots: Vec<usize>,
    #[serde(default = "default_episodes")]
    episodes: usize,
    #[serde(default = "default_learner")]
    learner: Learner,
    #[serde(default = "default_probe_noise")]
    probe_noise: f64,
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.selectors.is_empty() || self.modes.is_empty() || self.shots.is_empty() {
            return Err(CliError::Config(
                "selectors, modes and shots must all be non-empty".into(),
            ));
        }
        let mut tags: Vec<&str> = self.selectors.iter().map(|s| s.method.tag()).collect();
        tags.sort_unstable();
        tags.dedup();
        if tags.len() != self.selectors.len() {
            return Err(CliError::Config(
                "duplicate selector methods would collide in the output names".into(),
            ));
        }
        Ok(())
    }
}

fn cmd_bench(
    config_path: &std::path::Path,
    out: &std::path::Path,
    seed: u64,
    jobs: Option<usize>,
) -> Result<(), CliError> {
    if let Some(jobs) = jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(CliError::runtime)?;
    }
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    config.validate()?;

    fs::create_dir_all(out).map_err(CliError::runtime)?;
    let echo = serde_json::to_string_pretty(&config).expect("config re-serializes");
    fs::write(out.join("config_echo.json"), echo).map_err(CliError::runtime)?;

    let mut summary = String::from(EvalReport::csv_header());
    summary.push('\n');
    let mut cell = 0u64;
    for selector in &config.selectors {
        for &mode in &config.modes {
            for &shots in &config.shots {
                let meta = MetaTestConfig {
                    task: config.task.clone(),
                    selector: selector.clone(),
                    learner: config.learner,
                    mode,
                    shots,
                    episodes: config.episodes,
                    probe_noise: config.probe_noise,
                };
                let report = run_meta_test(&meta, split(seed, cell)).map_err(classify)?;
                let stem = format!("{}_{}_{}shot", selector.method.tag(), mode, shots);
                fs::write(out.join(format!("{stem}.json")), report.to_json())
                    .map_err(CliError::runtime)?;
                let row = report.csv_row();
                fs::write(
                    out.join(format!("{stem}.csv")),
                    format!("{}\n{row}\n", EvalReport::csv_header()),
                )
                .map_err(CliError::runtime)?;
                writeln!(summary, "{row}").expect("string write");
                println!("{row}");
                cell += 1;
            }
        }
    }
    fs::write(out.join("summary.csv"), summary).map_err(CliError::runtime)?;
    println!("wrote {cell} reports to {}", out.display());
    Ok(())
}

/// Plain CSV of probability rows, no header, one pool point per line.
fn read_probabilities(path: &std::path::Path) -> Result<ProbabilityMatrix, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    CliError::Config(format!(
                        "{} line {}: {:?} is not a number",
                        path.display(),
                        lineno + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    ProbabilityMatrix::from_rows(rows).map_err(classify)
}

fn cmd_select(
    features_path: &std::path::Path,
    method: &str,
    budget: usize,
    seed: u64,
    probs_path: Option<&std::path::Path>,
    normalize: bool,
) -> Result<(), CliError> {
    let method = Method::from_str(method).map_err(CliError::config)?;
    let pool = read_feature_file(features_path).map_err(classify)?;
    let probs = match probs_path {
        Some(path) => Some(read_probabilities(path)?),
        None => None,
    };
    let mut cfg = SelectorConfig::new(method);
    cfg.normalize_features = normalize;
    let result = select(pool.features(), budget, &cfg, probs.as_ref(), seed).map_err(classify)?;
    println!("{}", result.to_json());
    Ok(())
}

fn cmd_purity(
    features_path: &std::path::Path,
    classes: usize,
    threshold: f64,
) -> Result<(), CliError> {
    let pool = read_feature_file(features_path).map_err(classify)?;
    let grid = default_delta_grid(pool.features());
    let curve =
        purity_curve(pool.features(), classes, &grid, threshold, 0).map_err(classify)?;
    print!("{}", curve.to_csv());
    println!("delta_star={}", curve.delta_star);
    if curve.below_threshold_everywhere {
        println!("below_threshold_everywhere=true");
    }
    Ok(())
}

/// Fits the solver on an exactly orthonormal context and compares it with
/// the closed form, then checks that the closed form on true class means
/// scores like the Bayes rule it equals.
fn cmd_theory_check(seeds: u64, inject_non_orthonormal: bool) -> Result<(), CliError> {
    let mut all_pass = true;

    for seed in 0..seeds {
        // Random orthonormal contexts of a few shapes per seed.
        let mut worst = 0.0f64;
        for (ways, dim) in [(2usize, 2usize), (3, 7), (5, 5), (10, 16)] {
            let mut spec = TaskSpec::new(TaskKind::OrthonormalMeans);
            spec.ways = ways;
            spec.dim = dim;
            spec.pool_size = ways;
            spec.target_size = Some(1);
            let episode = gen_episode(&spec, split(seed, ways as u64)).map_err(classify)?;
            let TaskTruth::Gaussian { means, .. } = episode.truth() else {
                unreachable!("gaussian task");
            };
            let context = LabeledSet::new(means.clone(), (0..ways as u32).collect(), ways)
                .map_err(classify)?;
            let solver =
                fit_max_margin(&context, &MaxMarginOptions::default()).map_err(classify)?;
            let closed = orthonormal_max_margin(means.view()).map_err(classify)?;
            let solver_w = solver.weights();
            let closed_w = closed.weights();
            for y in 0..ways {
                for t in 0..dim {
                    worst = worst.max((solver_w[[y, t]] - closed_w[[y, t]]).abs());
                }
            }
        }
        let pass = worst <= 1e-3;
        all_pass &= pass;
        println!(
            "solver-vs-closed-form seed {seed}: {} (max weight deviation {worst:.2e})",
            if pass { "PASS" } else { "FAIL" }
        );

        // Closed form on the true means against the Bayes rule.
        let mut spec = TaskSpec::new(TaskKind::OrthonormalMeans);
        spec.ways = 5;
        spec.dim = 16;
        spec.sigma = 0.4;
        spec.pool_size = 5;
        spec.target_size = Some(20_000);
        let episode = gen_episode(&spec, split(seed, 99)).map_err(classify)?;
        let TaskTruth::Gaussian { means, cov_diag } = episode.truth() else {
            unreachable!("gaussian task");
        };
        let Targets::Classification { x, y } = episode.targets() else {
            unreachable!("classification task");
        };
        let x = x.to_f64();
        let margin = orthonormal_max_margin(means.view()).map_err(classify)?;
        let bayes =
            BayesGaussianClassifier::new(means.clone(), cov_diag[0].sqrt()).map_err(classify)?;
        let margin_acc = margin.accuracy(x.view(), y);
        let bayes_acc = bayes_accuracy(&bayes, x.view(), y);
        let mut disagreements = 0usize;
        for row in x.rows() {
            if margin.predict(row) != bayes.predict(row) {
                disagreements += 1;
            }
        }
        let rate = disagreements as f64 / x.nrows() as f64;
        let pass = (margin_acc - bayes_acc).abs() <= 0.005 && rate < 0.001;
        all_pass &= pass;
        println!(
            "bayes-accuracy-match seed {seed}: {} (accuracies {margin_acc:.4} vs {bayes_acc:.4}, \
             disagreement {rate:.5})",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    if inject_non_orthonormal {
        // A sheared pair is far from orthonormal; the closed form must say so.
        let skewed = decode_feature_csv("n=2,d=2,labeled=0,classes=0\n1,0\n0.8,0.6\n")
            .map_err(classify)?;
        let points = skewed.features().to_f64();
        let pass = matches!(
            orthonormal_max_margin(points.view()),
            Err(Error::NotOrthonormal { .. })
        );
        all_pass &= pass;
        println!(
            "non-orthonormal-rejection: {}",
            if pass { "PASS" } else { "FAIL" }
        );
    }

    if all_pass {
        Ok(())
    } else {
        Err(CliError::Runtime("theory checks failed".into()))
    }
}
