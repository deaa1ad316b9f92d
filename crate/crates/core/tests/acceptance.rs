//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single `acceptance NN PASS` line; run with `--nocapture` to see them.

use std::collections::BTreeSet;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use ctxpick::clustering::gmm::gmm_fit;
use ctxpick::clustering::kmeans;
use ctxpick::episodes::{gen_episode, PickMode, TaskKind, TaskSpec, TaskTruth, Targets};
use ctxpick::eval::{default_delta_grid, purity_curve, run_meta_test, Learner, MetaTestConfig};
use ctxpick::features::{FeatureMatrix, ProbabilityMatrix};
use ctxpick::learners::{
    bayes_accuracy, fit_max_margin, orthonormal_max_margin, BayesGaussianClassifier, LabeledSet,
    MaxMarginOptions,
};
use ctxpick::rng::seeded;
use ctxpick::selectors::{select, select_dpp, DppMode, Method, SelectorConfig};

fn random_features(n: usize, d: usize, seed: u64) -> FeatureMatrix {
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = Array2::<f32>::zeros((n, d));
    for v in x.iter_mut() {
        *v = normal.sample(&mut rng) as f32;
    }
    FeatureMatrix::new(x).unwrap()
}

fn random_probabilities(n: usize, classes: usize, seed: u64) -> ProbabilityMatrix {
    let mut rng = seeded(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let rows = (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..classes).map(|_| normal.sample(&mut rng)).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            exps.iter().map(|e| e / total).collect()
        })
        .collect();
    ProbabilityMatrix::from_rows(rows).unwrap()
}

fn meta_config(kind: TaskKind, method: Method, mode: PickMode, episodes: usize) -> MetaTestConfig {
    MetaTestConfig {
        task: TaskSpec::new(kind),
        selector: SelectorConfig::new(method),
        learner: Learner::Prototype,
        mode,
        shots: 1,
        episodes,
        probe_noise: 0.25,
    }
}

#[test]
fn acceptance_01_basis_context_weights_match_the_closed_form() {
    let start = Instant::now();
    for n in [2usize, 3, 5, 10] {
        let context = LabeledSet::new(
            Array2::<f64>::eye(n),
            (0..n as u32).collect(),
            n,
        )
        .unwrap();
        let clf = fit_max_margin(&context, &MaxMarginOptions::default()).unwrap();

        // Center the weight rows, then compare against e_y - (1/N) 1.
        let w = clf.weights();
        let mut centered = w.to_owned();
        let col_means = w.mean_axis(ndarray::Axis(0)).unwrap();
        for mut row in centered.rows_mut() {
            row -= &col_means;
        }
        let mut worst = 0.0f64;
        for y in 0..n {
            for t in 0..n {
                let expect = if y == t { 1.0 - 1.0 / n as f64 } else { -1.0 / n as f64 };
                worst = worst.max((centered[[y, t]] - expect).abs());
            }
        }
        assert!(worst <= 1e-3, "N={n}: weight deviation {worst}");

        let mut rng = seeded(1000 + n as u64);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..1000 {
            let q = Array1::from_iter((0..n).map(|_| normal.sample(&mut rng)));
            let predicted = clf.predict(q.view());
            // Nearest basis vector = largest coordinate.
            let mut nn = 0usize;
            for t in 1..n {
                if q[t] > q[nn] {
                    nn = t;
                }
            }
            assert_eq!(predicted, nn as u32, "N={n}: query {q} misrouted");
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "took {elapsed:.2}s, budget is 5s");
    println!(
        "acceptance 01 PASS: basis-context weights within 1e-3 of the closed form, \
         4000/4000 nearest-neighbor predictions exact, {elapsed:.2}s"
    );
}

#[test]
fn acceptance_02_max_margin_on_orthonormal_means_is_bayes_optimal() {
    let start = Instant::now();
    let mut spec = TaskSpec::new(TaskKind::OrthonormalMeans);
    spec.ways = 5;
    spec.dim = 16;
    spec.sigma = 0.4;
    spec.pool_size = 5;
    spec.target_size = Some(100_000);
    let episode = gen_episode(&spec, 20_260_101).unwrap();
    let TaskTruth::Gaussian { means, cov_diag } = episode.truth() else {
        panic!("gaussian truth expected")
    };
    let Targets::Classification { x, y } = episode.targets() else {
        panic!("classification targets expected")
    };
    let x = x.to_f64();

    let margin = orthonormal_max_margin(means.view()).unwrap();
    let bayes = BayesGaussianClassifier::new(means.clone(), cov_diag[0].sqrt()).unwrap();

    let margin_acc = margin.accuracy(x.view(), y);
    let bayes_acc = bayes_accuracy(&bayes, x.view(), y);
    let mut disagreements = 0usize;
    for row in x.rows() {
        if margin.predict(row) != bayes.predict(row) {
            disagreements += 1;
        }
    }
    let disagree_rate = disagreements as f64 / x.nrows() as f64;

    assert!(
        (margin_acc - bayes_acc).abs() <= 0.005,
        "margin {margin_acc} vs bayes {bayes_acc}"
    );
    assert!(
        disagree_rate < 0.001,
        "classifiers disagree on {disagree_rate:.4} of points"
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "took {elapsed:.2}s, budget is 30s");
    println!(
        "acceptance 02 PASS: accuracies {margin_acc:.4} vs {bayes_acc:.4}, \
         disagreement {disagree_rate:.5}, {elapsed:.2}s"
    );
}

#[test]
fn acceptance_03_mixture_picks_beat_random_per_class_on_anisotropic_pools() {
    let gmm = run_meta_test(
        &meta_config(
            TaskKind::AnisotropicGaussian,
            Method::Gmm,
            PickMode::Unstratified,
            500,
        ),
        42,
    )
    .unwrap();
    let random = run_meta_test(
        &meta_config(
            TaskKind::AnisotropicGaussian,
            Method::Random,
            PickMode::Stratified,
            500,
        ),
        42,
    )
    .unwrap();

    let gap = gmm.mean - random.mean;
    assert!(
        gap >= 0.05,
        "gap {gap:.4} (gmm {:.4}, random-per-class {:.4})",
        gmm.mean,
        random.mean
    );
    assert!(
        gmm.mean - gmm.ci95 > random.mean + random.ci95,
        "confidence intervals overlap: {:.4}±{:.4} vs {:.4}±{:.4}",
        gmm.mean,
        gmm.ci95,
        random.mean,
        random.ci95
    );
    println!(
        "acceptance 03 PASS: gmm {:.4}±{:.4} vs random-per-class {:.4}±{:.4}, gap {gap:.4}",
        gmm.mean, gmm.ci95, random.mean, random.ci95
    );
}

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out
}

/// Expected label entropy of 5 uniform draws without replacement from a
/// 100-point pool with 20 points per class, by exact enumeration.
fn expected_random_entropy() -> f64 {
    let total = binomial(100, 5) as f64;
    let mut expectation = 0.0;
    for c0 in 0..=5u64 {
        for c1 in 0..=5 - c0 {
            for c2 in 0..=5 - c0 - c1 {
                for c3 in 0..=5 - c0 - c1 - c2 {
                    let c4 = 5 - c0 - c1 - c2 - c3;
                    let ways: u128 = [c0, c1, c2, c3, c4]
                        .iter()
                        .map(|&c| binomial(20, c))
                        .product();
                    let p = ways as f64 / total;
                    let entropy: f64 = [c0, c1, c2, c3, c4]
                        .iter()
                        .filter(|&&c| c > 0)
                        .map(|&c| {
                            let q = c as f64 / 5.0;
                            -q * q.ln()
                        })
                        .sum();
                    expectation += p * entropy;
                }
            }
        }
    }
    expectation
}

#[test]
fn acceptance_04_mixture_selections_cover_classes_better_than_random() {
    let mut gmm_cfg = meta_config(
        TaskKind::OrthonormalMeans,
        Method::Gmm,
        PickMode::Unstratified,
        600,
    );
    gmm_cfg.task.dim = 5;
    gmm_cfg.task.sigma = 0.12;
    let mut random_cfg = gmm_cfg.clone();
    random_cfg.selector = SelectorConfig::new(Method::Random);

    let gmm = run_meta_test(&gmm_cfg, 42).unwrap();
    let random = run_meta_test(&random_cfg, 42).unwrap();
    let gmm_entropy = gmm.label_entropy_mean.unwrap();
    let random_entropy = random.label_entropy_mean.unwrap();
    let expect = expected_random_entropy();

    assert!(gmm_entropy >= 1.45, "gmm mean label entropy {gmm_entropy:.4}");
    assert!(
        gmm_entropy > random_entropy,
        "gmm {gmm_entropy:.4} vs random {random_entropy:.4}"
    );
    assert!(
        (random_entropy - expect).abs() <= 0.05,
        "random entropy {random_entropy:.4} vs exact expectation {expect:.4}"
    );
    println!(
        "acceptance 04 PASS: gmm entropy {gmm_entropy:.4}, random {random_entropy:.4} \
         (exact expectation {expect:.4})"
    );
}

#[test]
fn acceptance_05_accuracy_ordering_mixture_over_random_over_uncertainty() {
    let start = Instant::now();
    // Sigma 0.45 was calibrated so unstratified random one-shot selection
    // lands mid-scale on these pools.
    let mut base = meta_config(
        TaskKind::OrthonormalMeans,
        Method::Gmm,
        PickMode::Unstratified,
        600,
    );
    base.task.dim = 5;
    base.task.sigma = 0.45;

    let gmm = run_meta_test(&base, 42).unwrap();
    let mut random_cfg = base.clone();
    random_cfg.selector = SelectorConfig::new(Method::Random);
    let random = run_meta_test(&random_cfg, 42).unwrap();
    let mut entropy_cfg = base.clone();
    entropy_cfg.selector = SelectorConfig::new(Method::Entropy);
    let entropy = run_meta_test(&entropy_cfg, 42).unwrap();

    assert!(
        (0.45..=0.55).contains(&random.mean),
        "random scored {:.4}, outside the calibrated band",
        random.mean
    );
    assert!(
        gmm.mean - gmm.ci95 > random.mean + random.ci95,
        "gmm {:.4}±{:.4} does not clear random {:.4}±{:.4}",
        gmm.mean,
        gmm.ci95,
        random.mean,
        random.ci95
    );
    assert!(
        random.mean - random.ci95 > entropy.mean + entropy.ci95,
        "random {:.4}±{:.4} does not clear entropy {:.4}±{:.4}",
        random.mean,
        random.ci95,
        entropy.mean,
        entropy.ci95
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "took {elapsed:.2}s, budget is 120s");
    println!(
        "acceptance 05 PASS: gmm {:.4} > random {:.4} > entropy {:.4}, \
         CIs disjoint, {elapsed:.2}s",
        gmm.mean, random.mean, entropy.mean
    );
}

#[test]
fn acceptance_06_exact_kdpp_sampling_matches_principal_minors() {
    let n = 6;
    let features = random_features(n, 3, 606);

    // The sampler's kernel is the Gram matrix of these rows; enumerate all
    // C(6,2) = 15 principal 2x2 minors for the exact subset law.
    let mut gram = vec![vec![0.0f64; n]; n];
    for i in 0..n {
        for j in 0..n {
            gram[i][j] = features.row_f64(i).dot(&features.row_f64(j));
        }
    }
    let mut pairs = Vec::new();
    let mut z = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let minor = gram[i][i] * gram[j][j] - gram[i][j] * gram[j][i];
            pairs.push(((i, j), minor));
            z += minor;
        }
    }

    let draws = 100_000usize;
    let mut counts = std::collections::HashMap::new();
    for s in 0..draws {
        let r = select_dpp(&features, 2, s as u64, DppMode::Exact).unwrap();
        let mut key = r.indices.clone();
        key.sort_unstable();
        *counts.entry((key[0], key[1])).or_insert(0usize) += 1;
    }

    let mut tv = 0.0;
    for &((i, j), minor) in &pairs {
        let exact = minor / z;
        let empirical = *counts.get(&(i, j)).unwrap_or(&0) as f64 / draws as f64;
        tv += (exact - empirical).abs();
    }
    tv /= 2.0;
    assert!(tv <= 0.05, "total variation {tv:.4}");
    println!("acceptance 06 PASS: k-DPP empirical law within TV {tv:.4} of the minors");
}

#[test]
fn acceptance_07_em_log_likelihood_never_decreases() {
    let mut rng = seeded(707);
    let mut violations = 0usize;
    for case in 0..100 {
        let n = rng.random_range(10..60);
        let d = rng.random_range(1..5);
        let k = rng.random_range(1..6).min(n);
        let features = random_features(n, d, 9000 + case);
        let model = gmm_fit(&features, k, case, 100, 1e-6).unwrap();
        for w in model.log_likelihood_trace.windows(2) {
            if w[1] < w[0] - 1e-6 {
                violations += 1;
            }
        }
    }
    assert_eq!(violations, 0, "{violations} monotonicity violations");
    println!("acceptance 07 PASS: 100 EM traces non-decreasing within 1e-6");
}

#[test]
fn acceptance_08_purity_is_monotone_and_the_two_blob_radius_lands_in_the_gap() {
    let mut rng = seeded(808);
    for case in 0..100 {
        let n = rng.random_range(8..50);
        let d = rng.random_range(1..4);
        let classes = rng.random_range(2..5);
        let features = random_features(n, d, 7000 + case);
        let curve = purity_curve(&features, classes, &default_delta_grid(&features), 0.95, case).unwrap();
        for w in curve.purity.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "case {case}: purity rose from {} to {}",
                w[0],
                w[1]
            );
        }
    }

    // Two blobs of diameter 1, separated by 9: every radius below 9 keeps
    // each point's ball inside its own blob, so the pure fraction stays at
    // 1.0 until the gap and the reported radius must land inside it.
    let mut x = Array2::<f32>::zeros((6, 1));
    for (i, v) in [0.0f32, 0.5, 1.0, 10.0, 10.5, 11.0].iter().enumerate() {
        x[[i, 0]] = *v;
    }
    let features = FeatureMatrix::new(x).unwrap();
    let curve = purity_curve(&features, 2, &default_delta_grid(&features), 0.95, 3).unwrap();
    assert!(!curve.below_threshold_everywhere);
    assert!(
        curve.delta_star > 1.0 && curve.delta_star < 9.0,
        "delta_star {} outside the inter-blob gap",
        curve.delta_star
    );
    println!(
        "acceptance 08 PASS: 100 purity curves non-increasing, two-blob radius {:.3} in (1, 9)",
        curve.delta_star
    );
}

#[test]
fn acceptance_09_every_selector_returns_exact_distinct_in_range_budgets() {
    // The selector entry point types its pool as a bare feature matrix, so
    // label access is impossible at the interface; probabilities are passed
    // only to the methods that declare the need.
    let mut rng = seeded(909);
    let methods = Method::ALL;
    for t in 0..1000u64 {
        let method = methods[(t % methods.len() as u64) as usize];
        let n = rng.random_range(5..40);
        let budget = rng.random_range(1..=5.min(n));
        let d = if method == Method::Kdpp {
            rng.random_range(budget.max(1)..7)
        } else {
            rng.random_range(1..7)
        };
        let classes = rng.random_range(2..6);
        let features = random_features(n, d, 50_000 + t);
        let probs;
        let probs_ref = if method.needs_probabilities() {
            probs = random_probabilities(n, classes, 60_000 + t);
            Some(&probs)
        } else {
            None
        };
        let cfg = SelectorConfig::new(method);
        let r = select(&features, budget, &cfg, probs_ref, t).unwrap_or_else(|e| {
            panic!("tuple {t} ({method:?}, n={n}, d={d}, budget={budget}): {e}")
        });
        assert_eq!(r.indices.len(), budget, "tuple {t}: wrong budget");
        assert_eq!(r.diagnostics.len(), budget, "tuple {t}: diagnostics size");
        let distinct: BTreeSet<usize> = r.indices.iter().copied().collect();
        assert_eq!(distinct.len(), budget, "tuple {t}: repeated index");
        assert!(
            r.indices.iter().all(|&i| i < n),
            "tuple {t}: index out of range"
        );
    }
    println!("acceptance 09 PASS: 1000 fuzzed tuples across all 11 selectors well-formed");
}

#[test]
fn acceptance_10_small_pools_match_exhaustive_oracles_exactly() {
    for n in 2..=12usize {
        let seed = 100 + n as u64;
        let features = random_features(n, 3, seed);
        let probs = random_probabilities(n, 4, seed + 500);
        let mut budgets = vec![1, n / 2, n];
        budgets.retain(|&b| b >= 1);
        budgets.dedup();

        for &budget in &budgets {
            // Entropy: highest row entropies, ties to the lowest index.
            let entropies: Vec<f64> = (0..n)
                .map(|i| {
                    probs
                        .row(i)
                        .iter()
                        .filter(|&&p| p > 0.0)
                        .map(|&p| -p * p.ln())
                        .sum()
                })
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| entropies[b].total_cmp(&entropies[a]).then(a.cmp(&b)));
            let oracle: Vec<usize> = order[..budget].to_vec();
            let got = select(
                &features,
                budget,
                &SelectorConfig::new(Method::Entropy),
                Some(&probs),
                seed,
            )
            .unwrap();
            assert_eq!(got.indices, oracle, "entropy n={n} budget={budget}");

            // Margin: smallest top-two gaps first.
            let margins: Vec<f64> = (0..n)
                .map(|i| {
                    let mut row: Vec<f64> = probs.row(i).to_vec();
                    row.sort_by(|a, b| b.total_cmp(a));
                    row[0] - row[1]
                })
                .collect();
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| margins[a].total_cmp(&margins[b]).then(a.cmp(&b)));
            let oracle: Vec<usize> = order[..budget].to_vec();
            let got = select(
                &features,
                budget,
                &SelectorConfig::new(Method::Margin),
                Some(&probs),
                seed,
            )
            .unwrap();
            assert_eq!(got.indices, oracle, "margin n={n} budget={budget}");

            // Coreset: greedy farthest-point recursion from the same start.
            let got = select(
                &features,
                budget,
                &SelectorConfig::new(Method::Coreset),
                None,
                seed,
            )
            .unwrap();
            let dist = |a: usize, b: usize| -> f64 {
                let xa = features.row_f64(a);
                let xb = features.row_f64(b);
                xa.iter()
                    .zip(xb.iter())
                    .map(|(p, q)| (p - q) * (p - q))
                    .sum::<f64>()
                    .sqrt()
            };
            let mut oracle = vec![got.indices[0]];
            let mut nearest: Vec<f64> = (0..n).map(|i| dist(i, oracle[0])).collect();
            while oracle.len() < budget {
                let mut best = 0usize;
                for i in 1..n {
                    if nearest[i] > nearest[best] {
                        best = i;
                    }
                }
                oracle.push(best);
                for i in 0..n {
                    nearest[i] = nearest[i].min(dist(i, best));
                }
            }
            assert_eq!(got.indices, oracle, "coreset n={n} budget={budget}");

            // Typiclust: sparsest-neighborhood score inside each cluster of
            // the same k-means run, scanned exhaustively.
            let cfg = SelectorConfig::new(Method::Typiclust);
            let got = select(&features, budget, &cfg, None, seed).unwrap();
            let model = kmeans(&features, budget, seed, 100, 1e-10).unwrap();
            let mut scores = vec![0.0f64; n];
            for i in 0..n {
                let mut dists: Vec<f64> = (0..n)
                    .filter(|&j| j != i && model.assignment[j] == model.assignment[i])
                    .map(|j| dist(i, j))
                    .collect();
                if dists.is_empty() {
                    continue;
                }
                dists.sort_by(f64::total_cmp);
                dists.truncate(cfg.knn_size);
                let mean = dists.iter().sum::<f64>() / dists.len() as f64;
                scores[i] = 1.0 / mean.max(f64::MIN_POSITIVE);
            }
            let mut oracle = Vec::with_capacity(budget);
            for cluster in 0..budget {
                let mut best: Option<usize> = None;
                for i in 0..n {
                    if model.assignment[i] == cluster
                        && best.is_none_or(|b| scores[i] > scores[b])
                    {
                        best = Some(i);
                    }
                }
                oracle.push(best.expect("cluster is non-empty"));
            }
            assert_eq!(got.indices, oracle, "typiclust n={n} budget={budget}");
        }
    }
    println!(
        "acceptance 10 PASS: entropy, margin, coreset and typiclust match \
         their exhaustive oracles on every pool up to n=12"
    );
}
