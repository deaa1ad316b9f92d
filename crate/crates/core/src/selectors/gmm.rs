//! Mixture-density selection: fit one Gaussian component per budget slot,
//! then take each component's most central point.

use serde_json::json;

use crate::clustering::gmm::gmm_fit;
use crate::error::Result;
use crate::features::{squared_mahalanobis, FeatureMatrix};
use crate::selectors::{validate_budget, Method, PointDiagnostic, SelectionResult};

/// Fits a `budget`-component mixture and, component by component, picks the
/// unpicked pool point with the smallest squared Mahalanobis distance to
/// that component's mean. Exclusion of earlier picks keeps the indices
/// distinct even when components overlap.
pub fn select_gmm(
    features: &FeatureMatrix,
    budget: usize,
    seed: u64,
    em_max_iter: usize,
    variance_floor: f64,
) -> Result<SelectionResult> {
    validate_budget(budget, features.len())?;
    let model = gmm_fit(features, budget, seed, em_max_iter, variance_floor)?;
    let metric = model.metric();
    let mut taken = vec![false; features.len()];
    let mut indices = Vec::with_capacity(budget);
    let mut diagnostics = Vec::with_capacity(budget);
    for component in 0..budget {
        let mean = model.means.row(component);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..features.len() {
            if taken[i] {
                continue;
            }
            let d = squared_mahalanobis(features.row_f64(i).view(), mean, &metric);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (i, d) = best.expect("budget is at most the pool size");
        taken[i] = true;
        indices.push(i);
        diagnostics.push(PointDiagnostic {
            index: i,
            score: d,
            component: Some(component),
        });
    }
    Ok(SelectionResult {
        method: Method::Gmm.tag().into(),
        params: json!({
            "budget": budget,
            "seed": seed,
            "em_max_iter": em_max_iter,
            "variance_floor": variance_floor,
        }),
        indices,
        diagnostics,
    })
}
