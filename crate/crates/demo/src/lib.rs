//! Browser bindings for three pieces of the language recognition back end:
//! minimum-message-length mixture fitting on 2-D points, DET curves and the
//! challenge cost. Every export returns a JSON string; failures come back
//! as `{"error": "..."}`.

use langrec::fusion_eval::{compute_cost, det_points, CostParams};
use langrec::gmm::{fit_gmm_mml, CovarianceKind, Covariances, GmmConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(result: Result<Value, String>) -> String {
    match result {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// Fits a full-covariance mixture to `xy` (interleaved x, y pairs),
/// letting the message-length criterion pick the component count.
#[wasm_bindgen]
pub fn fit_mixture(xy: &[f64], c_max: usize, seed: u64) -> String {
    respond(mixture(xy, c_max, seed))
}

fn mixture(xy: &[f64], c_max: usize, seed: u64) -> Result<Value, String> {
    if xy.len() % 2 != 0 {
        return Err("coordinates must come in x, y pairs".into());
    }
    let points: Vec<Vec<f64>> = xy.chunks(2).map(<[f64]>::to_vec).collect();
    if c_max == 0 || points.len() <= c_max {
        return Err(format!("need more than {c_max} points, have {}", points.len()));
    }
    let cfg = GmmConfig { seed, covariance_kind: CovarianceKind::Full, ..GmmConfig::default() };
    let fit = fit_gmm_mml(&points, c_max, &cfg).map_err(|e| e.to_string())?;
    let m = &fit.model;
    let covs = match m.covariances() {
        Covariances::Full(c) | Covariances::Diagonal(c) => c.clone(),
    };
    let components: Vec<Value> = (0..m.n_components())
        .map(|k| json!({ "weight": m.weights()[k], "mean": m.means()[k], "cov": covs[k] }))
        .collect();
    Ok(json!({
        "components": components,
        "message_length": fit.message_length,
        "trace": fit.trace,
    }))
}

/// DET points and equal error rate; `is_target` holds 0 or 1 per score.
#[wasm_bindgen]
pub fn det_curve(scores: &[f64], is_target: &[u8]) -> String {
    let targets: Vec<bool> = is_target.iter().map(|&t| t != 0).collect();
    respond(det_points(scores, &targets).map_err(|e| e.to_string()).map(|curve| {
        let points: Vec<[f64; 2]> = curve.points.iter().map(|p| [p.false_alarm, p.miss]).collect();
        json!({ "points": points, "eer": curve.eer })
    }))
}

/// Cost of tab-separated `id<TAB>label` decisions against the truth, with
/// the class count taken from the distinct in-set truth labels.
#[wasm_bindgen]
pub fn evaluate(decisions: &str, truth: &str, p_oos: f64) -> String {
    respond(cost(decisions, truth, p_oos))
}

fn parse_pairs(text: &str, what: &str) -> Result<Vec<(String, String)>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let (id, label) = l
                .split_once('\t')
                .ok_or_else(|| format!("{what} line {}: expected id<TAB>label", i + 1))?;
            Ok((id.trim().to_string(), label.trim().to_string()))
        })
        .collect()
}

fn cost(decisions: &str, truth: &str, p_oos: f64) -> Result<Value, String> {
    let decisions = parse_pairs(decisions, "decisions")?;
    let truth = parse_pairs(truth, "truth")?;
    let mut classes: Vec<&str> =
        truth.iter().map(|(_, l)| l.as_str()).filter(|l| *l != langrec::OUT_OF_SET).collect();
    classes.sort_unstable();
    classes.dedup();
    let params = CostParams { n_classes: classes.len().max(1), p_oos, scale: 100.0 };
    let report = compute_cost(&decisions, &truth, &params).map_err(|e| e.to_string())?;
    Ok(json!({
        "cost": report.cost,
        "per_class": report.per_class,
        "out_of_set": report.out_of_set,
        "warnings": report.warnings,
    }))
}
