//! Browser bindings. Every export takes plain numbers and strings and returns
//! a JSON string; errors come back as a JS exception carrying the message.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use stagewise::mc::estimate_risk;
use stagewise::report::{bands_report, McRow};
use stagewise::seqtest::{evaluate, Design, GaussianHypotheses, Procedure, TestConfig};
use stagewise::{HSpec, SamplerSpec};

/// Upper bound on replications per call, to keep the page responsive.
pub const MAX_REPS: u32 = 200_000;

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn check_reps(reps: u32) -> Result<u64, String> {
    if !(2..=MAX_REPS).contains(&reps) {
        return Err(format!("reps must be in [2, {MAX_REPS}]"));
    }
    Ok(reps as u64)
}

pub fn bands_json(h: &str, mu: f64, a: f64, d_over_c: Option<f64>) -> Result<String, String> {
    let h: HSpec = h.parse().map_err(|e: stagewise::Error| e.to_string())?;
    to_json(&bands_report(&h, mu, a, d_over_c).map_err(|e| e.to_string())?)
}

/// `spec` is a sampler object such as `{"family":"geometric","z":0,"mu":1}`.
pub fn simulate_json(spec: &str, a: f64, h: &str, reps: u32, seed: u32) -> Result<String, String> {
    let spec: SamplerSpec = serde_json::from_str(spec).map_err(|e| format!("sampler: {e}"))?;
    let spec = SamplerSpec::new(spec.family, spec.mu).map_err(|e| e.to_string())?;
    let h: HSpec = h.parse().map_err(|e: stagewise::Error| e.to_string())?;
    let est = estimate_risk(&spec, a, &h, check_reps(reps)?, seed as u64).map_err(|e| e.to_string())?;
    to_json(&McRow::new(&est))
}

#[derive(Serialize)]
struct CurvePoint {
    k: u64,
    r: f64,
    se_r: f64,
    en: f64,
    em: f64,
}

#[derive(Serialize)]
struct RiskCurve {
    d_over_c: f64,
    m_star: String,
    delta: CurvePoint,
    best_k: u64,
    curve: Vec<CurvePoint>,
}

/// Integrated risk of group tests for `k = 1..=k_max` next to the variable-stage test,
/// for `+/-0.25` hypotheses and per-stage cost `0.001`.
pub fn risk_curve_json(d_over_c: f64, k_max: u32, reps: u32, seed: u32) -> Result<String, String> {
    if !(1..=200).contains(&k_max) {
        return Err("k_max must be in [1, 200]".into());
    }
    let reps = check_reps(reps)?;
    let hyp = GaussianHypotheses::new(-0.25, 0.25).map_err(|e| e.to_string())?;
    let cfg = TestConfig::with_ratio(0.001, d_over_c).map_err(|e| e.to_string())?;
    let point = |procedure: Procedure, k: u64| -> Result<(CurvePoint, String), String> {
        let design = Design::new(hyp, cfg, procedure).map_err(|e| e.to_string())?;
        let rep = evaluate(&design, reps, seed as u64).map_err(|e| e.to_string())?;
        let p = CurvePoint { k, r: rep.r, se_r: rep.se_r, en: rep.mean_n(cfg.prior), em: rep.mean_m(cfg.prior) };
        Ok((p, rep.size))
    };
    let (delta, m_star) = point(Procedure::Optimal, 0)?;
    let curve = (1..=k_max as u64)
        .map(|k| point(Procedure::FixedGroup(k), k).map(|p| p.0))
        .collect::<Result<Vec<_>, _>>()?;
    let best_k = curve.iter().min_by(|x, y| x.r.total_cmp(&y.r)).map(|p| p.k).unwrap_or(1);
    to_json(&RiskCurve { d_over_c, m_star, delta, best_k, curve })
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

/// Band classification of `h` (as `c*x^p*log^q`) with its risk constants.
#[wasm_bindgen]
pub fn bands(h: &str, mu: f64, a: f64, d_over_c: Option<f64>) -> Result<String, JsValue> {
    js(bands_json(h, mu, a, d_over_c))
}

/// Monte Carlo risk of one sampler at boundary `a`.
#[wasm_bindgen]
pub fn simulate(spec: &str, a: f64, h: &str, reps: u32, seed: u32) -> Result<String, JsValue> {
    js(simulate_json(spec, a, h, reps, seed))
}

#[wasm_bindgen]
pub fn risk_curve(d_over_c: f64, k_max: u32, reps: u32, seed: u32) -> Result<String, JsValue> {
    js(risk_curve_json(d_over_c, k_max, reps, seed))
}
