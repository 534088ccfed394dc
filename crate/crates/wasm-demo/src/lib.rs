//! Browser bindings: a Kronecker prefix with its largest empty box, the
//! normalized best-approximation profile, and a record curve for one target.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! and are callable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use welldist::dispersion::{
    anchored_dispersion, covering_radius_torus, kronecker_covering_radius_1d, kronecker_dispersion_1d,
    CoveringOptions, DispersionRecord,
};
use welldist::irrationality::{best_approx_records, singularity_profile, DEFAULT_THETA};
use welldist::sequence::{kronecker_prefix, AlphaVector};
use welldist::torus::UnitPoint;
use welldist::verifier::record_tracker;

const MAX_POINTS: u64 = 4000;
const MAX_T: u64 = 10_000_000;
const MAX_K: u64 = 200_000;
const CURVE_SAMPLES: u64 = 400;

fn parse_alpha(alpha: &str) -> Result<AlphaVector, String> {
    let a = AlphaVector::parse(alpha).map_err(|e| e.to_string())?;
    if a.dim() > 2 {
        return Err("the demo draws one or two dimensions".into());
    }
    Ok(a)
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct PointsView {
    dim: usize,
    points: Vec<Vec<f64>>,
    dispersion: DispersionRecord,
    /// Side of the largest empty box, with its anchor in `dispersion`.
    side: f64,
}

pub fn points_json(alpha: &str, q: u64) -> Result<String, String> {
    let a = parse_alpha(alpha)?;
    if q == 0 || q > MAX_POINTS {
        return Err(format!("q must lie in 1..={MAX_POINTS}"));
    }
    let prefix = kronecker_prefix(&a, q).map_err(|e| e.to_string())?;
    let dispersion = if a.dim() == 1 {
        let x = a.values()[0];
        let d = kronecker_dispersion_1d(x, q).map_err(|e| e.to_string())?;
        let rho = kronecker_covering_radius_1d(x, q).map_err(|e| e.to_string())?;
        DispersionRecord::new(&d, &rho)
    } else {
        let d = anchored_dispersion(&prefix).map_err(|e| e.to_string())?;
        let opts = CoveringOptions { resolution: 0.01 };
        let rho = covering_radius_torus(&prefix, &opts).map_err(|e| e.to_string())?;
        DispersionRecord::new(&d, &rho)
    };
    let points = prefix.points().map(|p| p.iter().map(|c| c.to_f64()).collect()).collect();
    to_json(&PointsView { dim: a.dim(), points, side: dispersion.s_star, dispersion })
}

#[derive(Serialize)]
struct PsiView {
    dim: usize,
    /// `(q, q^(1/n) ψ(q))` at each record.
    records: Vec<(u64, f64)>,
    local_maxima: Vec<(u64, f64)>,
    classification: &'static str,
}

pub fn psi_json(alpha: &str, t: u64) -> Result<String, String> {
    let a = parse_alpha(alpha)?;
    if t == 0 || t > MAX_T {
        return Err(format!("T must lie in 1..={MAX_T}"));
    }
    let profile = best_approx_records(&a, t).map_err(|e| e.to_string())?;
    let sing = singularity_profile(&a, t, DEFAULT_THETA).map_err(|e| e.to_string())?;
    let n = a.dim() as f64;
    let records = profile
        .records
        .iter()
        .map(|r| (r.q, (r.q as f64).powf(1.0 / n) * r.psi_value))
        .collect();
    to_json(&PsiView {
        dim: a.dim(),
        records,
        local_maxima: sing.local_maxima,
        classification: sing.classification.as_str(),
    })
}

#[derive(Serialize)]
struct CurveView {
    /// `(K, r(K))` with `r(K) = min_{k <= K} k ||k α - η||^n`.
    curve: Vec<(u64, f64)>,
    best_k: u64,
}

pub fn record_curve_json(alpha: &str, eta: &[f64], k: u64) -> Result<String, String> {
    let a = parse_alpha(alpha)?;
    if k == 0 || k > MAX_K {
        return Err(format!("K must lie in 1..={MAX_K}"));
    }
    if eta.len() != a.dim() {
        return Err(format!("eta needs {} coordinates", a.dim()));
    }
    let target = UnitPoint::from_f64(eta).map_err(|e| e.to_string())?;
    // geometric checkpoints, dense at the start
    let mut cps: Vec<u64> = (0..=CURVE_SAMPLES)
        .map(|i| (k as f64).powf(i as f64 / CURVE_SAMPLES as f64).round() as u64)
        .collect();
    cps.dedup();
    let series = record_tracker(&a, &[target], &cps).map_err(|e| e.to_string())?;
    let s = &series[0];
    to_json(&CurveView {
        curve: s.checkpoints.iter().map(|c| (c.big_k, c.record)).collect(),
        best_k: s.best_k,
    })
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Points of the prefix, the anchored dispersion and the covering radius.
#[wasm_bindgen]
pub fn points(alpha: &str, q: u32) -> Result<String, JsError> {
    js(points_json(alpha, q as u64))
}

/// Records of ψ with their normalized values and the classification.
#[wasm_bindgen]
pub fn psi_profile(alpha: &str, t: f64) -> Result<String, JsError> {
    js(psi_json(alpha, t as u64))
}

/// Record curve of one target.
#[wasm_bindgen]
pub fn record_curve(alpha: &str, eta: &[f64], k: u32) -> Result<String, JsError> {
    js(record_curve_json(alpha, eta, k as u64))
}
