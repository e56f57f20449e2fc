//! WebAssembly bindings for the static page in `www/`. Every entry point
//! takes an experiment config as JSON and returns a JSON report.

use serde::Serialize;
use serde_json::json;
use toeplitz_wkb::experiments::{expansion, low_spectrum, tunnelling_gap_sweep, ExperimentConfig};
use toeplitz_wkb::families::Well;
use wasm_bindgen::prelude::*;

/// Largest level accepted from the page; keeps a click under a few seconds.
pub const MAX_LEVEL: usize = 200;

fn parse(config: &str) -> Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig = serde_json::from_str(config).map_err(|e| format!("config: {e}"))?;
    cfg.validate().map_err(|e| e.to_string())?;
    if cfg.n_values.iter().any(|&n| n > MAX_LEVEL) {
        return Err(format!("the demo caps N at {MAX_LEVEL}"));
    }
    Ok(cfg)
}

fn render<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

/// λ_k and the Hamilton-Jacobi diagnostics at the configured well.
pub fn wkb_report(config: &str) -> Result<String, String> {
    let cfg = parse(config)?;
    let w = expansion(&cfg, cfg.well.unwrap_or(Well::North)).map_err(|e| e.to_string())?;
    let lambda_n: Vec<[f64; 2]> = cfg.n_values.iter().map(|&n| [n as f64, w.lambda_at(n)]).collect();
    render(&json!({
        "lambda": w.lambda,
        "lambda_at": lambda_n,
        "t": w.hj.t,
        "radius": w.hj.radius,
        "hj_residual": w.hj.hj_residual,
        "envelope": w.fits.envelope,
    }))
}

/// Lowest eigenvalues of T_N(f) for each N.
pub fn spectrum_report(config: &str) -> Result<String, String> {
    let cfg = parse(config)?;
    render(&low_spectrum(&cfg).map_err(|e| e.to_string())?)
}

/// λ₁ − λ₀ against N with its exponential fit.
pub fn gap_report(config: &str) -> Result<String, String> {
    let cfg = parse(config)?;
    render(&tunnelling_gap_sweep(&cfg).map_err(|e| e.to_string())?)
}

#[wasm_bindgen]
pub fn wkb(config: &str) -> Result<String, JsError> {
    wkb_report(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn spectrum(config: &str) -> Result<String, JsError> {
    spectrum_report(config).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn gap(config: &str) -> Result<String, JsError> {
    gap_report(config).map_err(|e| JsError::new(&e))
}
