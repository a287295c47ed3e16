//! WebAssembly bindings for the browser demo.
//!
//! Every operation takes and returns JSON so the page needs no generated
//! type glue. The plain functions are the tested surface; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use semiblind::analytic::{optimal_omega, predict_subspace_mse};
use semiblind::harness::{predict, run_sweep, write_json, EstimatorChoice, ExperimentConfig, Grid};
use semiblind::model::{sample_taps, SystemParams};

/// Largest problem the page may request; keeps the tab responsive.
const MAX_TRIALS: usize = 200;
const MAX_DRAWS: usize = 2000;

fn default_gain() -> usize {
    64
}

fn default_block_len() -> usize {
    400
}

fn default_draws() -> usize {
    200
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceRequest {
    /// `mm` or `subspace`.
    pub estimator: String,
    pub beta: Vec<f64>,
    pub sigma_n2: Vec<f64>,
    #[serde(rename = "P")]
    pub order: usize,
    pub alpha: f64,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gain")]
    pub gain: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct SurfacePoint {
    pub beta: f64,
    pub sigma_n2: f64,
    pub sigma_g2: f64,
    pub eta: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveRequest {
    pub beta: f64,
    pub sigma_n2: f64,
    #[serde(rename = "P")]
    pub order: usize,
    pub alpha: f64,
    /// Number of points on `[0, 1]`.
    pub points: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gain")]
    pub gain: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct OmegaCurve {
    pub omega: Vec<f64>,
    /// Channel-averaged subspace error at each `omega`.
    pub sigma_g2: Vec<f64>,
    /// Training-only error `sigma^2 / alpha`.
    pub training: f64,
    /// Mean of the per-channel optimal weights.
    pub omega_opt: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub beta: f64,
    pub sigma_n2: f64,
    #[serde(rename = "P")]
    pub order: usize,
    pub alpha: f64,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gain")]
    pub gain: usize,
    #[serde(default = "default_block_len")]
    pub block_len: usize,
    /// `identity`, `solve` or `iterative`.
    #[serde(default)]
    pub sos_mode: Option<String>,
}

fn parse<'a, T: Deserialize<'a>>(json: &'a str) -> Result<T, String> {
    serde_json::from_str(json).map_err(|e| format!("bad request: {e}"))
}

fn limit(name: &str, value: usize, max: usize) -> Result<(), String> {
    if value == 0 || value > max {
        Err(format!("{name} must be in 1..={max}, got {value}"))
    } else {
        Ok(())
    }
}

/// Analytic efficiency over a `beta x sigma_n2` grid.
pub fn efficiency_surface(request: &str) -> Result<String, String> {
    let req: SurfaceRequest = parse(request)?;
    limit("draws", req.draws, MAX_DRAWS)?;
    let estimator = match req.estimator.as_str() {
        "mm" => EstimatorChoice::Mm,
        "subspace" => EstimatorChoice::Subspace,
        other => return Err(format!("estimator must be mm or subspace, got '{other}'")),
    };
    let cfg = ExperimentConfig {
        spreading_gain: req.gain,
        block_len: req.block_len,
        grid: Grid {
            beta: req.beta,
            sigma_n2: req.sigma_n2,
            order: vec![req.order],
            alpha: vec![req.alpha],
        },
        seed: req.seed,
        estimator,
        analytic_draws: req.draws,
        ..ExperimentConfig::default()
    };
    cfg.validate_settings().map_err(|e| e.to_string())?;
    let out = predict(&cfg).map_err(|e| e.to_string())?;
    if let Some(f) = out.failures.first() {
        return Err(format!("{}: {}", f.cell, f.error));
    }
    let points: Vec<SurfacePoint> = out
        .records
        .iter()
        .map(|r| SurfacePoint {
            beta: r.beta,
            sigma_n2: r.sigma_n2,
            sigma_g2: r.sigma_g2_ana,
            eta: r.eta_ana,
        })
        .collect();
    serde_json::to_string(&points).map_err(|e| e.to_string())
}

/// Subspace error as a function of the combining weight.
pub fn subspace_omega_curve(request: &str) -> Result<String, String> {
    let req: CurveRequest = parse(request)?;
    limit("draws", req.draws, MAX_DRAWS)?;
    limit("points", req.points, 1000)?;
    let users = (req.beta * req.gain as f64).round() as usize;
    let training = (req.alpha * req.block_len as f64).round() as usize;
    let params = SystemParams::new(users, req.gain, req.order, req.block_len, training, req.sigma_n2)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let channels: Vec<_> = (0..req.draws).map(|_| sample_taps(req.order, &mut rng)).collect();
    let denom = (req.points.max(2) - 1) as f64;
    let omega: Vec<f64> = (0..req.points).map(|i| i as f64 / denom).collect();
    let mut sigma_g2 = Vec::with_capacity(omega.len());
    for &w in &omega {
        let mut acc = 0.0;
        for g in &channels {
            acc += predict_subspace_mse(g, &params, w).map_err(|e| e.to_string())?;
        }
        sigma_g2.push(acc / channels.len() as f64);
    }
    let mut opt = 0.0;
    for g in &channels {
        opt += optimal_omega(g, &params).map_err(|e| e.to_string())?;
    }
    let curve = OmegaCurve {
        omega,
        sigma_g2,
        training: params.noise_var / params.alpha(),
        omega_opt: opt / channels.len() as f64,
    };
    serde_json::to_string(&curve).map_err(|e| e.to_string())
}

/// Monte Carlo run of one cell with all three estimators. Returns the same
/// records the command-line tool writes as JSON.
pub fn simulate_cell(request: &str) -> Result<String, String> {
    let req: SimulateRequest = parse(request)?;
    limit("trials", req.trials, MAX_TRIALS)?;
    let mut cfg = ExperimentConfig {
        spreading_gain: req.gain,
        block_len: req.block_len,
        grid: Grid {
            beta: vec![req.beta],
            sigma_n2: vec![req.sigma_n2],
            order: vec![req.order],
            alpha: vec![req.alpha],
        },
        trials: req.trials,
        seed: req.seed,
        analytic_draws: 100,
        ..ExperimentConfig::default()
    };
    if let Some(mode) = &req.sos_mode {
        cfg.sos_mode = mode.parse().map_err(|e: semiblind::Error| e.to_string())?;
    }
    cfg.validate_settings().map_err(|e| e.to_string())?;
    let out = run_sweep(&cfg).map_err(|e| e.to_string())?;
    if let Some(f) = out.failures.first() {
        return Err(format!("{}: {}", f.cell, f.error));
    }
    let mut buf = Vec::new();
    write_json(&out.records, &mut buf).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = efficiencySurface)]
pub fn efficiency_surface_js(request: &str) -> Result<String, JsValue> {
    efficiency_surface(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = subspaceOmegaCurve)]
pub fn subspace_omega_curve_js(request: &str) -> Result<String, JsValue> {
    subspace_omega_curve(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = simulateCell)]
pub fn simulate_cell_js(request: &str) -> Result<String, JsValue> {
    simulate_cell(request).map_err(|e| JsValue::from_str(&e))
}
