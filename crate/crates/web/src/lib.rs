//! Browser bindings for the static demo page in `www/`.
//!
//! Every export takes the model as a JSON object with the fields of
//! [`LqModel`] and returns JSON text. The inner functions are plain Rust so
//! they can be tested natively.

use exploratory_lq::closed_form::{classical_from_value, lambda_sweep, Solution, SweepRow};
use exploratory_lq::sde::{simulate_exploratory, PathGrid, SimOptions};
use exploratory_lq::{AffineGaussianPolicy, LqModel};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Curves {
    pub k2: f64,
    pub k1: f64,
    pub k0: f64,
    pub alpha0: f64,
    pub policy: AffineGaussianPolicy,
    pub cost: f64,
    pub xs: Vec<f64>,
    pub value: Vec<f64>,
    pub classical_value: Vec<f64>,
    /// Density of the optimal policy at `probe_x`, on `us`.
    pub probe_x: f64,
    pub us: Vec<f64>,
    pub density: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct Paths {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    pub diverged: usize,
}

fn parse_model(json: &str) -> Result<LqModel, String> {
    serde_json::from_str(json).map_err(|e| format!("bad model: {e}"))
}

fn solve(model: &LqModel) -> Result<Solution, String> {
    let checked = model.validate().map_err(|e| e.to_string())?;
    Solution::solve(&checked).map_err(|e| e.to_string())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / (n.max(2) - 1) as f64;
    (0..n.max(2)).map(|i| lo + h * i as f64).collect()
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// Value functions on `[-x_range, x_range]` and the policy density at `probe_x`.
pub fn curves_json(model_json: &str, x_range: f64, probe_x: f64) -> Result<String, String> {
    let model = parse_model(model_json)?;
    let sol = solve(&model)?;
    let classical = classical_from_value(&model, &sol.value).map_err(|e| e.to_string())?;
    let xs = linspace(-x_range, x_range, 121);
    let sd = sol.policy.variance.sqrt();
    let centre = sol.policy.mean(probe_x);
    let us = linspace(centre - 4.0 * sd, centre + 4.0 * sd, 161);
    to_json(&Curves {
        k2: sol.value.k2,
        k1: sol.value.k1,
        k0: sol.value.k0,
        alpha0: classical.alpha0,
        policy: sol.policy,
        cost: sol.cost,
        value: xs.iter().map(|&x| sol.value.eval(x)).collect(),
        classical_value: xs.iter().map(|&x| classical.value().eval(x)).collect(),
        xs,
        probe_x,
        density: us.iter().map(|&u| sol.policy.pdf(probe_x, u)).collect(),
        us,
    })
}

/// Temperature sweep over `n` log-spaced values in `[lambda_min, lambda_max]`.
pub fn sweep_json(
    model_json: &str,
    lambda_min: f64,
    lambda_max: f64,
    n: usize,
    probe_x: f64,
) -> Result<String, String> {
    let model = parse_model(model_json)?;
    solve(&model)?;
    let lambdas: Vec<f64> = linspace(lambda_min.ln(), lambda_max.ln(), n).into_iter().map(f64::exp).collect();
    let rows: Vec<SweepRow> = lambda_sweep(&model, &lambdas, probe_x).map_err(|e| e.to_string())?;
    to_json(&rows)
}

/// Euler–Maruyama sample paths under the optimal exploratory policy.
pub fn paths_json(
    model_json: &str,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<String, String> {
    let model = parse_model(model_json)?;
    let sol = solve(&model)?;
    let grid = PathGrid::new(horizon / n_steps.max(1) as f64, n_steps.max(1)).map_err(|e| e.to_string())?;
    let batch = simulate_exploratory(&model, &sol.policy, x0, grid, seed, n_paths, &SimOptions::default())
        .map_err(|e| e.to_string())?;
    to_json(&Paths {
        times: batch.stored_steps().iter().map(|&k| grid.time(k)).collect(),
        diverged: batch.n_diverged(),
        paths: batch.states,
    })
}

#[wasm_bindgen]
pub fn curves(model_json: &str, x_range: f64, probe_x: f64) -> Result<String, JsValue> {
    curves_json(model_json, x_range, probe_x).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn sweep(model_json: &str, lambda_min: f64, lambda_max: f64, n: usize, probe_x: f64) -> Result<String, JsValue> {
    sweep_json(model_json, lambda_min, lambda_max, n, probe_x).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn paths(
    model_json: &str,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<String, JsValue> {
    paths_json(model_json, x0, horizon, n_steps, n_paths, seed).map_err(|e| JsValue::from_str(&e))
}
