//! Three browser operations over the core crate. Each returns a JSON string;
//! the `*_impl` functions hold the logic so it can be tested natively.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use torquegap::agent::obs::priv_dim;
use torquegap::dynamics::CONTROL_DT;
use torquegap::equivalence::{check_fixture, Fixture, ParameterDelta};
use torquegap::randomization::{PerturbNet, RunningScale};
use torquegap::reference::{plan_rollout, step_period, Command, PlannerConfig};
use wasm_bindgen::prelude::*;

const N_JOINTS: usize = 6;

pub fn plan_impl(vx: f64, steps: usize) -> String {
    let cfg = PlannerConfig::default();
    let cmd = Command::forward(vx);
    let pts = plan_rollout(cmd, steps.clamp(1, 12), 24, CONTROL_DT, &cfg);
    json!({
        "step_period": step_period(cmd, &cfg),
        "x": pts.iter().map(|p| p.x).collect::<Vec<_>>(),
        "z": pts.iter().map(|p| p.z).collect::<Vec<_>>(),
    })
    .to_string()
}

pub fn equivalence_impl(fixture: &str, delta: &str, horizon: usize) -> Result<String, String> {
    let f = Fixture::parse(fixture).map_err(|e| e.to_string())?;
    let d = ParameterDelta::standard_set()
        .into_iter()
        .find(|d| d.name() == delta)
        .ok_or_else(|| format!("unknown delta '{delta}'"))?;
    let r = check_fixture(f, d, horizon.clamp(1, 5000), 1e-8).map_err(|e| e.to_string())?;
    Ok(json!({
        "worst": r.report.worst,
        "passed": r.report.passed,
        "deviation": r.report.max_deviation,
    })
    .to_string())
}

/// Joint outputs of one sampled network along `α · u` for a fixed random unit
/// direction `u`, `α ∈ [−span, span]`.
pub fn perturb_sweep_impl(seed: u64, span: f64, points: usize) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = priv_dim(N_JOINTS);
    let net = PerturbNet::sample(d, N_JOINTS, 50.0, 25.0, &mut rng);
    let dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = RunningScale::new(d, 0);
    let n = points.clamp(3, 2001);
    let mut alpha = Vec::with_capacity(n);
    let mut tau = vec![Vec::with_capacity(n); N_JOINTS];
    for i in 0..n {
        let a = span * (2.0 * i as f64 / (n - 1) as f64 - 1.0);
        let x: Vec<f64> = dir.iter().map(|v| a * v / norm).collect();
        let out = net.evaluate(&x, &scale).map_err(|e| e.to_string())?;
        alpha.push(a);
        for (j, t) in out.tau_pert.iter().enumerate() {
            tau[j].push(*t);
        }
    }
    Ok(json!({ "alpha": alpha, "tau": tau, "limit": 50.0 }).to_string())
}

#[wasm_bindgen]
pub fn plan(vx: f64, steps: usize) -> String {
    plan_impl(vx, steps)
}

#[wasm_bindgen]
pub fn equivalence(fixture: &str, delta: &str, horizon: usize) -> Result<String, JsError> {
    equivalence_impl(fixture, delta, horizon).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn perturb_sweep(seed: u64, span: f64, points: usize) -> Result<String, JsError> {
    perturb_sweep_impl(seed, span, points).map_err(|e| JsError::new(&e))
}
