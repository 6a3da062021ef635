//! Browser bindings for the blending optimizer. Every entry point takes plain
//! numbers and returns a JSON string; errors come back as JS strings.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use blendopt::cases::Case;
use blendopt::network::{segment_pipes, validate_topology, Network};
use blendopt::scenario::{injection_profile, Profile, ProfileSpec, Scenario};
use blendopt::solver::{solve_steady, solve_transient, SolveStatus, SolverOptions};
use blendopt::trajectory::Trajectory;
use blendopt::transcription::build_time_grid;
use blendopt::validation::audit;

const TOL: f64 = 1e-6;

#[derive(Debug, Serialize)]
struct Stage {
    status: SolveStatus,
    iterations: usize,
    objective: f64,
    violation: f64,
}

#[derive(Debug, Serialize)]
struct Report {
    variables: usize,
    stages: Vec<Stage>,
    audit_passed: bool,
    failed_checks: Vec<String>,
    trajectory: Trajectory,
}

#[derive(Debug, Serialize)]
struct Preview {
    times_h: Vec<f64>,
    eta: Vec<f64>,
}

fn stage(r: &blendopt::solver::SolveResult) -> Stage {
    Stage {
        status: r.status,
        iterations: r.iterations,
        objective: r.objective,
        violation: r.violation,
    }
}

fn check_fraction(name: &str, v: f64) -> Result<(), String> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("{name} must lie in [0, 1], got {v}"))
    }
}

fn run(network: &Network, scenario: &Scenario, transient: bool) -> Result<String, String> {
    let diags = validate_topology(network);
    if let Some(d) = diags.first() {
        return Err(d.message.clone());
    }
    scenario.validate().map_err(|e| e.to_string())?;
    let segnet = segment_pipes(network, scenario.dl_m).map_err(|e| e.to_string())?;
    let opts = SolverOptions {
        kkt_tol: TOL,
        ..SolverOptions::default()
    };
    let (problem, result, stages) = if transient {
        let grid = build_time_grid(scenario.horizon_h, scenario.dt_h).map_err(|e| e.to_string())?;
        let two = solve_transient(&segnet, scenario, &grid, &opts).map_err(|e| e.to_string())?;
        let stages = vec![stage(&two.steady), stage(&two.transient)];
        (two.problem, two.transient, stages)
    } else {
        let (p, r) = solve_steady(&segnet, scenario, &opts).map_err(|e| e.to_string())?;
        let stages = vec![stage(&r)];
        (p, r, stages)
    };
    let trajectory = Trajectory::from_solution(&problem, &result.x).map_err(|e| e.to_string())?;
    let report = audit(&trajectory, &segnet, scenario, 10.0 * TOL, 1e-6).map_err(|e| e.to_string())?;
    let out = Report {
        variables: result.x.len(),
        stages,
        audit_passed: report.passed,
        failed_checks: report.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect(),
        trajectory,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Samples the sinusoidal injection fraction over one day.
pub fn preview(eta0: f64, delta: f64, nu: f64, dt_h: f64) -> Result<String, String> {
    if !(dt_h > 0.0 && dt_h <= 24.0) {
        return Err(format!("time step must lie in (0, 24] h, got {dt_h}"));
    }
    let n = (24.0 / dt_h).round() as usize;
    let times_h: Vec<f64> = (0..=n).map(|k| k as f64 * dt_h).collect();
    let eta = times_h.iter().map(|&t| injection_profile(eta0, delta, nu, t, 24.0)).collect();
    serde_json::to_string(&Preview { times_h, eta }).map_err(|e| e.to_string())
}

/// Periodic solve of the compressor-plus-pipe case with a sinusoidal H2
/// fraction at the supply.
pub fn single_pipe(eta0: f64, delta: f64, nu: f64, xi: f64, dt_h: f64) -> Result<String, String> {
    check_fraction("xi", xi)?;
    let mut scenario = Case::SinglePipe.scenario();
    scenario.dt_h = dt_h;
    scenario.xi = xi;
    let profile = Profile::Spec(ProfileSpec::Sinusoid { eta0, delta, nu });
    profile.validate_fraction("injection").map_err(|e| e.to_string())?;
    scenario.injection.insert("N1".into(), profile);
    run(&Case::SinglePipe.network(), &scenario, true)
}

/// Eight-node network with an adjustable C3 flow cap and J7 supply cap.
pub fn eight_node(xi: f64, c3_cap: f64, j7_cap: f64, transient: bool) -> Result<String, String> {
    check_fraction("xi", xi)?;
    if !(c3_cap > 0.0 && j7_cap > 0.0) {
        return Err("caps must be positive".into());
    }
    let mut network = Case::EightNode.network();
    if let Some(c) = network.compressors.iter_mut().find(|c| c.id == "C3") {
        c.fc_max = c3_cap;
    }
    if let Some(n) = network.nodes.iter_mut().find(|n| n.id == "J7") {
        n.qs_max = Some(j7_cap);
    }
    let mut scenario = Case::EightNode.scenario();
    scenario.xi = xi;
    run(&network, &scenario, transient)
}

#[wasm_bindgen(js_name = previewInjection)]
pub fn preview_injection(eta0: f64, delta: f64, nu: f64, dt_h: f64) -> Result<String, JsValue> {
    preview(eta0, delta, nu, dt_h).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = solveSinglePipe)]
pub fn solve_single_pipe(eta0: f64, delta: f64, nu: f64, xi: f64, dt_h: f64) -> Result<String, JsValue> {
    single_pipe(eta0, delta, nu, xi, dt_h).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = solveEightNode)]
pub fn solve_eight_node(xi: f64, c3_cap: f64, j7_cap: f64, transient: bool) -> Result<String, JsValue> {
    eight_node(xi, c3_cap, j7_cap, transient).map_err(|e| JsValue::from_str(&e))
}
