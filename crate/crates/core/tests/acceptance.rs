//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use blendopt::cases::Case;
use blendopt::network::{parse_network, segment_pipes};
use blendopt::scenario::Scenario;
use blendopt::solver::{solve_steady, solve_transient, SolveStatus, SolverOptions, TwoStage};
use blendopt::trajectory::Trajectory;
use blendopt::transcription::{assemble_nlp, build_time_grid};
use blendopt::validation::{conservation_audit, derivative_check, lag_analysis, periodicity_error};

// Tolerances.
const ENERGY_BOUND: f64 = 8000.0;
const ENERGY_REL: f64 = 1e-3;
const ENERGY_SHARE: f64 = 0.75;
const SINGLE_PIPE_BUDGET: Duration = Duration::from_secs(300);
const N2_PMAX_RANGE: (f64, f64) = (5.94e6, 6.0e6);
const PRESSURE_RANGE: (f64, f64) = (3.0e6, 6.0e6);
const PRESSURE_SLACK_PA: f64 = 1.0;
const PERIODICITY_TOL: f64 = 1e-4;
const LAG_RANGE_H: (f64, f64) = (0.5, 4.0);
const CONSERVATION_TOL: f64 = 1e-6;
const DERIVATIVE_TOL: f64 = 1e-6;
const DERIVATIVE_POINTS: usize = 20;
const ORACLE_TOL: f64 = 1e-6;
const REPLICATE_TOL: f64 = 1e-6;
const C3_CAP: f64 = 140.0;
const C3_REL: f64 = 1e-3;
const C2_MAX: f64 = 1.0;
const EIGHT_NODE_BUDGET: Duration = Duration::from_secs(900);

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn solve(case: Case) -> (TwoStage, Trajectory, Duration) {
    let net = case.network();
    let sc = case.scenario();
    let seg = segment_pipes(&net, sc.dl_m).unwrap();
    let grid = build_time_grid(sc.horizon_h, sc.dt_h).unwrap();
    let start = Instant::now();
    let stages = solve_transient(&seg, &sc, &grid, &SolverOptions::default()).unwrap();
    let elapsed = start.elapsed();
    let traj = Trajectory::from_solution(&stages.problem, &stages.transient.x).unwrap();
    (stages, traj, elapsed)
}

fn single_pipe_energy(stages: &TwoStage, traj: &Trajectory, elapsed: Duration) -> Outcome {
    let g = &traj.transfer("N3").unwrap().g_e;
    let at_bound: Vec<bool> = g.iter().map(|v| (v - ENERGY_BOUND).abs() <= ENERGY_REL * ENERGY_BOUND).collect();
    let share = at_bound.iter().filter(|b| **b).count() as f64 / g.len() as f64;
    // The dip within the first injection cycle must be one contiguous run
    // overlapping the concentration trough at 9 h.
    let cycle = g.len() / 2;
    let dip: Vec<usize> = (0..cycle).filter(|&k| !at_bound[k]).collect();
    let contiguous = !dip.is_empty() && dip.windows(2).all(|w| w[1] == w[0] + 1);
    let (t0, t1) = match (dip.first(), dip.last()) {
        (Some(&a), Some(&b)) => (traj.times_h[a], traj.times_h[b]),
        _ => (f64::NAN, f64::NAN),
    };
    let aligned = contiguous && t0 >= 8.0 && t1 <= 11.5 && t0 <= 10.5 && t1 >= 9.0;
    let ok = stages.transient.status == SolveStatus::LocalOptimum
        && share >= ENERGY_SHARE
        && aligned
        && elapsed <= SINGLE_PIPE_BUDGET;
    outcome(
        ok,
        format!(
            "status {}, at bound {:.1}% of steps, dip {t0:.1}-{t1:.1} h, {:.2} s",
            stages.transient.status,
            100.0 * share,
            elapsed.as_secs_f64()
        ),
    )
}

fn single_pipe_pressure(traj: &Trajectory) -> Outcome {
    let n2 = traj.node("N2").unwrap().p.iter().cloned().fold(f64::MIN, f64::max);
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for n in &traj.nodes {
        for &p in &n.p {
            lo = lo.min(p);
            hi = hi.max(p);
        }
    }
    let ok = n2 >= N2_PMAX_RANGE.0
        && n2 <= N2_PMAX_RANGE.1
        && lo >= PRESSURE_RANGE.0 - PRESSURE_SLACK_PA
        && hi <= PRESSURE_RANGE.1 + PRESSURE_SLACK_PA;
    outcome(
        ok,
        format!("max p(N2) {:.6} MPa, all p in [{:.6}, {:.6}] MPa", n2 / 1e6, lo / 1e6, hi / 1e6),
    )
}

fn single_pipe_periodicity(traj: &Trajectory) -> Outcome {
    let (err, worst) = periodicity_error(traj, traj.len() / 2);
    outcome(err <= PERIODICITY_TOL, format!("12 h shift deviation {err:.2e} ({worst})"))
}

fn single_pipe_lag(traj: &Trajectory) -> Outcome {
    let lag = lag_analysis(traj, "N1", "N3").unwrap();
    let ok = lag.steps > 0 && lag.hours >= LAG_RANGE_H.0 && lag.hours <= LAG_RANGE_H.1;
    outcome(ok, format!("N3 lags N1 by {:.1} h (correlation {:.3})", lag.hours, lag.correlation))
}

fn conservation(trajs: &[(&str, &Trajectory)]) -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, t) in trajs {
        let w = conservation_audit(t).worst();
        worst = worst.max(w);
        parts.push(format!("{name} {w:.1e}"));
    }
    outcome(worst <= CONSERVATION_TOL, format!("relative imbalance {}", parts.join(", ")))
}

fn derivatives() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for case in Case::ALL {
        let sc = case.scenario();
        let seg = segment_pipes(&case.network(), sc.dl_m).unwrap();
        let grid = build_time_grid(sc.horizon_h, sc.dt_h).unwrap();
        let problem = assemble_nlp(&seg, &sc, &grid).unwrap();
        let r = derivative_check(&problem, DERIVATIVE_POINTS, 1e-6, 2024);
        worst = worst.max(r.max_error());
        parts.push(format!("{case} {:.1e}", r.max_error()));
    }
    outcome(
        worst <= DERIVATIVE_TOL,
        format!("{DERIVATIVE_POINTS} points each: {}", parts.join(", ")),
    )
}

const ORACLE_NETWORK: &str = r#"{
  "nodes": [
    {"id": "S", "role": "slack", "p_min": 3.0e6, "p_max": 6.0e6, "p_slack": 5.0e6},
    {"id": "W", "role": "withdrawal", "p_min": 3.0e6, "p_max": 6.0e6, "gE_fixed": 5000.0}
  ],
  "pipes": [
    {"id": "P", "from": "S", "to": "W", "L": 30000.0, "D": 0.9144, "lambda": 0.01}
  ],
  "compressors": []
}"#;

const ORACLE_SCENARIO: &str = r#"{
  "horizon_h": 24.0,
  "dt_h": 1.0,
  "dl_m": 10000.0,
  "injection": {"S": 0.0},
  "prices": {"c_h2": 3.0, "c_ng": 0.13, "c_energy": 0.02, "zeta": 0.07},
  "xi": 0.5
}"#;

/// Pure natural gas through one 30 km pipe at a fixed 5000 MJ/s draw.
/// Isothermal steady flow with Darcy friction gives
/// `p_in^2 - p_out^2 = lambda L a^2 phi^2 / D`, independent of segmentation.
fn steady_oracle() -> Outcome {
    let net = parse_network(ORACLE_NETWORK).unwrap();
    let sc: Scenario = serde_json::from_str(ORACLE_SCENARIO).unwrap();
    let seg = segment_pipes(&net, sc.dl_m).unwrap();
    let (problem, result) = solve_steady(&seg, &sc, &SolverOptions::default()).unwrap();
    let traj = Trajectory::from_solution(&problem, &result.x).unwrap();

    // Frozen closed-form values: f = 5000 / 44.2 kg/s,
    // A = pi 0.9144^2 / 4, p_out = sqrt(5e6^2 - 0.01 * 30000 * 386.9^2 * (f/A)^2 / 0.9144).
    let flow = 113.122_171_945_701_35;
    let p_out = 4_852_080.516_396_885;
    let p_mid1 = 4_951_184.549_768_478; // after 10 km
    let p_mid2 = 4_901_882.994_496_317; // after 20 km

    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let mut worst = 0.0f64;
    for e in &traj.edges {
        for k in 0..traj.len() {
            worst = worst.max(rel(e.f0[k], flow)).max(rel(e.fl[k], flow));
        }
    }
    for (id, p) in [("W", p_out), ("P#1", p_mid1), ("P#2", p_mid2)] {
        worst = worst.max(rel(traj.node(id).unwrap().p[0], p));
    }
    let ok = result.status == SolveStatus::LocalOptimum && worst <= ORACLE_TOL;
    outcome(ok, format!("largest relative deviation {worst:.1e} in flow and pressure"))
}

/// Constant injection concentration: the transient optimum solved from the
/// cold guess must equal the steady solution copied to every step.
fn stationary_replicate() -> Outcome {
    let mut sc = Case::SinglePipe.scenario();
    sc.injection.insert("N1".into(), 0.1.into());
    let seg = segment_pipes(&Case::SinglePipe.network(), sc.dl_m).unwrap();
    let opts = SolverOptions::default();
    let (steady_problem, steady) = solve_steady(&seg, &sc, &opts).unwrap();
    let grid = build_time_grid(sc.horizon_h, sc.dt_h).unwrap();
    let problem = assemble_nlp(&seg, &sc, &grid).unwrap();
    let replicated = problem.replicate(&steady.x, &steady_problem.index);
    let cold = blendopt::solver::solve(&problem, &problem.initial_guess(), &opts);
    let a = Trajectory::from_solution(&problem, &replicated).unwrap();
    let b = Trajectory::from_solution(&problem, &cold.x).unwrap();
    let diff = a.max_relative_difference(&b, 1.0);
    let ok = steady.status == SolveStatus::LocalOptimum && cold.status == SolveStatus::LocalOptimum && diff <= REPLICATE_TOL;
    outcome(ok, format!("transient {} vs replicated steady: {diff:.1e}", cold.status))
}

fn eight_node(stages: &TwoStage, traj: &Trajectory, elapsed: Duration) -> Outcome {
    let c3 = &traj.edge("C3").unwrap().f0;
    let c3_dev = c3.iter().map(|f| (f - C3_CAP).abs() / C3_CAP).fold(0.0f64, f64::max);
    let c2 = traj.edge("C2").unwrap().f0.iter().cloned().fold(f64::MIN, f64::max);

    // Hand tally for the single pipe at 0.5 h: 48 steps; 5 nodes (3 given,
    // 2 interior), 3 segments, 1 compressor, 1 supply, 1 withdrawal.
    // Variables per step: 3*5 + 3*3 + 2*1 + 1 + 2*1 = 29 -> 1392.
    // Equalities per step: 3*3 + 1 + 3*5 + 1 slack + 1 energy = 27 -> 1296.
    // Pressure-bound rows per step: 4 non-slack nodes -> 192.
    let sc = Case::SinglePipe.scenario();
    let seg = segment_pipes(&Case::SinglePipe.network(), sc.dl_m).unwrap();
    let sp = assemble_nlp(&seg, &sc, &build_time_grid(sc.horizon_h, sc.dt_h).unwrap()).unwrap();
    let counts = (sp.index.len(), sp.equality_rows(), sp.inequality_rows());
    let tally = counts == (1392, 1296, 192);

    let ok = stages.transient.status == SolveStatus::LocalOptimum
        && c3_dev <= C3_REL
        && c2 <= C2_MAX
        && elapsed <= EIGHT_NODE_BUDGET
        && tally;
    outcome(
        ok,
        format!(
            "status {}, C3 off cap by {:.1e}, max C2 {:.3} kg/s, {:.2} s; single-pipe counts {:?}",
            stages.transient.status,
            c3_dev,
            c2,
            elapsed.as_secs_f64(),
            counts
        ),
    )
}

fn read_tree(dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            read_tree(&p, out);
        } else {
            out.push((p.to_string_lossy().into_owned(), fs::read(&p).unwrap()));
        }
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut trees = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_blendopt"))
            .args(["--case", "single-pipe", "--iter-log", "--export-nlp", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, format!("run {run} exited with {}", status.status));
        }
        let mut files = Vec::new();
        read_tree(&out, &mut files);
        let files: Vec<(String, Vec<u8>)> = files
            .into_iter()
            .map(|(p, b)| (p.replacen(&out.to_string_lossy().into_owned(), "", 1), b))
            .collect();
        trees.push(files);
    }
    let same = trees[0] == trees[1];
    outcome(same, format!("{} files compared", trees[0].len()))
}

fn main() {
    let (sp_stages, sp, sp_time) = solve(Case::SinglePipe);
    let (en_stages, en, en_time) = solve(Case::EightNode);

    let results = [
        ("single-pipe energy delivery", single_pipe_energy(&sp_stages, &sp, sp_time)),
        ("pressure bound activity", single_pipe_pressure(&sp)),
        ("two-cycle periodicity", single_pipe_periodicity(&sp)),
        ("advective lag", single_pipe_lag(&sp)),
        ("species conservation", conservation(&[("single-pipe", &sp), ("eight-node", &en)])),
        ("derivative correctness", derivatives()),
        ("steady closed-form oracle", steady_oracle()),
        ("stationary replicate", stationary_replicate()),
        ("eight-node structure", eight_node(&en_stages, &en, en_time)),
        ("determinism", determinism()),
    ];
    let mut failed = 0;
    for (k, (name, o)) in results.iter().enumerate() {
        println!("{} {:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, k + 1, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
