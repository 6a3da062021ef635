//! Command-line run: parse, validate, segment, assemble, solve, audit and
//! write artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::cases::Case;
use crate::network::{parse_network, segment_pipes, validate_topology, SegmentedNetwork};
use crate::output::{self, OutputError};
use crate::scenario::Scenario;
use crate::solver::{solve_steady, solve_transient, SolveResult, SolveStatus, SolverOptions};
use crate::trajectory::{Trajectory, TrajectoryError};
use crate::transcription::{assemble_nlp, build_time_grid, export_nlp, NlpProblem, TimeGrid, TranscriptionError};
use crate::validation::{audit, AuditReport, ValidationError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_ITERATION_LIMIT: i32 = 4;
pub const EXIT_AUDIT: i32 = 5;

/// Relative tolerance of the species balance audit.
pub const CONSERVATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Steady,
    Transient,
    ValidateOnly,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "steady" => Ok(Mode::Steady),
            "transient" => Ok(Mode::Transient),
            "validate-only" | "validate" => Ok(Mode::ValidateOnly),
            other => Err(format!("unknown mode `{other}` (steady, transient, validate-only)")),
        }
    }
}

/// Where the network and scenario come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    Files { network: PathBuf, scenario: PathBuf },
    Bundled(Case),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Inputs,
    pub out: PathBuf,
    pub dt_h: Option<f64>,
    pub dl_m: Option<f64>,
    pub xi: Option<f64>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub mode: Mode,
    pub iter_log: bool,
    pub export_nlp: bool,
    pub verbose: bool,
}

impl RunConfig {
    pub fn new(inputs: Inputs, out: impl Into<PathBuf>) -> Self {
        Self {
            inputs,
            out: out.into(),
            dt_h: None,
            dl_m: None,
            xi: None,
            tol: None,
            max_iter: None,
            mode: Mode::Transient,
            iter_log: false,
            export_nlp: false,
            verbose: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Output(#[from] OutputError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            _ => EXIT_ERROR,
        }
    }
}

impl From<TranscriptionError> for CliError {
    fn from(e: TranscriptionError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub status: SolveStatus,
    pub message: String,
    pub iterations: usize,
    pub objective: f64,
    pub violation: f64,
    pub kkt_error: f64,
}

impl From<&SolveResult> for StageReport {
    fn from(r: &SolveResult) -> Self {
        Self {
            status: r.status,
            message: r.message.clone(),
            iterations: r.iterations,
            objective: r.objective,
            violation: r.violation,
            kkt_error: r.kkt_error,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSize {
    pub time_steps: usize,
    pub nodes: usize,
    pub segments: usize,
    pub compressors: usize,
    pub variables: usize,
    pub equality_constraints: usize,
    pub inequality_constraints: usize,
}

impl ProblemSize {
    fn of(p: &NlpProblem) -> Self {
        Self {
            time_steps: p.index.n_time(),
            nodes: p.data.segnet.nodes.len(),
            segments: p.data.segnet.segments.len(),
            compressors: p.data.segnet.compressors.len(),
            variables: p.index.len(),
            equality_constraints: p.equality_rows(),
            inequality_constraints: p.inequality_rows(),
        }
    }
}

/// Contents of `summary.json`. Wall time is left out so that repeated runs
/// produce identical files.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub exit_code: i32,
    pub size: ProblemSize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steady: Option<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient: Option<StageReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub objective: Option<crate::trajectory::ObjectiveBreakdown>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub audit_passed: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub summary: Summary,
    pub trajectory: Option<Trajectory>,
    pub audit: Option<AuditReport>,
}

fn read(path: &Path, what: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))
}

/// Loads and checks the inputs with overrides applied.
pub fn load(config: &RunConfig) -> Result<(SegmentedNetwork, Scenario), CliError> {
    let (net_text, sc_text) = match &config.inputs {
        Inputs::Files { network, scenario } => (read(network, "network")?, read(scenario, "scenario")?),
        Inputs::Bundled(case) => (case.network_json().to_string(), case.scenario_json().to_string()),
    };
    let network = parse_network(&net_text).map_err(|e| CliError::Input(format!("network: {e}")))?;
    let diags = validate_topology(&network);
    if !diags.is_empty() {
        let list: Vec<String> = diags.iter().map(|d| format!("{:?}: {}", d.kind, d.message)).collect();
        return Err(CliError::Input(format!("network: {}", list.join("; "))));
    }
    let mut scenario: Scenario =
        serde_json::from_str(&sc_text).map_err(|e| CliError::Input(format!("scenario: {e}")))?;
    if let Some(dt) = config.dt_h {
        scenario.dt_h = dt;
    }
    if let Some(dl) = config.dl_m {
        scenario.dl_m = dl;
    }
    if let Some(xi) = config.xi {
        scenario.xi = xi;
    }
    scenario.validate().map_err(|e| CliError::Input(format!("scenario: {e}")))?;
    if let Some(tol) = config.tol {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Input(format!("tolerance must be positive (got {tol})")));
        }
    }
    let segnet = segment_pipes(&network, scenario.dl_m).map_err(|e| CliError::Input(format!("network: {e}")))?;
    Ok((segnet, scenario))
}

fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::LocalOptimum => EXIT_OK,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
        SolveStatus::IterationLimit => EXIT_ITERATION_LIMIT,
        SolveStatus::Error => EXIT_ERROR,
    }
}

fn write_audit(dir: &Path, report: &AuditReport) -> Result<(), CliError> {
    output::write_text(&dir.join("audit.json"), &(report.to_json() + "\n"))?;
    output::write_text(&dir.join("audit.txt"), &report.to_text())?;
    Ok(())
}

/// Executes a run and writes its artifacts into `config.out`.
pub fn run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let (segnet, scenario) = load(config)?;
    let opts = SolverOptions {
        kkt_tol: config.tol.unwrap_or(SolverOptions::default().kkt_tol),
        max_iter: config.max_iter.unwrap_or(SolverOptions::default().max_iter),
        verbose: config.verbose,
        ..SolverOptions::default()
    };
    opts.validate().map_err(CliError::Input)?;
    let out = &config.out;
    fs::create_dir_all(out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    let feas_tol = 10.0 * opts.kkt_tol;

    match config.mode {
        Mode::ValidateOnly => {
            let grid = build_time_grid(scenario.horizon_h, scenario.dt_h)?;
            let problem = assemble_nlp(&segnet, &scenario, &grid)?;
            let mut summary = Summary {
                mode: config.mode,
                exit_code: EXIT_OK,
                size: ProblemSize::of(&problem),
                steady: None,
                transient: None,
                objective: None,
                audit_passed: None,
            };
            let mut trajectory = None;
            let mut report = None;
            // An existing solution in the output directory is audited.
            if out.join("nodes.csv").exists() {
                let traj = output::read_solution(out, grid.dt_h())?;
                let r = audit(&traj, &segnet, &scenario, feas_tol, CONSERVATION_TOL)?;
                write_audit(out, &r)?;
                summary.audit_passed = Some(r.passed);
                summary.objective = Some(traj.objective);
                if !r.passed {
                    summary.exit_code = EXIT_AUDIT;
                }
                trajectory = Some(traj);
                report = Some(r);
            }
            if config.export_nlp {
                let x = match &trajectory {
                    Some(t) => t.to_point(&problem)?,
                    None => problem.initial_guess(),
                };
                export(&problem, &x, out)?;
            }
            output::write_json(&out.join("summary.json"), &summary)?;
            Ok(RunOutcome {
                exit_code: summary.exit_code,
                summary,
                trajectory,
                audit: report,
            })
        }
        Mode::Steady => {
            let (problem, result) = solve_steady(&segnet, &scenario, &opts)?;
            let mut summary = Summary {
                mode: config.mode,
                exit_code: status_code(result.status),
                size: ProblemSize::of(&problem),
                steady: Some(StageReport::from(&result)),
                transient: None,
                objective: None,
                audit_passed: None,
            };
            if config.iter_log {
                output::write_iteration_log(&out.join("iterations.csv"), &[("steady", &result.log)])?;
            }
            finish(config, &segnet, &scenario, &problem, &result, feas_tol, summary.clone()).map(|mut o| {
                summary.exit_code = o.exit_code;
                o.summary.steady = summary.steady;
                o
            })
        }
        Mode::Transient => {
            let grid: TimeGrid = build_time_grid(scenario.horizon_h, scenario.dt_h)?;
            let stages = solve_transient(&segnet, &scenario, &grid, &opts)?;
            if config.iter_log {
                output::write_iteration_log(
                    &out.join("iterations.csv"),
                    &[("steady", &stages.steady.log), ("transient", &stages.transient.log)],
                )?;
            }
            let summary = Summary {
                mode: config.mode,
                exit_code: status_code(stages.transient.status),
                size: ProblemSize::of(&stages.problem),
                steady: Some(StageReport::from(&stages.steady)),
                transient: Some(StageReport::from(&stages.transient)),
                objective: None,
                audit_passed: None,
            };
            finish(config, &segnet, &scenario, &stages.problem, &stages.transient, feas_tol, summary)
        }
    }
}

fn export(problem: &NlpProblem, x: &[f64], out: &Path) -> Result<(), CliError> {
    let dir = out.join("nlp");
    export_nlp(problem, x, &dir).map_err(|source| {
        CliError::Output(OutputError::Io {
            path: dir.clone(),
            source,
        })
    })
}

fn finish(
    config: &RunConfig,
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    problem: &NlpProblem,
    result: &SolveResult,
    feas_tol: f64,
    mut summary: Summary,
) -> Result<RunOutcome, CliError> {
    let out = &config.out;
    if config.export_nlp {
        export(problem, &result.x, out)?;
    }
    let traj = Trajectory::from_solution(problem, &result.x)?;
    output::write_solution(&traj, out)?;
    summary.objective = Some(traj.objective);
    let report = audit(&traj, segnet, scenario, feas_tol, CONSERVATION_TOL)?;
    write_audit(out, &report)?;
    summary.audit_passed = Some(report.passed);
    if summary.exit_code == EXIT_OK && !report.passed {
        summary.exit_code = EXIT_AUDIT;
    }
    output::write_json(&out.join("summary.json"), &summary)?;
    Ok(RunOutcome {
        exit_code: summary.exit_code,
        summary,
        trajectory: Some(traj),
        audit: Some(report),
    })
}
