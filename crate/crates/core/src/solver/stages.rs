//! Steady solve followed by the warm-started periodic solve.

use serde::Serialize;

use super::{solve, SolveResult, SolveStatus, SolverOptions};
use crate::network::SegmentedNetwork;
use crate::scenario::Scenario;
use crate::transcription::{assemble_nlp, NlpProblem, TimeGrid, TranscriptionError};

#[derive(Debug, Clone)]
pub struct TwoStage {
    pub steady_problem: NlpProblem,
    pub steady: SolveResult,
    pub problem: NlpProblem,
    pub transient: SolveResult,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageSummary {
    pub steady_status: SolveStatus,
    pub steady_iterations: usize,
    pub transient_status: SolveStatus,
    pub transient_iterations: usize,
}

impl TwoStage {
    pub fn summary(&self) -> StageSummary {
        StageSummary {
            steady_status: self.steady.status,
            steady_iterations: self.steady.iterations,
            transient_status: self.transient.status,
            transient_iterations: self.transient.iterations,
        }
    }
}

/// Solves the single-step problem with profiles frozen at t = 0.
pub fn solve_steady(
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    opts: &SolverOptions,
) -> Result<(NlpProblem, SolveResult), TranscriptionError> {
    let grid = TimeGrid::steady(scenario.horizon_h);
    let problem = assemble_nlp(segnet, scenario, &grid)?;
    let x0 = problem.initial_guess();
    let result = solve(&problem, &x0, opts);
    Ok((problem, result))
}

/// Steady stage, then the periodic problem on `grid` started from the
/// steady point replicated in time. A failed steady stage falls back to the
/// physics-based guess.
pub fn solve_transient(
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    grid: &TimeGrid,
    opts: &SolverOptions,
) -> Result<TwoStage, TranscriptionError> {
    let (steady_problem, steady) = solve_steady(segnet, scenario, opts)?;
    let problem = assemble_nlp(segnet, scenario, grid)?;
    let x0 = if steady.status == SolveStatus::LocalOptimum {
        problem.replicate(&steady.x, &steady_problem.index)
    } else {
        log::warn!("steady stage ended with {}; starting from the default guess", steady.status);
        problem.initial_guess()
    };
    let transient = solve(&problem, &x0, opts);
    Ok(TwoStage {
        steady_problem,
        steady,
        problem,
        transient,
    })
}
