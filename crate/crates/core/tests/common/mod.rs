#![allow(dead_code)]

use blendopt::cases::Case;
use blendopt::network::{segment_pipes, SegmentedNetwork};
use blendopt::scenario::Scenario;
use blendopt::solver::Nlp;
use blendopt::transcription::{assemble_nlp, build_time_grid, NlpProblem};

pub fn inputs(case: Case) -> (SegmentedNetwork, Scenario) {
    let sc = case.scenario();
    let seg = segment_pipes(&case.network(), sc.dl_m).unwrap();
    (seg, sc)
}

pub fn problem(seg: &SegmentedNetwork, sc: &Scenario) -> NlpProblem {
    assemble_nlp(seg, sc, &build_time_grid(sc.horizon_h, sc.dt_h).unwrap()).unwrap()
}

/// Largest distance of each row from its `[lower, upper]` interval.
pub fn row_violations(p: &NlpProblem, x: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; p.m()];
    p.constraints(x, &mut c).unwrap();
    let (lo, hi) = p.constraint_bounds();
    c.iter()
        .zip(lo.iter().zip(hi))
        .map(|(v, (l, u))| (l - v).max(v - u).max(0.0))
        .collect()
}
