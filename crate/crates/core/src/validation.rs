//! Post-solve audits of a trajectory: feasibility with the exact friction
//! law, species conservation over the cycle, periodicity, flow direction and
//! finite-difference derivative checks.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::network::SegmentedNetwork;
use crate::scenario::Scenario;
use crate::solver::Nlp;
use crate::trajectory::{EdgeKind, Trajectory, TrajectoryError};
use crate::transcription::{assemble_nlp, build_time_grid, NlpProblem, Quantity as Q, RowKind, TranscriptionError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ValidationError {
    #[error(transparent)]
    Transcription(#[from] TranscriptionError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("node `{0}` not found in the trajectory")]
    UnknownNode(String),
    #[error("series at `{0}` is constant, so the lag is undefined")]
    ConstantSeries(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditCheck {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl AuditCheck {
    pub fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            passed: value <= tolerance,
            value,
            tolerance,
            detail: String::new(),
        }
    }

    fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

/// Mandatory checks decide the verdict; advisories are reported only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub passed: bool,
    pub checks: Vec<AuditCheck>,
    pub advisories: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn new(checks: Vec<AuditCheck>, advisories: Vec<AuditCheck>) -> Self {
        Self {
            passed: checks.iter().all(|c| c.passed),
            checks,
            advisories,
        }
    }

    pub fn check(&self, name: &str) -> Option<&AuditCheck> {
        self.checks.iter().chain(&self.advisories).find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, tag: &str, c: &AuditCheck| {
            let _ = write!(s, "{tag:<5} {:<22} value={:.3e} tol={:.1e}", c.name, c.value, c.tolerance);
            if !c.detail.is_empty() {
                let _ = write!(s, "  {}", c.detail);
            }
            s.push('\n');
        };
        for c in &self.checks {
            line(&mut s, if c.passed { "PASS" } else { "FAIL" }, c);
        }
        for c in &self.advisories {
            line(&mut s, if c.passed { "ok" } else { "WARN" }, c);
        }
        let _ = writeln!(s, "verdict: {}", if self.passed { "pass" } else { "fail" });
        s
    }
}

/// The problem a trajectory belongs to, with exact `|phi|` in the friction law.
pub fn exact_problem(
    traj: &Trajectory,
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
) -> Result<NlpProblem, ValidationError> {
    let grid = build_time_grid(traj.horizon_h(), traj.dt_h)?;
    Ok(assemble_nlp(segnet, scenario, &grid)?.with_flow_smoothing(0.0))
}

/// Re-evaluates all residuals and bounds in dimensionless form.
pub fn check_feasibility(
    traj: &Trajectory,
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    tol: f64,
) -> Result<Vec<AuditCheck>, ValidationError> {
    let problem = exact_problem(traj, segnet, scenario)?;
    let x = traj.to_point(&problem)?;
    let mut c = vec![0.0; problem.m()];
    let mut checks = Vec::new();
    if let Err(e) = problem.constraints(&x, &mut c) {
        checks.push(AuditCheck::new("residuals", f64::INFINITY, tol).with_detail(e.to_string()));
        return Ok(checks);
    }
    let mut worst = (0.0f64, String::new());
    for (r, row) in problem.rows().iter().enumerate() {
        if row.kind == RowKind::PressureBound {
            continue;
        }
        let v = (c[r] - row.lower).max(row.lower - c[r]).max(c[r] - row.upper).max(0.0);
        if v > worst.0 {
            worst = (v, problem.row_name(r));
        }
    }
    checks.push(AuditCheck::new("residuals", worst.0, tol).with_detail(worst.1));

    let p0 = problem.data.scales.p0;
    let mut worst = (0.0f64, String::new());
    for (j, node) in problem.data.segnet.nodes.iter().enumerate() {
        for t in 0..problem.index.n_time() {
            let p = problem.pressure(&x, j, t);
            let v = (node.p_min / p0 - p).max(p - node.p_max / p0);
            if v > worst.0 {
                worst = (v, format!("{}@{}", node.id, t));
            }
        }
    }
    checks.push(AuditCheck::new("pressure_bounds", worst.0, tol).with_detail(worst.1));

    let (xl, xu) = problem.variable_bounds();
    let groups: [(&str, &[Q]); 4] = [
        ("state_bounds", &[Q::RhoH2, Q::RhoNg, Q::Eta, Q::GammaOut]),
        ("compressor_bounds", &[Q::Ratio, Q::CompressorFlow]),
        ("energy_bounds", &[Q::Energy, Q::WithdrawalFlow]),
        ("supply_bounds", &[Q::SupplyFlow]),
    ];
    for (name, qs) in groups {
        let mut worst = (0.0f64, String::new());
        for &q in qs {
            for i in problem.index.range(q) {
                let v = (xl[i] - x[i]).max(x[i] - xu[i]);
                if v > worst.0 {
                    worst = (v, problem.variable_name(i));
                }
            }
        }
        checks.push(AuditCheck::new(name, worst.0, tol).with_detail(worst.1));
    }
    Ok(checks)
}

/// Cyclic mass balance of one species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeciesBalance {
    /// Mass supplied and withdrawn over the horizon (kg).
    pub supplied: f64,
    pub withdrawn: f64,
    /// `|supplied - withdrawn|` over total supplied mass of both species.
    pub relative_imbalance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConservationReport {
    pub h2: SpeciesBalance,
    pub ng: SpeciesBalance,
    /// Total supplied mass (kg).
    pub throughput: f64,
}

impl ConservationReport {
    pub fn worst(&self) -> f64 {
        self.h2.relative_imbalance.max(self.ng.relative_imbalance)
    }
}

/// Species injected minus species withdrawn over the horizon. Storage
/// terms cancel around the cycle, so a solution leaves no net imbalance.
pub fn conservation_audit(traj: &Trajectory) -> ConservationReport {
    let dt = traj.dt_h * 3600.0;
    let eta_of: std::collections::HashMap<&str, &[f64]> =
        traj.nodes.iter().map(|n| (n.id.as_str(), n.eta.as_slice())).collect();
    let (mut sh, mut sn, mut wh, mut wn) = (0.0, 0.0, 0.0, 0.0);
    for tr in &traj.transfers {
        let eta = eta_of.get(tr.node.as_str()).copied().unwrap_or(&[]);
        for t in 0..traj.len() {
            sh += tr.eta_s[t] * tr.q_s[t] * dt;
            sn += (1.0 - tr.eta_s[t]) * tr.q_s[t] * dt;
            let e = eta.get(t).copied().unwrap_or(0.0);
            wh += e * tr.q_w[t] * dt;
            wn += (1.0 - e) * tr.q_w[t] * dt;
        }
    }
    let throughput = sh + sn;
    let rel = |a: f64, b: f64| if throughput > 0.0 { (a - b).abs() / throughput } else { (a - b).abs() };
    ConservationReport {
        h2: SpeciesBalance {
            supplied: sh,
            withdrawn: wh,
            relative_imbalance: rel(sh, wh),
        },
        ng: SpeciesBalance {
            supplied: sn,
            withdrawn: wn,
            relative_imbalance: rel(sn, wn),
        },
        throughput,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Lag {
    pub steps: i64,
    pub hours: f64,
    /// Normalized correlation at the chosen shift.
    pub correlation: f64,
}

/// Shift that best aligns the downstream concentration with the upstream
/// one under circular cross-correlation of mean-removed series. Positive
/// means downstream lags.
pub fn lag_analysis(traj: &Trajectory, upstream: &str, downstream: &str) -> Result<Lag, ValidationError> {
    let a = &traj.node(upstream).ok_or_else(|| ValidationError::UnknownNode(upstream.into()))?.eta;
    let b = &traj
        .node(downstream)
        .ok_or_else(|| ValidationError::UnknownNode(downstream.into()))?
        .eta;
    let (k, corr) = circular_lag(a, b).map_err(|which| {
        ValidationError::ConstantSeries(if which == 0 { upstream.into() } else { downstream.into() })
    })?;
    Ok(Lag {
        steps: k,
        hours: k as f64 * traj.dt_h,
        correlation: corr,
    })
}

/// Lag of `b` behind `a` in steps, in `(-n/2, n/2]`. The error names the
/// constant series (0 for `a`, 1 for `b`).
pub fn circular_lag(a: &[f64], b: &[f64]) -> Result<(i64, f64), usize> {
    let n = a.len().min(b.len());
    let centered = |s: &[f64]| {
        let mean = s[..n].iter().sum::<f64>() / n as f64;
        s[..n].iter().map(|v| v - mean).collect::<Vec<_>>()
    };
    let (ca, cb) = (centered(a), centered(b));
    let norm = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (na, nb) = (norm(&ca), norm(&cb));
    let scale_a = a[..n].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let scale_b = b[..n].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if na <= 1e-12 * scale_a * (n as f64).sqrt() {
        return Err(0);
    }
    if nb <= 1e-12 * scale_b * (n as f64).sqrt() {
        return Err(1);
    }
    let mut best = (0i64, f64::NEG_INFINITY);
    for k in 0..n {
        let c: f64 = (0..n).map(|t| ca[t] * cb[(t + k) % n]).sum::<f64>() / (na * nb);
        // Ties go to the smaller shift.
        if c > best.1 + 1e-12 {
            let signed = if k > n / 2 { k as i64 - n as i64 } else { k as i64 };
            best = (signed, c);
        }
    }
    Ok(best)
}

/// Largest deviation between each series and its copy shifted by `shift`
/// steps, relative to the series' largest magnitude.
pub fn periodicity_error(traj: &Trajectory, shift: usize) -> (f64, String) {
    let n = traj.len();
    let mut worst = (0.0f64, String::new());
    let mut cmp = |name: String, s: &[f64]| {
        let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return;
        }
        for t in 0..n {
            let d = (s[t] - s[(t + shift) % n]).abs() / scale;
            if d > worst.0 {
                worst = (d, name.clone());
            }
        }
    };
    for node in &traj.nodes {
        cmp(format!("{}.rho_H2", node.id), &node.rho_h2);
        cmp(format!("{}.rho_NG", node.id), &node.rho_ng);
        cmp(format!("{}.eta", node.id), &node.eta);
        cmp(format!("{}.p", node.id), &node.p);
    }
    for e in &traj.edges {
        cmp(format!("{}.f0", e.id), &e.f0);
        cmp(format!("{}.fL", e.id), &e.fl);
        cmp(format!("{}.alpha", e.id), &e.alpha);
    }
    for tr in &traj.transfers {
        cmp(format!("{}.q_s", tr.node), &tr.q_s);
        cmp(format!("{}.q_w", tr.node), &tr.q_w);
        cmp(format!("{}.g_E", tr.node), &tr.g_e);
    }
    worst
}

/// Block periodicity for data with `nu` cycles over the horizon.
pub fn periodicity_check(traj: &Trajectory, nu: usize, tol: f64) -> AuditCheck {
    if nu <= 1 || !traj.len().is_multiple_of(nu) {
        return AuditCheck::new("periodicity", 0.0, tol).with_detail("no sub-period");
    }
    let (v, what) = periodicity_error(traj, traj.len() / nu);
    AuditCheck::new("periodicity", v, tol).with_detail(what)
}

/// Pipe segments whose flow changes sign over the horizon; the outlet
/// concentration closure assumes a fixed direction.
pub fn reversed_pipes(traj: &Trajectory, threshold: f64) -> Vec<String> {
    traj.edges
        .iter()
        .filter(|e| e.kind == EdgeKind::Pipe)
        .filter(|e| {
            let all = e.f0.iter().chain(&e.fl);
            let pos = all.clone().any(|&f| f > threshold);
            let neg = all.clone().any(|&f| f < -threshold);
            pos && neg
        })
        .map(|e| e.id.clone())
        .collect()
}

pub fn flow_direction_check(traj: &Trajectory) -> AuditCheck {
    let rev = reversed_pipes(traj, 1e-6);
    let mut c = AuditCheck::new("flow_direction", rev.len() as f64, 0.0);
    if !rev.is_empty() {
        c.detail = format!("mixing closure unverified on {}", rev.join(", "));
    }
    c
}

/// Mandatory feasibility and conservation checks plus advisories.
pub fn audit(
    traj: &Trajectory,
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    feasibility_tol: f64,
    conservation_tol: f64,
) -> Result<AuditReport, ValidationError> {
    let mut checks = check_feasibility(traj, segnet, scenario, feasibility_tol)?;
    let cons = conservation_audit(traj);
    checks.push(AuditCheck::new("conservation_h2", cons.h2.relative_imbalance, conservation_tol));
    checks.push(AuditCheck::new("conservation_ng", cons.ng.relative_imbalance, conservation_tol));
    let mut advisories = vec![flow_direction_check(traj)];
    if let Some(nu) = common_cycles(scenario) {
        advisories.push(periodicity_check(traj, nu, 1e-4));
    }
    Ok(AuditReport::new(checks, advisories))
}

/// Number of identical cycles of the time-varying data over the horizon, if
/// every profile is a sinusoid or constant sharing an integer cycle count.
pub fn common_cycles(scenario: &Scenario) -> Option<usize> {
    use crate::scenario::{Profile, ProfileSpec};
    let period = scenario.period();
    let mut cycles: Option<usize> = None;
    let mut profiles: Vec<&Profile> = scenario.injection.values().collect();
    profiles.extend([&scenario.prices.c_h2, &scenario.prices.c_ng, &scenario.prices.c_energy]);
    for p in profiles {
        match p {
            Profile::Value(_) | Profile::Spec(ProfileSpec::Constant { .. }) => {}
            Profile::Spec(ProfileSpec::Sinusoid { nu, .. }) => {
                let c = nu * scenario.horizon_h / period;
                if (c - c.round()).abs() > 1e-9 || c.round() < 1.0 {
                    return None;
                }
                let c = c.round() as usize;
                cycles = Some(match cycles {
                    None => c,
                    Some(prev) => gcd(prev, c),
                });
            }
            Profile::Spec(ProfileSpec::Series { .. }) => return None,
        }
    }
    cycles
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeReport {
    pub points: usize,
    /// Largest `|fd - exact| / max(1, |exact|)` over Jacobian entries.
    pub jacobian_error: f64,
    pub worst_entry: String,
    /// Same measure over objective gradient entries.
    pub gradient_error: f64,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.jacobian_error.max(self.gradient_error)
    }
}

/// Random interior point near the physics-based guess, with every flow kept
/// away from zero so the friction kink is not sampled.
pub fn random_point(problem: &NlpProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (xl, xu) = problem.variable_bounds();
    let mut x = problem.initial_guess();
    for i in 0..x.len() {
        let (q, _, _) = problem.index.decode(i);
        let u: f64 = rng.random::<f64>() * 2.0 - 1.0;
        let mut v = x[i] * (1.0 + 0.1 * u);
        if matches!(q, Q::FlowIn | Q::FlowOut | Q::CompressorFlow | Q::SupplyFlow | Q::WithdrawalFlow) && v.abs() < 0.5 {
            v = 0.5 + rng.random::<f64>();
        }
        if matches!(q, Q::Eta | Q::GammaOut) {
            v = v.clamp(0.01, 0.99);
        }
        if xl[i].is_finite() && xu[i].is_finite() {
            let w = xu[i] - xl[i];
            v = v.clamp(xl[i] + 0.01 * w, xu[i] - 0.01 * w);
        } else if xl[i].is_finite() {
            v = v.max(xl[i] + 0.01);
        }
        x[i] = v;
    }
    x
}

/// Compares analytic first derivatives with central differences of step
/// `step` at `n_points` random points (seeded, so repeatable).
pub fn derivative_check(problem: &NlpProblem, n_points: usize, step: f64, seed: u64) -> DerivativeReport {
    let n = problem.n();
    let (jr, jc) = problem.jacobian_structure();
    let mut by_col: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &c) in jc.iter().enumerate() {
        by_col[c].push(k);
    }
    let row_value = |r: usize, x: &[f64]| -> f64 {
        problem
            .row_terms(r)
            .iter()
            .map(|t| t.value(x).unwrap_or(f64::NAN))
            .sum()
    };
    let mut obj_by_col: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut vars = [0usize; crate::transcription::terms::MAX_VARS];
    for (k, t) in problem.objective_terms().iter().enumerate() {
        let cnt = t.vars(&mut vars);
        for &v in &vars[..cnt] {
            obj_by_col[v].push(k);
        }
    }
    // Only the terms touching a variable are differenced, which keeps the
    // cancellation error proportional to those terms.
    let obj_value = |j: usize, x: &[f64]| -> f64 {
        obj_by_col[j]
            .iter()
            .map(|&k| problem.objective_terms()[k].value(x).unwrap_or(f64::NAN))
            .sum()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = DerivativeReport {
        points: n_points,
        jacobian_error: 0.0,
        worst_entry: String::new(),
        gradient_error: 0.0,
    };
    let mut vals = vec![0.0; jr.len()];
    let mut grad = vec![0.0; n];
    for _ in 0..n_points {
        let mut x = random_point(problem, &mut rng);
        if problem.jacobian_values(&x, &mut vals).is_err() || problem.gradient(&x, &mut grad).is_err() {
            report.jacobian_error = f64::INFINITY;
            continue;
        }
        for j in 0..n {
            let x0 = x[j];
            x[j] = x0 + step;
            let plus: Vec<f64> = by_col[j].iter().map(|&k| row_value(jr[k], &x)).collect();
            let fp = obj_value(j, &x);
            x[j] = x0 - step;
            let minus: Vec<f64> = by_col[j].iter().map(|&k| row_value(jr[k], &x)).collect();
            let fm = obj_value(j, &x);
            x[j] = x0;
            for (p, &k) in by_col[j].iter().enumerate() {
                let fd = (plus[p] - minus[p]) / (2.0 * step);
                let err = (fd - vals[k]).abs() / vals[k].abs().max(1.0);
                if !(err <= report.jacobian_error) {
                    report.jacobian_error = err;
                    report.worst_entry = format!("{} / {}", problem.row_name(jr[k]), problem.variable_name(j));
                }
            }
            let fd = (fp - fm) / (2.0 * step);
            let err = (fd - grad[j]).abs() / grad[j].abs().max(1.0);
            if !(err <= report.gradient_error) {
                report.gradient_error = err;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::Case;
    use crate::network::segment_pipes;

    fn small_case() -> (SegmentedNetwork, Scenario, NlpProblem) {
        let mut sc = Case::SinglePipe.scenario();
        sc.dt_h = 4.0;
        let seg = segment_pipes(&Case::SinglePipe.network(), sc.dl_m).unwrap();
        let grid = build_time_grid(sc.horizon_h, sc.dt_h).unwrap();
        let p = assemble_nlp(&seg, &sc, &grid).unwrap();
        (seg, sc, p)
    }

    #[test]
    fn lag_of_identical_and_shifted_series() {
        let a: Vec<f64> = (0..48)
            .map(|k| (k as f64 * std::f64::consts::TAU / 48.0).sin() + 0.3 * (k as f64 * 0.9).cos())
            .collect();
        assert_eq!(circular_lag(&a, &a).unwrap().0, 0);
        let b: Vec<f64> = (0..48).map(|k| a[(k + 46) % 48]).collect();
        assert_eq!(circular_lag(&a, &b).unwrap().0, 2);
        assert_eq!(circular_lag(&b, &a).unwrap().0, -2);
        assert_eq!(circular_lag(&[1.0; 8], &a[..8]), Err(0));
    }

    #[test]
    fn cycles_of_bundled_scenarios() {
        assert_eq!(common_cycles(&Case::SinglePipe.scenario()), Some(2));
        assert_eq!(common_cycles(&Case::EightNode.scenario()), Some(1));
    }

    #[test]
    fn derivatives_of_small_problem() {
        let (_, _, p) = small_case();
        let r = derivative_check(&p, 2, 1e-6, 7);
        assert!(r.max_error() <= 1e-6, "{r:?}");
    }

    #[test]
    fn report_text_and_verdict() {
        let ok = AuditCheck::new("residuals", 1e-9, 1e-6);
        let bad = AuditCheck::new("pressure_bounds", 0.1, 1e-6);
        let r = AuditReport::new(vec![ok.clone()], vec![bad.clone()]);
        assert!(r.passed);
        assert!(r.to_text().contains("WARN"));
        let r = AuditReport::new(vec![ok, bad], vec![]);
        assert!(!r.passed);
        assert!(r.to_text().contains("FAIL  pressure_bounds"));
        assert!(r.to_json().contains("\"passed\": false"));
    }

    #[test]
    fn truncated_cycle_shows_accumulation() {
        let (_, _, p) = small_case();
        let x = p.initial_guess();
        let mut tr = Trajectory::from_solution(&p, &x).unwrap();
        // Make supply exceed withdrawal in the first half only.
        for t in 0..3 {
            tr.transfers[0].q_s[t] *= 1.5;
        }
        assert!(conservation_audit(&tr).worst() > 1e-3);
    }
}
