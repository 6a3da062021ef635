mod common;

use blendopt::cases::Case;
use blendopt::solver::{solve_transient, SolverOptions};
use blendopt::trajectory::Trajectory;
use blendopt::transcription::build_time_grid;
use blendopt::validation::{
    audit, check_feasibility, conservation_audit, flow_direction_check, reversed_pipes, AuditCheck, AuditReport,
};

use common::inputs;

fn solved(case: Case) -> Trajectory {
    let (seg, sc) = inputs(case);
    let grid = build_time_grid(sc.horizon_h, sc.dt_h).unwrap();
    let st = solve_transient(&seg, &sc, &grid, &SolverOptions::default()).unwrap();
    Trajectory::from_solution(&st.problem, &st.transient.x).unwrap()
}

#[test]
fn solutions_pass_every_mandatory_check() {
    for case in Case::ALL {
        let (seg, sc) = inputs(case);
        let traj = solved(case);
        let report = audit(&traj, &seg, &sc, 1e-5, 1e-6).unwrap();
        assert!(report.passed, "{case}\n{}", report.to_text());
        assert!(conservation_audit(&traj).worst() <= 1e-6);
    }
}

#[test]
fn pressure_above_the_limit_is_flagged() {
    let (seg, sc) = inputs(Case::SinglePipe);
    let mut traj = solved(Case::SinglePipe);
    let n2 = traj.nodes.iter_mut().find(|n| n.id == "N2").unwrap();
    let k = 3;
    let s = 6.1e6 / n2.p[k];
    n2.rho_h2[k] *= s;
    n2.rho_ng[k] *= s;
    n2.p[k] = 6.1e6;
    let checks = check_feasibility(&traj, &seg, &sc, 1e-5).unwrap();
    let p = checks.iter().find(|c| c.name == "pressure_bounds").unwrap();
    assert!(!p.passed);
    // 0.1 MPa over the bound, in units of the 1 MPa pressure scale.
    assert!((p.value - 0.1).abs() < 1e-9, "{}", p.value);
    assert_eq!(p.detail, "N2@3");
}

#[test]
fn negative_mass_fraction_is_flagged() {
    let (seg, sc) = inputs(Case::SinglePipe);
    let mut traj = solved(Case::SinglePipe);
    traj.edges.iter_mut().find(|e| e.id == "P1/0").unwrap().gamma[0] = -0.01;
    let checks = check_feasibility(&traj, &seg, &sc, 1e-5).unwrap();
    assert!(!checks.iter().find(|c| c.name == "state_bounds").unwrap().passed);
}

#[test]
fn reversal_is_reported_as_an_advisory() {
    let (seg, sc) = inputs(Case::SinglePipe);
    let mut traj = solved(Case::SinglePipe);
    assert!(reversed_pipes(&traj, 0.0).is_empty());
    let e = traj.edges.iter_mut().find(|e| e.id == "P1/1").unwrap();
    e.f0[5] = -e.f0[5];
    assert_eq!(reversed_pipes(&traj, 0.0), vec!["P1/1".to_string()]);
    assert!(!flow_direction_check(&traj).passed);
    let report = audit(&traj, &seg, &sc, 1e-5, 1e-6).unwrap();
    assert!(report.advisories.iter().any(|a| a.name == "flow_direction" && !a.passed));
}

#[test]
fn verdict_ignores_advisories() {
    let ok = AuditCheck::new("a", 0.0, 1.0);
    let bad = AuditCheck::new("b", 2.0, 1.0);
    assert!(AuditReport::new(vec![ok.clone()], vec![bad.clone()]).passed);
    assert!(!AuditReport::new(vec![ok, bad], vec![]).passed);
}
