mod common;

use blendopt::cases::Case;
use blendopt::network::segment_pipes;
use blendopt::solver::{solve_steady, Nlp, SolverOptions};
use blendopt::transcription::{
    assemble_nlp, build_time_grid, equality_count, variable_count, Quantity, RowKind, TimeGrid,
};
use blendopt::validation::random_point;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{inputs, problem, row_violations};

#[test]
fn single_pipe_counts_match_hand_tally() {
    // 48 steps; nodes N1, N2, N3 plus two interior points of P1; three
    // segments; one compressor, one supply, one bounded withdrawal.
    let (seg, sc) = inputs(Case::SinglePipe);
    let p = problem(&seg, &sc);
    assert_eq!(p.index.len(), 48 * (3 * 5 + 3 * 3 + 2 + 1 + 2));
    assert_eq!(p.index.len(), 1392);
    assert_eq!(p.equality_rows(), 48 * (3 * 3 + 1 + 3 * 5 + 1 + 1));
    assert_eq!(p.equality_rows(), 1296);
    assert_eq!(p.inequality_rows(), 48 * 4);
    assert_eq!(variable_count(p.data.counts(), 48), p.index.len());
    assert_eq!(
        equality_count(p.data.counts(), p.data.slack_count(), p.data.fixed_count(), 48),
        p.equality_rows()
    );
}

#[test]
fn eight_node_counts_follow_the_formula() {
    let (seg, sc) = inputs(Case::EightNode);
    let p = problem(&seg, &sc);
    assert_eq!(seg.nodes.len(), 15);
    assert_eq!(seg.segments.len(), 13);
    assert_eq!(p.index.len(), variable_count(p.data.counts(), 24));
    assert_eq!(
        p.equality_rows(),
        equality_count(p.data.counts(), p.data.slack_count(), p.data.fixed_count(), 24)
    );
}

#[test]
fn rows_touch_only_their_step_and_its_successor() {
    for case in Case::ALL {
        let (seg, sc) = inputs(case);
        let p = problem(&seg, &sc);
        let (jr, jc) = p.jacobian_structure();
        let grid = &p.data.grid;
        for (&r, &c) in jr.iter().zip(jc) {
            let t = p.rows()[r].time;
            let (_, _, tc) = p.index.decode(c);
            assert!(tc == t || tc == grid.succ(t), "{} uses {}", p.row_name(r), p.variable_name(c));
        }
    }
}

#[test]
fn zero_flow_point_has_zero_objective() {
    let (seg, sc) = inputs(Case::SinglePipe);
    let p = problem(&seg, &sc);
    let mut x = p.initial_guess();
    for q in [
        Quantity::SupplyFlow,
        Quantity::WithdrawalFlow,
        Quantity::Energy,
        Quantity::FlowIn,
        Quantity::FlowOut,
        Quantity::CompressorFlow,
    ] {
        for i in p.index.range(q) {
            x[i] = 0.0;
        }
    }
    assert_eq!(p.objective(&x).unwrap(), 0.0);
}

#[test]
fn replicated_steady_point_is_feasible_without_injection_swing() {
    let (seg, mut sc) = inputs(Case::SinglePipe);
    sc.injection.insert("N1".into(), 0.1.into());
    let (sp, st) = solve_steady(&seg, &sc, &SolverOptions::default()).unwrap();
    let p = problem(&seg, &sc);
    let x = p.replicate(&st.x, &sp.index);
    let worst = row_violations(&p, &x).into_iter().fold(0.0, f64::max);
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn replicated_steady_point_misses_only_supply_balances() {
    // With a swinging injection the only rows left unsatisfied are the
    // species balances at the supply node, where the data changes.
    let (seg, sc) = inputs(Case::SinglePipe);
    let (sp, st) = solve_steady(&seg, &sc, &SolverOptions::default()).unwrap();
    let p = problem(&seg, &sc);
    let x = p.replicate(&st.x, &sp.index);
    let supply = p.data.supplies[0].node;
    let v = row_violations(&p, &x);
    let mut misses = 0;
    for (r, row) in p.rows().iter().enumerate() {
        if v[r] > 1e-10 {
            misses += 1;
            assert!(
                matches!(row.kind, RowKind::H2Balance | RowKind::NgBalance) && row.entity == supply,
                "{} = {}",
                p.row_name(r),
                v[r]
            );
        }
    }
    assert!(misses > 0);
}

#[test]
fn steady_grid_has_no_storage() {
    let (seg, sc) = inputs(Case::SinglePipe);
    let p = assemble_nlp(&seg, &sc, &TimeGrid::steady(sc.horizon_h)).unwrap();
    assert_eq!(p.index.n_time(), 1);
    assert_eq!(p.index.len(), 29);
}

fn ratio_free_objective(seed: u64) -> (f64, f64) {
    let (seg, mut sc) = inputs(Case::SinglePipe);
    sc.prices.zeta = 0.0;
    let p = problem(&seg, &sc);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = random_point(&p, &mut rng);
    let before = p.objective(&x).unwrap();
    for i in p.index.range(Quantity::Ratio) {
        x[i] = 1.0 + (x[i] - 1.0) * 0.3 + 0.5;
    }
    (before, p.objective(&x).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn objective_without_compression_price_ignores_ratios(seed in any::<u64>()) {
        let (a, b) = ratio_free_objective(seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn even_weight_objective_is_the_mean_of_both_parts(seed in any::<u64>()) {
        let (seg, sc) = inputs(Case::SinglePipe);
        let p = problem(&seg, &sc);
        let x = random_point(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let (re, rc) = p.objective_parts(&x).unwrap();
        let f = p.objective(&x).unwrap();
        prop_assert!((f - 0.5 * (re + rc)).abs() <= 1e-9 * f.abs().max(1.0));
    }

    #[test]
    fn momentum_rows_are_odd_in_flow(seed in any::<u64>()) {
        // Flipping every flow with the pressures fixed flips the friction
        // term, so the momentum residual minus the pressure difference changes sign.
        let (seg, sc) = inputs(Case::EightNode);
        let p = problem(&seg, &sc);
        let x = random_point(&p, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut y = x.clone();
        for q in [Quantity::FlowIn, Quantity::FlowOut] {
            for i in p.index.range(q) {
                y[i] = -y[i];
            }
        }
        let mut cx = vec![0.0; p.m()];
        let mut cy = vec![0.0; p.m()];
        p.constraints(&x, &mut cx).unwrap();
        p.constraints(&y, &mut cy).unwrap();
        for (r, row) in p.rows().iter().enumerate() {
            if row.kind != RowKind::Momentum {
                continue;
            }
            let s = &p.data.segnet.segments[row.entity];
            let (po, pi) = (p.pressure(&x, s.to, row.time), p.pressure(&x, s.from, row.time));
            let fx = cx[r] - (po - pi);
            let fy = cy[r] - (po - pi);
            prop_assert!((fx + fy).abs() <= 1e-12 * (fx.abs() + po.abs() + pi.abs()), "{} {} {}", p.row_name(r), fx, fy);
        }
    }

    #[test]
    fn counts_follow_the_formula_for_any_step(k in 1usize..8, dl in 4_000.0f64..40_000.0) {
        let mut sc = Case::SinglePipe.scenario();
        sc.dt_h = 24.0 / (6 * k) as f64;
        sc.dl_m = dl;
        let seg = segment_pipes(&Case::SinglePipe.network(), dl).unwrap();
        let grid = build_time_grid(sc.horizon_h, sc.dt_h).unwrap();
        let p = assemble_nlp(&seg, &sc, &grid).unwrap();
        prop_assert_eq!(p.index.len(), variable_count(p.data.counts(), grid.len()));
        prop_assert_eq!(
            p.equality_rows(),
            equality_count(p.data.counts(), p.data.slack_count(), p.data.fixed_count(), grid.len())
        );
    }
}
