//! Assembly of the dimensionless nonlinear program.

use std::collections::{HashMap, VecDeque};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::index::{EntityCounts, Quantity as Q, VariableIndex};
use super::residuals::SegmentCoefficients;
use super::terms::{LocalGrad, LocalHess, Term, MAX_VARS};
use super::{TimeGrid, TranscriptionError};
use crate::network::{EnergyDemand, Role, SegmentedNetwork};
use crate::physics::{nondim_scales, pipe_beta, GasConstants, NondimScales};
use crate::scenario::Scenario;
use crate::solver::{EvalError, Nlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum RowKind {
    H2Continuity,
    NgContinuity,
    Momentum,
    Boost,
    H2Balance,
    NgBalance,
    MassFraction,
    SlackPressure,
    Energy,
    FixedEnergy,
    PressureBound,
}

impl RowKind {
    pub fn name(self) -> &'static str {
        match self {
            RowKind::H2Continuity => "h2_continuity",
            RowKind::NgContinuity => "ng_continuity",
            RowKind::Momentum => "momentum",
            RowKind::Boost => "boost",
            RowKind::H2Balance => "h2_balance",
            RowKind::NgBalance => "ng_balance",
            RowKind::MassFraction => "mass_fraction",
            RowKind::SlackPressure => "slack_pressure",
            RowKind::Energy => "energy",
            RowKind::FixedEnergy => "fixed_energy",
            RowKind::PressureBound => "pressure_bound",
        }
    }

    pub fn is_equality(self) -> bool {
        self != RowKind::PressureBound
    }
}

/// One residual row: a sum of terms constrained to `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub kind: RowKind,
    /// Segment, compressor or node index, by kind.
    pub entity: usize,
    pub time: usize,
    pub lower: f64,
    pub upper: f64,
    start: usize,
    end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplyData {
    pub node: usize,
    /// Fixed pressure (Pa) for slack nodes.
    pub slack: Option<f64>,
    pub eta_s: Vec<f64>,
    pub c_h2: Vec<f64>,
    pub c_ng: Vec<f64>,
    /// Flow cap (kg/s).
    pub qs_max: f64,
}

impl SupplyData {
    /// Price of one kg of the supplied blend at step `t` ($/kg).
    pub fn unit_cost(&self, t: usize) -> f64 {
        self.eta_s[t] * self.c_h2[t] + (1.0 - self.eta_s[t]) * self.c_ng[t]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WithdrawalData {
    pub node: usize,
    pub fixed: bool,
    /// Bound or fixed value per step (MJ/s).
    pub demand: Vec<f64>,
}

/// Physical data frozen on the time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelData {
    pub segnet: SegmentedNetwork,
    pub grid: TimeGrid,
    pub gas: GasConstants,
    pub scales: NondimScales,
    /// Energy flow scale (MJ/s).
    pub energy_scale: f64,
    pub supplies: Vec<SupplyData>,
    pub withdrawals: Vec<WithdrawalData>,
    /// Consumer energy bid per step ($/MJ).
    pub c_energy: Vec<f64>,
    pub xi: f64,
    /// Compression cost in $/s per kg/s and unit of `sqrt(alpha) - 1`.
    pub work_price: f64,
    pub beta: Vec<f64>,
    pub eps: f64,
    pub supply_of: Vec<Option<usize>>,
    pub withdrawal_of: Vec<Option<usize>>,
    pub incoming_segments: Vec<Vec<usize>>,
    pub outgoing_segments: Vec<Vec<usize>>,
    pub incoming_compressors: Vec<Vec<usize>>,
    pub outgoing_compressors: Vec<Vec<usize>>,
}

impl ModelData {
    pub fn flow0(&self) -> f64 {
        self.scales.flow0()
    }

    /// Squared H2 sound speed over a0².
    pub fn c_h2(&self) -> f64 {
        (self.gas.a_h2 / self.scales.a0).powi(2)
    }

    pub fn c_ng(&self) -> f64 {
        (self.gas.a_ng / self.scales.a0).powi(2)
    }

    pub fn segment_coefficients(&self, e: usize) -> SegmentCoefficients {
        let s = &self.segnet.segments[e];
        SegmentCoefficients {
            length: s.length / self.scales.l0,
            area: s.area / self.scales.area0,
            kappa: self.scales.kappa,
            dt_s: self.grid.dt_s(),
            beta: self.beta[e],
            c_h2: self.c_h2(),
            c_ng: self.c_ng(),
            eps: self.eps,
        }
    }

    pub fn counts(&self) -> EntityCounts {
        EntityCounts {
            nodes: self.segnet.nodes.len(),
            supplies: self.supplies.len(),
            withdrawals: self.withdrawals.len(),
            segments: self.segnet.segments.len(),
            compressors: self.segnet.compressors.len(),
        }
    }

    pub fn slack_count(&self) -> usize {
        self.supplies.iter().filter(|s| s.slack.is_some()).count()
    }

    pub fn fixed_count(&self) -> usize {
        self.withdrawals.iter().filter(|w| w.fixed).count()
    }
}

/// `N (3 nodes + 3 segments + 2 compressors + supplies + 2 withdrawals)`.
pub fn variable_count(c: EntityCounts, n_time: usize) -> usize {
    n_time * (3 * c.nodes + 3 * c.segments + 2 * c.compressors + c.supplies + 2 * c.withdrawals)
}

/// `N (3 segments + compressors + 3 nodes + slacks + withdrawals + fixed withdrawals)`.
pub fn equality_count(c: EntityCounts, slacks: usize, fixed: usize, n_time: usize) -> usize {
    n_time * (3 * c.segments + c.compressors + 3 * c.nodes + slacks + c.withdrawals + fixed)
}

/// The assembled program together with its derivative bookkeeping.
#[derive(Debug, Clone)]
pub struct NlpProblem {
    pub data: ModelData,
    pub index: VariableIndex,
    x_lower: Vec<f64>,
    x_upper: Vec<f64>,
    rows: Vec<Row>,
    c_lower: Vec<f64>,
    c_upper: Vec<f64>,
    terms: Vec<Term>,
    term_jac: Vec<[u32; MAX_VARS]>,
    term_hess: Vec<Vec<u32>>,
    jac_rows: Vec<usize>,
    jac_cols: Vec<usize>,
    obj_terms: Vec<Term>,
    obj_hess: Vec<Vec<u32>>,
    hess_rows: Vec<usize>,
    hess_cols: Vec<usize>,
}

fn assembly(msg: impl Into<String>) -> TranscriptionError {
    TranscriptionError::Assembly(msg.into())
}

pub fn assemble_nlp(
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    grid: &TimeGrid,
) -> Result<NlpProblem, TranscriptionError> {
    let data = model_data(segnet, scenario, grid)?;
    Ok(NlpProblem::build(data))
}

fn model_data(
    segnet: &SegmentedNetwork,
    scenario: &Scenario,
    grid: &TimeGrid,
) -> Result<ModelData, TranscriptionError> {
    let gas = scenario.gas;
    let sc = scenario.scales;
    let scales = nondim_scales(sc.l0, sc.p0, sc.mach, &gas).map_err(|e| assembly(e.to_string()))?;
    let period = scenario.period();
    let times = grid.times_h();
    let sample = |p: &crate::scenario::Profile| times.iter().map(|&t| p.eval(t, period)).collect::<Vec<_>>();

    let n_nodes = segnet.nodes.len();
    let mut supplies = Vec::new();
    let mut withdrawals = Vec::new();
    let mut supply_of = vec![None; n_nodes];
    let mut withdrawal_of = vec![None; n_nodes];
    for (k, node) in segnet.nodes.iter().enumerate() {
        if !(node.p_min > 0.0 && node.p_min < node.p_max) {
            return Err(assembly(format!(
                "node `{}` has empty pressure range [{}, {}]",
                node.id, node.p_min, node.p_max
            )));
        }
        let Some(orig) = segnet.original(k) else { continue };
        if orig.is_supply() {
            let profile = scenario
                .injection
                .get(&orig.id)
                .or(orig.eta_s.as_ref())
                .ok_or_else(|| assembly(format!("supply node `{}` has no eta_s profile", orig.id)))?;
            let eta_s = sample(profile);
            if eta_s.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(assembly(format!("eta_s at `{}` leaves [0, 1]", orig.id)));
            }
            let (ph2, png) = match scenario.supply_prices.get(&orig.id) {
                Some(p) => (&p.c_h2, &p.c_ng),
                None => (&scenario.prices.c_h2, &scenario.prices.c_ng),
            };
            let slack = if orig.has(Role::Slack) { orig.p_slack } else { None };
            if let Some(p) = slack {
                if p < node.p_min || p > node.p_max {
                    return Err(assembly(format!("slack pressure of `{}` is outside its bounds", orig.id)));
                }
            }
            supply_of[k] = Some(supplies.len());
            supplies.push(SupplyData {
                node: k,
                slack,
                eta_s,
                c_h2: sample(ph2),
                c_ng: sample(png),
                qs_max: orig.qs_max.unwrap_or(scenario.qs_max_default),
            });
        }
        if orig.has(Role::Withdrawal) {
            let demand = scenario
                .withdrawals
                .get(&orig.id)
                .cloned()
                .or_else(|| orig.demand())
                .ok_or_else(|| assembly(format!("withdrawal node `{}` has no energy demand", orig.id)))?;
            let values = sample(demand.value());
            if values.iter().any(|v| !(*v >= 0.0)) {
                return Err(assembly(format!("energy demand at `{}` is negative", orig.id)));
            }
            withdrawal_of[k] = Some(withdrawals.len());
            withdrawals.push(WithdrawalData {
                node: k,
                fixed: matches!(demand, EnergyDemand::Fixed { .. }),
                demand: values,
            });
        }
    }
    if !supplies.iter().any(|s| s.slack.is_some()) {
        return Err(assembly("network has no slack node"));
    }

    let mut beta = Vec::with_capacity(segnet.segments.len());
    let mut incoming_segments = vec![Vec::new(); n_nodes];
    let mut outgoing_segments = vec![Vec::new(); n_nodes];
    for (e, s) in segnet.segments.iter().enumerate() {
        beta.push(pipe_beta(s.friction, s.length, s.diameter, sc.mach).map_err(|err| assembly(err.to_string()))?);
        outgoing_segments[s.from].push(e);
        incoming_segments[s.to].push(e);
    }
    let mut incoming_compressors = vec![Vec::new(); n_nodes];
    let mut outgoing_compressors = vec![Vec::new(); n_nodes];
    for (c, comp) in segnet.compressors.iter().enumerate() {
        if comp.from == comp.to {
            return Err(assembly(format!("compressor `{}` endpoints coincide", comp.id)));
        }
        outgoing_compressors[comp.from].push(c);
        incoming_compressors[comp.to].push(c);
    }

    Ok(ModelData {
        segnet: segnet.clone(),
        grid: *grid,
        gas,
        scales,
        energy_scale: scales.flow0() * gas.r_ng,
        supplies,
        withdrawals,
        c_energy: sample(&scenario.prices.c_energy),
        xi: scenario.xi,
        work_price: scenario.compressor_cost.k() * scenario.prices.zeta / 3.6e6,
        beta,
        eps: scenario.flow_smoothing,
        supply_of,
        withdrawal_of,
        incoming_segments,
        outgoing_segments,
        incoming_compressors,
        outgoing_compressors,
    })
}

struct Builder {
    rows: Vec<Row>,
    terms: Vec<Term>,
}

impl Builder {
    fn push(&mut self, kind: RowKind, entity: usize, time: usize, lower: f64, upper: f64, terms: Vec<Term>) {
        let start = self.terms.len();
        self.terms.extend(terms);
        self.rows.push(Row {
            kind,
            entity,
            time,
            lower,
            upper,
            start,
            end: self.terms.len(),
        });
    }
}

fn lin(var: usize, coef: f64) -> Term {
    Term::Linear { var, coef }
}

fn bil(a: usize, b: usize, coef: f64) -> Term {
    Term::Bilinear { a, b, coef }
}

impl NlpProblem {
    fn build(data: ModelData) -> Self {
        let counts = data.counts();
        let n_time = data.grid.len();
        let ix = VariableIndex::new(counts, n_time);
        let flow0 = data.flow0();
        let e0 = data.energy_scale;
        let p0 = data.scales.p0;
        let (ch, cn) = (data.c_h2(), data.c_ng());
        let r_h2 = data.gas.r_h2 / data.gas.r_ng;

        let mut x_lower = vec![f64::NEG_INFINITY; ix.len()];
        let mut x_upper = vec![f64::INFINITY; ix.len()];
        for t in 0..n_time {
            // Partial densities are non-negative and mass fractions lie in [0, 1].
            for node in 0..counts.nodes {
                x_lower[ix.at(Q::RhoH2, node, t)] = 0.0;
                x_lower[ix.at(Q::RhoNg, node, t)] = 0.0;
                x_lower[ix.at(Q::Eta, node, t)] = 0.0;
                x_upper[ix.at(Q::Eta, node, t)] = 1.0;
            }
            for e in 0..counts.segments {
                x_lower[ix.at(Q::GammaOut, e, t)] = 0.0;
                x_upper[ix.at(Q::GammaOut, e, t)] = 1.0;
            }
            for (c, comp) in data.segnet.compressors.iter().enumerate() {
                let a = ix.at(Q::Ratio, c, t);
                x_lower[a] = 1.0;
                x_upper[a] = comp.alpha_max;
                let f = ix.at(Q::CompressorFlow, c, t);
                x_lower[f] = 0.0;
                x_upper[f] = comp.fc_max / flow0;
            }
            for (k, s) in data.supplies.iter().enumerate() {
                let q = ix.at(Q::SupplyFlow, k, t);
                x_lower[q] = 0.0;
                x_upper[q] = s.qs_max / flow0;
            }
            for (k, w) in data.withdrawals.iter().enumerate() {
                x_lower[ix.at(Q::WithdrawalFlow, k, t)] = 0.0;
                let g = ix.at(Q::Energy, k, t);
                x_lower[g] = 0.0;
                if !w.fixed {
                    x_upper[g] = w.demand[t] / e0;
                }
            }
        }

        let mut b = Builder {
            rows: Vec::new(),
            terms: Vec::new(),
        };
        let rho = |q: Q, node: usize, t: usize| ix.at(q, node, t);
        for t in 0..n_time {
            let m = data.grid.succ(t);
            for (e, seg) in data.segnet.segments.iter().enumerate() {
                let coef = data.segment_coefficients(e);
                let (i, j) = (seg.from, seg.to);
                let f0 = ix.at(Q::FlowIn, e, t);
                let fl = ix.at(Q::FlowOut, e, t);
                let gl = ix.at(Q::GammaOut, e, t);
                let eta_i = ix.at(Q::Eta, i, t);
                for species in [Q::RhoH2, Q::RhoNg] {
                    let mut terms = Vec::new();
                    if m != t {
                        let s = coef.storage() / 2.0;
                        terms.push(lin(rho(species, i, m), s));
                        terms.push(lin(rho(species, j, m), s));
                        terms.push(lin(rho(species, i, t), -s));
                        terms.push(lin(rho(species, j, t), -s));
                    }
                    let kind = if species == Q::RhoH2 {
                        terms.push(bil(gl, fl, 1.0));
                        terms.push(bil(eta_i, f0, -1.0));
                        RowKind::H2Continuity
                    } else {
                        terms.push(lin(fl, 1.0));
                        terms.push(bil(gl, fl, -1.0));
                        terms.push(lin(f0, -1.0));
                        terms.push(bil(eta_i, f0, 1.0));
                        RowKind::NgContinuity
                    };
                    b.push(kind, e, t, 0.0, 0.0, terms);
                }
                let (hi, ni) = (rho(Q::RhoH2, i, t), rho(Q::RhoNg, i, t));
                let (hj, nj) = (rho(Q::RhoH2, j, t), rho(Q::RhoNg, j, t));
                b.push(
                    RowKind::Momentum,
                    e,
                    t,
                    0.0,
                    0.0,
                    vec![
                        lin(hj, ch),
                        lin(nj, cn),
                        lin(hi, -ch),
                        lin(ni, -cn),
                        Term::Friction {
                            f0,
                            fl,
                            rho: [hi, ni, hj, nj],
                            beta: coef.beta,
                            inv_area: 1.0 / coef.area,
                            eps: data.eps,
                        },
                    ],
                );
            }
            for (c, comp) in data.segnet.compressors.iter().enumerate() {
                let (i, j) = (comp.from, comp.to);
                b.push(
                    RowKind::Boost,
                    c,
                    t,
                    0.0,
                    0.0,
                    vec![Term::Boost {
                        p_in: [(rho(Q::RhoH2, i, t), ch), (rho(Q::RhoNg, i, t), cn)],
                        p_out: [(rho(Q::RhoH2, j, t), ch), (rho(Q::RhoNg, j, t), cn)],
                        alpha: ix.at(Q::Ratio, c, t),
                    }],
                );
            }
            for j in 0..data.segnet.nodes.len() {
                let eta_j = ix.at(Q::Eta, j, t);
                let mut h2 = Vec::new();
                let mut ng = Vec::new();
                for &e in &data.incoming_segments[j] {
                    let fl = ix.at(Q::FlowOut, e, t);
                    let gl = ix.at(Q::GammaOut, e, t);
                    h2.push(bil(gl, fl, 1.0));
                    ng.push(lin(fl, 1.0));
                    ng.push(bil(gl, fl, -1.0));
                }
                for &c in &data.incoming_compressors[j] {
                    let fc = ix.at(Q::CompressorFlow, c, t);
                    let eta_i = ix.at(Q::Eta, data.segnet.compressors[c].from, t);
                    h2.push(bil(eta_i, fc, 1.0));
                    ng.push(lin(fc, 1.0));
                    ng.push(bil(eta_i, fc, -1.0));
                }
                let outgoing = data.outgoing_segments[j]
                    .iter()
                    .map(|&e| ix.at(Q::FlowIn, e, t))
                    .chain(data.outgoing_compressors[j].iter().map(|&c| ix.at(Q::CompressorFlow, c, t)));
                for f in outgoing {
                    h2.push(bil(eta_j, f, -1.0));
                    ng.push(lin(f, -1.0));
                    ng.push(bil(eta_j, f, 1.0));
                }
                if let Some(k) = data.supply_of[j] {
                    let q = ix.at(Q::SupplyFlow, k, t);
                    let es = data.supplies[k].eta_s[t];
                    h2.push(lin(q, es));
                    ng.push(lin(q, 1.0 - es));
                }
                if let Some(k) = data.withdrawal_of[j] {
                    let q = ix.at(Q::WithdrawalFlow, k, t);
                    h2.push(bil(eta_j, q, -1.0));
                    ng.push(lin(q, -1.0));
                    ng.push(bil(eta_j, q, 1.0));
                }
                b.push(RowKind::H2Balance, j, t, 0.0, 0.0, h2);
                b.push(RowKind::NgBalance, j, t, 0.0, 0.0, ng);

                let (hj, nj) = (rho(Q::RhoH2, j, t), rho(Q::RhoNg, j, t));
                b.push(
                    RowKind::MassFraction,
                    j,
                    t,
                    0.0,
                    0.0,
                    vec![bil(eta_j, hj, 1.0), bil(eta_j, nj, 1.0), lin(hj, -1.0)],
                );
                let node = &data.segnet.nodes[j];
                let slack = data.supply_of[j].and_then(|k| data.supplies[k].slack);
                match slack {
                    Some(ps) => {
                        b.push(RowKind::SlackPressure, j, t, ps / p0, ps / p0, vec![lin(hj, ch), lin(nj, cn)]);
                    }
                    None => {
                        b.push(
                            RowKind::PressureBound,
                            j,
                            t,
                            node.p_min / p0,
                            node.p_max / p0,
                            vec![lin(hj, ch), lin(nj, cn)],
                        );
                    }
                }
            }
            for (k, w) in data.withdrawals.iter().enumerate() {
                let g = ix.at(Q::Energy, k, t);
                let q = ix.at(Q::WithdrawalFlow, k, t);
                let eta = ix.at(Q::Eta, w.node, t);
                b.push(
                    RowKind::Energy,
                    k,
                    t,
                    0.0,
                    0.0,
                    vec![lin(g, 1.0), lin(q, -1.0), bil(eta, q, -(r_h2 - 1.0))],
                );
                if w.fixed {
                    let v = w.demand[t] / e0;
                    b.push(RowKind::FixedEnergy, k, t, v, v, vec![lin(g, 1.0)]);
                }
            }
        }

        let dt = data.grid.dt_s();
        let mut obj_terms = Vec::new();
        for t in 0..n_time {
            for (k, s) in data.supplies.iter().enumerate() {
                obj_terms.push(lin(ix.at(Q::SupplyFlow, k, t), data.xi * dt * flow0 * s.unit_cost(t)));
            }
            for k in 0..data.withdrawals.len() {
                obj_terms.push(lin(ix.at(Q::Energy, k, t), -data.xi * dt * e0 * data.c_energy[t]));
            }
            for c in 0..data.segnet.compressors.len() {
                obj_terms.push(Term::Work {
                    fc: ix.at(Q::CompressorFlow, c, t),
                    alpha: ix.at(Q::Ratio, c, t),
                    coef: (1.0 - data.xi) * dt * flow0 * data.work_price,
                });
            }
        }

        let Builder { rows, terms } = b;
        let c_lower = rows.iter().map(|r| r.lower).collect();
        let c_upper = rows.iter().map(|r| r.upper).collect();

        // Jacobian pattern: per row, the sorted distinct variables of its terms.
        let mut jac_rows = Vec::new();
        let mut jac_cols = Vec::new();
        let mut term_jac = vec![[u32::MAX; MAX_VARS]; terms.len()];
        let mut vars = [0usize; MAX_VARS];
        for (r, row) in rows.iter().enumerate() {
            let mut cols: Vec<usize> = Vec::new();
            for t in &terms[row.start..row.end] {
                let k = t.vars(&mut vars);
                cols.extend_from_slice(&vars[..k]);
            }
            cols.sort_unstable();
            cols.dedup();
            let base = jac_cols.len();
            for &c in &cols {
                jac_rows.push(r);
                jac_cols.push(c);
            }
            for (ti, t) in terms[row.start..row.end].iter().enumerate() {
                let k = t.vars(&mut vars);
                for p in 0..k {
                    let pos = cols.binary_search(&vars[p]).expect("column present");
                    term_jac[row.start + ti][p] = (base + pos) as u32;
                }
            }
        }

        let mut hess_map: HashMap<(usize, usize), u32> = HashMap::new();
        let mut hess_rows = Vec::new();
        let mut hess_cols = Vec::new();
        let mut slots_for = |t: &Term| -> Vec<u32> {
            let k = t.vars(&mut vars);
            debug_assert!({
                let mut v = vars[..k].to_vec();
                v.sort_unstable();
                v.windows(2).all(|w| w[0] != w[1])
            });
            t.hessian_pattern()
                .into_iter()
                .map(|(p, q)| {
                    let (a, b) = (vars[p].max(vars[q]), vars[p].min(vars[q]));
                    *hess_map.entry((a, b)).or_insert_with(|| {
                        hess_rows.push(a);
                        hess_cols.push(b);
                        (hess_rows.len() - 1) as u32
                    })
                })
                .collect()
        };
        let term_hess: Vec<Vec<u32>> = terms.iter().map(&mut slots_for).collect();
        let obj_hess: Vec<Vec<u32>> = obj_terms.iter().map(&mut slots_for).collect();

        NlpProblem {
            data,
            index: ix,
            x_lower,
            x_upper,
            rows,
            c_lower,
            c_upper,
            terms,
            term_jac,
            term_hess,
            jac_rows,
            jac_cols,
            obj_terms,
            obj_hess,
            hess_rows,
            hess_cols,
        }
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row_terms(&self, r: usize) -> &[Term] {
        &self.terms[self.rows[r].start..self.rows[r].end]
    }

    pub fn objective_terms(&self) -> &[Term] {
        &self.obj_terms
    }

    pub fn equality_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.kind.is_equality()).count()
    }

    pub fn inequality_rows(&self) -> usize {
        self.rows.len() - self.equality_rows()
    }

    pub fn row_name(&self, r: usize) -> String {
        let row = &self.rows[r];
        let sn = &self.data.segnet;
        let entity = match row.kind {
            RowKind::H2Continuity | RowKind::NgContinuity | RowKind::Momentum => &sn.segments[row.entity].id,
            RowKind::Boost => &sn.compressors[row.entity].id,
            RowKind::Energy | RowKind::FixedEnergy => &sn.nodes[self.data.withdrawals[row.entity].node].id,
            _ => &sn.nodes[row.entity].id,
        };
        format!("{}[{}@{}]", row.kind.name(), entity, row.time)
    }

    pub fn variable_name(&self, i: usize) -> String {
        let (q, e, t) = self.index.decode(i);
        let sn = &self.data.segnet;
        let entity = match q {
            Q::RhoH2 | Q::RhoNg | Q::Eta => &sn.nodes[e].id,
            Q::SupplyFlow => &sn.nodes[self.data.supplies[e].node].id,
            Q::WithdrawalFlow | Q::Energy => &sn.nodes[self.data.withdrawals[e].node].id,
            Q::FlowIn | Q::FlowOut | Q::GammaOut => &sn.segments[e].id,
            Q::Ratio | Q::CompressorFlow => &sn.compressors[e].id,
        };
        format!("{}[{}@{}]", q.name(), entity, t)
    }

    /// Copy whose friction terms use smoothing `eps` (0 gives exact |phi|).
    pub fn with_flow_smoothing(&self, eps: f64) -> Self {
        let mut p = self.clone();
        p.data.eps = eps;
        for t in &mut p.terms {
            if let Term::Friction { eps: e, .. } = t {
                *e = eps;
            }
        }
        p
    }

    /// Dimensionless pressure at `node` and step `t` from a point.
    pub fn pressure(&self, x: &[f64], node: usize, t: usize) -> f64 {
        self.data.c_h2() * x[self.index.at(Q::RhoH2, node, t)] + self.data.c_ng() * x[self.index.at(Q::RhoNg, node, t)]
    }

    /// Replicates a single-step point over every step of this problem's grid.
    pub fn replicate(&self, steady: &[f64], steady_index: &VariableIndex) -> Vec<f64> {
        assert_eq!(steady_index.n_time(), 1, "source point must come from a one-step grid");
        assert_eq!(steady_index.counts(), self.index.counts(), "entity counts differ");
        let mut x = vec![0.0; self.index.len()];
        for q in Q::ALL {
            for e in 0..self.index.entities(q) {
                let v = steady[steady_index.at(q, e, 0)];
                for t in 0..self.index.n_time() {
                    x[self.index.at(q, e, t)] = v;
                }
            }
        }
        x
    }

    /// Physics-based starting point: uniform slack pressure and concentration,
    /// flows from a weighted graph Laplacian, unit compressor ratios.
    pub fn initial_guess(&self) -> Vec<f64> {
        let d = &self.data;
        let sn = &d.segnet;
        let n = sn.nodes.len();
        let ix = &self.index;
        let slack = d.supplies.iter().find(|s| s.slack.is_some()).expect("slack present");
        let eta0 = slack.eta_s[0];
        let p_slack = slack.slack.unwrap() / d.scales.p0;
        let flow0 = d.flow0();
        let r = d.gas.calorific(eta0);

        // Demands (dimensionless mass flow) at t = 0.
        let mut qw = vec![0.0; d.withdrawals.len()];
        let mut net = vec![0.0; n];
        for (k, w) in d.withdrawals.iter().enumerate() {
            let frac = if w.fixed { 1.0 } else { 0.5 };
            qw[k] = frac * w.demand[0] / r / flow0;
            net[w.node] -= qw[k];
        }
        // Non-slack injections start with an equal share of the total demand.
        let total: f64 = qw.iter().sum();
        let mut qs0 = vec![0.0; d.supplies.len()];
        for (k, s) in d.supplies.iter().enumerate() {
            if s.slack.is_none() {
                qs0[k] = (total / d.supplies.len() as f64).min(0.5 * s.qs_max / flow0);
                net[s.node] += qs0[k];
            }
        }
        let slack_nodes: Vec<usize> = d.supplies.iter().filter(|s| s.slack.is_some()).map(|s| s.node).collect();
        let free: Vec<usize> = (0..n).filter(|j| !slack_nodes.contains(j)).collect();
        let pos: HashMap<usize, usize> = free.iter().enumerate().map(|(k, &j)| (j, k)).collect();
        let mut edges: Vec<(usize, usize, f64)> = sn
            .segments
            .iter()
            .map(|s| (s.from, s.to, d.scales.l0 / s.length))
            .collect();
        edges.extend(sn.compressors.iter().map(|c| (c.from, c.to, 1e3)));
        let mut lap = DMatrix::<f64>::zeros(free.len(), free.len());
        for &(a, b, g) in &edges {
            for (u, v) in [(a, b), (b, a)] {
                if let Some(&pu) = pos.get(&u) {
                    lap[(pu, pu)] += g;
                    if let Some(&pv) = pos.get(&v) {
                        lap[(pu, pv)] -= g;
                    }
                }
            }
        }
        let rhs = DVector::from_iterator(free.len(), free.iter().map(|&j| net[j]));
        let mut pot = vec![0.0; n];
        if !free.is_empty() {
            let sol = lap
                .clone()
                .lu()
                .solve(&rhs)
                .or_else(|| lap.svd(true, true).solve(&rhs, 1e-12).ok())
                .unwrap_or_else(|| DVector::zeros(free.len()));
            for (k, &j) in free.iter().enumerate() {
                pot[j] = sol[k];
            }
        }
        let seg_flow: Vec<f64> = sn
            .segments
            .iter()
            .map(|s| (pot[s.from] - pot[s.to]) * d.scales.l0 / s.length)
            .collect();
        let comp_flow: Vec<f64> = sn
            .compressors
            .iter()
            .enumerate()
            .map(|(c, comp)| ((pot[comp.from] - pot[comp.to]) * 1e3).clamp(0.0, self.x_upper[ix.at(Q::CompressorFlow, c, 0)]))
            .collect();

        // Squared pressures propagated outwards from the slack nodes.
        let c_mix = d.gas.sound_speed_sq(eta0) / d.scales.a0.powi(2);
        let mut p2 = vec![f64::NAN; n];
        let mut queue = VecDeque::new();
        for &s in &slack_nodes {
            p2[s] = p_slack * p_slack;
            queue.push_back(s);
        }
        while let Some(u) = queue.pop_front() {
            for (e, s) in sn.segments.iter().enumerate() {
                let phi = seg_flow[e] / (s.area / d.scales.area0);
                let drop = 2.0 * d.beta[e] * c_mix * phi * phi.abs();
                let (v, val) = if s.from == u {
                    (s.to, p2[u] - drop)
                } else if s.to == u {
                    (s.from, p2[u] + drop)
                } else {
                    continue;
                };
                if p2[v].is_nan() {
                    p2[v] = val;
                    queue.push_back(v);
                }
            }
            for c in &sn.compressors {
                let v = if c.from == u {
                    c.to
                } else if c.to == u {
                    c.from
                } else {
                    continue;
                };
                if p2[v].is_nan() {
                    p2[v] = p2[u];
                    queue.push_back(v);
                }
            }
        }
        let pressure: Vec<f64> = (0..n)
            .map(|j| {
                let node = &sn.nodes[j];
                let lo = node.p_min / d.scales.p0;
                let hi = node.p_max / d.scales.p0;
                let p = if p2[j].is_nan() { p_slack } else { p2[j].max(0.0).sqrt() };
                p.clamp(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
            })
            .collect();

        let mut x = vec![0.0; ix.len()];
        for t in 0..ix.n_time() {
            for j in 0..n {
                let p = if slack_nodes.contains(&j) { p_slack } else { pressure[j] };
                let rho = p / c_mix;
                x[ix.at(Q::RhoH2, j, t)] = eta0 * rho;
                x[ix.at(Q::RhoNg, j, t)] = (1.0 - eta0) * rho;
                x[ix.at(Q::Eta, j, t)] = eta0;
            }
            for e in 0..sn.segments.len() {
                x[ix.at(Q::FlowIn, e, t)] = seg_flow[e];
                x[ix.at(Q::FlowOut, e, t)] = seg_flow[e];
                x[ix.at(Q::GammaOut, e, t)] = eta0;
            }
            for c in 0..sn.compressors.len() {
                x[ix.at(Q::Ratio, c, t)] = 1.0;
                x[ix.at(Q::CompressorFlow, c, t)] = comp_flow[c];
            }
            for (k, s) in d.supplies.iter().enumerate() {
                let j = s.node;
                let out: f64 = d.outgoing_segments[j].iter().map(|&e| seg_flow[e]).sum::<f64>()
                    + d.outgoing_compressors[j].iter().map(|&c| comp_flow[c]).sum::<f64>()
                    - d.incoming_segments[j].iter().map(|&e| seg_flow[e]).sum::<f64>()
                    - d.incoming_compressors[j].iter().map(|&c| comp_flow[c]).sum::<f64>();
                x[ix.at(Q::SupplyFlow, k, t)] = if s.slack.is_some() { out.max(0.0) } else { qs0[k] };
            }
            for (k, _) in d.withdrawals.iter().enumerate() {
                x[ix.at(Q::WithdrawalFlow, k, t)] = qw[k];
                x[ix.at(Q::Energy, k, t)] = qw[k] * flow0 * r / d.energy_scale;
            }
        }
        x
    }

    /// Objective split into the economic and compression parts ($).
    pub fn objective_parts(&self, x: &[f64]) -> Result<(f64, f64), EvalError> {
        let mut econ = 0.0;
        let mut comp = 0.0;
        for t in &self.obj_terms {
            let v = t.value(x)?;
            if matches!(t, Term::Work { .. }) {
                comp += v;
            } else {
                econ += v;
            }
        }
        let xi = self.data.xi;
        let re = if xi > 0.0 { econ / xi } else { 0.0 };
        let rc = if xi < 1.0 { comp / (1.0 - xi) } else { 0.0 };
        Ok((re, rc))
    }
}

impl Nlp for NlpProblem {
    fn n(&self) -> usize {
        self.index.len()
    }

    fn m(&self) -> usize {
        self.rows.len()
    }

    fn variable_bounds(&self) -> (&[f64], &[f64]) {
        (&self.x_lower, &self.x_upper)
    }

    fn constraint_bounds(&self) -> (&[f64], &[f64]) {
        (&self.c_lower, &self.c_upper)
    }

    fn objective(&self, x: &[f64]) -> Result<f64, EvalError> {
        let mut f = 0.0;
        for t in &self.obj_terms {
            f += t.value(x)?;
        }
        Ok(f)
    }

    fn gradient(&self, x: &[f64], g: &mut [f64]) -> Result<(), EvalError> {
        g.fill(0.0);
        let mut vars = [0; MAX_VARS];
        let mut lg: LocalGrad = [0.0; MAX_VARS];
        for t in &self.obj_terms {
            let k = t.vars(&mut vars);
            t.gradient(x, &mut lg)?;
            for p in 0..k {
                g[vars[p]] += lg[p];
            }
        }
        Ok(())
    }

    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<(), EvalError> {
        for (r, row) in self.rows.iter().enumerate() {
            let mut s = 0.0;
            for t in &self.terms[row.start..row.end] {
                s += t.value(x)?;
            }
            c[r] = s;
        }
        Ok(())
    }

    fn jacobian_structure(&self) -> (&[usize], &[usize]) {
        (&self.jac_rows, &self.jac_cols)
    }

    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) -> Result<(), EvalError> {
        vals.fill(0.0);
        let mut vars = [0; MAX_VARS];
        let mut lg: LocalGrad = [0.0; MAX_VARS];
        for (t, slots) in self.terms.iter().zip(&self.term_jac) {
            let k = t.vars(&mut vars);
            t.gradient(x, &mut lg)?;
            for p in 0..k {
                vals[slots[p] as usize] += lg[p];
            }
        }
        Ok(())
    }

    fn hessian_structure(&self) -> (&[usize], &[usize]) {
        (&self.hess_rows, &self.hess_cols)
    }

    fn hessian_values(&self, x: &[f64], sigma: f64, lambda: &[f64], vals: &mut [f64]) -> Result<(), EvalError> {
        vals.fill(0.0);
        let mut lh: LocalHess = [[0.0; MAX_VARS]; MAX_VARS];
        let mut add = |t: &Term, slots: &[u32], w: f64, vals: &mut [f64]| -> Result<(), EvalError> {
            if w == 0.0 || t.is_linear() {
                return Ok(());
            }
            t.hessian(x, &mut lh)?;
            for (&(p, q), &s) in t.hessian_pattern().iter().zip(slots) {
                vals[s as usize] += w * lh[p][q];
            }
            Ok(())
        };
        for (r, row) in self.rows.iter().enumerate() {
            for k in row.start..row.end {
                add(&self.terms[k], &self.term_hess[k], lambda[r], vals)?;
            }
        }
        for (t, slots) in self.obj_terms.iter().zip(&self.obj_hess) {
            add(t, slots, sigma, vals)?;
        }
        Ok(())
    }
}
