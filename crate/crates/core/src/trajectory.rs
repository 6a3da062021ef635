//! Solution time series in physical units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::Nlp;
use crate::transcription::{NlpProblem, Quantity as Q};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("point has {got} entries, problem expects {expected}")]
    Length { got: usize, expected: usize },
    #[error("trajectory does not match the problem: {0}")]
    Mismatch(String),
    #[error("objective evaluation failed: {0}")]
    Eval(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Pipe,
    Compressor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSeries {
    pub id: String,
    /// Partial densities (kg/m³).
    pub rho_h2: Vec<f64>,
    pub rho_ng: Vec<f64>,
    pub eta: Vec<f64>,
    /// Pressure (Pa).
    pub p: Vec<f64>,
}

/// A pipe segment or a compressor. Compressors carry `f0 == fl == fc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSeries {
    pub id: String,
    pub kind: EdgeKind,
    /// Inlet and outlet mass flow (kg/s).
    pub f0: Vec<f64>,
    pub fl: Vec<f64>,
    /// Outlet H2 mass fraction (pipes); inlet fraction for compressors.
    pub gamma: Vec<f64>,
    /// Boost ratio (compressors; 1 for pipes).
    pub alpha: Vec<f64>,
}

/// Supply and withdrawal at one node. Absent transfers are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSeries {
    pub node: String,
    /// Supply flow (kg/s) and its H2 mass fraction.
    pub q_s: Vec<f64>,
    pub eta_s: Vec<f64>,
    /// Withdrawal flow (kg/s) and delivered energy (MJ/s).
    pub q_w: Vec<f64>,
    pub g_e: Vec<f64>,
}

/// Objective split ($ over the horizon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveBreakdown {
    /// Supply cost minus energy revenue.
    pub r_e: f64,
    /// Compression cost.
    pub r_c: f64,
    /// `xi r_e + (1 - xi) r_c`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt_h: f64,
    pub times_h: Vec<f64>,
    pub nodes: Vec<NodeSeries>,
    pub edges: Vec<EdgeSeries>,
    pub transfers: Vec<TransferSeries>,
    pub objective: ObjectiveBreakdown,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times_h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_h.is_empty()
    }

    pub fn horizon_h(&self) -> f64 {
        self.dt_h * self.len() as f64
    }

    pub fn node(&self, id: &str) -> Option<&NodeSeries> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge(&self, id: &str) -> Option<&EdgeSeries> {
        self.edges.iter().find(|e| e.id == id)
    }

    pub fn transfer(&self, node: &str) -> Option<&TransferSeries> {
        self.transfers.iter().find(|t| t.node == node)
    }

    /// Re-dimensionalizes a point of `problem`.
    pub fn from_solution(problem: &NlpProblem, x: &[f64]) -> Result<Self, TrajectoryError> {
        if x.len() != problem.n() {
            return Err(TrajectoryError::Length {
                got: x.len(),
                expected: problem.n(),
            });
        }
        let d = &problem.data;
        let ix = &problem.index;
        let n_time = ix.n_time();
        let rho0 = d.scales.rho0;
        let flow0 = d.flow0();
        let e0 = d.energy_scale;
        let series = |q: Q, e: usize, scale: f64| (0..n_time).map(|t| x[ix.at(q, e, t)] * scale).collect::<Vec<_>>();
        let a2h = d.gas.a_h2 * d.gas.a_h2;
        let a2n = d.gas.a_ng * d.gas.a_ng;

        let nodes = d
            .segnet
            .nodes
            .iter()
            .enumerate()
            .map(|(j, node)| {
                let rho_h2 = series(Q::RhoH2, j, rho0);
                let rho_ng = series(Q::RhoNg, j, rho0);
                let p = rho_h2.iter().zip(&rho_ng).map(|(h, n)| a2h * h + a2n * n).collect();
                NodeSeries {
                    id: node.id.clone(),
                    rho_h2,
                    rho_ng,
                    eta: series(Q::Eta, j, 1.0),
                    p,
                }
            })
            .collect();

        let mut edges = Vec::new();
        for (e, s) in d.segnet.segments.iter().enumerate() {
            edges.push(EdgeSeries {
                id: s.id.clone(),
                kind: EdgeKind::Pipe,
                f0: series(Q::FlowIn, e, flow0),
                fl: series(Q::FlowOut, e, flow0),
                gamma: series(Q::GammaOut, e, 1.0),
                alpha: vec![1.0; n_time],
            });
        }
        for (c, comp) in d.segnet.compressors.iter().enumerate() {
            let fc = series(Q::CompressorFlow, c, flow0);
            edges.push(EdgeSeries {
                id: comp.id.clone(),
                kind: EdgeKind::Compressor,
                f0: fc.clone(),
                fl: fc,
                gamma: series(Q::Eta, comp.from, 1.0),
                alpha: series(Q::Ratio, c, 1.0),
            });
        }

        let mut transfers = Vec::new();
        for (j, node) in d.segnet.nodes.iter().enumerate() {
            let (s, w) = (d.supply_of[j], d.withdrawal_of[j]);
            if s.is_none() && w.is_none() {
                continue;
            }
            let zeros = vec![0.0; n_time];
            transfers.push(TransferSeries {
                node: node.id.clone(),
                q_s: s.map_or_else(|| zeros.clone(), |k| series(Q::SupplyFlow, k, flow0)),
                eta_s: s.map_or_else(|| zeros.clone(), |k| d.supplies[k].eta_s.clone()),
                q_w: w.map_or_else(|| zeros.clone(), |k| series(Q::WithdrawalFlow, k, flow0)),
                g_e: w.map_or_else(|| zeros.clone(), |k| series(Q::Energy, k, e0)),
            });
        }

        let (r_e, r_c) = problem
            .objective_parts(x)
            .map_err(|e| TrajectoryError::Eval(e.to_string()))?;
        let total = problem.objective(x).map_err(|e| TrajectoryError::Eval(e.to_string()))?;
        Ok(Self {
            dt_h: d.grid.dt_h(),
            times_h: d.grid.times_h(),
            nodes,
            edges,
            transfers,
            objective: ObjectiveBreakdown { r_e, r_c, total },
        })
    }

    /// Dimensionless point of `problem` holding these values; inverse of
    /// [`Trajectory::from_solution`].
    pub fn to_point(&self, problem: &NlpProblem) -> Result<Vec<f64>, TrajectoryError> {
        let d = &problem.data;
        let ix = &problem.index;
        let n_time = ix.n_time();
        if self.len() != n_time {
            return Err(TrajectoryError::Mismatch(format!(
                "{} time steps, problem has {n_time}",
                self.len()
            )));
        }
        let rho0 = d.scales.rho0;
        let flow0 = d.flow0();
        let e0 = d.energy_scale;
        let mut x = vec![0.0; ix.len()];
        let mut put = |q: Q, e: usize, v: &[f64], scale: f64| -> Result<(), TrajectoryError> {
            if v.len() != n_time {
                return Err(TrajectoryError::Mismatch(format!("series for {} has wrong length", q.name())));
            }
            for t in 0..n_time {
                x[ix.at(q, e, t)] = v[t] / scale;
            }
            Ok(())
        };
        let missing = |what: &str, id: &str| TrajectoryError::Mismatch(format!("no {what} `{id}`"));
        for (j, node) in d.segnet.nodes.iter().enumerate() {
            let s = self.node(&node.id).ok_or_else(|| missing("node", &node.id))?;
            put(Q::RhoH2, j, &s.rho_h2, rho0)?;
            put(Q::RhoNg, j, &s.rho_ng, rho0)?;
            put(Q::Eta, j, &s.eta, 1.0)?;
        }
        for (e, seg) in d.segnet.segments.iter().enumerate() {
            let s = self.edge(&seg.id).ok_or_else(|| missing("pipe segment", &seg.id))?;
            put(Q::FlowIn, e, &s.f0, flow0)?;
            put(Q::FlowOut, e, &s.fl, flow0)?;
            put(Q::GammaOut, e, &s.gamma, 1.0)?;
        }
        for (c, comp) in d.segnet.compressors.iter().enumerate() {
            let s = self.edge(&comp.id).ok_or_else(|| missing("compressor", &comp.id))?;
            put(Q::CompressorFlow, c, &s.f0, flow0)?;
            put(Q::Ratio, c, &s.alpha, 1.0)?;
        }
        for (k, sup) in d.supplies.iter().enumerate() {
            let id = &d.segnet.nodes[sup.node].id;
            let s = self.transfer(id).ok_or_else(|| missing("supply node", id))?;
            put(Q::SupplyFlow, k, &s.q_s, flow0)?;
        }
        for (k, w) in d.withdrawals.iter().enumerate() {
            let id = &d.segnet.nodes[w.node].id;
            let s = self.transfer(id).ok_or_else(|| missing("withdrawal node", id))?;
            put(Q::WithdrawalFlow, k, &s.q_w, flow0)?;
            put(Q::Energy, k, &s.g_e, e0)?;
        }
        Ok(x)
    }

    /// Largest relative difference between two trajectories over every
    /// series, with `floor` guarding near-zero entries.
    pub fn max_relative_difference(&self, other: &Trajectory, floor: f64) -> f64 {
        let mut worst = 0.0f64;
        let mut cmp = |a: &[f64], b: &[f64]| {
            for (x, y) in a.iter().zip(b) {
                worst = worst.max((x - y).abs() / x.abs().max(y.abs()).max(floor));
            }
            if a.len() != b.len() {
                worst = f64::INFINITY;
            }
        };
        if self.nodes.len() != other.nodes.len()
            || self.edges.len() != other.edges.len()
            || self.transfers.len() != other.transfers.len()
        {
            return f64::INFINITY;
        }
        for (a, b) in self.nodes.iter().zip(&other.nodes) {
            cmp(&a.rho_h2, &b.rho_h2);
            cmp(&a.rho_ng, &b.rho_ng);
            cmp(&a.eta, &b.eta);
            cmp(&a.p, &b.p);
        }
        for (a, b) in self.edges.iter().zip(&other.edges) {
            cmp(&a.f0, &b.f0);
            cmp(&a.fl, &b.fl);
            cmp(&a.gamma, &b.gamma);
            cmp(&a.alpha, &b.alpha);
        }
        for (a, b) in self.transfers.iter().zip(&other.transfers) {
            cmp(&a.q_s, &b.q_s);
            cmp(&a.q_w, &b.q_w);
            cmp(&a.g_e, &b.g_e);
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::Case;
    use crate::network::segment_pipes;
    use crate::transcription::{assemble_nlp, build_time_grid};

    #[test]
    fn point_round_trips_through_physical_units() {
        let sc = Case::SinglePipe.scenario();
        let seg = segment_pipes(&Case::SinglePipe.network(), sc.dl_m).unwrap();
        let grid = build_time_grid(sc.horizon_h, 2.0).unwrap();
        let p = assemble_nlp(&seg, &sc, &grid).unwrap();
        let x = p.initial_guess();
        let tr = Trajectory::from_solution(&p, &x).unwrap();
        assert_eq!(tr.len(), 12);
        assert_eq!(tr.nodes.len(), 5);
        assert_eq!(tr.edges.len(), 4);
        let back = tr.to_point(&p).unwrap();
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{a} vs {b}");
        }
        // Pressure follows the equation of state.
        let n1 = tr.node("N1").unwrap();
        assert!((n1.p[0] - 4.337e6).abs() < 1e-3);
    }
}
