//! Nonlinear program interface and the embedded interior-point solver.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod ipm;
pub mod kkt;
pub mod ldl;
pub mod stages;

pub use ipm::{solve, IterationRecord};
pub use kkt::{kkt_residual, KktDiagnostics};
pub use stages::{solve_steady, solve_transient, StageSummary, TwoStage};

/// Failure to evaluate a function at a point, usually because an iterate
/// left the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalError(pub String);

impl EvalError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for EvalError {}

/// Evaluation contract between a problem and a solver:
/// minimize f(x) subject to `cl <= c(x) <= cu`, `xl <= x <= xu`.
///
/// Sparse matrices are coordinate lists; the Hessian lists its lower
/// triangle (`row >= col`). Infinite bounds are `f64::INFINITY`.
pub trait Nlp {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn variable_bounds(&self) -> (&[f64], &[f64]);
    fn constraint_bounds(&self) -> (&[f64], &[f64]);
    fn objective(&self, x: &[f64]) -> Result<f64, EvalError>;
    fn gradient(&self, x: &[f64], g: &mut [f64]) -> Result<(), EvalError>;
    fn constraints(&self, x: &[f64], c: &mut [f64]) -> Result<(), EvalError>;
    fn jacobian_structure(&self) -> (&[usize], &[usize]);
    fn jacobian_values(&self, x: &[f64], vals: &mut [f64]) -> Result<(), EvalError>;
    fn hessian_structure(&self) -> (&[usize], &[usize]);
    /// Values of `sigma * H_f + sum_k lambda_k H_{c_k}`.
    fn hessian_values(&self, x: &[f64], sigma: f64, lambda: &[f64], vals: &mut [f64]) -> Result<(), EvalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    LocalOptimum,
    Infeasible,
    IterationLimit,
    Error,
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveStatus::LocalOptimum => "local-optimum",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::IterationLimit => "iteration-limit",
            SolveStatus::Error => "error",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    InteriorPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Scaled KKT tolerance.
    pub kkt_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Barrier decrease factors: mu <- max(tol/10, min(kappa_mu mu, mu^theta_mu)).
    pub kappa_mu: f64,
    pub theta_mu: f64,
    /// Minimum relative distance of the initial point from its bounds.
    pub bound_push: f64,
    /// Smallest nonzero primal regularization used by inertia correction.
    pub min_regularization: f64,
    /// Largest absolute objective gradient entry allowed before scaling.
    pub gradient_scale_limit: f64,
    pub backend: Backend,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_iter: 3000,
            mu_init: 0.1,
            kappa_mu: 0.2,
            theta_mu: 1.5,
            bound_push: 1e-2,
            min_regularization: 1e-8,
            gradient_scale_limit: 100.0,
            backend: Backend::InteriorPoint,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.kkt_tol > 0.0) {
            return Err(format!("kkt_tol must be positive (got {})", self.kkt_tol));
        }
        if self.max_iter == 0 {
            return Err("max_iter must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    /// Constraint multipliers (sign convention of the Lagrangian f + lambda'c).
    pub lambda: Vec<f64>,
    /// Lower and upper bound multipliers (non-negative).
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub objective: f64,
    /// Largest violation of constraints and variable bounds (unscaled).
    pub violation: f64,
    /// Scaled optimality error at the returned point.
    pub kkt_error: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    pub message: String,
    #[serde(skip)]
    pub log: Vec<IterationRecord>,
}
