//! Discretization of the network dynamics into a sparse nonlinear program.

use thiserror::Error;

pub mod export;
pub mod grid;
pub mod index;
pub mod problem;
pub mod residuals;
pub mod terms;

pub use export::export_nlp;
pub use grid::{build_time_grid, cyclic_derivative, cyclic_derivatives, TimeGrid};
pub use index::{EntityCounts, Quantity, VariableIndex};
pub use problem::{assemble_nlp, equality_count, variable_count, NlpProblem, Row, RowKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TranscriptionError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("assembly: {0}")]
    Assembly(String),
}
