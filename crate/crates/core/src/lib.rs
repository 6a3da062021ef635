//! Transient optimal control of hydrogen blending in gas pipeline networks.
//!
//! The pipeline is split into short lumped segments, the periodic horizon
//! into a cyclic grid, and the resulting sparse program is solved by an
//! embedded interior-point method warm-started from the steady state.

// NaN-rejecting `!(x > 0.0)` checks and index loops over parallel arrays are
// intentional throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cases;
pub mod cli;
pub mod network;
pub mod output;
pub mod physics;
pub mod scenario;
pub mod solver;
pub mod trajectory;
pub mod transcription;
pub mod validation;
