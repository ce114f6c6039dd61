//! Minimal-norm and minimal-time null controls for the internally controlled
//! stochastic heat equation
//!
//! ```text
//! dy = Δy dt + χ_G u dt + a y dW   in (0, L) × (0, T),   y = 0 on the boundary,
//! ```
//!
//! discretized on a binomial scenario tree (time and noise) and a
//! finite-difference grid (space).
//!
//! The crate is `no_std` and only needs `alloc`.
//!
//! * [`tree`], [`grid`], [`field`]: discretization and data layout.
//! * [`forward`], [`adjoint`]: the state equation and its exact discrete
//!   transpose.
//! * [`hum`]: the variational characterization of the minimal-norm control,
//!   solved by conjugate gradients on the Gram operator.
//! * [`optimal_time`]: the norm function `T ↦ N(T, y0)`, its inversion by
//!   bisection, the time/norm equivalence and the bang-bang check.
//! * [`oracle`]: a dense pseudoinverse solver used to cross-check everything
//!   above at small sizes.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod adjoint;
pub mod error;
pub mod field;
pub mod forward;
pub mod grid;
pub mod hum;
pub(crate) mod math;
pub mod optimal_time;
pub mod oracle;
pub mod tree;

pub use adjoint::{initial_pairing, observe, solve_adjoint, AdjointPair};
pub use error::{Error, Result};
pub use field::{AdaptedField, FieldRole, TerminalData};
pub use forward::{solve_forward, terminal_state, CoefficientProcess, ControlSystem};
pub use grid::{process_norm, ImplicitStep, SpatialField, SpatialGrid};
pub use hum::{HumOptions, HumResult, ObservabilityEstimate};
pub use optimal_time::{
    check_bang_bang, equivalence_check, optimal_time, sweep_norm_function, BangBangReport,
    BangBangStatus, BisectionOptions, CoefficientSchedule, EquivalenceOptions, EquivalenceReport,
    HorizonPolicy, NormCurve, NormProblem, NormSample, TimeOptimalResult,
};
pub use oracle::{DenseMap, OracleComparison};
pub use tree::{Branching, NodeId, ScenarioTree};
