//! Self-contained solver for smooth concave maximization under convex
//! inequalities, affine equalities and box bounds.
//!
//! Callers describe a problem as a [`ConcaveProgram`] built from oracles
//! and supply a strictly feasible start; [`maximize`] runs a log-barrier
//! method and [`check_kkt`] measures first-order optimality of any point.

mod barrier;
mod kkt;
mod newton;
mod program;
mod projector;

use thiserror::Error;

pub use barrier::{max_violation, maximize, write_trace_csv, EQ_TOLERANCE, STRICT_MARGIN};
#[cfg(test)]
pub(crate) use program::finite_difference_curvature;
pub use kkt::{check_kkt, KktReport};
pub use program::{
    ConcaveProgram, ConstraintOracle, Curvature, EqualitySystem, FnConstraint, LinearConstraint, ObjectiveOracle,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_outer: usize,
    pub max_inner: usize,
    pub t0: f64,
    pub t_factor: f64,
    /// Stop once `barrier_terms / t` falls below this.
    pub gap_tol: f64,
    /// Centering stops once the squared Newton decrement of the barrier
    /// function falls below this.
    pub inner_tol: f64,
    pub armijo: f64,
    pub min_step: f64,
    /// Record one [`TraceRow`] per outer iteration.
    pub trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_outer: 12,
            max_inner: 60,
            t0: 1.0,
            t_factor: 10.0,
            gap_tol: 1e-7,
            inner_tol: 1e-9,
            armijo: 1e-4,
            min_step: 1e-14,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    IterationCap,
    NumericalFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::IterationCap => "iteration-cap",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub outer: usize,
    pub inner: usize,
    pub t: f64,
    pub objective: f64,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub objective: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub max_violation: f64,
    /// Estimated Newton decrement of the barrier function at the last centering.
    pub stationarity: f64,
    pub status: SolveStatus,
    /// Objective after each outer iteration.
    pub outer_objectives: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl SolveReport {
    /// Report for a block that needed no solve (all variables pinned).
    pub fn trivial(x: Vec<f64>, objective: f64) -> Self {
        Self {
            x,
            objective,
            outer_iterations: 0,
            inner_iterations: 0,
            max_violation: 0.0,
            stationarity: 0.0,
            status: SolveStatus::Converged,
            outer_objectives: vec![objective],
            trace: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("start is not strictly feasible: {constraint} = {value:e}")]
    InfeasibleStart { constraint: String, value: f64 },
    #[error("start violates equalities by {0:e}")]
    EqualityResidual(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("point is infeasible: {constraint} violated by {violation:e}")]
    InfeasiblePoint { constraint: String, violation: f64 },
}
