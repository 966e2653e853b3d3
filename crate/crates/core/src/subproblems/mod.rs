//! The three blocks of the alternating optimization: relaxed association,
//! bandwidth, and one successive-convex-approximation trajectory step.
//!
//! Every block maximizes the same risk objective of the per-slot sum rates
//! with the other two blocks held fixed, and keeps the incoming decision
//! when the solve does not improve the true objective.

mod association;
mod bandwidth;
mod trajectory;

pub use association::{association_program, round_association, solve_association};
pub use bandwidth::{bandwidth_program, solve_bandwidth};
pub use trajectory::{
    init_eta, solve_placement, solve_trajectory, surrogate_rate, trajectory_program, EtaBounds, PosRef,
    SurrogateModel, TrajectoryStep,
};

use crate::channel::{efficiency_table, rates_from_efficiency, ChannelRealization};
use crate::plan::Plan;
use crate::scenario::{AliveSet, Scenario};
use crate::solver::{Curvature, ObjectiveOracle, SolveReport, SolverSettings};
use crate::utility::RiskObjective;

/// Everything a block needs besides the plan itself.
#[derive(Debug, Clone, Copy)]
pub struct BlockInputs<'a> {
    pub scenario: &'a Scenario,
    pub realization: &'a ChannelRealization,
    pub alive: &'a AliveSet,
    pub objective: &'a RiskObjective,
    pub solver: &'a SolverSettings,
}

impl BlockInputs<'_> {
    /// Per-slot sum rates of `plan` over its window.
    pub fn slot_sums(&self, plan: &Plan) -> Vec<f64> {
        let se = efficiency_table(&plan.traj, plan.window, self.realization, self.scenario, self.alive);
        rates_from_efficiency(plan, &se)
            .columns()
            .into_iter()
            .map(|c| c.sum())
            .collect()
    }

    /// Risk objective of `plan` on the exact rate model.
    pub fn true_objective(&self, plan: &Plan) -> f64 {
        self.objective.value(&self.slot_sums(plan))
    }
}

/// Result of one block update.
#[derive(Debug, Clone)]
pub struct BlockOutcome<T> {
    pub value: T,
    pub report: SolveReport,
    /// True objective of the incoming plan.
    pub objective_before: f64,
    /// True objective with `value` substituted.
    pub objective: f64,
    /// False when the safeguard kept the incoming block.
    pub accepted: bool,
}

/// The risk objective of slot sums that are linear in the variables:
/// `sums[slot] += coef * x[i]` for each `(i, slot, coef)`.
pub(crate) struct LinearSums<'a> {
    pub terms: Vec<(usize, usize, f64)>,
    pub constant: Vec<f64>,
    pub objective: &'a RiskObjective,
}

impl ObjectiveOracle for LinearSums<'_> {
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let mut sums = self.constant.clone();
        for &(i, n, c) in &self.terms {
            sums[n] += c * x[i];
        }
        let mut d = vec![0.0; sums.len()];
        let value = self.objective.value_grad(&sums, &mut d);
        grad.fill(0.0);
        for &(i, n, c) in &self.terms {
            grad[i] += c * d[n];
        }
        value
    }

    fn add_curvature(&self, x: &[f64], out: &mut Curvature) {
        let mut sums = self.constant.clone();
        for &(i, n, c) in &self.terms {
            sums[n] += c * x[i];
        }
        let Some(middle) = self.objective.neg_hessian(&sums) else {
            return;
        };
        let mut factors = vec![Vec::new(); sums.len()];
        for &(i, n, c) in &self.terms {
            factors[n].push((i, c));
        }
        out.set_low_rank(factors, middle);
    }
}
