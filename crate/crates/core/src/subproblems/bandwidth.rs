use ndarray::Array3;

use super::{BlockInputs, BlockOutcome, LinearSums};
use crate::channel::efficiency_table;
use crate::error::{Error, Result};
use crate::plan::Plan;
use crate::solver::{maximize, ConcaveProgram, LinearConstraint, SolveReport};

/// Variable layout of the bandwidth program. Variables are fractions of
/// the owning UAV's budget, one per associated (alive uav, user, slot).
pub struct BandwidthLayout {
    pub index: Array3<Option<usize>>,
    pub dim: usize,
}

/// Builds the bandwidth program for `plan`'s association and trajectory.
/// Returns `None` when no link carries a positive association.
pub fn bandwidth_program<'a>(plan: &Plan, inputs: &BlockInputs<'a>) -> Option<(ConcaveProgram<'a>, BandwidthLayout)> {
    let (nu, nk, nn) = plan.assoc.dim();
    let se = efficiency_table(&plan.traj, plan.window, inputs.realization, inputs.scenario, inputs.alive);
    let mut index = Array3::from_elem((nu, nk, nn), None);
    let mut dim = 0;
    let mut terms = Vec::new();
    let mut start = Vec::new();
    let mut budgets = Vec::new();
    for n in 0..nn {
        for u in inputs.alive.indices() {
            let budget = inputs.scenario.uavs[u].bandwidth_budget;
            if budget <= 0.0 {
                continue;
            }
            let load: f64 = (0..nk).map(|k| plan.assoc[[u, k, n]]).sum();
            let share = 0.9 / load.max(1.0);
            let mut row = Vec::new();
            for k in 0..nk {
                let a = plan.assoc[[u, k, n]];
                if a <= 0.0 {
                    continue;
                }
                index[[u, k, n]] = Some(dim);
                terms.push((dim, n, a * budget * se[[u, k, n]]));
                row.push((dim, a));
                start.push(share);
                dim += 1;
            }
            if !row.is_empty() {
                budgets.push(LinearConstraint::new(row, 1.0).named(format!("budget uav {u} slot {n}")));
            }
        }
    }
    if dim == 0 {
        return None;
    }
    let sums = LinearSums {
        terms,
        constant: vec![0.0; nn],
        objective: inputs.objective,
    };
    let mut program = ConcaveProgram::new(
        dim,
        sums,
        start,
    )
    .with_bounds(vec![(0.0, 1.0); dim]);
    for c in budgets {
        program = program.with_ineq(c);
    }
    Some((program, BandwidthLayout { index, dim }))
}

fn budget_feasible(plan: &Plan, inputs: &BlockInputs<'_>) -> bool {
    let (_, nk, nn) = plan.assoc.dim();
    (0..nn).all(|n| {
        inputs.alive.indices().all(|u| {
            let budget = inputs.scenario.uavs[u].bandwidth_budget;
            let used: f64 = (0..nk).map(|k| plan.assoc[[u, k, n]] * plan.bandwidth[[u, k, n]]).sum();
            used <= budget * (1.0 + 1e-9) && (0..nk).all(|k| plan.bandwidth[[u, k, n]] >= 0.0)
        })
    })
}

/// Bandwidth update (association and trajectory fixed). Entries of
/// unassociated links and of failed or zero-budget UAVs are set to zero.
pub fn solve_bandwidth(plan: &Plan, inputs: &BlockInputs<'_>) -> Result<BlockOutcome<Array3<f64>>> {
    let before = inputs.true_objective(plan);
    let Some((program, layout)) = bandwidth_program(plan, inputs) else {
        let bw = Array3::zeros(plan.bandwidth.raw_dim());
        let mut trial = plan.clone();
        trial.bandwidth = bw.clone();
        let obj = inputs.true_objective(&trial);
        return Ok(BlockOutcome {
            value: bw,
            report: SolveReport::trivial(Vec::new(), obj),
            objective_before: before,
            objective: obj,
            accepted: true,
        });
    };
    let report = maximize(&program, inputs.solver).map_err(Error::solver("bandwidth"))?;
    let mut bw = Array3::zeros(plan.bandwidth.raw_dim());
    for ((u, k, n), slot) in layout.index.indexed_iter() {
        if let Some(i) = slot {
            bw[[u, k, n]] = report.x[*i] * inputs.scenario.uavs[u].bandwidth_budget;
        }
    }
    let mut trial = plan.clone();
    trial.bandwidth = bw;
    let after = inputs.true_objective(&trial);
    if after < before && budget_feasible(plan, inputs) {
        return Ok(BlockOutcome {
            value: plan.bandwidth.clone(),
            report,
            objective_before: before,
            objective: before,
            accepted: false,
        });
    }
    Ok(BlockOutcome {
        value: trial.bandwidth,
        report,
        objective_before: before,
        objective: after,
        accepted: true,
    })
}
