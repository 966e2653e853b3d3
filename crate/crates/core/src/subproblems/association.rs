use ndarray::Array3;

use super::{BlockInputs, BlockOutcome, LinearSums};
use crate::channel::efficiency_table;
use crate::error::{Error, Result};
use crate::plan::Plan;
use crate::scenario::{AliveSet, Scenario};
use crate::solver::{maximize, ConcaveProgram, LinearConstraint, SolveReport, STRICT_MARGIN};

/// Variable layout of the relaxed association program: one entry per
/// (alive uav, user, slot).
pub struct AssociationLayout {
    pub index: Array3<Option<usize>>,
    pub dim: usize,
}

/// Builds the relaxed association program for `plan`'s bandwidth and
/// trajectory. Returns `None` when fewer than two UAVs are alive (the
/// simplex pins the association).
pub fn association_program<'a>(
    plan: &Plan,
    inputs: &BlockInputs<'a>,
) -> Result<Option<(ConcaveProgram<'a>, AssociationLayout)>> {
    let alive = inputs.alive;
    if alive.count() < 2 {
        return Ok(None);
    }
    let (nu, nk, nn) = plan.assoc.dim();
    let se = efficiency_table(&plan.traj, plan.window, inputs.realization, inputs.scenario, alive);

    let mut index = Array3::from_elem((nu, nk, nn), None);
    let mut dim = 0;
    for n in 0..nn {
        for k in 0..nk {
            for u in alive.indices() {
                index[[u, k, n]] = Some(dim);
                dim += 1;
            }
        }
    }
    let mut terms = Vec::with_capacity(dim);
    for ((u, k, n), slot) in index.indexed_iter() {
        if let Some(i) = slot {
            let c = plan.bandwidth[[u, k, n]] * se[[u, k, n]];
            if c != 0.0 {
                terms.push((*i, n, c));
            }
        }
    }
    let sums = LinearSums {
        terms,
        constant: vec![0.0; nn],
        objective: inputs.objective,
    };
    let (start, rhs) = association_start(plan, alive, inputs.scenario, &index, dim)?;
    let mut program = ConcaveProgram::new(
        dim,
        sums,
        start,
    )
    .with_bounds(vec![(0.0, 1.0); dim]);
    for n in 0..nn {
        for k in 0..nk {
            let row = alive.indices().map(|u| (index[[u, k, n]].unwrap(), 1.0)).collect();
            program = program.with_eq(row, 1.0);
        }
        for u in alive.indices() {
            let budget = inputs.scenario.uavs[u].bandwidth_budget;
            let row: Vec<(usize, f64)> = (0..nk)
                .filter(|&k| plan.bandwidth[[u, k, n]] > 0.0)
                .map(|k| (index[[u, k, n]].unwrap(), plan.bandwidth[[u, k, n]] / budget))
                .collect();
            if !row.is_empty() && budget > 0.0 {
                program = program.with_ineq(LinearConstraint::new(row, rhs[[u, n]]).named(format!("budget uav {u} slot {n}")));
            }
        }
    }
    Ok(Some((program, AssociationLayout { index, dim })))
}

/// Largest relative budget overrun tolerated at the start point. Barrier
/// solutions of the bandwidth block sit within rounding of the budget, so
/// the association block widens each budget just enough to start strictly
/// inside; the next bandwidth solve restores the exact budget.
const BUDGET_START_SLACK: f64 = 1e-8;

/// Blends the incoming association (renormalized over alive UAVs) with the
/// uniform one, taking the first mixture that is strictly inside the box
/// and within [`BUDGET_START_SLACK`] of every budget. Returns the start and
/// the right-hand side of each (uav, slot) budget row.
fn association_start(
    plan: &Plan,
    alive: &AliveSet,
    scenario: &Scenario,
    index: &Array3<Option<usize>>,
    dim: usize,
) -> Result<(Vec<f64>, ndarray::Array2<f64>)> {
    let (nu, nk, nn) = plan.assoc.dim();
    let m = alive.count() as f64;
    let mut incoming = vec![0.0; dim];
    let mut uniform = vec![0.0; dim];
    for n in 0..nn {
        for k in 0..nk {
            let total: f64 = alive.indices().map(|u| plan.assoc[[u, k, n]].max(0.0)).sum();
            for u in alive.indices() {
                let i = index[[u, k, n]].unwrap();
                uniform[i] = 1.0 / m;
                incoming[i] = if (total - 1.0).abs() <= 1e-12 {
                    plan.assoc[[u, k, n]].max(0.0)
                } else if total > 0.0 {
                    plan.assoc[[u, k, n]].max(0.0) / total
                } else {
                    1.0 / m
                };
            }
        }
    }
    let rows = |x: &[f64]| -> Option<ndarray::Array2<f64>> {
        if !x.iter().all(|&v| v > 0.0 && v < 1.0) {
            return None;
        }
        let mut rhs = ndarray::Array2::from_elem((nu, nn), 1.0);
        for n in 0..nn {
            for u in alive.indices() {
                let budget = scenario.uavs[u].bandwidth_budget;
                if budget <= 0.0 {
                    continue;
                }
                let load: f64 = (0..nk)
                    .map(|k| x[index[[u, k, n]].unwrap()] * plan.bandwidth[[u, k, n]].max(0.0))
                    .sum::<f64>()
                    / budget;
                if load - 1.0 > BUDGET_START_SLACK {
                    return None;
                }
                rhs[[u, n]] = f64::max(1.0, load + 2.0 * STRICT_MARGIN);
            }
        }
        Some(rhs)
    };
    let thetas = [1.0, 1.0 - 1e-12, 1.0 - 1e-9, 1.0 - 1e-6, 1.0 - 1e-3]
        .into_iter()
        .chain((1..40).map(|j| 0.5f64.powi(j)));
    for theta in thetas {
        let x: Vec<f64> = incoming
            .iter()
            .zip(&uniform)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        if let Some(rhs) = rows(&x) {
            return Ok((x, rhs));
        }
    }
    match rows(&uniform) {
        Some(rhs) => Ok((uniform, rhs)),
        None => Err(Error::CorruptedPlan(
            "bandwidth exceeds the budget for every association".into(),
        )),
    }
}

/// Relaxed association update (bandwidth and trajectory fixed).
pub fn solve_association(plan: &Plan, inputs: &BlockInputs<'_>) -> Result<BlockOutcome<Array3<f64>>> {
    let before = inputs.true_objective(plan);
    let Some((program, layout)) = association_program(plan, inputs)? else {
        let mut assoc = Array3::zeros(plan.assoc.raw_dim());
        if let Some(u) = inputs.alive.indices().next() {
            assoc.index_axis_mut(ndarray::Axis(0), u).fill(1.0);
        }
        let mut trial = plan.clone();
        trial.assoc = assoc.clone();
        let obj = inputs.true_objective(&trial);
        return Ok(BlockOutcome {
            value: assoc,
            report: SolveReport::trivial(Vec::new(), obj),
            objective_before: before,
            objective: obj,
            accepted: true,
        });
    };
    let report = maximize(&program, inputs.solver).map_err(Error::solver("association"))?;
    let mut assoc = Array3::zeros(plan.assoc.raw_dim());
    for (pos, slot) in layout.index.indexed_iter() {
        if let Some(i) = slot {
            assoc[pos] = report.x[*i];
        }
    }
    let mut trial = plan.clone();
    trial.assoc = assoc;
    trial.binary = false;
    let after = inputs.true_objective(&trial);
    let incoming_feasible = relaxed_feasible(plan, inputs);
    if after < before && incoming_feasible {
        return Ok(BlockOutcome {
            value: plan.assoc.clone(),
            report,
            objective_before: before,
            objective: before,
            accepted: false,
        });
    }
    Ok(BlockOutcome {
        value: trial.assoc,
        report,
        objective_before: before,
        objective: after,
        accepted: true,
    })
}

/// Simplex and budget feasibility of a relaxed association.
fn relaxed_feasible(plan: &Plan, inputs: &BlockInputs<'_>) -> bool {
    let (nu, nk, nn) = plan.assoc.dim();
    let alive = inputs.alive;
    (0..nn).all(|n| {
        (0..nk).all(|k| {
            let s: f64 = alive.indices().map(|u| plan.assoc[[u, k, n]]).sum();
            (s - 1.0).abs() <= 1e-9 && (0..nu).all(|u| alive.is_alive(u) || plan.assoc[[u, k, n]] == 0.0)
        }) && alive.indices().all(|u| {
            let budget = inputs.scenario.uavs[u].bandwidth_budget;
            let used: f64 = (0..nk).map(|k| plan.assoc[[u, k, n]] * plan.bandwidth[[u, k, n]]).sum();
            used <= budget * (1.0 + 1e-9)
        })
    })
}

/// Maps a relaxed association to a binary one: each (user, slot) goes to
/// the alive UAV with the largest weight, ties to the lowest UAV id.
pub fn round_association(plan: &Plan, scenario: &Scenario, alive: &AliveSet) -> Plan {
    let (_, nk, nn) = plan.assoc.dim();
    let mut order: Vec<usize> = alive.indices().collect();
    order.sort_by_key(|&u| scenario.uavs[u].id);
    let mut out = plan.clone();
    out.assoc.fill(0.0);
    out.binary = true;
    for n in 0..nn {
        for k in 0..nk {
            let mut best: Option<(usize, f64)> = None;
            for &u in &order {
                let a = plan.assoc[[u, k, n]];
                if best.is_none_or(|(_, b)| a > b) {
                    best = Some((u, a));
                }
            }
            if let Some((u, _)) = best {
                out.assoc[[u, k, n]] = 1.0;
            }
        }
    }
    out
}
