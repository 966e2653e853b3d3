//! Alternating optimization over association, bandwidth and trajectories,
//! followed by binary rounding of the association and a final bandwidth
//! solve.

use std::io::Write;
use std::path::Path;

use ndarray::Axis;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::plan::{check_plan, Plan, SlotWindow};
use crate::scenario::{AliveSet, Point, Scenario};
use crate::solver::{SolveReport, SolveStatus, SolverSettings};
use crate::subproblems::{round_association, solve_association, solve_bandwidth, solve_trajectory, BlockInputs};
use crate::utility::{RiskConfig, RiskObjective};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerSettings {
    /// Upper bound on AO iterations.
    pub max_iterations: usize,
    /// Stop once the relative change of the objective falls below this.
    pub tolerance: f64,
    pub risk: RiskConfig,
    /// Count realized sums from before the window in the objective's mean.
    pub history_in_objective: bool,
    /// Bits/s per objective unit; the risk parameter acts on sums in this unit.
    pub rate_unit: f64,
    /// Plan against unit fading instead of the realized draws.
    pub expected_fading: bool,
    pub solver: SolverSettings,
}

impl Default for PlannerSettings {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            tolerance: 1e-4,
            risk: RiskConfig::risk_neutral(),
            history_in_objective: true,
            rate_unit: 1e4,
            expected_fading: false,
            solver: SolverSettings::default(),
        }
    }
}

impl PlannerSettings {
    pub fn with_mu(mut self, mu: f64) -> Self {
        self.risk = RiskConfig::from_mu(mu);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Association,
    Bandwidth,
    Trajectory,
    FinalBandwidth,
}

impl Block {
    pub fn as_str(&self) -> &'static str {
        match self {
            Block::Association => "association",
            Block::Bandwidth => "bandwidth",
            Block::Trajectory => "trajectory",
            Block::FinalBandwidth => "final-bandwidth",
        }
    }
}

/// Outcome of one block solve inside the AO loop.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub iteration: usize,
    pub block: Block,
    /// True objective after the block.
    pub objective: f64,
    pub status: SolveStatus,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub accepted: bool,
}

impl BlockRecord {
    fn new(iteration: usize, block: Block, objective: f64, report: &SolveReport, accepted: bool) -> Self {
        Self {
            iteration,
            block,
            objective,
            status: report.status,
            outer_iterations: report.outer_iterations,
            inner_iterations: report.inner_iterations,
            accepted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    /// Relaxed objective: entry 0 at the initial point, then one per AO iteration.
    pub objectives: Vec<f64>,
    pub blocks: Vec<BlockRecord>,
    /// First iteration whose relative change fell below the tolerance.
    pub converged_at: Option<usize>,
    /// Objective of the rounded plan after its bandwidth re-solve.
    pub binary_objective: f64,
}

impl ConvergenceTrace {
    pub fn iterations(&self) -> usize {
        self.objectives.len().saturating_sub(1)
    }

    /// Writes `iteration,block,objective,status` rows; iteration 0 is the
    /// initial point and the rounded plan appears as `final-bandwidth`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        self.write_rows(&mut f, "").map_err(io)?;
        f.flush().map_err(io)
    }

    pub(crate) fn write_rows(&self, f: &mut impl Write, prefix: &str) -> std::io::Result<()> {
        if let Some(first) = self.objectives.first() {
            writeln!(f, "{prefix}0,initial,{first},")?;
        }
        for b in &self.blocks {
            writeln!(f, "{prefix}{},{},{},{}", b.iteration, b.block.as_str(), b.objective, b.status.as_str())?;
        }
        Ok(())
    }
}

/// Initial decisions: uniform association over alive UAVs, equal bandwidth
/// split across all users, every UAV hovering at its anchor.
fn initial_plan(scenario: &Scenario, window: SlotWindow, anchors: &[Point], alive: &AliveSet) -> Plan {
    let mut plan = Plan::hover(scenario.n_users(), window, anchors);
    let m = alive.count() as f64;
    let nk = scenario.n_users() as f64;
    for u in alive.indices() {
        plan.assoc.index_axis_mut(Axis(0), u).fill(1.0 / m);
        plan.bandwidth
            .index_axis_mut(Axis(0), u)
            .fill(scenario.uavs[u].bandwidth_budget / nk);
    }
    plan
}

/// Plans `window` for the UAVs in `alive`, starting from `anchors`.
/// `history` holds realized per-slot sum rates preceding the window.
pub fn ao_optimize(
    scenario: &Scenario,
    realization: &ChannelRealization,
    window: SlotWindow,
    anchors: &[Point],
    alive: &AliveSet,
    settings: &PlannerSettings,
    history: &[f64],
) -> Result<(Plan, ConvergenceTrace)> {
    if window.is_empty() {
        return Err(Error::CorruptedPlan("empty planning window".into()));
    }
    let expected;
    let realization = if settings.expected_fading {
        expected = ChannelRealization::expected(scenario.n_uavs(), scenario.n_users(), window);
        &expected
    } else {
        realization
    };
    let history = if settings.history_in_objective { history.to_vec() } else { Vec::new() };
    let objective = RiskObjective::new(settings.risk.mu(), settings.rate_unit, history);
    let inputs = BlockInputs {
        scenario,
        realization,
        alive,
        objective: &objective,
        solver: &settings.solver,
    };

    let mut plan = initial_plan(scenario, window, anchors, alive);
    let mut trace = ConvergenceTrace {
        objectives: vec![inputs.true_objective(&plan)],
        ..Default::default()
    };
    for it in 1..=settings.max_iterations.max(1) {
        let a = solve_association(&plan, &inputs)?;
        plan.assoc = a.value;
        trace.blocks.push(BlockRecord::new(it, Block::Association, a.objective, &a.report, a.accepted));

        let b = solve_bandwidth(&plan, &inputs)?;
        plan.bandwidth = b.value;
        trace.blocks.push(BlockRecord::new(it, Block::Bandwidth, b.objective, &b.report, b.accepted));

        let t = solve_trajectory(&plan, &inputs)?;
        plan.traj = t.value.traj;
        trace.blocks.push(BlockRecord::new(it, Block::Trajectory, t.objective, &t.report, t.accepted));

        let prev = *trace.objectives.last().unwrap();
        let cur = inputs.true_objective(&plan);
        trace.objectives.push(cur);
        if (cur - prev).abs() <= settings.tolerance * prev.abs().max(1e-12) {
            trace.converged_at = Some(it);
            break;
        }
    }

    let mut binary = round_association(&plan, scenario, alive);
    let b = solve_bandwidth(&binary, &inputs)?;
    binary.bandwidth = b.value;
    trace.binary_objective = b.objective;
    trace.blocks.push(BlockRecord::new(
        trace.iterations(),
        Block::FinalBandwidth,
        b.objective,
        &b.report,
        b.accepted,
    ));

    let violations = check_plan(&binary, scenario, anchors, alive);
    if !violations.is_empty() {
        return Err(Error::CorruptedPlan(violations.join("; ")));
    }
    Ok((binary, trace))
}

/// Sum-rate maximization: the risk-neutral case of [`ao_optimize`].
pub fn sr_max(
    scenario: &Scenario,
    realization: &ChannelRealization,
    window: SlotWindow,
    anchors: &[Point],
    alive: &AliveSet,
    settings: &PlannerSettings,
    history: &[f64],
) -> Result<(Plan, ConvergenceTrace)> {
    let settings = PlannerSettings {
        risk: RiskConfig::risk_neutral(),
        ..*settings
    };
    ao_optimize(scenario, realization, window, anchors, alive, &settings, history)
}
