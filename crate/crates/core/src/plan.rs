//! The decision triple (association, bandwidth, trajectory) over a planning
//! window, and the feasibility check against the joint problem's constraints.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::scenario::{AliveSet, Point, Scenario};

/// Contiguous block of slots, 1-based and inclusive of `first`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotWindow {
    pub first: usize,
    pub len: usize,
}

impl SlotWindow {
    pub fn new(first: usize, len: usize) -> Self {
        Self { first, len }
    }

    /// Window covering slots `first..=last`; empty if `last < first`.
    pub fn inclusive(first: usize, last: usize) -> Self {
        Self {
            first,
            len: (last + 1).saturating_sub(first),
        }
    }

    pub fn last(&self) -> usize {
        self.first + self.len - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> {
        self.first..self.first + self.len
    }
}

/// Association, bandwidth (Hz) and positions for every (uav, user, slot) in a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub window: SlotWindow,
    /// (uav, user, slot) in [0, 1].
    pub assoc: Array3<f64>,
    /// (uav, user, slot) in Hz.
    pub bandwidth: Array3<f64>,
    /// (uav, slot).
    pub traj: Array2<Point>,
    pub binary: bool,
}

impl Plan {
    /// All-zero decisions with every UAV hovering at its anchor.
    pub fn hover(n_users: usize, window: SlotWindow, anchors: &[Point]) -> Self {
        let n_uavs = anchors.len();
        let traj = Array2::from_shape_fn((n_uavs, window.len), |(u, _)| anchors[u]);
        Self {
            window,
            assoc: Array3::zeros((n_uavs, n_users, window.len)),
            bandwidth: Array3::zeros((n_uavs, n_users, window.len)),
            traj,
            binary: false,
        }
    }

    pub fn n_uavs(&self) -> usize {
        self.assoc.shape()[0]
    }

    pub fn n_users(&self) -> usize {
        self.assoc.shape()[1]
    }

    pub fn n_slots(&self) -> usize {
        self.window.len
    }

    pub fn positions_at(&self, n: usize) -> Vec<Point> {
        (0..self.n_uavs()).map(|u| self.traj[[u, n]]).collect()
    }

    /// Serving UAV index of `user` at window slot `n` (largest association weight).
    pub fn serving_uav(&self, user: usize, n: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for u in 0..self.n_uavs() {
            let a = self.assoc[[u, user, n]];
            if a > 0.0 && best.is_none_or(|(_, b)| a > b) {
                best = Some((u, a));
            }
        }
        best.map(|(u, _)| u)
    }
}

/// Tolerances used when checking a plan against the joint problem's constraints.
pub mod tolerance {
    /// Relative slack on the per-UAV bandwidth budget.
    pub const BUDGET_REL: f64 = 1e-9;
    /// Meters of slack on the per-slot displacement limit.
    pub const MOBILITY: f64 = 1e-6;
    /// Meters of slack on the pairwise separation floor.
    pub const SEPARATION: f64 = 1e-6;
    /// Meters of slack on the flight area.
    pub const AREA: f64 = 1e-6;
    /// Meters of slack on the anchor equality.
    pub const ANCHOR: f64 = 1e-9;
    /// Slack on association bounds and one-hot sums.
    pub const ASSOC: f64 = 1e-9;
}

/// Checks every constraint of the joint problem for the UAVs in `alive`.
/// Returns human-readable descriptions of all violations.
pub fn check_plan(plan: &Plan, scenario: &Scenario, anchors: &[Point], alive: &AliveSet) -> Vec<String> {
    use tolerance::*;
    let mut out = Vec::new();
    let (nu, nk, nn) = plan.assoc.dim();
    if nu != scenario.n_uavs() || nk != scenario.n_users() || plan.traj.dim() != (nu, nn) {
        out.push("plan dimensions do not match scenario".to_string());
        return out;
    }
    for n in 0..nn {
        for k in 0..nk {
            let mut sum = 0.0;
            for u in 0..nu {
                let a = plan.assoc[[u, k, n]];
                let b = plan.bandwidth[[u, k, n]];
                if !(-ASSOC..=1.0 + ASSOC).contains(&a) {
                    out.push(format!("assoc[{u},{k},{n}] = {a} outside [0,1]"));
                }
                if plan.binary && a != 0.0 && a != 1.0 {
                    out.push(format!("assoc[{u},{k},{n}] = {a} not binary"));
                }
                if !alive.is_alive(u) && a != 0.0 {
                    out.push(format!("failed uav {u} associated with user {k} at slot {n}"));
                }
                if b < 0.0 || !b.is_finite() {
                    out.push(format!("bandwidth[{u},{k},{n}] = {b} negative"));
                }
                sum += a;
            }
            if plan.binary && (sum - 1.0).abs() > ASSOC {
                out.push(format!("user {k} at slot {n} associated {sum} times"));
            }
        }
        for u in alive.indices() {
            let budget = scenario.uavs[u].bandwidth_budget;
            let used: f64 = (0..nk).map(|k| plan.assoc[[u, k, n]] * plan.bandwidth[[u, k, n]]).sum();
            if used > budget + BUDGET_REL * budget {
                out.push(format!("uav {u} slot {n}: bandwidth {used} exceeds budget {budget}"));
            }
            let q = plan.traj[[u, n]];
            if !scenario.slot_bounds.contains(q, AREA) {
                out.push(format!("uav {u} slot {n}: position {q:?} outside area"));
            }
            if n + 1 < nn {
                let step = q.dist(plan.traj[[u, n + 1]]);
                if step > scenario.d_max + MOBILITY {
                    out.push(format!("uav {u} slot {n}: step {step} exceeds D_max"));
                }
            }
            for j in alive.indices().filter(|&j| j > u) {
                let sep = q.dist(plan.traj[[j, n]]);
                if sep < scenario.d_min - SEPARATION {
                    out.push(format!("uavs {u},{j} slot {n}: separation {sep} below D_min"));
                }
            }
        }
    }
    if nn > 0 {
        for u in alive.indices() {
            if plan.traj[[u, 0]].dist(anchors[u]) > ANCHOR {
                out.push(format!("uav {u}: first-slot position differs from anchor"));
            }
        }
    }
    out
}
