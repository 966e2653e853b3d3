//! Reference schemes: nearest-UAV association with an equal bandwidth split,
//! and static placement with optimized bandwidth.

use ndarray::Array2;

use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::plan::{check_plan, Plan, SlotWindow};
use crate::planner::PlannerSettings;
use crate::scenario::{AliveSet, Point, Scenario};
use crate::subproblems::{solve_bandwidth, solve_placement, BlockInputs};
use crate::utility::RiskObjective;

/// SCA steps spent on the hover positions.
const PLACEMENT_STEPS: usize = 20;

/// Nearest alive UAV to `user` at `anchors`; ties go to the lower id.
fn nearest_uav(scenario: &Scenario, anchors: &[Point], alive: &AliveSet, user: usize) -> Option<usize> {
    let site = scenario.users[user].position;
    alive.indices().min_by(|&a, &b| {
        site.dist_sq(anchors[a])
            .total_cmp(&site.dist_sq(anchors[b]))
            .then(scenario.uavs[a].id.cmp(&scenario.uavs[b].id))
    })
}

/// UAVs hover at their anchors, users attach to the nearest alive UAV and
/// each UAV splits its budget equally among its users.
pub fn nearest_equal_plan(scenario: &Scenario, window: SlotWindow, anchors: &[Point], alive: &AliveSet) -> Plan {
    let mut plan = Plan::hover(scenario.n_users(), window, anchors);
    plan.binary = true;
    let serving: Vec<Option<usize>> = (0..scenario.n_users())
        .map(|k| nearest_uav(scenario, anchors, alive, k))
        .collect();
    for u in alive.indices() {
        let users: Vec<usize> = (0..scenario.n_users()).filter(|&k| serving[k] == Some(u)).collect();
        if users.is_empty() {
            continue;
        }
        let share = scenario.uavs[u].bandwidth_budget / users.len() as f64;
        for n in 0..window.len {
            for &k in &users {
                plan.assoc[[u, k, n]] = 1.0;
                plan.bandwidth[[u, k, n]] = share;
            }
        }
    }
    plan
}

/// Straight-line flight from `anchor` toward `hover` at full speed, then hovering.
fn fly_to(anchor: Point, hover: Point, d_max: f64, n: usize) -> Point {
    let dist = anchor.dist(hover);
    if dist == 0.0 {
        return anchor;
    }
    let covered = (n as f64 * d_max).min(dist);
    anchor.lerp(hover, covered / dist)
}

/// Nearest-UAV association with one optimized hover position per UAV for the
/// window and sum-rate-optimal bandwidth. UAVs fly straight to their hover
/// positions at full speed. When the flight paths would break a constraint,
/// or do not improve the average sum rate, the UAVs stay at their anchors.
pub fn placement_plan(
    scenario: &Scenario,
    realization: &ChannelRealization,
    window: SlotWindow,
    anchors: &[Point],
    alive: &AliveSet,
    settings: &PlannerSettings,
) -> Result<Plan> {
    let expected;
    let realization = if settings.expected_fading {
        expected = ChannelRealization::expected(scenario.n_uavs(), scenario.n_users(), window);
        &expected
    } else {
        realization
    };
    let objective = RiskObjective::new(0.0, settings.rate_unit, Vec::new());
    let inputs = BlockInputs {
        scenario,
        realization,
        alive,
        objective: &objective,
        solver: &settings.solver,
    };
    let start = nearest_equal_plan(scenario, window, anchors, alive);
    let (hover, _) = solve_placement(&start, anchors, &inputs, PLACEMENT_STEPS)?;

    let mut moved = start.clone();
    moved.traj = Array2::from_shape_fn((scenario.n_uavs(), window.len), |(u, n)| {
        if alive.is_alive(u) {
            fly_to(anchors[u], hover[u], scenario.d_max, n)
        } else {
            anchors[u]
        }
    });
    let mut candidates = vec![start];
    if check_plan(&moved, scenario, anchors, alive).is_empty() {
        candidates.push(moved);
    }
    let mut best: Option<(f64, Plan)> = None;
    for mut plan in candidates {
        let b = solve_bandwidth(&plan, &inputs)?;
        plan.bandwidth = b.value;
        if best.as_ref().is_none_or(|(v, _)| b.objective > *v) {
            best = Some((b.objective, plan));
        }
    }
    let (_, plan) = best.expect("at least the anchor plan");
    let violations = check_plan(&plan, scenario, anchors, alive);
    if !violations.is_empty() {
        return Err(Error::CorruptedPlan(violations.join("; ")));
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_fading, slot_sum_rates};
    use crate::scenario::{AreaBounds, ChannelParams, UavConfig, UserSite};
    use crate::utility::mean;

    fn scenario(uavs: &[(f64, f64)], users: &[(f64, f64)], n_slots: usize) -> Scenario {
        Scenario {
            uavs: uavs
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| UavConfig {
                    id: i as u32 + 1,
                    initial_position: Point::new(x, y),
                    bandwidth_budget: 1e4,
                    tx_power: 0.1,
                })
                .collect(),
            users: users
                .iter()
                .enumerate()
                .map(|(i, &(x, y))| UserSite {
                    id: i as u32 + 1,
                    position: Point::new(x, y),
                })
                .collect(),
            channel: ChannelParams {
                ref_gain_rho: 0.01,
                rician_m: 2.0,
                noise_power: 1e-13,
            },
            n_slots,
            slot_bounds: AreaBounds::default(),
            altitude_h: 60.0,
            d_max: 25.0,
            d_min: 4.0,
            failures: Vec::new(),
            seed: 1,
            random_users: false,
        }
    }

    #[test]
    fn equidistant_user_goes_to_lower_id() {
        let s = scenario(&[(100.0, 100.0), (300.0, 100.0)], &[(200.0, 300.0)], 2);
        let p = nearest_equal_plan(&s, SlotWindow::new(1, 2), &s.initial_positions(), &AliveSet::all(2));
        assert_eq!(p.serving_uav(0, 0), Some(0));
        assert_eq!(p.serving_uav(0, 1), Some(0));
    }

    #[test]
    fn crowded_uav_splits_equally() {
        let s = scenario(&[(100.0, 100.0), (400.0, 400.0)], &[(90.0, 100.0), (110.0, 100.0), (100.0, 80.0), (100.0, 120.0)], 3);
        let alive = AliveSet::all(2);
        let p = nearest_equal_plan(&s, SlotWindow::new(1, 3), &s.initial_positions(), &alive);
        for n in 0..3 {
            for k in 0..4 {
                assert_eq!(p.bandwidth[[0, k, n]], 2.5e3);
                assert_eq!(p.bandwidth[[1, k, n]], 0.0);
            }
        }
        assert!(check_plan(&p, &s, &s.initial_positions(), &alive).is_empty());
    }

    #[test]
    fn dead_uav_gets_no_users() {
        let s = scenario(&[(100.0, 100.0), (400.0, 400.0)], &[(90.0, 100.0), (410.0, 400.0)], 2);
        let alive = AliveSet(vec![false, true]);
        let p = nearest_equal_plan(&s, SlotWindow::new(1, 2), &s.initial_positions(), &alive);
        assert_eq!(p.serving_uav(0, 0), Some(1));
        assert_eq!(p.serving_uav(1, 0), Some(1));
    }

    #[test]
    fn lone_uav_settles_over_its_user() {
        let s = scenario(&[(100.0, 100.0)], &[(160.0, 180.0)], 8);
        let w = SlotWindow::new(1, 8);
        let alive = AliveSet::all(1);
        let r = ChannelRealization::expected(1, 1, w);
        let p = placement_plan(&s, &r, w, &s.initial_positions(), &alive, &PlannerSettings::default()).unwrap();
        let last = p.traj[[0, 7]];
        assert!(last.dist(Point::new(160.0, 180.0)) <= 1e-1, "{last:?}");
        assert!((p.bandwidth[[0, 0, 7]] - 1e4).abs() < 1e-6 * 1e4);
    }

    #[test]
    fn immobile_uavs_keep_anchor_geometry() {
        let mut s = scenario(&[(100.0, 100.0), (400.0, 100.0)], &[(120.0, 90.0), (390.0, 150.0), (250.0, 250.0)], 4);
        s.d_max = 0.0;
        let w = SlotWindow::new(1, 4);
        let alive = AliveSet::all(2);
        let r = draw_fading(&s, w, 3);
        let anchors = s.initial_positions();
        let base = nearest_equal_plan(&s, w, &anchors, &alive);
        let p = placement_plan(&s, &r, w, &anchors, &alive, &PlannerSettings::default()).unwrap();
        assert_eq!(p.traj, base.traj);
        assert_eq!(p.assoc, base.assoc);
    }

    #[test]
    fn placement_never_loses_to_nearest_equal() {
        for seed in 1..4 {
            let s = Scenario::paper_setup(seed);
            let w = SlotWindow::new(1, 6);
            let alive = AliveSet::all(3);
            let r = draw_fading(&s, w, seed);
            let anchors = s.initial_positions();
            let p1 = nearest_equal_plan(&s, w, &anchors, &alive);
            let p2 = placement_plan(&s, &r, w, &anchors, &alive, &PlannerSettings::default()).unwrap();
            assert!(check_plan(&p2, &s, &anchors, &alive).is_empty());
            let m1 = mean(&slot_sum_rates(&p1, &r, &s, &alive));
            let m2 = mean(&slot_sum_rates(&p2, &r, &s, &alive));
            assert!(m2 >= m1 - 1e-9, "seed {seed}: {m2} < {m1}");
        }
    }
}
