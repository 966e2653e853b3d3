//! Failure episodes: plan, execute, lose UAVs, replan with the survivors,
//! and collect rate, variance and fairness metrics.
//!
//! The slots before the first failure form one planning window. A failure
//! slot is executed on the stale plan: every UAV holds the last planned
//! position, association and bandwidth, and the failed UAV is silent. The
//! survivors replan from the following slot, anchored at their positions in
//! the failure slot and aware of every realized sum so far.

use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::{nearest_equal_plan, placement_plan};
use crate::channel::{draw_fading, efficiency_table, rates_from_efficiency, ChannelRealization};
use crate::error::{Error, Result};
use crate::plan::{Plan, SlotWindow};
use crate::planner::{ao_optimize, sr_max, ConvergenceTrace, PlannerSettings};
use crate::scenario::{AliveSet, Point, Scenario};
use crate::utility::{jain_index, mean, sum_rate_variance};

/// Environment variable capping the number of episode workers.
pub const MAX_WORKERS_ENV: &str = "UAV_MAX_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum Scheme {
    ProAlg { mu: f64 },
    SrMax,
    Baseline1,
    Baseline2,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::ProAlg { .. } => "pro-alg",
            Scheme::SrMax => "sr-max",
            Scheme::Baseline1 => "baseline1",
            Scheme::Baseline2 => "baseline2",
        }
    }

    /// Risk parameter of the scheme's objective; zero for the sum-rate schemes.
    pub fn mu(&self) -> f64 {
        match self {
            Scheme::ProAlg { mu } => *mu,
            _ => 0.0,
        }
    }

    /// Parses `pro-alg`, `sr-max`, `baseline1` or `baseline2`; `mu` is
    /// used by `pro-alg` only.
    pub fn parse(name: &str, mu: f64) -> Option<Self> {
        match name {
            "pro-alg" => Some(Scheme::ProAlg { mu }),
            "sr-max" => Some(Scheme::SrMax),
            "baseline1" => Some(Scheme::Baseline1),
            "baseline2" => Some(Scheme::Baseline2),
            _ => None,
        }
    }

    /// Whether the scheme runs the alternating optimization.
    pub fn is_iterative(&self) -> bool {
        matches!(self, Scheme::ProAlg { .. } | Scheme::SrMax)
    }
}

/// One plan returned by a scheme, with the context it must be feasible in.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRecord {
    pub plan: Plan,
    pub anchors: Vec<Point>,
    pub alive: AliveSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub scheme: Scheme,
    pub seed: u64,
    /// Realized sum rate per slot (bits/s), slot 1 first.
    pub slot_sums: Vec<f64>,
    /// Realized rate per (user, slot) in bits/s.
    pub user_rates: Array2<f64>,
    /// Rate carried by each (uav, slot) in bits/s.
    pub uav_rates: Array2<f64>,
    /// Average sum rate of each period; a new period starts at every failure slot.
    pub period_averages: Vec<f64>,
    pub variance: f64,
    /// Jain index of the users' episode-average rates.
    pub jain: f64,
    /// One trace per planning call of an iterative scheme.
    pub traces: Vec<ConvergenceTrace>,
    pub plans: Vec<PlanRecord>,
    /// UAV positions flown in each slot, (uav, slot).
    pub positions: Array2<Point>,
}

impl EpisodeMetrics {
    pub fn mu(&self) -> f64 {
        self.scheme.mu()
    }

    /// Total AO iterations over all planning calls.
    pub fn iterations(&self) -> usize {
        self.traces.iter().map(|t| t.iterations()).sum()
    }
}

fn plan_window(
    scenario: &Scenario,
    realization: &ChannelRealization,
    scheme: Scheme,
    settings: &PlannerSettings,
    window: SlotWindow,
    anchors: &[Point],
    alive: &AliveSet,
    history: &[f64],
) -> Result<(Plan, Option<ConvergenceTrace>)> {
    match scheme {
        Scheme::ProAlg { mu } => {
            let s = settings.with_mu(mu);
            let (p, t) = ao_optimize(scenario, realization, window, anchors, alive, &s, history)?;
            Ok((p, Some(t)))
        }
        Scheme::SrMax => {
            let (p, t) = sr_max(scenario, realization, window, anchors, alive, settings, history)?;
            Ok((p, Some(t)))
        }
        Scheme::Baseline1 => Ok((nearest_equal_plan(scenario, window, anchors, alive), None)),
        Scheme::Baseline2 => Ok((placement_plan(scenario, realization, window, anchors, alive, settings)?, None)),
    }
}

/// The last slot of `plan` repeated over `window`.
fn hold_last(plan: &Plan, window: SlotWindow) -> Plan {
    let last = plan.n_slots() - 1;
    let stretch3 = |a: &ndarray::Array3<f64>| {
        let col = a.index_axis(Axis(2), last);
        ndarray::Array3::from_shape_fn((a.shape()[0], a.shape()[1], window.len), |(u, k, _)| col[[u, k]])
    };
    Plan {
        window,
        assoc: stretch3(&plan.assoc),
        bandwidth: stretch3(&plan.bandwidth),
        traj: Array2::from_shape_fn((plan.n_uavs(), window.len), |(u, _)| plan.traj[[u, last]]),
        binary: plan.binary,
    }
}

/// Realized (user, slot) and (uav, slot) rates of `plan` under `alive`.
fn execute(plan: &Plan, realization: &ChannelRealization, scenario: &Scenario, alive: &AliveSet) -> (Array2<f64>, Array2<f64>) {
    let se = efficiency_table(&plan.traj, plan.window, realization, scenario, alive);
    let users = rates_from_efficiency(plan, &se);
    let (nu, nk, nn) = plan.assoc.dim();
    let uavs = Array2::from_shape_fn((nu, nn), |(u, n)| {
        (0..nk)
            .map(|k| plan.assoc[[u, k, n]] * plan.bandwidth[[u, k, n]] * se[[u, k, n]])
            .sum()
    });
    (users, uavs)
}

/// Runs one episode of `scheme` on `scenario` with fading drawn from `seed`.
pub fn run_episode(scenario: &Scenario, scheme: Scheme, seed: u64, settings: &PlannerSettings) -> Result<EpisodeMetrics> {
    let total = scenario.n_slots;
    let (nu, nk) = (scenario.n_uavs(), scenario.n_users());
    let realization = draw_fading(scenario, SlotWindow::new(1, total), seed);

    let mut user_rates = Array2::zeros((nk, total));
    let mut uav_rates = Array2::zeros((nu, total));
    let mut positions = Array2::from_elem((nu, total), Point::default());
    let mut slot_sums = vec![0.0; total];
    let mut traces = Vec::new();
    let mut plans = Vec::new();

    let mut record = |plan: &Plan, alive: &AliveSet, slot_sums: &mut [f64]| {
        let (users, uavs) = execute(plan, &realization, scenario, alive);
        for (n, slot) in plan.window.slots().enumerate() {
            for k in 0..nk {
                user_rates[[k, slot - 1]] = users[[k, n]];
            }
            for u in 0..nu {
                uav_rates[[u, slot - 1]] = uavs[[u, n]];
                positions[[u, slot - 1]] = plan.traj[[u, n]];
            }
            slot_sums[slot - 1] = users.column(n).sum();
        }
    };

    let failures = scenario.failure_slots();
    let mut anchors = scenario.initial_positions();
    let mut alive = AliveSet::all(nu);
    let mut start = 1;
    let mut current: Option<Plan> = None;
    for stop in failures.iter().copied().chain(std::iter::once(total + 1)) {
        let window = SlotWindow::inclusive(start, stop - 1);
        if !window.is_empty() {
            let history = &slot_sums[..start - 1];
            let (plan, trace) = plan_window(scenario, &realization, scheme, settings, window, &anchors, &alive, history)?;
            record(&plan, &alive, &mut slot_sums);
            traces.extend(trace);
            plans.push(PlanRecord {
                plan: plan.clone(),
                anchors: anchors.clone(),
                alive: alive.clone(),
            });
            current = Some(plan);
        }
        if stop > total {
            break;
        }
        alive = scenario.alive_at(stop);
        let held = match &current {
            Some(p) => hold_last(p, SlotWindow::new(stop, 1)),
            None => return Err(Error::CorruptedPlan(format!("no plan in force at failure slot {stop}"))),
        };
        record(&held, &alive, &mut slot_sums);
        anchors = held.positions_at(0);
        current = Some(held);
        start = stop + 1;
    }

    let mut bounds: Vec<usize> = std::iter::once(1).chain(failures.iter().copied()).collect();
    bounds.push(total + 1);
    let period_averages = bounds
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| mean(&slot_sums[w[0] - 1..w[1] - 1]))
        .collect();
    let user_means: Vec<f64> = user_rates.rows().into_iter().map(|r| r.mean().unwrap_or(0.0)).collect();
    Ok(EpisodeMetrics {
        scheme,
        seed,
        variance: sum_rate_variance(&slot_sums),
        jain: jain_index(&user_means)?,
        slot_sums,
        user_rates,
        uav_rates,
        period_averages,
        traces,
        plans,
        positions,
    })
}

/// Every scheme of a sweep: the proposed scheme at each `mu`, then SR-Max
/// and both baselines.
pub fn sweep_schemes(mus: &[f64]) -> Vec<Scheme> {
    let mut out: Vec<Scheme> = mus.iter().map(|&mu| Scheme::ProAlg { mu }).collect();
    out.extend([Scheme::SrMax, Scheme::Baseline1, Scheme::Baseline2]);
    out
}

/// Worker count: `UAV_MAX_WORKERS` if set and positive, else the number of CPUs.
pub fn worker_count() -> usize {
    std::env::var(MAX_WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `schemes` on every seed. Seed `s` uses `scenario.with_seed(s)` and
/// fading seed `s`. Rows come back ordered by seed, then scheme.
pub fn sweep(scenario: &Scenario, schemes: &[Scheme], seeds: &[u64], settings: &PlannerSettings) -> Result<Vec<EpisodeMetrics>> {
    for s in schemes {
        if !(s.mu() <= 0.0 && s.mu().is_finite()) {
            return Err(Error::Parse(format!("mu must be finite and <= 0, got {}", s.mu())));
        }
    }
    let jobs: Vec<(u64, Scheme)> = seeds
        .iter()
        .flat_map(|&seed| schemes.iter().map(move |&s| (seed, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build()
        .map_err(|e| Error::Parse(format!("worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(seed, scheme)| run_episode(&scenario.with_seed(seed), scheme, seed, settings))
            .collect()
    })
}

/// The proposed scheme at each of `mus` plus SR-Max and both baselines, per seed.
pub fn sweep_mu(scenario: &Scenario, mus: &[f64], seeds: &[u64], settings: &PlannerSettings) -> Result<Vec<EpisodeMetrics>> {
    sweep(scenario, &sweep_schemes(mus), seeds, settings)
}
