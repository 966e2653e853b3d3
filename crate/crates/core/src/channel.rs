//! Rician fading, path-loss channel gains and SINR rates.
//!
//! The small-scale power factor of a link is
//!
//! ```text
//! hbar = | sqrt(M/(M+1)) * g_los + sqrt(1/(M+1)) * g_nlos |^2
//! ```
//!
//! with `g_los` a unit-magnitude phasor of uniform angle and `g_nlos` a
//! standard circularly-symmetric complex Gaussian, so `E[hbar] = 1`. The
//! received gain is `rho * hbar / (||q - c||^2 + H^2)`.
//!
//! Failed UAVs are treated as silent: they contribute neither signal nor
//! interference to any user.

use std::io::Write;
use std::path::Path;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::plan::{Plan, SlotWindow};
use crate::scenario::{AliveSet, ChannelParams, Point, Scenario};

/// Per-(uav, user, slot) fading power factors for a window of slots.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub window: SlotWindow,
    /// (uav, user, slot relative to `window.first`).
    pub hbar: Array3<f64>,
    pub seed: u64,
}

impl ChannelRealization {
    /// Unit fading everywhere: the expected-value channel.
    pub fn expected(n_uavs: usize, n_users: usize, window: SlotWindow) -> Self {
        Self {
            window,
            hbar: Array3::ones((n_uavs, n_users, window.len)),
            seed: 0,
        }
    }

    /// Fading factor at a 1-based global slot.
    pub fn at(&self, u: usize, k: usize, slot: usize) -> f64 {
        self.hbar[[u, k, slot - self.window.first]]
    }

    /// Writes `uav,user,slot,hbar` rows (1-based ids from the scenario).
    pub fn write_csv(&self, scenario: &Scenario, path: &Path) -> Result<(), Error> {
        let io = |e: std::io::Error| Error::io(path, e);
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
        writeln!(f, "uav,user,slot,hbar").map_err(io)?;
        let (nu, nk, nn) = self.hbar.dim();
        for n in 0..nn {
            for u in 0..nu {
                for k in 0..nk {
                    writeln!(
                        f,
                        "{},{},{},{}",
                        scenario.uavs[u].id,
                        scenario.users[k].id,
                        self.window.first + n,
                        self.hbar[[u, k, n]]
                    )
                    .map_err(io)?;
                }
            }
        }
        f.flush().map_err(io)
    }
}

/// Draws i.i.d. Rician power factors for every link and slot of `window`.
///
/// Each slot uses its own RNG stream, so a slot's draws do not depend on
/// which window they were requested in.
pub fn draw_fading(scenario: &Scenario, window: SlotWindow, seed: u64) -> ChannelRealization {
    let (nu, nk) = (scenario.n_uavs(), scenario.n_users());
    let m = scenario.channel.rician_m;
    let (los, nlos) = if m.is_infinite() {
        (1.0, 0.0)
    } else {
        ((m / (m + 1.0)).sqrt(), (1.0 / (m + 1.0)).sqrt())
    };
    let mut hbar = Array3::zeros((nu, nk, window.len));
    for (n, slot) in window.slots().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(slot as u64);
        for u in 0..nu {
            for k in 0..nk {
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let re: f64 = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
                let im: f64 = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
                let hr = los * phase.cos() + nlos * re;
                let hi = los * phase.sin() + nlos * im;
                hbar[[u, k, n]] = hr * hr + hi * hi;
            }
        }
    }
    ChannelRealization { window, hbar, seed }
}

/// Linear power gain `rho * hbar / (||q - c||^2 + H^2)`.
pub fn channel_gain(uav: Point, user: Point, h_bar: f64, params: &ChannelParams, altitude: f64) -> f64 {
    params.ref_gain_rho * h_bar / (uav.dist_sq(user) + altitude * altitude)
}

/// Rate in bits/s of the link from `serving` given per-UAV gains toward one
/// user. Dead UAVs contribute neither signal nor interference.
pub fn link_rate(
    bandwidth: f64,
    gains: &[f64],
    powers: &[f64],
    alive: &AliveSet,
    serving: usize,
    noise: f64,
) -> f64 {
    if bandwidth == 0.0 || !alive.is_alive(serving) {
        return 0.0;
    }
    bandwidth * spectral_efficiency(gains, powers, alive, serving, noise)
}

/// `log2(1 + SINR)` in bits/s/Hz for the link from `serving`.
pub fn spectral_efficiency(gains: &[f64], powers: &[f64], alive: &AliveSet, serving: usize, noise: f64) -> f64 {
    if !alive.is_alive(serving) {
        return 0.0;
    }
    let interference: f64 = alive
        .indices()
        .filter(|&i| i != serving)
        .map(|i| gains[i] * powers[i])
        .sum();
    (1.0 + gains[serving] * powers[serving] / (interference + noise)).log2()
}

/// Spectral efficiency table (uav, user, window slot) for the plan's
/// trajectory. Dead UAVs get zeros.
pub fn efficiency_table(
    traj: &ndarray::Array2<Point>,
    window: SlotWindow,
    realization: &ChannelRealization,
    scenario: &Scenario,
    alive: &AliveSet,
) -> Array3<f64> {
    let (nu, nk) = (scenario.n_uavs(), scenario.n_users());
    let powers: Vec<f64> = scenario.uavs.iter().map(|u| u.tx_power).collect();
    let mut out = Array3::zeros((nu, nk, window.len));
    let mut gains = vec![0.0; nu];
    for (n, slot) in window.slots().enumerate() {
        for k in 0..nk {
            let c = scenario.users[k].position;
            for u in 0..nu {
                gains[u] = channel_gain(
                    traj[[u, n]],
                    c,
                    realization.at(u, k, slot),
                    &scenario.channel,
                    scenario.altitude_h,
                );
            }
            for u in alive.indices() {
                out[[u, k, n]] = spectral_efficiency(&gains, &powers, alive, u, scenario.channel.noise_power);
            }
        }
    }
    out
}

/// Per-user rates (user, window slot) in bits/s: `R_k[n] = sum_u a * b * se`.
pub fn user_rates(plan: &Plan, realization: &ChannelRealization, scenario: &Scenario, alive: &AliveSet) -> ndarray::Array2<f64> {
    let se = efficiency_table(&plan.traj, plan.window, realization, scenario, alive);
    rates_from_efficiency(plan, &se)
}

pub(crate) fn rates_from_efficiency(plan: &Plan, se: &Array3<f64>) -> ndarray::Array2<f64> {
    let (nu, nk, nn) = plan.assoc.dim();
    ndarray::Array2::from_shape_fn((nk, nn), |(k, n)| {
        (0..nu)
            .map(|u| plan.assoc[[u, k, n]] * plan.bandwidth[[u, k, n]] * se[[u, k, n]])
            .sum()
    })
}

/// Rate of user `k` at window slot `n`.
pub fn user_rate(
    plan: &Plan,
    realization: &ChannelRealization,
    scenario: &Scenario,
    alive: &AliveSet,
    k: usize,
    n: usize,
) -> f64 {
    let nu = scenario.n_uavs();
    let slot = plan.window.first + n;
    let c = scenario.users[k].position;
    let gains: Vec<f64> = (0..nu)
        .map(|u| {
            channel_gain(
                plan.traj[[u, n]],
                c,
                realization.at(u, k, slot),
                &scenario.channel,
                scenario.altitude_h,
            )
        })
        .collect();
    let powers: Vec<f64> = scenario.uavs.iter().map(|u| u.tx_power).collect();
    (0..nu)
        .map(|u| {
            let a = plan.assoc[[u, k, n]];
            if a == 0.0 {
                0.0
            } else {
                a * link_rate(plan.bandwidth[[u, k, n]], &gains, &powers, alive, u, scenario.channel.noise_power)
            }
        })
        .sum()
}

/// Total rate over users at window slot `n`.
pub fn sum_rate(plan: &Plan, realization: &ChannelRealization, scenario: &Scenario, alive: &AliveSet, n: usize) -> f64 {
    (0..scenario.n_users())
        .map(|k| user_rate(plan, realization, scenario, alive, k, n))
        .sum()
}

/// Per-slot sum rates over the plan's window.
pub fn slot_sum_rates(plan: &Plan, realization: &ChannelRealization, scenario: &Scenario, alive: &AliveSet) -> Vec<f64> {
    user_rates(plan, realization, scenario, alive)
        .columns()
        .into_iter()
        .map(|c| c.sum())
        .collect()
}
