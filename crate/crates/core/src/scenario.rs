//! Experiment world: UAV fleet, ground users, channel constants, time grid
//! and the failure schedule.
//!
//! A [`Scenario`] is a plain value. [`validate_scenario`] checks every
//! structural invariant and reports all violations at once rather than
//! stopping at the first one.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// RNG stream reserved for user placement (fading uses per-slot streams).
const USER_PLACEMENT_STREAM: u64 = u64::MAX;

/// Horizontal position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(self, other: Point) -> f64 {
        self.dist_sq(other).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// `self + s * (other - self)`.
    pub fn lerp(self, other: Point, s: f64) -> Point {
        Point::new(self.x + s * (other.x - self.x), self.y + s * (other.y - self.y))
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned flight area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaBounds {
    pub q_min: Point,
    pub q_max: Point,
}

impl AreaBounds {
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        p.x >= self.q_min.x - tol
            && p.x <= self.q_max.x + tol
            && p.y >= self.q_min.y - tol
            && p.y <= self.q_max.y + tol
    }
}

impl Default for AreaBounds {
    fn default() -> Self {
        Self {
            q_min: Point::new(0.0, 0.0),
            q_max: Point::new(500.0, 500.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavConfig {
    pub id: u32,
    pub initial_position: Point,
    /// Hz.
    pub bandwidth_budget: f64,
    /// Watts, constant over the episode.
    pub tx_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSite {
    pub id: u32,
    pub position: Point,
}

/// A UAV becomes unavailable from `slot` (1-based) onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureEvent {
    pub uav_id: u32,
    pub slot: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Linear power gain at 1 m.
    pub ref_gain_rho: f64,
    /// Linear Rician factor (LoS power over scattered power).
    pub rician_m: f64,
    /// Watts.
    pub noise_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub uavs: Vec<UavConfig>,
    pub users: Vec<UserSite>,
    pub channel: ChannelParams,
    pub n_slots: usize,
    pub slot_bounds: AreaBounds,
    pub altitude_h: f64,
    pub d_max: f64,
    pub d_min: f64,
    #[serde(default)]
    pub failures: Vec<FailureEvent>,
    pub seed: u64,
    /// When set, user positions are re-drawn from the seed by [`Scenario::with_seed`].
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub random_users: bool,
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub(crate) fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Draws `count` users uniformly in `bounds` from the placement stream of `seed`.
pub fn random_users(count: usize, bounds: &AreaBounds, seed: u64) -> Vec<UserSite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(USER_PLACEMENT_STREAM);
    (0..count)
        .map(|i| {
            let x = rng.random_range(bounds.q_min.x..=bounds.q_max.x);
            let y = rng.random_range(bounds.q_min.y..=bounds.q_max.y);
            UserSite {
                id: i as u32 + 1,
                position: Point::new(x, y),
            }
        })
        .collect()
}

impl Scenario {
    /// The evaluation setup: three UAVs at 60 m, 10 kHz each, 25 m/slot,
    /// 20 slots, nine random users, one UAV lost at slot 11.
    pub fn paper_setup(seed: u64) -> Self {
        let bounds = AreaBounds::default();
        let positions = [(125.0, 375.0), (375.0, 375.0), (250.0, 125.0)];
        let uavs = positions
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| UavConfig {
                id: i as u32 + 1,
                initial_position: Point::new(x, y),
                bandwidth_budget: 10e3,
                tx_power: 0.1,
            })
            .collect();
        Self {
            uavs,
            users: random_users(9, &bounds, seed),
            channel: ChannelParams {
                ref_gain_rho: db_to_linear(-20.0),
                rician_m: db_to_linear(3.0),
                noise_power: 1e-13,
            },
            n_slots: 20,
            slot_bounds: bounds,
            altitude_h: 60.0,
            d_max: 25.0,
            d_min: 4.0,
            failures: vec![FailureEvent { uav_id: 1, slot: 11 }],
            seed,
            random_users: true,
        }
    }

    /// Same world with a different seed; users are re-drawn if they were random.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut out = self.clone();
        out.seed = seed;
        if self.random_users {
            out.users = random_users(self.users.len(), &self.slot_bounds, seed);
        }
        out
    }

    pub fn n_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn uav_index(&self, id: u32) -> Option<usize> {
        self.uavs.iter().position(|u| u.id == id)
    }

    pub fn initial_positions(&self) -> Vec<Point> {
        self.uavs.iter().map(|u| u.initial_position).collect()
    }

    /// Sorted, de-duplicated failure slots.
    pub fn failure_slots(&self) -> Vec<usize> {
        let mut slots: Vec<usize> = self.failures.iter().map(|f| f.slot).collect();
        slots.sort_unstable();
        slots.dedup();
        slots
    }

    /// Which UAVs are operating at a 1-based `slot`.
    pub fn alive_at(&self, slot: usize) -> AliveSet {
        let mut alive = vec![true; self.n_uavs()];
        for f in &self.failures {
            if f.slot <= slot {
                if let Some(i) = self.uav_index(f.uav_id) {
                    alive[i] = false;
                }
            }
        }
        AliveSet(alive)
    }
}

/// Operating flag per UAV index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliveSet(pub Vec<bool>);

impl AliveSet {
    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn is_alive(&self, u: usize) -> bool {
        self.0[u]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|a| **a).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().enumerate().filter(|(_, a)| **a).map(|(i, _)| i)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Returns the scenario unchanged iff every invariant holds, otherwise all violations.
pub fn validate_scenario(raw: Scenario) -> Result<Scenario, Vec<Violation>> {
    let mut errs = Vec::new();
    let s = &raw;

    if s.n_slots < 1 {
        errs.push(Violation::new("n_slots", "must be at least 1"));
    }
    if !(s.d_max > 0.0 && s.d_max.is_finite()) {
        errs.push(Violation::new("d_max", "must be positive and finite"));
    }
    if !(s.d_min >= 0.0 && s.d_min.is_finite()) {
        errs.push(Violation::new("d_min", "must be nonnegative and finite"));
    }
    if !(s.altitude_h > 0.0 && s.altitude_h.is_finite()) {
        errs.push(Violation::new("altitude_h", "must be positive and finite"));
    }
    let b = &s.slot_bounds;
    if !(b.q_min.is_finite() && b.q_max.is_finite() && b.q_min.x <= b.q_max.x && b.q_min.y <= b.q_max.y)
    {
        errs.push(Violation::new("slot_bounds", "q_min must be finite and not exceed q_max"));
    }

    let c = &s.channel;
    if !(c.ref_gain_rho > 0.0 && c.ref_gain_rho.is_finite()) {
        errs.push(Violation::new("channel.ref_gain_rho", "must be positive"));
    }
    if !(c.rician_m >= 0.0) {
        errs.push(Violation::new("channel.rician_m", "must be nonnegative"));
    }
    if !(c.noise_power > 0.0 && c.noise_power.is_finite()) {
        errs.push(Violation::new("channel.noise_power", "must be positive"));
    }

    if s.uavs.is_empty() {
        errs.push(Violation::new("uavs", "at least one UAV is required"));
    }
    for (i, u) in s.uavs.iter().enumerate() {
        let field = format!("uavs[{i}]");
        if s.uavs[..i].iter().any(|v| v.id == u.id) {
            errs.push(Violation::new(format!("{field}.id"), format!("duplicate UAV id {}", u.id)));
        }
        if !(u.bandwidth_budget > 0.0 && u.bandwidth_budget.is_finite()) {
            errs.push(Violation::new(format!("{field}.bandwidth_budget"), "must be positive"));
        }
        if !(u.tx_power > 0.0 && u.tx_power.is_finite()) {
            errs.push(Violation::new(format!("{field}.tx_power"), "must be positive"));
        }
        if !u.initial_position.is_finite() || !b.contains(u.initial_position, 0.0) {
            errs.push(Violation::new(
                format!("{field}.initial_position"),
                "initial position outside [q_min, q_max]",
            ));
        }
        for (j, v) in s.uavs[..i].iter().enumerate() {
            if u.initial_position.dist(v.initial_position) < s.d_min {
                errs.push(Violation::new(
                    format!("{field}.initial_position"),
                    format!("initial separation below D_min from uavs[{j}]"),
                ));
            }
        }
    }

    for (i, u) in s.users.iter().enumerate() {
        if !u.position.is_finite() {
            errs.push(Violation::new(format!("users[{i}].position"), "must be finite"));
        }
        if s.users[..i].iter().any(|v| v.id == u.id) {
            errs.push(Violation::new(format!("users[{i}].id"), format!("duplicate user id {}", u.id)));
        }
    }

    for (i, f) in s.failures.iter().enumerate() {
        if f.slot < 2 || f.slot > s.n_slots {
            errs.push(Violation::new(
                format!("failures[{i}].slot"),
                format!("failure slot out of range [2, {}]", s.n_slots),
            ));
        }
        if s.uav_index(f.uav_id).is_none() {
            errs.push(Violation::new(
                format!("failures[{i}].uav_id"),
                format!("unknown UAV id {}", f.uav_id),
            ));
        }
    }
    if !s.uavs.is_empty() && s.alive_at(usize::MAX).count() == 0 {
        errs.push(Violation::new("failures", "no UAV survives the failure schedule"));
    }

    if errs.is_empty() {
        Ok(raw)
    } else {
        Err(errs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_setup_is_valid() {
        let s = Scenario::paper_setup(7);
        let v = validate_scenario(s.clone()).unwrap();
        assert_eq!(v, s);
        assert_eq!(v.n_uavs(), 3);
        assert_eq!(v.n_slots, 20);
        assert_eq!(v.altitude_h, 60.0);
        assert_eq!(v.d_max, 25.0);
        assert_eq!(v.d_min, 4.0);
        assert!((v.channel.rician_m - 1.9953).abs() < 1e-4);
    }

    #[test]
    fn coincident_uavs_rejected() {
        let mut s = Scenario::paper_setup(1);
        s.uavs[0].initial_position = Point::new(0.0, 0.0);
        s.uavs[1].initial_position = Point::new(0.0, 0.0);
        let errs = validate_scenario(s).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("initial separation below D_min")));
    }

    #[test]
    fn failure_slot_zero_rejected() {
        let mut s = Scenario::paper_setup(1);
        s.failures[0].slot = 0;
        let errs = validate_scenario(s).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].message.contains("failure slot out of range"));
    }

    #[test]
    fn all_violations_reported() {
        let mut s = Scenario::paper_setup(1);
        s.d_max = 0.0;
        s.altitude_h = -1.0;
        s.failures.push(FailureEvent { uav_id: 99, slot: 3 });
        let errs = validate_scenario(s).unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn total_failure_rejected() {
        let mut s = Scenario::paper_setup(1);
        s.failures = vec![
            FailureEvent { uav_id: 1, slot: 5 },
            FailureEvent { uav_id: 2, slot: 6 },
            FailureEvent { uav_id: 3, slot: 7 },
        ];
        let errs = validate_scenario(s).unwrap_err();
        assert!(errs.iter().any(|e| e.field == "failures"));
    }

    #[test]
    fn no_failures_is_valid() {
        let mut s = Scenario::paper_setup(1);
        s.failures.clear();
        assert!(validate_scenario(s).is_ok());
    }

    #[test]
    fn alive_set_follows_schedule() {
        let s = Scenario::paper_setup(1);
        assert_eq!(s.alive_at(10).count(), 3);
        assert_eq!(s.alive_at(11).0, vec![false, true, true]);
    }

    #[test]
    fn reseeding_moves_random_users_only() {
        let s = Scenario::paper_setup(1);
        let t = s.with_seed(2);
        assert_ne!(s.users, t.users);
        assert_eq!(t.with_seed(1).users, s.users);
        let mut fixed = s.clone();
        fixed.random_users = false;
        assert_eq!(fixed.with_seed(5).users, s.users);
    }
}
