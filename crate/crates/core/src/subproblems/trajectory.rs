//! Successive convex approximation of the trajectory block.
//!
//! Each link's spectral efficiency is replaced by a concave lower bound in
//! auxiliary reciprocal-distance variables: `eta_lo <= 1/(d^2+H^2)` bounds
//! the received power from below and `eta_up >= 1/(d^2+H^2)` bounds the
//! interference from above. Both constraints are convexified around the
//! linearization point `q^l`, where the bound is tight.
//!
//! Variables are scaled: a position is `q^l + s*y` with `s = max(D_max, 1)`
//! and each eta is `eta^l * z`, so `y = 0, z = 1` is the linearization point.

use ndarray::{Array2, Array3};

use super::{BlockInputs, BlockOutcome};
use crate::channel::ChannelRealization;
use crate::error::{Error, Result};
use crate::plan::{tolerance, Plan, SlotWindow};
use crate::scenario::{AliveSet, Point, Scenario};
use crate::solver::{
    maximize, ConcaveProgram, ConstraintOracle, Curvature, ObjectiveOracle, SolveReport, STRICT_MARGIN,
};
use crate::utility::RiskObjective;

const LN2: f64 = std::f64::consts::LN_2;
/// Offset of the start point's `z` from 1, making the eta cuts strict.
const ETA_START_GAP: f64 = 1e-8;
/// Meters by which the flight area is widened for the barrier.
const AREA_SLACK: f64 = 1e-7;

/// Reciprocal squared-distance bounds and their linearization copies.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaBounds {
    /// (uav, user, slot).
    pub eta_lower: Array3<f64>,
    pub eta_upper: Array3<f64>,
    pub eta_lower_l: Array3<f64>,
    pub eta_upper_l: Array3<f64>,
    /// (uav, slot).
    pub traj_l: Array2<Point>,
    pub window: SlotWindow,
}

fn reciprocal(q: Point, c: Point, h2: f64) -> f64 {
    1.0 / (q.dist_sq(c) + h2)
}

/// Bounds that are all tight at `traj_l`.
pub fn init_eta(traj_l: &Array2<Point>, scenario: &Scenario, window: SlotWindow) -> EtaBounds {
    let (nu, nn) = traj_l.dim();
    let h2 = scenario.altitude_h * scenario.altitude_h;
    let eta = Array3::from_shape_fn((nu, scenario.n_users(), nn), |(u, k, n)| {
        reciprocal(traj_l[[u, n]], scenario.users[k].position, h2)
    });
    EtaBounds {
        eta_lower: eta.clone(),
        eta_upper: eta.clone(),
        eta_lower_l: eta.clone(),
        eta_upper_l: eta,
        traj_l: traj_l.clone(),
        window,
    }
}

/// Concave lower bound on the spectral efficiency (bits/s/Hz) of the link
/// from `u` to `k` at window slot `n`, built from `eta`.
pub fn surrogate_rate(
    eta: &EtaBounds,
    realization: &ChannelRealization,
    scenario: &Scenario,
    alive: &AliveSet,
    u: usize,
    k: usize,
    n: usize,
) -> f64 {
    let slot = eta.window.first + n;
    let rho = scenario.channel.ref_gain_rho;
    let noise = scenario.channel.noise_power;
    let c = |i: usize| rho * realization.at(i, k, slot) * scenario.uavs[i].tx_power;
    let received: f64 = alive.indices().map(|i| c(i) * eta.eta_lower[[i, k, n]]).sum::<f64>() + noise;
    let interference_l: f64 = alive
        .indices()
        .filter(|&i| i != u)
        .map(|i| c(i) * eta.eta_upper_l[[i, k, n]])
        .sum::<f64>()
        + noise;
    let excess: f64 = alive
        .indices()
        .filter(|&i| i != u)
        .map(|i| c(i) * (eta.eta_upper[[i, k, n]] - eta.eta_upper_l[[i, k, n]]))
        .sum();
    received.log2() - interference_l.log2() - excess / (interference_l * LN2)
}

/// Where a UAV is at a slot: a constant, or the linearization point plus a
/// scaled offset held in variables `2*index` and `2*index + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosRef {
    Fixed(Point),
    Var { index: usize, base: Point },
}

impl PosRef {
    fn at(self, x: &[f64], scale: f64) -> Point {
        match self {
            PosRef::Fixed(p) => p,
            PosRef::Var { index, base } => Point::new(base.x + scale * x[2 * index], base.y + scale * x[2 * index + 1]),
        }
    }

    /// Linearization point.
    fn lin(self) -> Point {
        match self {
            PosRef::Fixed(p) | PosRef::Var { base: p, .. } => p,
        }
    }

    fn var(self) -> Option<usize> {
        match self {
            PosRef::Fixed(_) => None,
            PosRef::Var { index, .. } => Some(index),
        }
    }

    fn add_grad(self, gx: f64, gy: f64, scale: f64, out: &mut [f64]) {
        if let Some(i) = self.var() {
            out[2 * i] += scale * gx;
            out[2 * i + 1] += scale * gy;
        }
    }
}

#[derive(Debug, Clone)]
enum Cut {
    /// `eta^l (||q - c||^2 + H^2) - 2 + z <= 0`.
    EtaLower { pos: PosRef, user: Point, eta_l: f64, h2: f64, z: usize },
    /// `1/z - eta^l (lin(q) + H^2) <= 0` with `lin` the tangent of `||q - c||^2` at `q^l`.
    EtaUpper { pos: PosRef, user: Point, eta_l: f64, h2: f64, z: usize },
    /// `(||q_a - q_b||^2 - r^2 - eps) / norm <= 0`.
    Reach { a: PosRef, b: PosRef, r2: f64, eps: f64, norm: f64 },
    /// `(d^2 - eps - tangent of ||q_a - q_b||^2 at the linearization point) / norm <= 0`.
    Separation { a: PosRef, b: PosRef, d2: f64, eps: f64, norm: f64 },
}

#[derive(Debug, Clone)]
struct ScaledCut {
    cut: Cut,
    scale: f64,
}

impl ConstraintOracle for ScaledCut {
    fn value(&self, x: &[f64]) -> f64 {
        let s = self.scale;
        match &self.cut {
            Cut::EtaLower { pos, user, eta_l, h2, z } => eta_l * (pos.at(x, s).dist_sq(*user) + h2) - 2.0 + x[*z],
            Cut::EtaUpper { pos, user, eta_l, h2, z } => {
                let q = pos.at(x, s);
                let l = pos.lin();
                let tangent = l.dist_sq(*user) + 2.0 * ((l.x - user.x) * (q.x - l.x) + (l.y - user.y) * (q.y - l.y));
                1.0 / x[*z] - eta_l * (tangent + h2)
            }
            Cut::Reach { a, b, r2, eps, norm } => (a.at(x, s).dist_sq(b.at(x, s)) - r2 - eps) / norm,
            Cut::Separation { a, b, d2, eps, norm } => (d2 - eps - separation_tangent(*a, *b, x, s)) / norm,
        }
    }

    fn add_gradient(&self, x: &[f64], w: f64, grad: &mut [f64]) {
        let s = self.scale;
        match &self.cut {
            Cut::EtaLower { pos, user, eta_l, z, .. } => {
                let q = pos.at(x, s);
                pos.add_grad(w * eta_l * 2.0 * (q.x - user.x), w * eta_l * 2.0 * (q.y - user.y), s, grad);
                grad[*z] += w;
            }
            Cut::EtaUpper { pos, user, eta_l, z, .. } => {
                let l = pos.lin();
                pos.add_grad(-w * eta_l * 2.0 * (l.x - user.x), -w * eta_l * 2.0 * (l.y - user.y), s, grad);
                grad[*z] -= w / (x[*z] * x[*z]);
            }
            Cut::Reach { a, b, norm, .. } => {
                let (qa, qb) = (a.at(x, s), b.at(x, s));
                let (gx, gy) = (2.0 * (qa.x - qb.x) * w / norm, 2.0 * (qa.y - qb.y) * w / norm);
                a.add_grad(gx, gy, s, grad);
                b.add_grad(-gx, -gy, s, grad);
            }
            Cut::Separation { a, b, norm, .. } => {
                let (la, lb) = (a.lin(), b.lin());
                let (gx, gy) = (-2.0 * (la.x - lb.x) * w / norm, -2.0 * (la.y - lb.y) * w / norm);
                a.add_grad(gx, gy, s, grad);
                b.add_grad(-gx, -gy, s, grad);
            }
        }
    }

    fn gradient_entries(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        let mut push = |p: PosRef, gx: f64, gy: f64| {
            if let Some(i) = p.var() {
                out.push((2 * i, self.scale * gx));
                out.push((2 * i + 1, self.scale * gy));
            }
        };
        let s = self.scale;
        match &self.cut {
            Cut::EtaLower { pos, user, eta_l, z, .. } => {
                let q = pos.at(x, s);
                push(*pos, eta_l * 2.0 * (q.x - user.x), eta_l * 2.0 * (q.y - user.y));
                out.push((*z, 1.0));
            }
            Cut::EtaUpper { pos, user, eta_l, z, .. } => {
                let l = pos.lin();
                push(*pos, -eta_l * 2.0 * (l.x - user.x), -eta_l * 2.0 * (l.y - user.y));
                out.push((*z, -1.0 / (x[*z] * x[*z])));
            }
            Cut::Reach { a, b, norm, .. } => {
                let (qa, qb) = (a.at(x, s), b.at(x, s));
                let (gx, gy) = (2.0 * (qa.x - qb.x) / norm, 2.0 * (qa.y - qb.y) / norm);
                push(*a, gx, gy);
                push(*b, -gx, -gy);
            }
            Cut::Separation { a, b, norm, .. } => {
                let (la, lb) = (a.lin(), b.lin());
                let (gx, gy) = (-2.0 * (la.x - lb.x) / norm, -2.0 * (la.y - lb.y) / norm);
                push(*a, gx, gy);
                push(*b, -gx, -gy);
            }
        }
    }

    fn add_curvature(&self, x: &[f64], w: f64, out: &mut Curvature) {
        let s2 = self.scale * self.scale;
        match &self.cut {
            Cut::EtaLower { pos, eta_l, .. } => {
                if let Some(i) = pos.var() {
                    out.add(2 * i, 2 * i, w * 2.0 * eta_l * s2);
                    out.add(2 * i + 1, 2 * i + 1, w * 2.0 * eta_l * s2);
                }
            }
            Cut::EtaUpper { z, .. } => out.add(*z, *z, w * 2.0 / x[*z].powi(3)),
            Cut::Reach { a, b, norm, .. } => {
                let c = w * 2.0 * s2 / norm;
                for axis in 0..2 {
                    let ia = a.var().map(|i| 2 * i + axis);
                    let ib = b.var().map(|i| 2 * i + axis);
                    for v in ia.iter().chain(&ib) {
                        out.add(*v, *v, c);
                    }
                    if let (Some(ia), Some(ib)) = (ia, ib) {
                        out.add(ia, ib, -c);
                    }
                }
            }
            Cut::Separation { .. } => {}
        }
    }

    fn label(&self) -> String {
        match &self.cut {
            Cut::EtaLower { .. } => "eta lower cut".into(),
            Cut::EtaUpper { .. } => "eta upper cut".into(),
            Cut::Reach { .. } => "mobility".into(),
            Cut::Separation { .. } => "separation".into(),
        }
    }
}

/// First-order lower bound of `||q_a - q_b||^2` at the linearization point.
fn separation_tangent(a: PosRef, b: PosRef, x: &[f64], s: f64) -> f64 {
    let (la, lb) = (a.lin(), b.lin());
    let (qa, qb) = (a.at(x, s), b.at(x, s));
    let (dx, dy) = (la.x - lb.x, la.y - lb.y);
    dx * dx + dy * dy + 2.0 * (dx * ((qa.x - qb.x) - dx) + dy * ((qa.y - qb.y) - dy))
}

#[derive(Debug, Clone)]
struct Link {
    weight: f64,
    interference_l: f64,
    ln_interference_l: f64,
    uav: usize,
}

/// Links toward one user at one slot, sharing the received-power term.
#[derive(Debug, Clone)]
struct Group {
    slot: usize,
    lower: Vec<(usize, f64)>,
    upper: Vec<(usize, usize, f64)>,
    links: Vec<Link>,
}

/// The surrogate trajectory program around a linearization point.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub refs: Array2<PosRef>,
    pub scale: f64,
    pub dim: usize,
    pub start: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    /// (uav, user, slot) reciprocal distances at the linearization point.
    pub eta_l: Array3<f64>,
    pub lower_var: Array3<Option<usize>>,
    pub upper_var: Array3<Option<usize>>,
    pub window: SlotWindow,
    groups: Vec<Group>,
    constant: Vec<f64>,
    cuts: Vec<ScaledCut>,
    noise: f64,
}

impl SurrogateModel {
    /// Builds the surrogate for the association and bandwidth of `plan`
    /// with positions given by `refs` (uav, slot). `reaches` lists pairs
    /// that must stay within a radius; separation cuts are added for every
    /// alive pair at every slot with a variable position.
    pub fn build(plan: &Plan, refs: Array2<PosRef>, reaches: &[(PosRef, PosRef, f64)], inputs: &BlockInputs<'_>) -> Result<Self> {
        let scenario = inputs.scenario;
        let alive = inputs.alive;
        let (nu, nk, nn) = plan.assoc.dim();
        let scale = scenario.d_max.max(1.0);
        let h2 = scenario.altitude_h * scenario.altitude_h;
        let rho = scenario.channel.ref_gain_rho;
        let noise = scenario.channel.noise_power;
        let n_pos = refs.iter().filter_map(|r| r.var()).map(|i| i + 1).max().unwrap_or(0);

        let eta_l = Array3::from_shape_fn((nu, nk, nn), |(u, k, n)| {
            reciprocal(refs[[u, n]].lin(), scenario.users[k].position, h2)
        });
        let mut dim = 2 * n_pos;
        let mut start = vec![0.0; dim];
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
        let area = &scenario.slot_bounds;
        for r in refs.iter() {
            if let PosRef::Var { index, base } = *r {
                let lo_x = (area.q_min.x - AREA_SLACK).min(base.x - 1e-9);
                let hi_x = (area.q_max.x + AREA_SLACK).max(base.x + 1e-9);
                let lo_y = (area.q_min.y - AREA_SLACK).min(base.y - 1e-9);
                let hi_y = (area.q_max.y + AREA_SLACK).max(base.y + 1e-9);
                bounds[2 * index] = ((lo_x - base.x) / scale, (hi_x - base.x) / scale);
                bounds[2 * index + 1] = ((lo_y - base.y) / scale, (hi_y - base.y) / scale);
            }
        }

        let mut lower_var = Array3::from_elem((nu, nk, nn), None);
        let mut upper_var = Array3::from_elem((nu, nk, nn), None);
        let mut groups = Vec::new();
        let mut constant = vec![0.0; nn];
        let mut cuts = Vec::new();
        let cut = |c: Cut| ScaledCut { cut: c, scale };
        for n in 0..nn {
            let slot = plan.window.first + n;
            let moving = alive.indices().any(|u| refs[[u, n]].var().is_some());
            for k in 0..nk {
                let user = scenario.users[k].position;
                let coef: Vec<f64> = (0..nu)
                    .map(|i| rho * inputs.realization.at(i, k, slot) * scenario.uavs[i].tx_power)
                    .collect();
                let active: Vec<(usize, f64)> = alive
                    .indices()
                    .map(|u| (u, plan.assoc[[u, k, n]] * plan.bandwidth[[u, k, n]]))
                    .filter(|&(_, w)| w > 0.0)
                    .collect();
                if active.is_empty() {
                    continue;
                }
                if !moving {
                    let received: f64 = alive.indices().map(|i| coef[i] * eta_l[[i, k, n]]).sum::<f64>() + noise;
                    for &(u, w) in &active {
                        let interference = received - coef[u] * eta_l[[u, k, n]];
                        constant[n] += w * (received / interference).log2();
                    }
                    continue;
                }
                let mut group = Group {
                    slot: n,
                    lower: Vec::new(),
                    upper: Vec::new(),
                    links: Vec::new(),
                };
                for i in alive.indices() {
                    let pos = refs[[i, n]];
                    let q0 = pos.lin();
                    let e = eta_l[[i, k, n]];
                    let z0 = 2.0 - e * (q0.dist_sq(user) + h2) - ETA_START_GAP;
                    lower_var[[i, k, n]] = Some(dim);
                    group.lower.push((dim, coef[i] * e));
                    cuts.push(cut(Cut::EtaLower { pos, user, eta_l: e, h2, z: dim }));
                    start.push(z0);
                    bounds.push((0.0, f64::INFINITY));
                    dim += 1;
                    if active.iter().any(|&(u, _)| u != i) {
                        upper_var[[i, k, n]] = Some(dim);
                        group.upper.push((i, dim, coef[i] * e));
                        cuts.push(cut(Cut::EtaUpper { pos, user, eta_l: e, h2, z: dim }));
                        start.push(1.0 + ETA_START_GAP);
                        bounds.push((0.0, f64::INFINITY));
                        dim += 1;
                    }
                }
                for &(u, w) in &active {
                    let interference_l: f64 = alive
                        .indices()
                        .filter(|&i| i != u)
                        .map(|i| coef[i] * eta_l[[i, k, n]])
                        .sum::<f64>()
                        + noise;
                    group.links.push(Link {
                        weight: w,
                        interference_l,
                        ln_interference_l: interference_l.ln(),
                        uav: u,
                    });
                }
                groups.push(group);
            }
        }

        let x0 = start.clone();
        let strict = |need: f64, norm: f64, base: f64| base.max(need + 2.0 * STRICT_MARGIN * norm);
        for &(a, b, r) in reaches {
            if a.var().is_none() && b.var().is_none() {
                continue;
            }
            let r2 = r * r;
            let norm = r2.max(1.0);
            let need = a.at(&x0, scale).dist_sq(b.at(&x0, scale)) - r2;
            if need > tolerance::MOBILITY * r.max(1e-3) {
                return Err(Error::InfeasibleLinearization(format!(
                    "step of {} m exceeds the limit {r} m",
                    need.max(0.0).sqrt()
                )));
            }
            let eps = strict(need, norm, 1e-9 * norm);
            cuts.push(cut(Cut::Reach { a, b, r2, eps, norm }));
        }
        let d_min = scenario.d_min;
        if d_min > 0.0 {
            let d2 = d_min * d_min;
            let norm = d2.max(1.0);
            let mut seen: Vec<(PosRef, PosRef)> = Vec::new();
            for n in 0..nn {
                let ids: Vec<usize> = alive.indices().collect();
                for (ai, &u) in ids.iter().enumerate() {
                    for &j in &ids[ai + 1..] {
                        let (a, b) = (refs[[u, n]], refs[[j, n]]);
                        if (a.var().is_none() && b.var().is_none()) || seen.contains(&(a, b)) {
                            continue;
                        }
                        seen.push((a, b));
                        let need = d2 - separation_tangent(a, b, &x0, scale);
                        if need > 2.0 * tolerance::SEPARATION * d_min {
                            return Err(Error::InfeasibleLinearization(format!(
                                "uavs {u} and {j} closer than D_min at slot {n}"
                            )));
                        }
                        let eps = strict(need, norm, 1e-8 * d2.min(1.0));
                        cuts.push(cut(Cut::Separation { a, b, d2, eps, norm }));
                    }
                }
            }
        }

        Ok(Self {
            refs,
            scale,
            dim,
            start,
            bounds,
            eta_l,
            lower_var,
            upper_var,
            window: plan.window,
            groups,
            constant,
            cuts,
            noise,
        })
    }

    /// Surrogate per-slot sum rates (bits/s) and, if `grad_sums` is given,
    /// accumulates `sum_n grad_sums[n] * d sums[n] / dx` into `grad`.
    fn sums(&self, x: &[f64], dsums: Option<(&[f64], &mut [f64])>) -> Vec<f64> {
        let mut sums = self.constant.clone();
        for g in &self.groups {
            let received: f64 = g.lower.iter().map(|&(z, c)| c * x[z]).sum::<f64>() + self.noise;
            let ln_received = received.ln();
            for link in &g.links {
                let excess: f64 = g
                    .upper
                    .iter()
                    .filter(|&&(i, _, _)| i != link.uav)
                    .map(|&(_, z, c)| c * (x[z] - 1.0))
                    .sum();
                let f = (ln_received - link.ln_interference_l - excess / link.interference_l) / LN2;
                sums[g.slot] += link.weight * f;
            }
        }
        if let Some((d, grad)) = dsums {
            grad.fill(0.0);
            for g in &self.groups {
                let dn = d[g.slot];
                let received: f64 = g.lower.iter().map(|&(z, c)| c * x[z]).sum::<f64>() + self.noise;
                let total_w: f64 = g.links.iter().map(|l| l.weight).sum();
                for &(z, c) in &g.lower {
                    grad[z] += dn * total_w * c / (received * LN2);
                }
                for &(i, z, c) in &g.upper {
                    let w: f64 = g
                        .links
                        .iter()
                        .filter(|l| l.uav != i)
                        .map(|l| l.weight / l.interference_l)
                        .sum();
                    grad[z] -= dn * w * c / LN2;
                }
            }
        }
        sums
    }

    /// Surrogate per-slot sum rates in bits/s.
    pub fn surrogate_sums(&self, x: &[f64]) -> Vec<f64> {
        self.sums(x, None)
    }

    /// Positions (uav, slot) encoded by `x`.
    pub fn positions(&self, x: &[f64]) -> Array2<Point> {
        self.refs.mapv(|r| r.at(x, self.scale))
    }

    /// Eta bounds encoded by `x`; entries without a variable take the exact
    /// reciprocal distance at the decoded positions.
    pub fn eta_bounds(&self, x: &[f64], scenario: &Scenario) -> EtaBounds {
        let traj = self.positions(x);
        let h2 = scenario.altitude_h * scenario.altitude_h;
        let exact = |(u, k, n): (usize, usize, usize)| reciprocal(traj[[u, n]], scenario.users[k].position, h2);
        let eta_lower = Array3::from_shape_fn(self.eta_l.raw_dim(), |p| match self.lower_var[p] {
            Some(z) => self.eta_l[p] * x[z],
            None => exact(p),
        });
        let eta_upper = Array3::from_shape_fn(self.eta_l.raw_dim(), |p| match self.upper_var[p] {
            Some(z) => self.eta_l[p] * x[z],
            None => exact(p),
        });
        EtaBounds {
            eta_lower,
            eta_upper,
            eta_lower_l: self.eta_l.clone(),
            eta_upper_l: self.eta_l.clone(),
            traj_l: self.refs.mapv(|r| r.lin()),
            window: self.window,
        }
    }
}

struct SurrogateObjective<'a> {
    model: &'a SurrogateModel,
    objective: &'a RiskObjective,
}

impl ObjectiveOracle for SurrogateObjective<'_> {
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let sums = self.model.sums(x, None);
        let mut d = vec![0.0; sums.len()];
        let v = self.objective.value_grad(&sums, &mut d);
        self.model.sums(x, Some((&d, grad)));
        v
    }

    fn add_curvature(&self, x: &[f64], out: &mut Curvature) {
        let sums = self.model.sums(x, None);
        let mut d = vec![0.0; sums.len()];
        self.objective.value_grad(&sums, &mut d);
        let mut factors = vec![Vec::new(); sums.len()];
        for g in &self.model.groups {
            let received: f64 = g.lower.iter().map(|&(z, c)| c * x[z]).sum::<f64>() + self.model.noise;
            let total_w: f64 = g.links.iter().map(|l| l.weight).sum();
            // -hess of total_w * log2(received)
            out.add_outer(&g.lower, d[g.slot] * total_w / (LN2 * received * received));
            let col = &mut factors[g.slot];
            col.extend(g.lower.iter().map(|&(z, c)| (z, total_w * c / (received * LN2))));
            for &(i, z, c) in &g.upper {
                let w: f64 = g.links.iter().filter(|l| l.uav != i).map(|l| l.weight / l.interference_l).sum();
                col.push((z, -w * c / LN2));
            }
        }
        if let Some(middle) = self.objective.neg_hessian(&sums) {
            out.set_low_rank(factors, middle);
        }
    }
}

/// The convex program of one SCA step for `model` under `objective`.
pub fn trajectory_program<'a>(model: &'a SurrogateModel, objective: &'a RiskObjective) -> ConcaveProgram<'a> {
    let mut program = ConcaveProgram::new(model.dim, SurrogateObjective { model, objective }, model.start.clone())
        .with_bounds(model.bounds.clone());
    for c in &model.cuts {
        program = program.with_ineq(c.clone());
    }
    program
}

/// Checks mobility, area, anchor and separation of `traj` for alive UAVs.
fn check_linearization_point(traj: &Array2<Point>, scenario: &Scenario, alive: &AliveSet) -> Result<()> {
    let (_, nn) = traj.dim();
    for u in alive.indices() {
        for n in 0..nn {
            let q = traj[[u, n]];
            if !q.is_finite() || !scenario.slot_bounds.contains(q, tolerance::AREA) {
                return Err(Error::InfeasibleLinearization(format!("uav {u} outside the area at slot {n}")));
            }
            if n + 1 < nn && q.dist(traj[[u, n + 1]]) > scenario.d_max + tolerance::MOBILITY {
                return Err(Error::InfeasibleLinearization(format!("uav {u} exceeds D_max after slot {n}")));
            }
            for j in alive.indices().filter(|&j| j > u) {
                if q.dist(traj[[j, n]]) < scenario.d_min - tolerance::SEPARATION {
                    return Err(Error::InfeasibleLinearization(format!(
                        "uavs {u} and {j} closer than D_min at slot {n}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Trajectories after one SCA step with their eta bounds.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    pub traj: Array2<Point>,
    pub eta: EtaBounds,
}

/// One SCA step on the trajectories of alive UAVs with association and
/// bandwidth fixed. The first slot stays at the incoming (anchor) position.
pub fn solve_trajectory(plan: &Plan, inputs: &BlockInputs<'_>) -> Result<BlockOutcome<TrajectoryStep>> {
    let scenario = inputs.scenario;
    check_linearization_point(&plan.traj, scenario, inputs.alive)?;
    let before = inputs.true_objective(plan);
    let keep = |report: SolveReport, accepted: bool| BlockOutcome {
        value: TrajectoryStep {
            traj: plan.traj.clone(),
            eta: init_eta(&plan.traj, scenario, plan.window),
        },
        report,
        objective_before: before,
        objective: before,
        accepted,
    };
    let (nu, nn) = plan.traj.dim();
    if nn < 2 || scenario.d_max <= 0.0 {
        return Ok(keep(SolveReport::trivial(Vec::new(), before), true));
    }
    let mut next = 0;
    let refs = Array2::from_shape_fn((nu, nn), |(u, n)| {
        if n == 0 || !inputs.alive.is_alive(u) {
            PosRef::Fixed(plan.traj[[u, n]])
        } else {
            next += 1;
            PosRef::Var {
                index: next - 1,
                base: plan.traj[[u, n]],
            }
        }
    });
    let reaches: Vec<(PosRef, PosRef, f64)> = inputs
        .alive
        .indices()
        .flat_map(|u| (0..nn - 1).map(move |n| (u, n)))
        .map(|(u, n)| (refs[[u, n]], refs[[u, n + 1]], scenario.d_max))
        .collect();
    let model = SurrogateModel::build(plan, refs, &reaches, inputs)?;
    let program = trajectory_program(&model, inputs.objective);
    let report = maximize(&program, inputs.solver).map_err(Error::solver("trajectory"))?;
    let traj = model.positions(&report.x);
    let mut trial = plan.clone();
    trial.traj = traj.clone();
    let after = inputs.true_objective(&trial);
    if after < before {
        return Ok(keep(report, false));
    }
    let eta = model.eta_bounds(&report.x, scenario);
    Ok(BlockOutcome {
        value: TrajectoryStep { traj, eta },
        report,
        objective_before: before,
        objective: after,
        accepted: true,
    })
}

/// Slot-constant hover positions for alive UAVs, reachable from `anchors`
/// within the window, found by repeated SCA steps. Slot 0 of the model
/// stays at the anchors; every later slot uses the hover position.
pub fn solve_placement(
    plan: &Plan,
    anchors: &[Point],
    inputs: &BlockInputs<'_>,
    max_steps: usize,
) -> Result<(Vec<Point>, Vec<SolveReport>)> {
    let scenario = inputs.scenario;
    let (nu, nn) = plan.traj.dim();
    let mut hover: Vec<Point> = anchors.to_vec();
    let mut reports = Vec::new();
    let reach = (nn.saturating_sub(1)) as f64 * scenario.d_max;
    if nn < 2 || reach <= 0.0 {
        return Ok((hover, reports));
    }
    let hover_plan = |h: &[Point]| {
        let mut p = plan.clone();
        p.traj = Array2::from_shape_fn((nu, nn), |(u, n)| if n == 0 { anchors[u] } else { h[u] });
        p
    };
    let mut current = inputs.true_objective(&hover_plan(&hover));
    for _ in 0..max_steps {
        let mut next = 0;
        let var_of: Vec<Option<usize>> = (0..nu)
            .map(|u| {
                inputs.alive.is_alive(u).then(|| {
                    next += 1;
                    next - 1
                })
            })
            .collect();
        let refs = Array2::from_shape_fn((nu, nn), |(u, n)| match var_of[u] {
            Some(index) if n > 0 => PosRef::Var { index, base: hover[u] },
            _ if n == 0 => PosRef::Fixed(anchors[u]),
            _ => PosRef::Fixed(hover[u]),
        });
        let reaches: Vec<(PosRef, PosRef, f64)> = inputs
            .alive
            .indices()
            .map(|u| (PosRef::Fixed(anchors[u]), refs[[u, 1]], reach))
            .collect();
        let model = SurrogateModel::build(&hover_plan(&hover), refs, &reaches, inputs)?;
        let program = trajectory_program(&model, inputs.objective);
        let report = maximize(&program, inputs.solver).map_err(Error::solver("placement"))?;
        let traj = model.positions(&report.x);
        let candidate: Vec<Point> = (0..nu).map(|u| traj[[u, 1]]).collect();
        reports.push(report);
        let value = inputs.true_objective(&hover_plan(&candidate));
        if value < current {
            break;
        }
        let moved = candidate.iter().zip(&hover).map(|(a, b)| a.dist(*b)).fold(0.0, f64::max);
        let gain = value - current;
        hover = candidate;
        current = value;
        if moved < 1e-3 || gain <= 1e-10 * (1.0 + current.abs()) {
            break;
        }
    }
    Ok((hover, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{draw_fading, spectral_efficiency, channel_gain};
    use crate::solver::SolverSettings;
    use crate::subproblems::testing::{curvature_error, gradient_error, objective_curvatures, scenario, window};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn true_se(traj: &Array2<Point>, r: &ChannelRealization, s: &Scenario, alive: &AliveSet, u: usize, k: usize, n: usize) -> f64 {
        let slot = r.window.first + n;
        let gains: Vec<f64> = (0..s.n_uavs())
            .map(|i| channel_gain(traj[[i, n]], s.users[k].position, r.at(i, k, slot), &s.channel, s.altitude_h))
            .collect();
        let powers: Vec<f64> = s.uavs.iter().map(|x| x.tx_power).collect();
        spectral_efficiency(&gains, &powers, alive, u, s.channel.noise_power)
    }

    #[test]
    fn init_eta_above_the_user() {
        let s = scenario(&[(100.0, 100.0)], &[(100.0, 100.0)], 2);
        let traj = Array2::from_elem((1, 2), Point::new(100.0, 100.0));
        let e = init_eta(&traj, &s, window(2));
        assert!(e.eta_lower.iter().all(|&v| (v - 1.0 / 3600.0).abs() < 1e-18));
        assert_eq!(e.eta_lower, e.eta_upper_l);
    }

    #[test]
    fn eta_cuts_are_tight_at_the_linearization_point() {
        let s = scenario(&[(100.0, 100.0), (300.0, 200.0)], &[(0.0, 0.0), (250.0, 260.0)], 3);
        let traj = Array2::from_shape_fn((2, 3), |(u, n)| Point::new(100.0 + 50.0 * u as f64, 90.0 + 7.0 * n as f64));
        let e = init_eta(&traj, &s, window(3));
        let h2 = 3600.0;
        for ((u, k, n), &eta) in e.eta_lower.indexed_iter() {
            let d2 = traj[[u, n]].dist_sq(s.users[k].position);
            let lower = eta * (d2 + h2) - 2.0 + 1.0;
            let upper = 1.0 - eta * (d2 + h2);
            assert!(lower.abs() < 1e-12 && upper.abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_is_exact_without_interference() {
        let s = scenario(&[(100.0, 100.0)], &[(130.0, 80.0)], 1);
        let r = draw_fading(&s, window(1), 2);
        let traj = Array2::from_elem((1, 1), Point::new(100.0, 100.0));
        let e = init_eta(&traj, &s, window(1));
        let alive = AliveSet::all(1);
        let f = surrogate_rate(&e, &r, &s, &alive, 0, 0, 0);
        let signal = 0.01 * e.eta_lower[[0, 0, 0]] * r.at(0, 0, 1) * 0.1;
        let expected = (signal + 1e-13).log2() - (1e-13f64).log2();
        assert!((f - expected).abs() < 1e-9);
        assert!((f - true_se(&traj, &r, &s, &alive, 0, 0, 0)).abs() < 1e-9 * f);
    }

    #[test]
    fn surrogate_lower_bounds_the_rate() {
        let s = scenario(&[(0.0, 0.0), (0.0, 0.0), (0.0, 0.0)], &[(0.0, 0.0), (0.0, 0.0)], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let alive = AliveSet::all(3);
        let mut sc = s.clone();
        for _ in 0..200 {
            for u in &mut sc.users {
                u.position = Point::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0));
            }
            let traj_l = Array2::from_shape_fn((3, 2), |_| Point::new(rng.random_range(0.0..500.0), rng.random_range(0.0..500.0)));
            let traj = traj_l.mapv(|p| Point::new(p.x + rng.random_range(-25.0..25.0), p.y + rng.random_range(-25.0..25.0)));
            let r = draw_fading(&sc, window(2), rng.random());
            let mut e = init_eta(&traj_l, &sc, window(2));
            let exact = init_eta(&traj, &sc, window(2));
            for (p, v) in e.eta_lower.indexed_iter_mut() {
                *v = exact.eta_lower[p] * rng.random_range(0.5..1.0);
            }
            for (p, v) in e.eta_upper.indexed_iter_mut() {
                *v = exact.eta_upper[p] * rng.random_range(1.0..2.0);
            }
            for u in 0..3 {
                for k in 0..2 {
                    for n in 0..2 {
                        let f = surrogate_rate(&e, &r, &sc, &alive, u, k, n);
                        let t = true_se(&traj, &r, &sc, &alive, u, k, n);
                        assert!(f <= t + 1e-9 * t.abs().max(1.0), "{f} > {t}");
                    }
                }
            }
        }
    }

    fn fixture(mu: f64) -> (Scenario, ChannelRealization, Plan) {
        let s = scenario(
            &[(100.0, 100.0), (400.0, 120.0), (250.0, 400.0)],
            &[(150.0, 130.0), (350.0, 180.0), (240.0, 330.0), (60.0, 420.0)],
            4,
        );
        let r = draw_fading(&s, window(4), 8);
        let mut p = Plan::hover(4, window(4), &s.initial_positions());
        p.assoc.fill(1.0 / 3.0);
        p.bandwidth.fill(2.5e3);
        let _ = mu;
        (s, r, p)
    }

    #[test]
    fn surrogate_objective_matches_true_objective_at_linearization() {
        let (s, r, p) = fixture(-5.0);
        let alive = AliveSet::all(3);
        let obj = RiskObjective::new(-5.0, 1e3, vec![]);
        let st = SolverSettings::default();
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let (nu, nn) = p.traj.dim();
        let mut next = 0;
        let refs = Array2::from_shape_fn((nu, nn), |(u, n)| {
            if n == 0 {
                PosRef::Fixed(p.traj[[u, n]])
            } else {
                next += 1;
                PosRef::Var { index: next - 1, base: p.traj[[u, n]] }
            }
        });
        let model = SurrogateModel::build(&p, refs, &[], &inputs).unwrap();
        let mut x = vec![0.0; model.dim];
        for z in model.lower_var.iter().chain(model.upper_var.iter()).flatten() {
            x[*z] = 1.0;
        }
        let sur = model.surrogate_sums(&x);
        let exact = inputs.slot_sums(&p);
        for (a, b) in sur.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-9 * b.abs(), "{a} vs {b}");
        }
    }

    #[test]
    fn trajectory_gradient_matches_differences() {
        let (s, r, p) = fixture(-5.0);
        let alive = AliveSet::all(3);
        let obj = RiskObjective::new(-5.0, 1e3, vec![40e3]);
        let st = SolverSettings::default();
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let mut next = 0;
        let refs = Array2::from_shape_fn((3, 4), |(u, n)| {
            if n == 0 {
                PosRef::Fixed(p.traj[[u, n]])
            } else {
                next += 1;
                PosRef::Var { index: next - 1, base: p.traj[[u, n]] }
            }
        });
        let model = SurrogateModel::build(&p, refs, &[], &inputs).unwrap();
        let prog = trajectory_program(&model, &obj);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x: Vec<f64> = model
                .start
                .iter()
                .enumerate()
                .map(|(i, v)| if i < 18 { rng.random_range(-1.0..1.0) } else { v * rng.random_range(0.8..1.2) })
                .collect();
            assert!(gradient_error(&prog, &x, 1e-6) < 1e-4);
            let (analytic, numeric) = objective_curvatures(&prog, &x);
            let err = curvature_error(&analytic, &numeric, model.dim, 1e-12);
            assert!(err < 1e-4, "objective curvature {err:e}");
        }
        for c in &model.cuts {
            let x: Vec<f64> = model.start.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
            let mut analytic = Curvature::default();
            c.add_curvature(&x, 1.0, &mut analytic);
            let mut numeric = Curvature::default();
            crate::solver::finite_difference_curvature(
                &x,
                1.0,
                |p, g| {
                    g.fill(0.0);
                    c.add_gradient(p, 1.0, g);
                    true
                },
                &mut numeric,
            );
            let err = curvature_error(&analytic, &numeric, model.dim, 1e-12);
            assert!(err < 1e-4, "{} curvature {err:e}", c.label());
            let mut dense = vec![0.0; model.dim];
            c.add_gradient(&x, 1.0, &mut dense);
            let mut entries = Vec::new();
            c.gradient_entries(&x, &mut entries);
            let mut sparse = vec![0.0; model.dim];
            for &(i, v) in &entries {
                sparse[i] += v;
            }
            assert_eq!(dense, sparse, "{}", c.label());
        }
        for c in &model.cuts {
            let x: Vec<f64> = model.start.iter().map(|v| v + rng.random_range(-0.05..0.05)).collect();
            let mut g = vec![0.0; model.dim];
            c.add_gradient(&x, 1.0, &mut g);
            for i in 0..model.dim {
                let mut xp = x.clone();
                xp[i] += 1e-6;
                let mut xm = x.clone();
                xm[i] -= 1e-6;
                let fd = (c.value(&xp) - c.value(&xm)) / 2e-6;
                assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1.0), "{} {i}: {fd} vs {}", c.label(), g[i]);
            }
        }
    }

    #[test]
    fn lone_uav_flies_straight_at_the_user() {
        let s = scenario(&[(100.0, 100.0)], &[(400.0, 400.0)], 5);
        let alive = AliveSet::all(1);
        let r = ChannelRealization::expected(1, 1, window(5));
        let obj = RiskObjective::new(0.0, 1e3, vec![]);
        let st = SolverSettings::default();
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let mut p = Plan::hover(1, window(5), &s.initial_positions());
        p.assoc.fill(1.0);
        p.bandwidth.fill(1e4);
        let mut plan = p.clone();
        for _ in 0..8 {
            let out = solve_trajectory(&plan, &inputs).unwrap();
            plan.traj = out.value.traj;
        }
        let dir = Point::new(300.0f64.sqrt() / 600.0f64.sqrt(), 300.0f64.sqrt() / 600.0f64.sqrt());
        for n in 0..5 {
            let want = Point::new(100.0 + 25.0 * n as f64 * dir.x, 100.0 + 25.0 * n as f64 * dir.y);
            assert!(plan.traj[[0, n]].dist(want) < 1e-2, "slot {n}: {:?} vs {want:?}", plan.traj[[0, n]]);
        }
    }

    #[test]
    fn single_slot_window_is_unchanged() {
        let (s, r, p0) = fixture(-2.0);
        let mut p = Plan::hover(4, window(1), &s.initial_positions());
        p.assoc.fill(1.0 / 3.0);
        p.bandwidth.fill(2.5e3);
        let _ = p0;
        let alive = AliveSet::all(3);
        let obj = RiskObjective::new(-2.0, 1e3, vec![]);
        let st = SolverSettings::default();
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let out = solve_trajectory(&p, &inputs).unwrap();
        assert_eq!(out.value.traj, p.traj);
    }

    #[test]
    fn separation_survives_opposing_pulls() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let cx = rng.random_range(150.0..350.0);
            let cy = rng.random_range(150.0..350.0);
            // UAV 0 is pulled toward the user behind UAV 1 and vice versa
            let s = scenario(&[(cx, cy), (cx + 4.0, cy)], &[(cx + 60.0, cy), (cx - 60.0, cy)], 4);
            let alive = AliveSet::all(2);
            let r = ChannelRealization::expected(2, 2, window(4));
            let obj = RiskObjective::new(-1.0, 1e3, vec![]);
            let st = SolverSettings::default();
            let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
            let mut p = Plan::hover(2, window(4), &s.initial_positions());
            for n in 0..4 {
                p.assoc[[0, 0, n]] = 1.0;
                p.assoc[[1, 1, n]] = 1.0;
            }
            p.bandwidth.fill(1e4);
            let mut plan = p.clone();
            for _ in 0..4 {
                plan.traj = solve_trajectory(&plan, &inputs).unwrap().value.traj;
                for n in 0..4 {
                    assert!(plan.traj[[0, n]].dist(plan.traj[[1, n]]) >= 4.0 - 1e-6);
                }
            }
        }
    }

    #[test]
    fn infeasible_incoming_trajectory_is_rejected() {
        let (s, r, mut p) = fixture(0.0);
        p.traj[[0, 2]] = Point::new(300.0, 300.0);
        let alive = AliveSet::all(3);
        let obj = RiskObjective::new(0.0, 1e3, vec![]);
        let st = SolverSettings::default();
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let err = solve_trajectory(&p, &inputs).unwrap_err();
        assert!(err.to_string().starts_with("SCA requires feasible linearization point"));
    }

    #[test]
    fn placement_converges_onto_a_reachable_user() {
        let s = scenario(&[(200.0, 200.0)], &[(260.0, 230.0)], 6);
        let alive = AliveSet::all(1);
        let r = ChannelRealization::expected(1, 1, window(6));
        let obj = RiskObjective::new(0.0, 1e3, vec![]);
        let st = SolverSettings::default();
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let mut p = Plan::hover(1, window(6), &s.initial_positions());
        p.assoc.fill(1.0);
        p.bandwidth.fill(1e4);
        let (hover, _) = solve_placement(&p, &s.initial_positions(), &inputs, 60).unwrap();
        assert!(hover[0].dist(Point::new(260.0, 230.0)) < 0.1, "{:?}", hover[0]);
    }
}
