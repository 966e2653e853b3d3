//! Exit criteria. Each check prints one `PASS`/`FAIL` line; the run fails
//! when any check fails.
//!
//! The scheme-level criteria share one sweep of the evaluation setup:
//! the proposed scheme at mu in {0, -2, -5, -10}, SR-Max and both
//! baselines, seeds 1 to 10.

use std::sync::OnceLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use uav_resilience::channel::{channel_gain, draw_fading, spectral_efficiency, ChannelRealization};
use uav_resilience::plan::{check_plan, Plan, SlotWindow};
use uav_resilience::planner::PlannerSettings;
use uav_resilience::scenario::{AliveSet, Point, Scenario};
use uav_resilience::sim::{sweep_mu, EpisodeMetrics, Scheme};
use uav_resilience::solver::{check_kkt, maximize, ConcaveProgram, LinearConstraint, SolverSettings};
use uav_resilience::subproblems::{
    association_program, bandwidth_program, init_eta, surrogate_rate, trajectory_program, BlockInputs, PosRef,
    SurrogateModel,
};
use uav_resilience::utility::{exp_utility, taylor_residual, RiskObjective};

const MUS: [f64; 4] = [0.0, -2.0, -5.0, -10.0];
const SEEDS: std::ops::RangeInclusive<u64> = 1..=10;
/// Adjacent-mu slack: at most one step against the trend, by at most this fraction.
const TREND_SLACK: f64 = 0.05;

fn sweep_rows() -> &'static [EpisodeMetrics] {
    static ROWS: OnceLock<Vec<EpisodeMetrics>> = OnceLock::new();
    ROWS.get_or_init(|| {
        let seeds: Vec<u64> = SEEDS.collect();
        sweep_mu(&Scenario::paper_setup(1), &MUS, &seeds, &PlannerSettings::default()).expect("sweep runs")
    })
}

fn rows_of(scheme: Scheme) -> Vec<&'static EpisodeMetrics> {
    sweep_rows().iter().filter(|m| m.scheme == scheme).collect()
}

fn scheme_mean(scheme: Scheme, f: impl Fn(&EpisodeMetrics) -> f64) -> f64 {
    let rows = rows_of(scheme);
    assert!(!rows.is_empty(), "no rows for {scheme:?}");
    rows.iter().map(|m| f(m)).sum::<f64>() / rows.len() as f64
}

fn all_schemes() -> Vec<Scheme> {
    let mut v: Vec<Scheme> = MUS.iter().map(|&mu| Scheme::ProAlg { mu }).collect();
    v.extend([Scheme::SrMax, Scheme::Baseline1, Scheme::Baseline2]);
    v
}

fn name(s: Scheme) -> String {
    match s {
        Scheme::ProAlg { mu } => format!("pro-alg({mu})"),
        _ => s.label().to_string(),
    }
}

fn report(label: &str, ok: bool, detail: String) {
    println!("{} {label}: {detail}", if ok { "PASS" } else { "FAIL" });
}

/// Whether `v` never rises, except for at most one rise of at most `slack`.
fn nonincreasing_with_slack(v: &[f64], slack: f64) -> bool {
    let rises: Vec<(f64, f64)> = v.windows(2).filter(|w| w[1] > w[0]).map(|w| (w[0], w[1])).collect();
    rises.len() <= 1 && rises.iter().all(|&(a, b)| b <= a * (1.0 + slack))
}

fn nondecreasing_with_slack(v: &[f64], slack: f64) -> bool {
    let drops: Vec<(f64, f64)> = v.windows(2).filter(|w| w[1] < w[0]).map(|w| (w[0], w[1])).collect();
    drops.len() <= 1 && drops.iter().all(|&(a, b)| b >= a * (1.0 - slack))
}

fn fmt_list(v: &[f64], prec: usize) -> String {
    v.iter().map(|x| format!("{x:.prec$}")).collect::<Vec<_>>().join(", ")
}

fn scheme_ordering_of_first_period_rate() -> bool {
    let p1 = |s| scheme_mean(s, |m| m.period_averages[0]);
    let (sr, b2, b1) = (p1(Scheme::SrMax), p1(Scheme::Baseline2), p1(Scheme::Baseline1));
    let ok = sr >= b2 && b2 >= b1 && sr >= 1.25 * b1;
    report(
        "scheme ordering",
        ok,
        format!(
            "mean period-1 rate sr-max {sr:.1} >= baseline2 {b2:.1} >= baseline1 {b1:.1} bps, sr-max/baseline1 = {:.3} (need >= 1.25)",
            sr / b1
        ),
    );
    ok
}

fn variance_falls_with_risk_aversion() -> bool {
    let var: Vec<f64> = MUS.iter().map(|&mu| scheme_mean(Scheme::ProAlg { mu }, |m| m.variance)).collect();
    let sr = scheme_mean(Scheme::SrMax, |m| m.variance);
    let ratio = var[3] / sr;
    let trend = nonincreasing_with_slack(&var, TREND_SLACK);
    let ok = ratio <= 0.70 && trend;
    report(
        "variance trend",
        ok,
        format!(
            "mean variance over mu {MUS:?}: [{}], sr-max {sr:.4e}, mu=-10 / sr-max = {ratio:.3} (need <= 0.70), trend {}",
            fmt_list(&var, 1),
            if trend { "ok" } else { "broken" }
        ),
    );
    ok
}

fn fairness_rises_with_risk_aversion() -> bool {
    let jain: Vec<(Scheme, f64)> = all_schemes().into_iter().map(|s| (s, scheme_mean(s, |m| m.jain))).collect();
    let sr = jain.iter().find(|(s, _)| *s == Scheme::SrMax).unwrap().1;
    let below: Vec<String> = jain
        .iter()
        .filter(|(_, j)| *j < sr)
        .map(|(s, j)| format!("{} {j:.4}", name(*s)))
        .collect();
    let pro: Vec<f64> = MUS.iter().map(|&mu| scheme_mean(Scheme::ProAlg { mu }, |m| m.jain)).collect();
    let trend = nondecreasing_with_slack(&pro, TREND_SLACK);
    let ok = below.is_empty() && trend;
    report(
        "fairness trend",
        ok,
        format!(
            "sr-max Jain {sr:.4}, schemes below it: [{}]; pro-alg Jain over mu {MUS:?}: [{}], trend {}",
            below.join(", "),
            fmt_list(&pro, 4),
            if trend { "ok" } else { "broken" }
        ),
    );
    ok
}

fn alternating_optimization_converges() -> bool {
    let mut calls = 0usize;
    let mut converged = 0usize;
    let mut worst_step = f64::INFINITY;
    let (mut runs, mut runs_converged) = (0usize, 0usize);
    for m in sweep_rows().iter().filter(|m| m.scheme.is_iterative()) {
        runs += 1;
        if m.traces.iter().all(|t| t.converged_at.is_some_and(|i| i <= 10)) {
            runs_converged += 1;
        }
        for t in &m.traces {
            calls += 1;
            if t.converged_at.is_some_and(|i| i <= 10) {
                converged += 1;
            }
            for w in t.objectives.windows(2) {
                worst_step = worst_step.min(w[1] - w[0]);
            }
        }
    }
    let share = converged as f64 / calls as f64;
    let run_share = runs_converged as f64 / runs as f64;
    let monotone = worst_step >= -1e-9;
    let ok = monotone && share >= 0.90 && run_share >= 0.90;
    report(
        "AO convergence",
        ok,
        format!(
            "smallest objective step {worst_step:.3e} (need >= -1e-9); {converged}/{calls} planning calls reach relative change < 1e-4 within 10 iterations = {:.1}%, {runs_converged}/{runs} runs with every call converged = {:.1}% (need >= 90%)",
            100.0 * share,
            100.0 * run_share
        ),
    );
    ok
}

fn true_efficiency(traj: &Array2<Point>, r: &ChannelRealization, s: &Scenario, alive: &AliveSet, u: usize, k: usize, n: usize) -> f64 {
    let slot = r.window.first + n;
    let gains: Vec<f64> = (0..s.n_uavs())
        .map(|i| channel_gain(traj[[i, n]], s.users[k].position, r.at(i, k, slot), &s.channel, s.altitude_h))
        .collect();
    let powers: Vec<f64> = s.uavs.iter().map(|x| x.tx_power).collect();
    spectral_efficiency(&gains, &powers, alive, u, s.channel.noise_power)
}

fn random_point(rng: &mut ChaCha8Rng, s: &Scenario) -> Point {
    let b = &s.slot_bounds;
    Point::new(rng.random_range(b.q_min.x..=b.q_max.x), rng.random_range(b.q_min.y..=b.q_max.y))
}

fn random_alive(rng: &mut ChaCha8Rng, n: usize) -> AliveSet {
    loop {
        let a = AliveSet((0..n).map(|_| rng.random_bool(0.8)).collect());
        if a.count() > 0 {
            return a;
        }
    }
}

fn surrogate_is_tight_and_never_overestimates() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let window = SlotWindow::new(1, 2);
    let (mut worst_tight, mut worst_margin) = (0.0f64, f64::INFINITY);
    let (mut tight_links, mut bound_links) = (0usize, 0usize);
    for _ in 0..1000 {
        let s = Scenario::paper_setup(rng.random());
        let alive = random_alive(&mut rng, s.n_uavs());
        let r = draw_fading(&s, window, rng.random());
        let traj_l = Array2::from_shape_fn((s.n_uavs(), window.len), |_| random_point(&mut rng, &s));
        let eta = init_eta(&traj_l, &s, window);
        for u in alive.indices() {
            for k in 0..s.n_users() {
                for n in 0..window.len {
                    let f = surrogate_rate(&eta, &r, &s, &alive, u, k, n);
                    let t = true_efficiency(&traj_l, &r, &s, &alive, u, k, n);
                    worst_tight = worst_tight.max((f - t).abs() / t.abs());
                    tight_links += 1;
                }
            }
        }
    }
    for _ in 0..1000 {
        let s = Scenario::paper_setup(rng.random());
        let alive = random_alive(&mut rng, s.n_uavs());
        let r = draw_fading(&s, window, rng.random());
        let traj_l = Array2::from_shape_fn((s.n_uavs(), window.len), |_| random_point(&mut rng, &s));
        let traj = traj_l.mapv(|p| {
            let q = Point::new(p.x + rng.random_range(-s.d_max..=s.d_max), p.y + rng.random_range(-s.d_max..=s.d_max));
            Point::new(
                q.x.clamp(s.slot_bounds.q_min.x, s.slot_bounds.q_max.x),
                q.y.clamp(s.slot_bounds.q_min.y, s.slot_bounds.q_max.y),
            )
        });
        let mut eta = init_eta(&traj_l, &s, window);
        let exact = init_eta(&traj, &s, window);
        let attained = rng.random_bool(0.5);
        for (p, v) in eta.eta_lower.indexed_iter_mut() {
            *v = exact.eta_lower[p] * if attained { 1.0 } else { rng.random_range(0.5..=1.0) };
        }
        for (p, v) in eta.eta_upper.indexed_iter_mut() {
            *v = exact.eta_upper[p] * if attained { 1.0 } else { rng.random_range(1.0..=2.0) };
        }
        for u in alive.indices() {
            for k in 0..s.n_users() {
                for n in 0..window.len {
                    let f = surrogate_rate(&eta, &r, &s, &alive, u, k, n);
                    let t = true_efficiency(&traj, &r, &s, &alive, u, k, n);
                    worst_margin = worst_margin.min((t - f) / t.abs().max(1.0));
                    bound_links += 1;
                }
            }
        }
    }
    let ok = worst_tight <= 1e-9 && worst_margin >= -1e-9;
    report(
        "surrogate soundness",
        ok,
        format!(
            "1000 linearization points ({tight_links} links): worst relative gap {worst_tight:.2e} (need <= 1e-9); 1000 perturbed points ({bound_links} links): worst margin {worst_margin:.2e} (need >= -1e-9)"
        ),
    );
    ok
}

fn exponential_utility_is_concave_and_second_order() -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let len = rng.random_range(1..=20);
        let a: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..200.0)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.random_range(0.0..200.0)).collect();
        let mu = -rng.random_range(0.0..=10.0);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let gap = 0.5 * (exp_utility(&a, mu) + exp_utility(&b, mu)) - exp_utility(&mid, mu);
        worst = worst.max(gap);
    }
    // unit-scale skewed sequences; near-symmetric ones have a vanishing
    // second-order term and the ratio tends to 8
    let exp = Exp::new(1.0).unwrap();
    let mut ratios = Vec::new();
    for _ in 0..100 {
        let xs: Vec<f64> = (0..20).map(|_| exp.sample(&mut rng)).collect();
        ratios.push(taylor_residual(&xs, -0.02) / taylor_residual(&xs, -0.01));
    }
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &r| (l.min(r), h.max(r)));
    let ok = worst <= 1e-9 && lo >= 2.8 && hi <= 5.2;
    report(
        "utility numerics",
        ok,
        format!(
            "10000 midpoint triples: worst violation {worst:.2e} (need <= 1e-9); residual ratio mu=-0.02/-0.01 over 100 sequences in [{lo:.3}, {hi:.3}] (need within [2.8, 5.2])"
        ),
    );
    ok
}

/// Concave quadratic `-0.5 x'Qx + c'x` on `[-1, 1]^n`.
struct BoxQp {
    q: Vec<Vec<f64>>,
    c: Vec<f64>,
}

impl BoxQp {
    fn random(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let m: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let q = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| (0..n).map(|k| m[k][i] * m[k][j]).sum::<f64>() + if i == j { 0.1 } else { 0.0 })
                    .collect()
            })
            .collect();
        let c = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        Self { q, c }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let n = x.len();
        (0..n)
            .map(|i| self.c[i] * x[i] - 0.5 * (0..n).map(|j| self.q[i][j] * x[i] * x[j]).sum::<f64>())
            .sum()
    }

    fn grad(&self, x: &[f64], g: &mut [f64]) {
        for i in 0..x.len() {
            g[i] = self.c[i] - (0..x.len()).map(|j| self.q[i][j] * x[j]).sum::<f64>();
        }
    }

    fn program(&self) -> ConcaveProgram<'_> {
        let n = self.c.len();
        ConcaveProgram::new(
            n,
            move |x: &[f64], g: &mut [f64]| {
                self.grad(x, g);
                self.value(x)
            },
            vec![0.0; n],
        )
        .with_bounds(vec![(-1.0, 1.0); n])
    }

    fn grid_max(&self, h: f64) -> f64 {
        let n = self.c.len();
        let steps = (2.0 / h).round() as usize + 1;
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        let mut best = f64::NEG_INFINITY;
        loop {
            for (xi, &k) in x.iter_mut().zip(&idx) {
                *xi = -1.0 + k as f64 * h;
            }
            best = best.max(self.value(&x));
            let mut d = 0;
            while d < n {
                idx[d] += 1;
                if idx[d] < steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == n {
                return best;
            }
        }
    }

    fn projected_gradient_max(&self) -> f64 {
        let n = self.c.len();
        let lip: f64 = (0..n).map(|i| self.q[i][i]).sum();
        let mut x = vec![0.0; n];
        let mut g = vec![0.0; n];
        for _ in 0..200_000 {
            self.grad(&x, &mut g);
            for (xi, gi) in x.iter_mut().zip(&g) {
                *xi = (*xi + gi / lip).clamp(-1.0, 1.0);
            }
        }
        self.value(&x)
    }
}

/// Largest `|fd - g_i| / max(|g|_inf, |g_i|)` with per-coordinate steps.
fn gradient_mismatch(program: &ConcaveProgram<'_>, x: &[f64], step: impl Fn(usize) -> f64) -> f64 {
    let mut g = vec![0.0; x.len()];
    program.objective.value_grad(x, &mut g);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let h = step(i);
        xp[i] = x[i] + h;
        let fp = program.objective.value(&xp);
        xp[i] = x[i] - h;
        let fm = program.objective.value(&xp);
        xp[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - g[i]).abs() / scale.max(g[i].abs()));
    }
    worst
}

fn relaxed_plan(s: &Scenario, window: SlotWindow, alive: &AliveSet, rng: &mut ChaCha8Rng) -> Plan {
    let mut p = Plan::hover(s.n_users(), window, &s.initial_positions());
    let m = alive.count() as f64;
    for u in alive.indices() {
        for k in 0..s.n_users() {
            for n in 0..window.len {
                p.assoc[[u, k, n]] = 1.0 / m;
                p.bandwidth[[u, k, n]] = s.uavs[u].bandwidth_budget * rng.random_range(0.02..0.2);
            }
        }
    }
    for n in 1..window.len {
        for u in 0..s.n_uavs() {
            let prev = p.traj[[u, n - 1]];
            let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let step = 0.5 * s.d_max * rng.random_range(0.0..1.0);
            p.traj[[u, n]] = Point::new(prev.x + step * a.cos(), prev.y + step * a.sin());
        }
    }
    p
}

fn solver_examples_and_gradient_oracles() -> bool {
    let settings = SolverSettings::default();
    let mut lines = Vec::new();
    let mut ok = true;

    let parabola = ConcaveProgram::new(
        1,
        |x: &[f64], g: &mut [f64]| {
            g[0] = -2.0 * (x[0] - 1.0);
            -(x[0] - 1.0).powi(2)
        },
        vec![-1.0],
    )
    .with_ineq(LinearConstraint::new(vec![(0, 1.0)], 0.0));
    let r = maximize(&parabola, &settings).unwrap();
    let pass = r.x[0].abs() <= 1e-5 && (r.objective + 1.0).abs() <= 1e-5;
    ok &= pass;
    lines.push(format!("parabola x* {:.2e} value {:.8}", r.x[0], r.objective));

    let simplex = ConcaveProgram::new(
        3,
        |x: &[f64], g: &mut [f64]| {
            for i in 0..3 {
                g[i] = 1.0 / x[i];
            }
            x.iter().map(|v| v.ln()).sum::<f64>()
        },
        vec![0.2, 0.3, 0.5],
    )
    .with_eq(vec![(0, 1.0), (1, 1.0), (2, 1.0)], 1.0)
    .with_bounds(vec![(0.0, f64::INFINITY); 3]);
    let r = maximize(&simplex, &settings).unwrap();
    let dev = r.x.iter().map(|v| (v - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    let kkt = check_kkt(&simplex, &r.x).unwrap().worst();
    let pass = dev <= 1e-5 && kkt < 1e-5;
    ok &= pass;
    lines.push(format!("simplex-log deviation {dev:.2e} kkt {kkt:.2e}"));

    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut qp_gap = 0.0f64;
    for n in 1..=6 {
        for _ in 0..2 {
            let qp = BoxQp::random(n, &mut rng);
            let r = maximize(&qp.program(), &settings).unwrap();
            let oracle = if n <= 2 { qp.grid_max(1e-3) } else { qp.projected_gradient_max() };
            qp_gap = qp_gap.max((r.objective - oracle).abs());
        }
    }
    ok &= qp_gap <= 5e-3;
    lines.push(format!("box QP dim 1..6 worst value gap {qp_gap:.2e}"));

    let s = Scenario::paper_setup(3);
    let window = SlotWindow::new(1, 10);
    let r = draw_fading(&s, window, 3);
    let st = SolverSettings::default();
    let mut worst = [0.0f64; 3];
    for i in 0..100 {
        let alive = if i % 4 == 3 { AliveSet(vec![false, true, true]) } else { AliveSet::all(3) };
        let mu = -rng.random_range(0.0..=10.0);
        let history: Vec<f64> = (0..rng.random_range(0..5)).map(|_| rng.random_range(5e4..1.5e5)).collect();
        let obj = RiskObjective::new(mu, PlannerSettings::default().rate_unit, history);
        let inputs = BlockInputs { scenario: &s, realization: &r, alive: &alive, objective: &obj, solver: &st };
        let plan = relaxed_plan(&s, window, &alive, &mut rng);

        let (prog, layout) = association_program(&plan, &inputs).unwrap().unwrap();
        let x: Vec<f64> = (0..layout.dim).map(|_| rng.random_range(0.05..0.95)).collect();
        worst[0] = worst[0].max(gradient_mismatch(&prog, &x, |_| 1e-5));

        let (prog, layout) = bandwidth_program(&plan, &inputs).unwrap();
        let x: Vec<f64> = (0..layout.dim).map(|_| rng.random_range(0.0..0.6)).collect();
        // variables are budget fractions; the step is 1e-5 Hz
        let budget = s.uavs[0].bandwidth_budget;
        worst[1] = worst[1].max(gradient_mismatch(&prog, &x, |_| 1e-5 / budget));

        let (nu, nn) = plan.traj.dim();
        let mut next = 0;
        let refs = Array2::from_shape_fn((nu, nn), |(u, n)| {
            if n == 0 || !alive.is_alive(u) {
                PosRef::Fixed(plan.traj[[u, n]])
            } else {
                next += 1;
                PosRef::Var { index: next - 1, base: plan.traj[[u, n]] }
            }
        });
        let model = SurrogateModel::build(&plan, refs, &[], &inputs).unwrap();
        let prog = trajectory_program(&model, &obj);
        let positions = 2 * next;
        let scale = s.d_max.max(1.0);
        let x: Vec<f64> = model
            .start
            .iter()
            .enumerate()
            .map(|(j, v)| if j < positions { rng.random_range(-0.5..0.5) } else { v * rng.random_range(0.9..1.1) })
            .collect();
        // 1e-5 m for positions, 1e-5 relative for the distance bounds
        worst[2] = worst[2].max(gradient_mismatch(&prog, &x, |j| if j < positions { 1e-5 / scale } else { 1e-5 }));
    }
    ok &= worst.iter().all(|&w| w <= 1e-4);
    lines.push(format!(
        "gradient mismatch over 100 points: association {:.2e}, bandwidth {:.2e}, trajectory {:.2e} (need <= 1e-4)",
        worst[0], worst[1], worst[2]
    ));
    report("solver correctness", ok, lines.join("; "));
    ok
}

fn every_plan_is_feasible() -> bool {
    let base = Scenario::paper_setup(1);
    let mut plans = 0usize;
    let mut problems = Vec::new();
    for m in sweep_rows() {
        let s = base.with_seed(m.seed);
        for rec in &m.plans {
            plans += 1;
            for v in check_plan(&rec.plan, &s, &rec.anchors, &rec.alive) {
                problems.push(format!("{} seed {}: {v}", name(m.scheme), m.seed));
            }
        }
        // the flown path, stitched across the failure
        let (nu, nn) = m.positions.dim();
        for n in 0..nn {
            let alive = s.alive_at(n + 1);
            for u in 0..nu {
                let q = m.positions[[u, n]];
                let prev = if n == 0 { s.uavs[u].initial_position } else { m.positions[[u, n - 1]] };
                if q.dist(prev) > s.d_max + 1e-6 {
                    problems.push(format!("{} seed {}: uav {u} moved {:.6} m into slot {}", name(m.scheme), m.seed, q.dist(prev), n + 1));
                }
                if !s.slot_bounds.contains(q, 1e-6) {
                    problems.push(format!("{} seed {}: uav {u} outside the area at slot {}", name(m.scheme), m.seed, n + 1));
                }
                if !alive.is_alive(u) && m.uav_rates[[u, n]] != 0.0 {
                    problems.push(format!("{} seed {}: failed uav {u} carries rate at slot {}", name(m.scheme), m.seed, n + 1));
                }
                for j in alive.indices().filter(|&j| j < u && alive.is_alive(u)) {
                    if q.dist(m.positions[[j, n]]) < s.d_min - 1e-6 {
                        problems.push(format!("{} seed {}: uavs {j},{u} too close at slot {}", name(m.scheme), m.seed, n + 1));
                    }
                }
            }
        }
    }
    let ok = problems.is_empty();
    report(
        "end-to-end feasibility",
        ok,
        format!(
            "{plans} plans from {} episodes, {} violations{}",
            sweep_rows().len(),
            problems.len(),
            problems.first().map(|p| format!(", first: {p}")).unwrap_or_default()
        ),
    );
    ok
}

fn failure_slot_drops_the_sum_rate() -> bool {
    let failure = Scenario::paper_setup(1).failure_slots()[0];
    let mut misses = Vec::new();
    for m in sweep_rows() {
        let (before, at) = (m.slot_sums[failure - 2], m.slot_sums[failure - 1]);
        if at >= before {
            misses.push(format!("{} seed {} ({:.0} -> {:.0})", name(m.scheme), m.seed, before, at));
        }
    }
    let per_scheme: Vec<String> = all_schemes()
        .into_iter()
        .map(|s| {
            let rows = rows_of(s);
            let drops = rows.iter().filter(|m| m.slot_sums[failure - 1] < m.slot_sums[failure - 2]).count();
            format!("{} {drops}/{}", name(s), rows.len())
        })
        .collect();
    let ok = misses.is_empty();
    report(
        "failure-slot drop",
        ok,
        format!(
            "slot {failure} below slot {} in: {}; {} misses",
            failure - 1,
            per_scheme.join(", "),
            misses.len()
        ),
    );
    if !ok {
        println!("  misses: {}", misses.join("; "));
    }
    ok
}

fn main() {
    let checks: [fn() -> bool; 9] = [
        scheme_ordering_of_first_period_rate,
        variance_falls_with_risk_aversion,
        fairness_rises_with_risk_aversion,
        alternating_optimization_converges,
        surrogate_is_tight_and_never_overestimates,
        exponential_utility_is_concave_and_second_order,
        solver_examples_and_gradient_oracles,
        every_plan_is_feasible,
        failure_slot_drops_the_sum_rate,
    ];
    let failed = checks.iter().filter(|check| !check()).count();
    println!("acceptance: {} of {} criteria pass", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
