//! Log-barrier path following with a damped Newton inner loop.
//!
//! For barrier weight `t` the inner loop minimizes
//!
//! ```text
//! phi_t(x) = -t f(x) - sum_j log(-g_j(x)) - sum_i log(x_i - l_i) - sum_i log(u_i - x_i)
//! ```
//!
//! over the affine set `A x = b`. Newton directions solve the equality
//! constrained KKT system, so every iterate keeps the equalities of the
//! start. `t` grows tenfold per outer iteration until the
//! duality-gap bound `m / t` drops below the tolerance.

use std::io::Write;
use std::path::Path;

use super::newton::NewtonSolver;
use super::projector::Projector;
use super::{ConcaveProgram, Curvature, SolveReport, SolveStatus, SolverError, SolverSettings, TraceRow};

/// Largest allowed `g_j(start)` for a start to count as strictly feasible.
pub const STRICT_MARGIN: f64 = 1e-10;
/// Tolerance on `A start = b`.
pub const EQ_TOLERANCE: f64 = 1e-9;

struct Barrier<'p, 'a> {
    prog: &'p ConcaveProgram<'a>,
    proj: Projector,
}

struct Eval {
    phi: f64,
    f: f64,
}

impl<'p, 'a> Barrier<'p, 'a> {
    /// Barrier value, or `None` outside the strict interior.
    fn value(&self, x: &[f64], t: f64) -> Option<Eval> {
        let mut phi = 0.0;
        if let Some(bounds) = &self.prog.bounds {
            for (xi, &(l, u)) in x.iter().zip(bounds) {
                if l.is_finite() {
                    let s = xi - l;
                    if !(s > 0.0) {
                        return None;
                    }
                    phi -= s.ln();
                }
                if u.is_finite() {
                    let s = u - xi;
                    if !(s > 0.0) {
                        return None;
                    }
                    phi -= s.ln();
                }
            }
        }
        for c in &self.prog.ineqs {
            let g = c.value(x);
            if !(g < 0.0) {
                return None;
            }
            phi -= (-g).ln();
        }
        let f = self.prog.objective.value(x);
        if !f.is_finite() {
            return None;
        }
        phi -= t * f;
        phi.is_finite().then_some(Eval { phi, f })
    }

    /// Barrier value and raw (unprojected) gradient.
    fn value_grad(&self, x: &[f64], t: f64, grad: &mut [f64]) -> Option<Eval> {
        let mut phi = 0.0;
        let f = self.prog.objective.value_grad(x, grad);
        if !f.is_finite() {
            return None;
        }
        for g in grad.iter_mut() {
            *g *= -t;
        }
        phi -= t * f;
        if let Some(bounds) = &self.prog.bounds {
            for (i, (xi, &(l, u))) in x.iter().zip(bounds).enumerate() {
                if l.is_finite() {
                    let s = xi - l;
                    if !(s > 0.0) {
                        return None;
                    }
                    phi -= s.ln();
                    grad[i] -= 1.0 / s;
                }
                if u.is_finite() {
                    let s = u - xi;
                    if !(s > 0.0) {
                        return None;
                    }
                    phi -= s.ln();
                    grad[i] += 1.0 / s;
                }
            }
        }
        for c in &self.prog.ineqs {
            let g = c.value(x);
            if !(g < 0.0) {
                return None;
            }
            phi -= (-g).ln();
            c.add_gradient(x, 1.0 / -g, grad);
        }
        (phi.is_finite() && grad.iter().all(|g| g.is_finite())).then_some(Eval { phi, f })
    }

    /// Hessian of the barrier function at a strictly feasible `x`.
    fn hessian(&self, x: &[f64], t: f64, out: &mut Curvature, scratch: &mut Vec<(usize, f64)>) {
        out.entries.clear();
        out.factors.clear();
        out.middle = None;
        self.prog.objective.add_curvature(x, out);
        for e in &mut out.entries {
            e.2 *= t;
        }
        if let Some(m) = &mut out.middle {
            *m *= t;
        }
        if let Some(bounds) = &self.prog.bounds {
            for (i, (xi, &(l, u))) in x.iter().zip(bounds).enumerate() {
                let mut d = 0.0;
                if l.is_finite() {
                    d += (xi - l).powi(-2);
                }
                if u.is_finite() {
                    d += (u - xi).powi(-2);
                }
                out.add(i, i, d);
            }
        }
        for c in &self.prog.ineqs {
            let g = c.value(x);
            c.gradient_entries(x, scratch);
            out.add_outer(scratch, 1.0 / (g * g));
            c.add_curvature(x, 1.0 / -g, out);
        }
    }

    /// Largest step along `d` that keeps the coordinate bounds strict.
    fn max_box_step(&self, x: &[f64], d: &[f64]) -> f64 {
        let mut step = f64::INFINITY;
        if let Some(bounds) = &self.prog.bounds {
            for ((xi, di), &(l, u)) in x.iter().zip(d).zip(bounds) {
                if *di < 0.0 && l.is_finite() {
                    step = step.min((xi - l) / -di);
                } else if *di > 0.0 && u.is_finite() {
                    step = step.min((u - xi) / di);
                }
            }
        }
        step
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Validates the start point of `program`.
pub(crate) fn check_start(program: &ConcaveProgram<'_>) -> Result<(), SolverError> {
    let x = &program.start;
    if x.len() != program.dim {
        return Err(SolverError::DimensionMismatch {
            expected: program.dim,
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite("start point".into()));
    }
    if let Some(bounds) = &program.bounds {
        if bounds.len() != program.dim {
            return Err(SolverError::DimensionMismatch {
                expected: program.dim,
                got: bounds.len(),
            });
        }
        for (i, (xi, &(l, u))) in x.iter().zip(bounds).enumerate() {
            if !(xi > &l && xi < &u) {
                return Err(SolverError::InfeasibleStart {
                    constraint: format!("bound on x[{i}] = {xi} in ({l}, {u})"),
                    value: (l - xi).max(xi - u),
                });
            }
        }
    }
    for c in &program.ineqs {
        let g = c.value(x);
        if !(g < -STRICT_MARGIN) {
            return Err(SolverError::InfeasibleStart {
                constraint: c.label(),
                value: g,
            });
        }
    }
    let r = program.eqs.residual(x);
    if r > EQ_TOLERANCE {
        return Err(SolverError::EqualityResidual(r));
    }
    if !program.objective.value(x).is_finite() {
        return Err(SolverError::NonFinite("objective at start".into()));
    }
    Ok(())
}

/// Equality residual above which an iterate is pulled back onto the affine set.
const EQ_DRIFT: f64 = 1e-13;
/// Final-centering decrement below which a gap-reaching run counts as converged.
const CONVERGED_DECREMENT: f64 = 1e-6;

/// Runs the barrier method on `program`.
pub fn maximize(program: &ConcaveProgram<'_>, settings: &SolverSettings) -> Result<SolveReport, SolverError> {
    check_start(program)?;
    let proj = Projector::new(&program.eqs, program.dim);
    let barrier = Barrier {
        prog: program,
        proj,
    };
    let n = program.dim;
    let m = program.barrier_terms() as f64;

    let mut newton = NewtonSolver::new(n);
    let mut hess = Curvature::default();
    let mut scratch = Vec::new();
    let mut x = program.start.clone();
    let mut t = settings.t0;
    let mut grad = vec![0.0; n];
    let mut x_trial = vec![0.0; n];
    let mut grad_trial = vec![0.0; n];

    let mut outer = 0;
    let mut inner_total = 0;
    let mut outer_objectives = Vec::new();
    let mut trace = Vec::new();
    let mut stalled = false;
    let mut gap_reached = false;
    let mut decrement = f64::INFINITY;
    let mut f_val = program.objective.value(&x);

    while outer < settings.max_outer {
        outer += 1;
        let Some(mut cur) = barrier.value_grad(&x, t, &mut grad) else {
            return Err(SolverError::NonFinite("barrier at outer start".into()));
        };
        stalled = false;
        let mut flat_steps = 0;
        for _ in 0..settings.max_inner {
            barrier.hessian(&x, t, &mut hess, &mut scratch);
            let dir = newton.direction(&hess, &grad, &program.eqs);
            let mut dir = match dir {
                Some(d) => d,
                None => {
                    stalled = true;
                    break;
                }
            };
            barrier.proj.project(&mut dir);
            let slope = dot(&grad, &dir);
            decrement = -slope;
            if !(slope < 0.0) || decrement <= settings.inner_tol {
                break;
            }
            let mut step = (0.99 * barrier.max_box_step(&x, &dir)).min(1.0);
            let mut accepted = None;
            while step >= settings.min_step {
                for ((xt, xi), di) in x_trial.iter_mut().zip(&x).zip(&dir) {
                    *xt = xi + step * di;
                }
                if let Some(ev) = barrier.value(&x_trial, t) {
                    if ev.phi <= cur.phi + settings.armijo * step * slope {
                        accepted = Some(ev);
                        break;
                    }
                }
                step *= 0.5;
            }
            inner_total += 1;
            if accepted.is_none() {
                stalled = true;
                break;
            }
            if program.eqs.residual(&x_trial) > EQ_DRIFT {
                let mut restored = x_trial.clone();
                barrier.proj.restore(&mut restored, &program.eqs.rhs);
                if barrier.value(&restored, t).is_some() {
                    x_trial.copy_from_slice(&restored);
                }
            }
            let Some(next) = barrier.value_grad(&x_trial, t, &mut grad_trial) else {
                stalled = true;
                break;
            };
            let decrease = cur.phi - next.phi;
            std::mem::swap(&mut x, &mut x_trial);
            std::mem::swap(&mut grad, &mut grad_trial);
            cur = next;
            if decrease <= 1e-15 * (1.0 + cur.phi.abs()) {
                flat_steps += 1;
                if flat_steps >= 3 {
                    break;
                }
            } else {
                flat_steps = 0;
            }
        }
        f_val = cur.f;
        outer_objectives.push(f_val);
        if settings.trace {
            trace.push(TraceRow {
                outer,
                inner: inner_total,
                t,
                objective: f_val,
                stationarity: decrement,
            });
        }
        if m == 0.0 || m / t < settings.gap_tol {
            gap_reached = true;
            break;
        }
        t *= settings.t_factor;
    }

    let violation = max_violation(program, &x);
    // the decrement is in barrier units; divided by t it bounds the
    // centering error in objective units
    let centered = decrement <= CONVERGED_DECREMENT || decrement / t <= settings.gap_tol;
    let status = if !f_val.is_finite() {
        SolveStatus::NumericalFailure
    } else if gap_reached && centered && violation <= 1e-7 {
        SolveStatus::Converged
    } else if stalled && !centered {
        SolveStatus::NumericalFailure
    } else {
        SolveStatus::IterationCap
    };
    Ok(SolveReport {
        x,
        objective: f_val,
        outer_iterations: outer,
        inner_iterations: inner_total,
        max_violation: violation,
        stationarity: decrement,
        status,
        outer_objectives,
        trace,
    })
}

/// Largest scaled violation of any constraint at `x` (zero when strictly feasible).
pub fn max_violation(program: &ConcaveProgram<'_>, x: &[f64]) -> f64 {
    let mut v: f64 = program.eqs.residual(x);
    for c in &program.ineqs {
        v = v.max(c.value(x));
    }
    if let Some(bounds) = &program.bounds {
        for (xi, &(l, u)) in x.iter().zip(bounds) {
            v = v.max(l - xi).max(xi - u);
        }
    }
    v.max(0.0)
}

/// Writes the per-outer-iteration trace as CSV.
pub fn write_trace_csv(report: &SolveReport, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "outer,inner,t,objective,stationarity")?;
    for r in &report.trace {
        writeln!(f, "{},{},{},{},{}", r.outer, r.inner, r.t, r.objective, r.stationarity)?;
    }
    f.flush()
}
