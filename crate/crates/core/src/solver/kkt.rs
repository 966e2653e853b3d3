//! First-order optimality residuals at an arbitrary feasible point.
//!
//! Multipliers are estimated by nonnegative least squares on the
//! stacked system `[P grad g_j ; |g_j|] lambda ~ [P grad f ; 0]`, so a
//! multiplier is only cheap to use where its constraint is (nearly) active.

use super::projector::Projector;
use super::{ConcaveProgram, SolverError};

/// Feasibility slack accepted by [`check_kkt`].
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `|| P (grad f - sum_j lambda_j grad g_j) ||_2`.
    pub stationarity: f64,
    /// `max_j lambda_j |g_j|`.
    pub complementarity: f64,
    /// `max_i |a_i . x - b_i|`.
    pub equality: f64,
    pub multipliers: Vec<f64>,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        self.stationarity.max(self.complementarity).max(self.equality)
    }
}

struct Active {
    label: String,
    value: f64,
    grad: Vec<f64>,
}

pub fn check_kkt(program: &ConcaveProgram<'_>, point: &[f64]) -> Result<KktReport, SolverError> {
    let n = program.dim;
    if point.len() != n {
        return Err(SolverError::DimensionMismatch {
            expected: n,
            got: point.len(),
        });
    }
    let mut cons: Vec<Active> = Vec::new();
    for c in &program.ineqs {
        let mut grad = vec![0.0; n];
        c.add_gradient(point, 1.0, &mut grad);
        cons.push(Active {
            label: c.label(),
            value: c.value(point),
            grad,
        });
    }
    if let Some(bounds) = &program.bounds {
        for (i, &(l, u)) in bounds.iter().enumerate() {
            if l.is_finite() {
                let mut grad = vec![0.0; n];
                grad[i] = -1.0;
                cons.push(Active {
                    label: format!("lower bound on x[{i}]"),
                    value: l - point[i],
                    grad,
                });
            }
            if u.is_finite() {
                let mut grad = vec![0.0; n];
                grad[i] = 1.0;
                cons.push(Active {
                    label: format!("upper bound on x[{i}]"),
                    value: point[i] - u,
                    grad,
                });
            }
        }
    }

    let equality = program.eqs.residual(point);
    let worst = cons
        .iter()
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .map(|c| (c.label.clone(), c.value));
    if let Some((label, v)) = worst {
        if v > FEASIBILITY_TOL && v >= equality {
            return Err(SolverError::InfeasiblePoint {
                constraint: label,
                violation: v,
            });
        }
    }
    if equality > FEASIBILITY_TOL {
        return Err(SolverError::InfeasiblePoint {
            constraint: "affine equalities".into(),
            violation: equality,
        });
    }

    let proj = Projector::new(&program.eqs, n);
    let mut gf = vec![0.0; n];
    program.objective.value_grad(point, &mut gf);
    proj.project(&mut gf);
    let vs: Vec<Vec<f64>> = cons
        .iter()
        .map(|c| {
            let mut v = c.grad.clone();
            proj.project(&mut v);
            v
        })
        .collect();
    let slack: Vec<f64> = cons.iter().map(|c| c.value.abs()).collect();

    let m = cons.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut q = vec![0.0; m * m];
    let mut rhs = vec![0.0; m];
    for j in 0..m {
        rhs[j] = dot(&vs[j], &gf);
        for l in j..m {
            let v = dot(&vs[j], &vs[l]) + if j == l { slack[j] * slack[j] } else { 0.0 };
            q[j * m + l] = v;
            q[l * m + j] = v;
        }
    }
    let mut lambda = vec![0.0; m];
    for _ in 0..500 {
        let mut change: f64 = 0.0;
        for j in 0..m {
            let d = q[j * m + j];
            if d <= 0.0 {
                continue;
            }
            let qj: f64 = (0..m).map(|l| q[j * m + l] * lambda[l]).sum();
            let new = (lambda[j] + (rhs[j] - qj) / d).max(0.0);
            change = change.max((new - lambda[j]).abs());
            lambda[j] = new;
        }
        if change < 1e-15 {
            break;
        }
    }

    let mut r = gf;
    for (v, l) in vs.iter().zip(&lambda) {
        for (ri, vi) in r.iter_mut().zip(v) {
            *ri -= l * vi;
        }
    }
    let stationarity = dot(&r, &r).sqrt();
    let complementarity = lambda
        .iter()
        .zip(&slack)
        .map(|(l, s)| l * s)
        .fold(0.0, f64::max);
    Ok(KktReport {
        stationarity,
        complementarity,
        equality,
        multipliers: lambda,
    })
}
