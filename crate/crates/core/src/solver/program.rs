use std::fmt;

use nalgebra::DMatrix;

/// A symmetric positive semidefinite matrix held as sparse entries plus an
/// optional low-rank term `U M U^T`.
#[derive(Debug, Clone, Default)]
pub struct Curvature {
    /// Lower-triangle entries `(row, col, value)`, `row >= col`; repeats add up.
    pub entries: Vec<(usize, usize, f64)>,
    /// Sparse columns of `U`.
    pub factors: Vec<Vec<(usize, f64)>>,
    /// Positive semidefinite, `factors.len()` square.
    pub middle: Option<DMatrix<f64>>,
}

impl Curvature {
    /// Adds `v` at `(i, j)` and, off the diagonal, at `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.entries.push((i.max(j), i.min(j), v));
    }

    /// Adds `scale * v v^T` for a sparse `v`.
    pub fn add_outer(&mut self, v: &[(usize, f64)], scale: f64) {
        for (a, &(i, vi)) in v.iter().enumerate() {
            for (b, &(j, vj)) in v[..=a].iter().enumerate() {
                // a repeated index meets itself twice in the full product
                let w = if i == j && a != b { 2.0 } else { 1.0 };
                self.add(i, j, w * scale * vi * vj);
            }
        }
    }

    /// Dense `n x n` form.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(n, n);
        for &(i, j, v) in &self.entries {
            h[(i, j)] += v;
            if i != j {
                h[(j, i)] += v;
            }
        }
        if let Some(m) = &self.middle {
            let mut u = DMatrix::zeros(n, self.factors.len());
            for (f, col) in self.factors.iter().enumerate() {
                for &(i, v) in col {
                    u[(i, f)] += v;
                }
            }
            h += &u * m * u.transpose();
        }
        h
    }

    /// Sets the low-rank term.
    pub fn set_low_rank(&mut self, factors: Vec<Vec<(usize, f64)>>, middle: DMatrix<f64>) {
        self.factors = factors;
        self.middle = Some(middle);
    }
}

/// Central differences of `grad` along each coordinate, symmetrized and
/// multiplied by `sign`, as dense lower-triangle entries.
pub(crate) fn finite_difference_curvature(
    x: &[f64],
    sign: f64,
    grad: impl Fn(&[f64], &mut [f64]) -> bool,
    out: &mut Curvature,
) {
    let n = x.len();
    let mut cols = vec![vec![0.0; n]; n];
    let (mut gp, mut gm) = (vec![0.0; n], vec![0.0; n]);
    let mut xp = x.to_vec();
    for j in 0..n {
        let mut h = 1e-5 * x[j].abs().max(1.0);
        for _ in 0..30 {
            xp[j] = x[j] + h;
            let ok = grad(&xp, &mut gp);
            xp[j] = x[j] - h;
            let ok = ok && grad(&xp, &mut gm);
            if ok && gp.iter().chain(&gm).all(|v| v.is_finite()) {
                break;
            }
            h *= 0.5;
        }
        xp[j] = x[j];
        for i in 0..n {
            cols[j][i] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for j in 0..n {
        for i in j..n {
            out.add(i, j, sign * 0.5 * (cols[j][i] + cols[i][j]));
        }
    }
}

/// Smooth concave objective to be maximized.
pub trait ObjectiveOracle: Sync {
    /// Value at `x`; overwrites `grad` with the gradient.
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64;

    fn value(&self, x: &[f64]) -> f64 {
        let mut g = vec![0.0; x.len()];
        self.value_grad(x, &mut g)
    }

    /// Adds `-hess f(x)` to `out`. The default differentiates the gradient
    /// numerically with a dense result.
    fn add_curvature(&self, x: &[f64], out: &mut Curvature) {
        finite_difference_curvature(
            x,
            -1.0,
            |p, g| self.value_grad(p, g).is_finite(),
            out,
        );
    }
}

impl<F> ObjectiveOracle for F
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    fn value_grad(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        self(x, grad)
    }
}

/// Smooth convex constraint `g(x) <= 0`.
pub trait ConstraintOracle: Sync {
    fn value(&self, x: &[f64]) -> f64;

    /// `grad += scale * grad g(x)`.
    fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]);

    /// Structurally nonzero gradient entries, replacing the contents of `out`.
    /// The set of indices must not depend on `x`.
    fn gradient_entries(&self, x: &[f64], out: &mut Vec<(usize, f64)>) {
        let mut g = vec![0.0; x.len()];
        self.add_gradient(x, 1.0, &mut g);
        out.clear();
        out.extend(g.into_iter().enumerate());
    }

    /// Adds `scale * hess g(x)` to `out`. The default differentiates the
    /// gradient numerically with a dense result.
    fn add_curvature(&self, x: &[f64], scale: f64, out: &mut Curvature) {
        finite_difference_curvature(
            x,
            scale,
            |p, g| {
                g.fill(0.0);
                self.add_gradient(p, 1.0, g);
                true
            },
            out,
        );
    }

    fn label(&self) -> String {
        "constraint".to_string()
    }
}

/// `sum_i c_i x_i <= rhs`.
#[derive(Debug, Clone)]
pub struct LinearConstraint {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
    pub name: String,
}

impl LinearConstraint {
    pub fn new(terms: Vec<(usize, f64)>, rhs: f64) -> Self {
        Self {
            terms,
            rhs,
            name: "linear".to_string(),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

impl ConstraintOracle for LinearConstraint {
    fn value(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - self.rhs
    }

    fn add_gradient(&self, _x: &[f64], scale: f64, grad: &mut [f64]) {
        for &(i, c) in &self.terms {
            grad[i] += scale * c;
        }
    }

    fn gradient_entries(&self, _x: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clone_from(&self.terms);
    }

    fn add_curvature(&self, _x: &[f64], _scale: f64, _out: &mut Curvature) {}

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Constraint from a pair of closures: value and gradient accumulation.
pub struct FnConstraint<V, G> {
    value: V,
    gradient: G,
    name: String,
}

impl<V, G> FnConstraint<V, G>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    pub fn new(name: impl Into<String>, value: V, gradient: G) -> Self {
        Self {
            value,
            gradient,
            name: name.into(),
        }
    }
}

impl<V, G> ConstraintOracle for FnConstraint<V, G>
where
    V: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn add_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        (self.gradient)(x, scale, grad)
    }

    fn label(&self) -> String {
        self.name.clone()
    }
}

/// Sparse affine equalities `A x = b`.
#[derive(Debug, Clone, Default)]
pub struct EqualitySystem {
    pub rows: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
}

impl EqualitySystem {
    pub fn push(&mut self, row: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push(row);
        self.rhs.push(rhs);
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Largest `|a_i . x - b_i|`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, b)| (row.iter().map(|&(i, c)| c * x[i]).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Maximize a concave objective under convex inequalities, affine
/// equalities and optional coordinate bounds, from a strictly feasible start.
pub struct ConcaveProgram<'a> {
    pub dim: usize,
    pub objective: Box<dyn ObjectiveOracle + 'a>,
    pub ineqs: Vec<Box<dyn ConstraintOracle + 'a>>,
    pub eqs: EqualitySystem,
    /// Per-coordinate `(lower, upper)`; infinite entries mean unbounded.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub start: Vec<f64>,
}

impl fmt::Debug for ConcaveProgram<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConcaveProgram")
            .field("dim", &self.dim)
            .field("ineqs", &self.ineqs.len())
            .field("eqs", &self.eqs.rows.len())
            .field("bounded", &self.bounds.is_some())
            .finish()
    }
}

impl<'a> ConcaveProgram<'a> {
    pub fn new(dim: usize, objective: impl ObjectiveOracle + 'a, start: Vec<f64>) -> Self {
        Self {
            dim,
            objective: Box::new(objective),
            ineqs: Vec::new(),
            eqs: EqualitySystem::default(),
            bounds: None,
            start,
        }
    }

    pub fn with_ineq(mut self, c: impl ConstraintOracle + 'a) -> Self {
        self.ineqs.push(Box::new(c));
        self
    }

    pub fn with_eq(mut self, row: Vec<(usize, f64)>, rhs: f64) -> Self {
        self.eqs.push(row, rhs);
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    /// Number of log-barrier terms (inequalities plus finite bound sides).
    pub fn barrier_terms(&self) -> usize {
        let b = self
            .bounds
            .as_ref()
            .map(|bs| {
                bs.iter()
                    .map(|(l, u)| l.is_finite() as usize + u.is_finite() as usize)
                    .sum()
            })
            .unwrap_or(0);
        self.ineqs.len() + b
    }
}
