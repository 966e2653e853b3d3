//! Newton directions for the barrier function.
//!
//! The Hessian arrives as sparse entries plus a low-rank term. The sparse
//! part is factored by a fill-reducing sparse Cholesky whose symbolic
//! analysis is reused while the pattern stays the same, the low-rank part
//! is folded in by the Woodbury identity, and affine equalities are handled
//! through the Schur complement of the KKT system.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{Curvature, EqualitySystem};

/// Relative diagonal shift tried first; raised by `SHIFT_GROWTH` on failure.
const BASE_SHIFT: f64 = 1e-14;
const SHIFT_GROWTH: f64 = 100.0;
const MAX_SHIFTS: usize = 8;

struct Pattern {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicLlt<usize>,
}

/// `H = B + W W^T` with `B` sparse and factored.
struct Factor {
    llt: Llt<usize, f64>,
    z: Vec<Vec<f64>>,
    w: Vec<Vec<f64>>,
    capacitance: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
}

pub(crate) struct NewtonSolver {
    n: usize,
    pattern: Option<Pattern>,
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl NewtonSolver {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            n,
            pattern: None,
            triplets: Vec::new(),
        }
    }

    /// Solves `H d = -g` subject to `A d = 0`, where `H` is `hess` (sparse
    /// entries plus low-rank term). Returns `None` when no factorization
    /// succeeds.
    pub(crate) fn direction(&mut self, hess: &Curvature, grad: &[f64], eqs: &EqualitySystem) -> Option<Vec<f64>> {
        let factor = self.factor(hess)?;
        let mut d: Vec<f64> = grad.iter().map(|v| -v).collect();
        self.solve(&factor, &mut d);
        if eqs.is_empty() {
            return Some(d);
        }
        let m = eqs.rows.len();
        let mut y = Mat::<f64>::zeros(self.n, m);
        for (r, row) in eqs.rows.iter().enumerate() {
            for &(i, a) in row {
                y[(i, r)] += a;
            }
        }
        factor.llt.solve_in_place(&mut y);
        let mut cols: Vec<Vec<f64>> = (0..m).map(|r| (0..self.n).map(|i| y[(i, r)]).collect()).collect();
        for c in &mut cols {
            self.apply_low_rank(&factor, c);
        }
        let schur = DMatrix::from_fn(m, m, |r, c| eqs.rows[r].iter().map(|&(i, a)| a * cols[c][i]).sum());
        let rhs = DVector::from_iterator(m, eqs.rows.iter().map(|row| row.iter().map(|&(i, a)| a * d[i]).sum::<f64>()));
        let nu = match schur.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => schur.pseudo_inverse(1e-12).ok()? * rhs,
        };
        for (c, nu_c) in cols.iter().zip(nu.iter()) {
            for (di, ci) in d.iter_mut().zip(c) {
                *di -= nu_c * ci;
            }
        }
        d.iter().all(|v| v.is_finite()).then_some(d)
    }

    fn factor(&mut self, hess: &Curvature) -> Option<Factor> {
        let n = self.n;
        let mut diag = vec![0.0f64; n];
        for &(i, j, v) in &hess.entries {
            if i == j {
                diag[i] += v;
            }
        }
        let mut shift = BASE_SHIFT;
        for _ in 0..MAX_SHIFTS {
            self.triplets.clear();
            self.triplets
                .extend(hess.entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)));
            self.triplets
                .extend(diag.iter().enumerate().map(|(i, d)| Triplet::new(i, i, shift * (1.0 + d.abs()))));
            let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &self.triplets).ok()?;
            let symbolic = self.symbolic_for(&mat)?;
            if let Ok(llt) = Llt::try_new_with_symbolic(symbolic, mat.as_ref(), Side::Lower) {
                if let Some(f) = self.low_rank(llt, hess) {
                    return Some(f);
                }
            }
            shift *= SHIFT_GROWTH;
        }
        None
    }

    fn symbolic_for(&mut self, mat: &SparseColMat<usize, f64>) -> Option<SymbolicLlt<usize>> {
        let sym = mat.symbolic();
        if let Some(p) = &self.pattern {
            if p.col_ptr == sym.col_ptr() && p.row_idx == sym.row_idx() {
                return Some(p.symbolic.clone());
            }
        }
        let symbolic = SymbolicLlt::try_new(sym, Side::Lower).ok()?;
        self.pattern = Some(Pattern {
            col_ptr: sym.col_ptr().to_vec(),
            row_idx: sym.row_idx().to_vec(),
            symbolic: symbolic.clone(),
        });
        Some(symbolic)
    }

    /// Completes the factorization with the low-rank term of `hess`.
    fn low_rank(&self, llt: Llt<usize, f64>, hess: &Curvature) -> Option<Factor> {
        let mut w = Vec::new();
        if let Some(middle) = &hess.middle {
            let eig = SymmetricEigen::new(middle.clone());
            let top = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
            for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
                if !(lambda > 1e-14 * top) {
                    continue;
                }
                let mut col = vec![0.0; self.n];
                for (f, factor) in hess.factors.iter().enumerate() {
                    let v = eig.eigenvectors[(f, j)] * lambda.sqrt();
                    for &(i, u) in factor {
                        col[i] += u * v;
                    }
                }
                w.push(col);
            }
        }
        if w.is_empty() {
            return Some(Factor {
                llt,
                z: Vec::new(),
                w,
                capacitance: None,
            });
        }
        let r = w.len();
        let mut zm = Mat::<f64>::from_fn(self.n, r, |i, j| w[j][i]);
        llt.solve_in_place(&mut zm);
        let z: Vec<Vec<f64>> = (0..r).map(|j| (0..self.n).map(|i| zm[(i, j)]).collect()).collect();
        let cap = DMatrix::from_fn(r, r, |a, b| {
            let wz: f64 = w[a].iter().zip(&z[b]).map(|(x, y)| x * y).sum();
            wz + if a == b { 1.0 } else { 0.0 }
        });
        let capacitance = cap.cholesky()?;
        Some(Factor {
            llt,
            z,
            w,
            capacitance: Some(capacitance),
        })
    }

    /// `v <- H^{-1} v`.
    fn solve(&self, f: &Factor, v: &mut [f64]) {
        let mut m = Mat::<f64>::from_fn(self.n, 1, |i, _| v[i]);
        f.llt.solve_in_place(&mut m);
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = m[(i, 0)];
        }
        self.apply_low_rank(f, v);
    }

    /// Turns `B^{-1} r` into `H^{-1} r` by the Woodbury identity.
    fn apply_low_rank(&self, f: &Factor, binv_r: &mut [f64]) {
        let Some(cap) = &f.capacitance else {
            return;
        };
        let wt = DVector::from_iterator(f.w.len(), f.w.iter().map(|c| c.iter().zip(&*binv_r).map(|(a, b)| a * b).sum()));
        let coef = cap.solve(&wt);
        for (zc, k) in f.z.iter().zip(coef.iter()) {
            for (v, zi) in binv_r.iter_mut().zip(zc) {
                *v -= k * zi;
            }
        }
    }
}
