//! Orthogonal projection onto the null space of a sparse equality matrix:
//! `P v = v - A^T (A A^T)^+ A v`.

use nalgebra::DMatrix;

use super::EqualitySystem;

pub(crate) struct Projector {
    rows: Vec<Vec<(usize, f64)>>,
    gram_pinv: DMatrix<f64>,
}

impl Projector {
    pub(crate) fn new(eqs: &EqualitySystem, dim: usize) -> Self {
        let m = eqs.rows.len();
        if m == 0 {
            return Self {
                rows: Vec::new(),
                gram_pinv: DMatrix::zeros(0, 0),
            };
        }
        // dense scatter of each row for the Gram products
        let mut dense = vec![0.0; dim];
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for &(c, v) in &eqs.rows[i] {
                dense[c] += v;
            }
            for j in i..m {
                let g: f64 = eqs.rows[j].iter().map(|&(c, v)| v * dense[c]).sum();
                gram[(i, j)] = g;
                gram[(j, i)] = g;
            }
            for &(c, _) in &eqs.rows[i] {
                dense[c] = 0.0;
            }
        }
        let gram_pinv = match gram.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => gram
                .pseudo_inverse(1e-12)
                .unwrap_or_else(|_| DMatrix::zeros(m, m)),
        };
        Self {
            rows: eqs.rows.clone(),
            gram_pinv,
        }
    }

    /// Moves `x` back onto `A x = rhs` along the row space.
    pub(crate) fn restore(&self, x: &mut [f64], rhs: &[f64]) {
        if self.rows.is_empty() {
            return;
        }
        let r = nalgebra::DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .zip(rhs)
                .map(|(row, b)| row.iter().map(|&(c, a)| a * x[c]).sum::<f64>() - b),
        );
        let z = &self.gram_pinv * r;
        for (row, zi) in self.rows.iter().zip(z.iter()) {
            for &(c, a) in row {
                x[c] -= a * zi;
            }
        }
    }

    pub(crate) fn project(&self, v: &mut [f64]) {
        if self.rows.is_empty() {
            return;
        }
        let w = nalgebra::DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|row| row.iter().map(|&(c, a)| a * v[c]).sum::<f64>()),
        );
        let z = &self.gram_pinv * w;
        for (row, zi) in self.rows.iter().zip(z.iter()) {
            for &(c, a) in row {
                v[c] -= a * zi;
            }
        }
    }
}
