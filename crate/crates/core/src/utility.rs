//! Mean-variance utility, its exponential (risk-sensitive) counterpart, and
//! the reporting metrics.
//!
//! For `mu < 0`
//!
//! ```text
//! G(S) = (1/mu) * log( mean_n exp(mu * S[n]) )  ~=  mean(S) + (mu/2) var(S)
//! ```
//!
//! so `mu = -2 beta` trades the average against the fluctuation of the
//! per-slot sum rate. `mu = 0` is the plain average. Variances are
//! population variances throughout.

use ndarray::Array2;

use crate::error::Error;

/// Risk sensitivity, kept consistent as `mu = -2 beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    mu: f64,
    beta: f64,
}

impl RiskConfig {
    /// Panics if `mu > 0` or is not finite.
    pub fn from_mu(mu: f64) -> Self {
        assert!(mu <= 0.0 && mu.is_finite(), "mu must be finite and <= 0, got {mu}");
        Self { mu, beta: -mu / 2.0 }
    }

    /// Panics if `beta < 0` or is not finite.
    pub fn from_beta(beta: f64) -> Self {
        assert!(beta >= 0.0 && beta.is_finite(), "beta must be finite and >= 0, got {beta}");
        Self { mu: -2.0 * beta, beta }
    }

    pub fn risk_neutral() -> Self {
        Self { mu: 0.0, beta: 0.0 }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Exponential utility of a sequence; `mu = 0` returns the mean.
/// Evaluated with a max-shift so large `|mu * S|` does not overflow.
pub fn exp_utility(per_slot_sums: &[f64], mu: f64) -> f64 {
    assert!(!per_slot_sums.is_empty(), "exp_utility of an empty sequence");
    if mu == 0.0 {
        return mean(per_slot_sums);
    }
    let shift = per_slot_sums
        .iter()
        .map(|s| mu * s)
        .fold(f64::NEG_INFINITY, f64::max);
    let acc: f64 = per_slot_sums.iter().map(|s| (mu * s - shift).exp()).sum();
    (shift + (acc / per_slot_sums.len() as f64).ln()) / mu
}

/// Mean-variance utility over users: `sum_k (mean_n R_k[n] - beta var_n R_k[n])`.
/// `per_user_rates` is indexed (user, slot).
pub fn utility_f(per_user_rates: &Array2<f64>, beta: f64) -> f64 {
    per_user_rates
        .rows()
        .into_iter()
        .map(|row| {
            let r = row.to_vec();
            mean(&r) - beta * variance(&r)
        })
        .sum()
}

/// `|G - (mean + mu/2 var)|`, the error of the second-order expansion.
pub fn taylor_residual(per_slot_sums: &[f64], mu: f64) -> f64 {
    let approx = mean(per_slot_sums) + 0.5 * mu * variance(per_slot_sums);
    (exp_utility(per_slot_sums, mu) - approx).abs()
}

/// Jain fairness index `(sum x)^2 / (K sum x^2)`.
pub fn jain_index(values: &[f64]) -> Result<f64, Error> {
    let sq: f64 = values.iter().map(|x| x * x).sum();
    if values.is_empty() || sq == 0.0 {
        return Err(Error::FairnessUndefined);
    }
    let s: f64 = values.iter().sum();
    Ok(s * s / (values.len() as f64 * sq))
}

/// Population variance of the per-slot sum rate over an episode.
pub fn sum_rate_variance(per_slot_sums: &[f64]) -> f64 {
    variance(per_slot_sums)
}

/// The exponential utility as an optimization objective: a fixed prefix of
/// already-realized slot sums plus the window's variable slot sums, measured
/// in `rate_unit` bits/s.
#[derive(Debug, Clone)]
pub struct RiskObjective {
    pub mu: f64,
    pub rate_unit: f64,
    /// Realized sums (bits/s) that enter the empirical mean as constants.
    pub history: Vec<f64>,
}

impl RiskObjective {
    pub fn new(mu: f64, rate_unit: f64, history: Vec<f64>) -> Self {
        Self { mu, rate_unit, history }
    }

    /// Utility of the window sums (bits/s), in `rate_unit`.
    pub fn value(&self, window_sums: &[f64]) -> f64 {
        let all: Vec<f64> = self
            .history
            .iter()
            .chain(window_sums)
            .map(|s| s / self.rate_unit)
            .collect();
        exp_utility(&all, self.mu)
    }

    /// Utility and its gradient with respect to each window sum (per bit/s).
    pub fn value_grad(&self, window_sums: &[f64], grad: &mut [f64]) -> f64 {
        let total = (self.history.len() + window_sums.len()) as f64;
        if self.mu == 0.0 {
            grad.fill(1.0 / (total * self.rate_unit));
            return self.value(window_sums);
        }
        let mu = self.mu;
        let scaled = |s: &f64| mu * s / self.rate_unit;
        let shift = self
            .history
            .iter()
            .chain(window_sums)
            .map(scaled)
            .fold(f64::NEG_INFINITY, f64::max);
        let hist: f64 = self.history.iter().map(|s| (scaled(s) - shift).exp()).sum();
        let mut acc = hist;
        for (g, s) in grad.iter_mut().zip(window_sums) {
            *g = (scaled(s) - shift).exp();
            acc += *g;
        }
        for g in grad.iter_mut() {
            *g /= acc * self.rate_unit;
        }
        (shift + (acc / total).ln()) / mu
    }

    /// Negated Hessian with respect to the window sums (per (bit/s)^2);
    /// `None` in the risk-neutral case, where it vanishes.
    pub fn neg_hessian(&self, window_sums: &[f64]) -> Option<nalgebra::DMatrix<f64>> {
        if self.mu == 0.0 {
            return None;
        }
        let mu = self.mu;
        let scaled = |s: &f64| mu * s / self.rate_unit;
        let shift = self
            .history
            .iter()
            .chain(window_sums)
            .map(scaled)
            .fold(f64::NEG_INFINITY, f64::max);
        let hist: f64 = self.history.iter().map(|s| (scaled(s) - shift).exp()).sum();
        let e: Vec<f64> = window_sums.iter().map(|s| (scaled(s) - shift).exp()).collect();
        let acc = hist + e.iter().sum::<f64>();
        let c = -mu / (self.rate_unit * self.rate_unit);
        Some(nalgebra::DMatrix::from_fn(e.len(), e.len(), |i, j| {
            if i == j {
                // w (1 - w) with 1 - w summed from the other terms, which
                // keeps precision when one term dominates
                let others = hist + e.iter().enumerate().filter(|&(l, _)| l != i).map(|(_, v)| v).sum::<f64>();
                c * e[i] * others / (acc * acc)
            } else {
                -c * e[i] * e[j] / (acc * acc)
            }
        }))
    }
}
