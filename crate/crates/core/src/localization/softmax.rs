//! Soft-max potential `Phi = (1/beta) log Tr e^{beta A}`.

use serde::{Deserialize, Serialize};

use super::path::LocalizationPath;
use crate::error::{Error, Result};

/// `2 log n`, with `n` floored at 2 so the value stays positive.
pub fn default_beta(n: usize) -> f64 {
    2.0 * (n.max(2) as f64).ln()
}

/// Log-sum-exp form: `max + (1/beta) log sum e^{beta (lambda - max)}`.
pub fn softmax_value(eigenvalues: &[f64], beta: f64) -> f64 {
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = eigenvalues.iter().map(|l| (beta * (l - max)).exp()).sum();
    max + s.ln() / beta
}

/// Gradient weights `e^{beta lambda_i} / sum_j e^{beta lambda_j}`.
pub fn softmax_weights(eigenvalues: &[f64], beta: f64) -> Vec<f64> {
    let max = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eigenvalues.iter().map(|l| (beta * (l - max)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxPotential {
    pub beta: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub op_norms: Vec<f64>,
}

/// `Phi_t` along a path; checks `||A|| <= Phi <= ||A|| + log n / beta` at
/// every recorded time.
pub fn softmax_track(path: &LocalizationPath, beta: f64) -> Result<SoftmaxPotential> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let n = path.dimension as f64;
    let mut out = SoftmaxPotential { beta, times: vec![], values: vec![], op_norms: vec![] };
    for r in &path.records {
        let phi = softmax_value(&r.eigenvalues, beta);
        let op = r.op_norm;
        let slack = 1e-12 * (1.0 + op.abs());
        if phi < op - slack || phi > op + n.ln() / beta + slack {
            return Err(Error::HypothesisViolated(format!(
                "soft-max sandwich broken at t = {}: op {op}, phi {phi}",
                r.t
            )));
        }
        out.times.push(r.t);
        out.values.push(phi);
        out.op_norms.push(op);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_three_halves() {
        for n in [2usize, 5, 64] {
            let v = softmax_value(&vec![1.0; n], default_beta(n));
            assert!((v - 1.5).abs() < 1e-14);
        }
    }

    #[test]
    fn large_beta_recovers_operator_norm() {
        let v = softmax_value(&[0.3, 1.7, 1.2], 1e6);
        assert!((v - 1.7).abs() < 1e-5);
    }

    #[test]
    fn sandwich_on_spiked_diagonal() {
        let n = 10;
        let mut eig = vec![1.0; n];
        eig[0] = 2.0;
        let v = softmax_value(&eig, default_beta(n));
        assert!((2.0..=2.5).contains(&v));
    }
}
