//! Small statistics toolkit: means with standard errors, Wilson intervals,
//! two-sample Kolmogorov–Smirnov.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Standard-error multiplier used by every Monte Carlo tolerance.
pub const SE_MULTIPLIER: f64 = 4.0;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, se: 0.0 }
    }

    /// Mean and standard error of `xs`.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Estimate { value: f64::NAN, se: f64::NAN };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Estimate { value: mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Estimate { value: mean, se: (var / n as f64).sqrt() }
    }

    /// Difference of two independent estimates.
    pub fn minus(self, other: Estimate) -> Estimate {
        Estimate { value: self.value - other.value, se: self.se.hypot(other.se) }
    }

    pub fn scale(self, c: f64) -> Estimate {
        Estimate { value: self.value * c, se: self.se * c.abs() }
    }

    /// `|value - target| <= 4·se + tol`.
    pub fn agrees_with(&self, target: f64, tol: f64) -> bool {
        (self.value - target).abs() <= SE_MULTIPLIER * self.se + tol
    }
}

/// Monte Carlo budget: sample count, master seed and RNG stream fan-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub samples: usize,
    pub seed: u64,
    pub streams: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { samples: 200_000, seed: 0, streams: 8 }
    }
}

impl Budget {
    pub fn new(samples: usize, seed: u64) -> Self {
        Budget { samples, seed, ..Budget::default() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Budget { seed, ..self }
    }
}

/// Estimate from batch means: splits `xs` in `batches` contiguous groups.
pub fn batch_estimate<F: Fn(&[f64]) -> f64>(xs: &[f64], batches: usize, f: F) -> Estimate {
    let size = xs.len() / batches.max(1);
    if size == 0 {
        return Estimate { value: f(xs), se: f64::NAN };
    }
    let parts: Vec<f64> = (0..batches).map(|b| f(&xs[b * size..(b + 1) * size])).collect();
    let e = Estimate::from_samples(&parts);
    Estimate { value: f(xs), se: e.se }
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at level `alpha`.
pub fn ks_critical(alpha: f64, na: usize, nb: usize) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

fn std_normal() -> Normal {
    Normal::standard()
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Upper tail `P(Z > x)`, accurate for large `x`.
pub fn normal_sf(x: f64) -> f64 {
    std_normal().sf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

pub fn normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}
