//! Deterministic coupling `d theta = (a(t, theta) + theta/t)/2 dt`, integrated
//! by RK4 in `u = log t` with step doubling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::tilted::{tilt, TiltOptions};

pub const RK4_REL_TOL: f64 = 1e-6;
const START_STEPS: usize = 8;
const MAX_STEPS: usize = 1 << 14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub theta: Vec<f64>,
    pub steps: usize,
    /// Relative change between the last two step counts.
    pub discrepancy: f64,
}

fn velocity(base: &Measure, t: f64, theta: &[f64], opts: &TiltOptions) -> Result<Vec<f64>> {
    let a = tilt(base, t, theta.to_vec())?.stats(opts)?.a;
    // d theta / d log t = (t a + theta) / 2
    Ok(a.iter().zip(theta).map(|(ai, th)| 0.5 * (t * ai + th)).collect())
}

fn rk4(base: &Measure, start: &[f64], t1: f64, t2: f64, steps: usize, opts: &TiltOptions) -> Result<Vec<f64>> {
    let (u1, u2) = (t1.ln(), t2.ln());
    let h = (u2 - u1) / steps as f64;
    let mut y = start.to_vec();
    let axpy = |y: &[f64], k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for s in 0..steps {
        let u = u1 + h * s as f64;
        let k1 = velocity(base, u.exp(), &y, opts)?;
        let k2 = velocity(base, (u + 0.5 * h).exp(), &axpy(&y, &k1, 0.5 * h), opts)?;
        let k3 = velocity(base, (u + 0.5 * h).exp(), &axpy(&y, &k2, 0.5 * h), opts)?;
        let k4 = velocity(base, (u + h).exp(), &axpy(&y, &k3, h), opts)?;
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(y)
}

/// `theta_{t2}` from `theta_{t1} = theta_start`, refining until two successive
/// step counts agree to `RK4_REL_TOL` relative.
pub fn kim_milman_flow(base: &Measure, theta_start: &[f64], t1: f64, t2: f64, opts: &TiltOptions) -> Result<FlowResult> {
    if !(t1 > 0.0 && t1 <= t2 && t2.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 < t1 <= t2, got t1 = {t1}, t2 = {t2}")));
    }
    if theta_start.len() != base.dimension() {
        return Err(Error::InvalidArgument("theta_start has wrong dimension".into()));
    }
    if t1 == t2 {
        return Ok(FlowResult { theta: theta_start.to_vec(), steps: 0, discrepancy: 0.0 });
    }
    let mut steps = START_STEPS;
    let mut coarse = rk4(base, theta_start, t1, t2, steps, opts)?;
    loop {
        let fine = rk4(base, theta_start, t1, t2, 2 * steps, opts)?;
        let scale = fine.iter().map(|v| v * v).sum::<f64>().sqrt().max(t2 * 1e-3);
        let diff = fine.iter().zip(&coarse).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let discrepancy = diff / scale;
        steps *= 2;
        if discrepancy <= RK4_REL_TOL {
            return Ok(FlowResult { theta: fine, steps, discrepancy });
        }
        if steps >= MAX_STEPS {
            return Err(Error::StepTooCoarse { discrepancy, steps });
        }
        coarse = fine;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::MeasureSpec;

    #[test]
    fn gaussian_flow_closed_form() {
        // a = theta/(1+t), so theta_t / sqrt(t (1+t)) is conserved.
        let m = Measure::new(&MeasureSpec::standard_gaussian(1)).unwrap();
        let (t1, t2) = (0.5, 3.0);
        let r = kim_milman_flow(&m, &[0.8], t1, t2, &TiltOptions::default()).unwrap();
        let inv = |t: f64, th: f64| th / (t * (1.0 + t)).sqrt();
        assert!((inv(t2, r.theta[0]) / inv(t1, 0.8) - 1.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn equal_times_are_identity() {
        let m = Measure::new(&MeasureSpec::standard_gaussian(2)).unwrap();
        let r = kim_milman_flow(&m, &[0.1, 0.2], 1.0, 1.0, &TiltOptions::default()).unwrap();
        assert_eq!(r.theta, vec![0.1, 0.2]);
    }
}
