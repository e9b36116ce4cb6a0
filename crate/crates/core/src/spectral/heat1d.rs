//! `Q_s` for a one-dimensional grid measure by direct Gaussian-kernel
//! quadrature: `Q_s f(y) = sum_i w_i f_i g_s(y - x_i) / sum_i w_i g_s(y - x_i)`.

use super::model::SpectralModel;
use crate::error::{Error, Result};
use crate::quad::GaussLegendre;

/// Kernel truncation in standard deviations (`e^{-72}`).
const KERNEL_RADIUS: f64 = 12.0;
/// Quadrature panels per kernel width in `y`.
const PANELS_PER_SIGMA: f64 = 2.0;
const MAX_PANELS: usize = 1 << 14;
/// Smallest kernel width, in grid spacings, for which the node sum is trusted.
pub const MIN_KERNEL_CELLS: f64 = 4.0;

/// `(P_s(f rho)(y), P_s rho(y))` sharing one log-scale.
fn kernel_sums(model: &SpectralModel, f: &[f64], s: f64, y: f64) -> (f64, f64, f64) {
    let sd = s.sqrt();
    let m = model.size();
    let from = ((y - KERNEL_RADIUS * sd - model.lo) / model.h).floor().max(0.0) as usize;
    let to = (((y + KERNEL_RADIUS * sd - model.lo) / model.h).ceil().max(0.0) as usize).min(m);
    if from >= to {
        return (0.0, 0.0, f64::NEG_INFINITY);
    }
    let expo = |i: usize| model.log_weights[i] - (y - model.x[i]).powi(2) / (2.0 * s);
    let top = (from..to).map(expo).fold(f64::NEG_INFINITY, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for i in from..to {
        let e = (expo(i) - top).exp();
        num += f[i] * e;
        den += e;
    }
    (num, den, top)
}

fn check_scale(model: &SpectralModel, s: f64) -> Result<()> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument(format!("heat time must be positive, got {s}")));
    }
    if s.sqrt() < MIN_KERNEL_CELLS * model.h {
        return Err(Error::InvalidArgument(format!(
            "heat time {s} resolves fewer than {MIN_KERNEL_CELLS} grid cells (h = {:.3e})",
            model.h
        )));
    }
    Ok(())
}

/// `Q_s f(y)`.
pub fn q_grid(model: &SpectralModel, f: &[f64], s: f64, y: f64) -> Result<f64> {
    check_scale(model, s)?;
    let (num, den, _) = kernel_sums(model, f, s, y);
    Ok(if den > 0.0 { num / den } else { f64::NAN })
}

/// `||Q_s f||^2_{L^2(mu_s)} = int (P_s(f rho))^2 / P_s rho dy`.
pub fn q_norm_sq_grid(model: &SpectralModel, f: &[f64], s: f64) -> Result<f64> {
    check_scale(model, s)?;
    let sd = s.sqrt();
    let (a, b) = (model.lo - KERNEL_RADIUS * sd, model.hi + KERNEL_RADIUS * sd);
    let panels = (((b - a) / sd * PANELS_PER_SIGMA).ceil() as usize).clamp(16, MAX_PANELS);
    let width = (b - a) / panels as f64;
    let rule = GaussLegendre::standard();
    let norm = (2.0 * std::f64::consts::PI * s).sqrt();
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + width * p as f64;
        total += rule.integrate(lo, lo + width, |y| {
            let (num, den, top) = kernel_sums(model, f, s, y);
            if den > 0.0 {
                top.exp() * num * num / den
            } else {
                0.0
            }
        });
    }
    Ok(total / norm)
}
