//! One-dimensional log-concave building blocks.
//!
//! A component is a raw density kind in a variable `z` together with a
//! location-scale map `x = scale * z + loc`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw density kinds. Log-densities are given up to an additive constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentKind {
    /// Standard normal.
    Gaussian,
    /// `e^{-(z+1)}` on `z >= -1`: mean 0, variance 1.
    ShiftedExponential,
    UniformInterval { lo: f64, hi: f64 },
    /// `exp(-sum_k coeffs[k] z^k)`, optionally restricted to `[lo, hi]`.
    Polynomial {
        coeffs: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lo: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        hi: Option<f64>,
    },
    /// `exp(-sqrt(z^2 + smoothing^2))`, a two-sided exponential rounded at 0.
    SmoothLaplace { smoothing: f64 },
    /// Piecewise-linear log-density through the table points.
    CustomLogdensity { x: Vec<f64>, log_density: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

fn is_one(v: &f64) -> bool {
    *v == 1.0
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component1D {
    #[serde(flatten)]
    pub kind: ComponentKind,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub scale: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub loc: f64,
}

impl Component1D {
    pub fn new(kind: ComponentKind) -> Self {
        Component1D { kind, scale: 1.0, loc: 0.0 }
    }

    pub fn gaussian() -> Self {
        Self::new(ComponentKind::Gaussian)
    }

    pub fn shifted_exponential() -> Self {
        Self::new(ComponentKind::ShiftedExponential)
    }

    pub fn uniform(lo: f64, hi: f64) -> Self {
        Self::new(ComponentKind::UniformInterval { lo, hi })
    }

    /// Uniform on `[-sqrt 3, sqrt 3]`, the isotropic interval.
    pub fn isotropic_uniform() -> Self {
        let r = 3f64.sqrt();
        Self::uniform(-r, r)
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        Self::new(ComponentKind::Polynomial { coeffs, lo: None, hi: None })
    }

    /// `exp(-quad x^2/2 - quartic x^4)`.
    pub fn quartic(quad: f64, quartic: f64) -> Self {
        Self::polynomial(vec![0.0, 0.0, 0.5 * quad, 0.0, quartic])
    }

    pub fn smooth_laplace(smoothing: f64) -> Self {
        Self::new(ComponentKind::SmoothLaplace { smoothing })
    }

    pub fn custom(x: Vec<f64>, log_density: Vec<f64>) -> Self {
        Self::new(ComponentKind::CustomLogdensity { x, log_density })
    }

    pub fn scaled(mut self, scale: f64, loc: f64) -> Self {
        self.loc = scale * self.loc + loc;
        self.scale *= scale;
        self
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.kind, ComponentKind::Gaussian)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) || !self.loc.is_finite() {
            return Err(Error::InvalidSpec(format!("component scale {} / loc {}", self.scale, self.loc)));
        }
        match &self.kind {
            ComponentKind::UniformInterval { lo, hi } if !(lo < hi) => {
                Err(Error::InvalidSpec(format!("uniform_interval needs lo < hi, got [{lo}, {hi}]")))
            }
            ComponentKind::Polynomial { coeffs, lo, hi } => {
                let bounded_below = lo.is_some();
                let bounded_above = hi.is_some();
                let degree = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
                let lead = coeffs.get(degree).copied().unwrap_or(0.0);
                let integrable = match (bounded_below, bounded_above) {
                    (true, true) => true,
                    (false, false) => degree >= 2 && degree % 2 == 0 && lead > 0.0,
                    // one open end: need growth towards that end
                    (true, false) => degree >= 1 && lead > 0.0,
                    (false, true) => degree >= 1 && (if degree % 2 == 0 { lead > 0.0 } else { lead < 0.0 }),
                };
                if !integrable {
                    return Err(Error::InvalidSpec("polynomial log-density is not integrable".into()));
                }
                if let (Some(a), Some(b)) = (lo, hi) {
                    if !(a < b) {
                        return Err(Error::InvalidSpec("polynomial support needs lo < hi".into()));
                    }
                }
                Ok(())
            }
            ComponentKind::SmoothLaplace { smoothing } if !(*smoothing > 0.0) => {
                Err(Error::InvalidSpec("smooth_laplace smoothing must be positive".into()))
            }
            ComponentKind::CustomLogdensity { x, log_density } => {
                if x.len() < 2 || x.len() != log_density.len() {
                    return Err(Error::InvalidSpec("custom_logdensity needs matching tables of length >= 2".into()));
                }
                if x.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::InvalidSpec("custom_logdensity grid must increase".into()));
                }
                if log_density.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidSpec("custom_logdensity values must be finite".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Raw support in `z`.
    pub fn raw_support(&self) -> (f64, f64) {
        match &self.kind {
            ComponentKind::Gaussian | ComponentKind::SmoothLaplace { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            ComponentKind::ShiftedExponential => (-1.0, f64::INFINITY),
            ComponentKind::UniformInterval { lo, hi } => (*lo, *hi),
            ComponentKind::Polynomial { lo, hi, .. } => {
                (lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY))
            }
            ComponentKind::CustomLogdensity { x, .. } => (x[0], x[x.len() - 1]),
        }
    }

    /// Support in `x`.
    pub fn support(&self) -> (f64, f64) {
        let (a, b) = self.raw_support();
        (self.scale * a + self.loc, self.scale * b + self.loc)
    }

    fn custom_segment(x: &[f64], z: f64) -> usize {
        match x.binary_search_by(|v| v.total_cmp(&z)) {
            Ok(i) => i.min(x.len() - 2),
            Err(i) => i.saturating_sub(1).min(x.len() - 2),
        }
    }

    /// Unnormalized raw log-density, `-inf` outside the support.
    pub fn raw_log_density(&self, z: f64) -> f64 {
        let (a, b) = self.raw_support();
        if z < a || z > b {
            return f64::NEG_INFINITY;
        }
        match &self.kind {
            ComponentKind::Gaussian => -0.5 * z * z,
            ComponentKind::ShiftedExponential => -(z + 1.0),
            ComponentKind::UniformInterval { .. } => 0.0,
            ComponentKind::Polynomial { coeffs, .. } => -horner(coeffs, z),
            ComponentKind::SmoothLaplace { smoothing } => -(z * z + smoothing * smoothing).sqrt(),
            ComponentKind::CustomLogdensity { x, log_density } => {
                let i = Self::custom_segment(x, z);
                let w = (z - x[i]) / (x[i + 1] - x[i]);
                log_density[i] * (1.0 - w) + log_density[i + 1] * w
            }
        }
    }

    pub fn raw_dlog(&self, z: f64) -> f64 {
        match &self.kind {
            ComponentKind::Gaussian => -z,
            ComponentKind::ShiftedExponential => -1.0,
            ComponentKind::UniformInterval { .. } => 0.0,
            ComponentKind::Polynomial { coeffs, .. } => {
                let d: Vec<f64> = coeffs.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect();
                -horner(&d, z)
            }
            ComponentKind::SmoothLaplace { smoothing } => -z / (z * z + smoothing * smoothing).sqrt(),
            ComponentKind::CustomLogdensity { x, log_density } => {
                let i = Self::custom_segment(x, z);
                (log_density[i + 1] - log_density[i]) / (x[i + 1] - x[i])
            }
        }
    }

    pub fn raw_d2log(&self, z: f64) -> f64 {
        match &self.kind {
            ComponentKind::Gaussian => -1.0,
            ComponentKind::ShiftedExponential | ComponentKind::UniformInterval { .. } => 0.0,
            ComponentKind::Polynomial { coeffs, .. } => {
                let d: Vec<f64> =
                    coeffs.iter().enumerate().skip(2).map(|(k, c)| (k * (k - 1)) as f64 * c).collect();
                -horner(&d, z)
            }
            ComponentKind::SmoothLaplace { smoothing } => {
                let r2 = z * z + smoothing * smoothing;
                -smoothing * smoothing / (r2 * r2.sqrt())
            }
            ComponentKind::CustomLogdensity { .. } => 0.0,
        }
    }

    /// Closed-form raw log-normalizer, when known.
    pub fn raw_log_normalizer(&self) -> Option<f64> {
        match &self.kind {
            ComponentKind::Gaussian => Some(0.5 * (2.0 * std::f64::consts::PI).ln()),
            ComponentKind::ShiftedExponential => Some(0.0),
            ComponentKind::UniformInterval { lo, hi } => Some((hi - lo).ln()),
            _ => None,
        }
    }

    /// Unnormalized log-density in `x` (includes the Jacobian of the scale).
    pub fn log_density(&self, x: f64) -> f64 {
        self.raw_log_density((x - self.loc) / self.scale) - self.scale.ln()
    }

    pub fn dlog(&self, x: f64) -> f64 {
        self.raw_dlog((x - self.loc) / self.scale) / self.scale
    }

    pub fn d2log(&self, x: f64) -> f64 {
        self.raw_d2log((x - self.loc) / self.scale) / (self.scale * self.scale)
    }
}

fn horner(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * z + c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let comps = [
            Component1D::gaussian().scaled(2.0, 1.0),
            Component1D::quartic(1.0, 0.25),
            Component1D::smooth_laplace(0.3),
            Component1D::shifted_exponential(),
        ];
        let h = 1e-5;
        for c in &comps {
            for &x in &[-0.7, 0.2, 1.3] {
                let fd = (c.log_density(x + h) - c.log_density(x - h)) / (2.0 * h);
                assert!((fd - c.dlog(x)).abs() < 1e-6, "{c:?} at {x}");
                let fd2 = (c.dlog(x + h) - c.dlog(x - h)) / (2.0 * h);
                assert!((fd2 - c.d2log(x)).abs() < 1e-5, "{c:?} at {x}");
            }
        }
    }

    #[test]
    fn non_integrable_polynomial_is_rejected() {
        assert!(Component1D::polynomial(vec![0.0, 1.0]).validate().is_err());
        assert!(Component1D::polynomial(vec![0.0, 0.0, -1.0]).validate().is_err());
        assert!(Component1D::quartic(1.0, 1.0).validate().is_ok());
        let half_line = Component1D::new(ComponentKind::Polynomial { coeffs: vec![0.0, 2.0], lo: Some(0.0), hi: None });
        assert!(half_line.validate().is_ok());
    }

    #[test]
    fn custom_table_interpolates() {
        let c = Component1D::custom(vec![0.0, 1.0, 2.0], vec![0.0, -1.0, -3.0]);
        assert_eq!(c.raw_log_density(0.5), -0.5);
        assert_eq!(c.raw_log_density(1.5), -2.0);
        assert_eq!(c.raw_dlog(1.5), -2.0);
        assert_eq!(c.raw_log_density(2.5), f64::NEG_INFINITY);
    }
}
