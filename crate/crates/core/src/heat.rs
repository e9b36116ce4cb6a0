//! Heat flow `mu_s = mu * gamma_s` and the adjoint operator
//! `Q_s phi = P_s(phi rho) / P_s rho`, evaluated through the tilt bridge
//! `Q_s phi(y) = E_{p_{1/s, y/s}} phi`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::measure::{Measure, SamplePack};
use crate::rng::{derive_seed, stream};
use crate::spectral::{q_norm_sq_grid, GridOptions, SpectralModel, MIN_KERNEL_CELLS};
use crate::stats::{Budget, Estimate};
use crate::tilted::{tilt, TestFn, TiltOptions};

/// Scalar test function, or the identity map handled coordinate-wise.
#[derive(Debug, Clone)]
pub enum Phi {
    Scalar(TestFn),
    Identity,
}

#[derive(Debug, Clone, Copy)]
pub struct HeatState<'a> {
    pub base: &'a Measure,
    pub s: f64,
}

impl<'a> HeatState<'a> {
    pub fn new(base: &'a Measure, s: f64) -> Result<Self> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(Error::InvalidArgument(format!("heat time must be >= 0, got {s}")));
        }
        Ok(HeatState { base, s })
    }

    /// `Cov(mu) + s Id`.
    pub fn covariance(&self) -> Matrix {
        let n = self.base.dimension();
        &self.base.moments().cov + &(linalg::identity(n) * faer::Scale(self.s))
    }

    /// Draws `Y = X + sqrt(s) G` with `X ~ mu`, `G ~ N(0, Id)`.
    pub fn sample(&self, count: usize, seed: u64, stream_id: u64) -> Result<SamplePack> {
        let mut pack = self.base.sample(count, seed, stream_id)?;
        let mut rng = stream(derive_seed(seed, "heat-noise"), stream_id);
        let sd = self.s.sqrt();
        pack.points.iter_mut().for_each(|v| *v += sd * rng.sample::<f64, _>(StandardNormal));
        Ok(pack)
    }
}

/// `Q_s phi(y)`; `Q_0` is the identity.
pub fn q_apply(base: &Measure, s: f64, phi: &TestFn, y: &[f64], opts: &TiltOptions) -> Result<Estimate> {
    if s == 0.0 {
        return Ok(Estimate::exact(phi.eval(y)));
    }
    HeatState::new(base, s)?;
    let t = 1.0 / s;
    tilt(base, t, y.iter().map(|v| v * t).collect())?.expect(phi, opts)
}

/// `Q_s x (y)`, the barycenter of `p_{1/s, y/s}`.
pub fn q_apply_identity(base: &Measure, s: f64, y: &[f64], opts: &TiltOptions) -> Result<Vec<f64>> {
    if s == 0.0 {
        return Ok(y.to_vec());
    }
    let t = 1.0 / s;
    let opts = TiltOptions { third_moments: false, ..*opts };
    Ok(tilt(base, t, y.iter().map(|v| v * t).collect())?.stats(&opts)?.a)
}

/// `||Q_s phi||^2_{L^2(mu_s)}` by sampling `Y ~ mu_s`; vector `phi` sums the
/// coordinate norms.
pub fn q_norm_sq(base: &Measure, s: f64, phi: &Phi, budget: &Budget, opts: &TiltOptions) -> Result<Estimate> {
    let state = HeatState::new(base, s)?;
    if let Phi::Scalar(TestFn::One) = phi {
        return Ok(Estimate::exact(1.0));
    }
    let seed = derive_seed(budget.seed, "q-norm");
    let streams = budget.streams.max(1);
    let per = budget.samples.div_ceil(streams);
    let values: Vec<Vec<f64>> = (0..streams)
        .into_par_iter()
        .map(|k| {
            let pack = state.sample(per, seed, k as u64)?;
            pack.rows()
                .enumerate()
                .map(|(i, y)| {
                    let inner = opts.with_stream(((k as u64) << 32) | i as u64);
                    match phi {
                        Phi::Identity => Ok(q_apply_identity(base, s, y, &inner)?.iter().map(|v| v * v).sum()),
                        Phi::Scalar(f) => Ok(q_apply(base, s, f, y, &inner)?.value.powi(2)),
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let flat: Vec<f64> = values.into_iter().flatten().collect();
    Ok(Estimate::from_samples(&flat))
}

/// Grid size for [`q_norm_sq_coordinate`]; the gap to half this size is the
/// reported quadrature tolerance.
pub const COORDINATE_GRID: usize = 4096;

/// `||Q_s phi||^2_{L^2(mu_s)}` for a single-coordinate `phi` under a product
/// base, by one-dimensional quadrature on that coordinate's law. Returns the
/// value and a tolerance, or `None` when the base or `phi` does not qualify or
/// `s` is below the grid resolution.
pub fn q_norm_sq_coordinate(base: &Measure, s: f64, phi: &TestFn) -> Result<Option<(f64, f64)>> {
    let (Some(i), Some(comps)) = (phi.single_coordinate(), base.components()) else {
        return Ok(None);
    };
    let f = |v: f64| phi.eval_scalar(v).unwrap_or(f64::NAN);
    let value = |m: usize| -> Result<Option<f64>> {
        let model = SpectralModel::from_density(comps[i].clone(), GridOptions::new(m))?;
        if s.sqrt() < MIN_KERNEL_CELLS * model.h {
            return Ok(None);
        }
        q_norm_sq_grid(&model, &model.tabulate(f), s).map(Some)
    };
    match (value(COORDINATE_GRID / 2)?, value(COORDINATE_GRID)?) {
        (Some(coarse), Some(fine)) => Ok(Some((fine, (fine - coarse).abs().max(1e-12 * fine.abs())))),
        _ => Ok(None),
    }
}

/// `||phi||^2_{L^2(mu)}`, the `s = 0` endpoint of the contraction.
pub fn l2_norm_sq(base: &Measure, phi: &Phi, budget: &Budget) -> Result<Estimate> {
    let pack = base.sample_streams(budget.samples, derive_seed(budget.seed, "l2-norm"), 0, budget.streams)?;
    let vals: Vec<f64> = pack
        .rows()
        .map(|x| match phi {
            Phi::Identity => x.iter().map(|v| v * v).sum(),
            Phi::Scalar(f) => f.eval(x).powi(2),
        })
        .collect();
    Ok(Estimate::from_samples(&vals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Component1D, MeasureSpec};

    #[test]
    fn gaussian_q_of_identity_is_shrinkage() {
        let m = Measure::new(&MeasureSpec::standard_gaussian(1)).unwrap();
        let opts = TiltOptions::default();
        for &(s, y) in &[(0.5, 1.0), (2.0, -3.0), (1e-3, 0.7)] {
            let v = q_apply(&m, s, &TestFn::Coordinate(0), &[y], &opts).unwrap();
            assert!((v.value - y / (1.0 + s)).abs() < 1e-12);
        }
    }

    #[test]
    fn q_of_constant_is_one() {
        let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 2)).unwrap();
        let v = q_apply(&m, 0.7, &TestFn::One, &[0.3, -2.0], &TiltOptions::default()).unwrap();
        assert_eq!(v.value, 1.0);
    }

    #[test]
    fn coordinate_quadrature_matches_gaussian_closed_forms() {
        let m = Measure::new(&MeasureSpec::standard_gaussian(2)).unwrap();
        for s in [0.25, 1.0, 9.0] {
            let (v, tol) = q_norm_sq_coordinate(&m, s, &TestFn::Coordinate(1)).unwrap().unwrap();
            assert!((v - 1.0 / (1.0 + s)).abs() < 1e-6 + tol, "x at s = {s}: {v}");
            let (v, tol) = q_norm_sq_coordinate(&m, s, &TestFn::hermite2(0)).unwrap().unwrap();
            assert!((v - 2.0 / (1.0 + s).powi(2)).abs() < 1e-6 + tol, "x^2 - 1 at s = {s}: {v}");
        }
        assert!(q_norm_sq_coordinate(&m, 1.0, &TestFn::SquaredNorm).unwrap().is_none());
    }

    #[test]
    fn heat_covariance_adds_s() {
        let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 2)).unwrap();
        let c = HeatState::new(&m, 0.3).unwrap().covariance();
        assert!((c[(0, 0)] - 1.3).abs() < 1e-10);
        assert!(c[(0, 1)].abs() < 1e-15);
    }
}
