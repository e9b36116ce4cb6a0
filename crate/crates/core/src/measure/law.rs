//! Prepared measures: moments, log-densities and exact samplers.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use rayon::prelude::*;

use super::component::Component1D;
use super::density::Density1D;
use super::spec::{Affine, Body, Family, MeasureSpec};
use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{derive_seed, stream, StreamRng};

/// Samples used for plug-in moments when no quadrature is available.
pub const PLUG_IN_SAMPLES: usize = 1_000_000;
/// Draws used to calibrate rejection samplers.
pub const CALIBRATION_DRAWS: usize = 1 << 15;
/// Minimum acceptance rate of a rejection sampler.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Isotropy tolerance for quadrature-exact moments.
pub const EXACT_ISOTROPY_TOL: f64 = 1e-8;
/// Isotropy tolerance for plug-in moments (whitened with the same draws).
pub const PLUG_IN_ISOTROPY_TOL: f64 = 1e-6;

/// `count × dimension` points, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePack {
    pub points: Vec<f64>,
    pub count: usize,
    pub dimension: usize,
    pub seed: u64,
    pub stream_id: u64,
}

impl SamplePack {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dimension)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proposal {
    /// Uniform on the body, accept with probability `e^{-strength |z|^2/2}`.
    UniformBody,
    /// `N(0, Id/strength)`, accept inside the body.
    Gaussian,
}

/// Uniform or Gaussian-restricted law on a canonical body.
#[derive(Debug, Clone)]
pub struct BodyLaw {
    pub body: Body,
    pub scale: f64,
    pub strength: f64,
    pub dimension: usize,
    proposal: OnceLock<std::result::Result<(Proposal, f64), Error>>,
}

impl BodyLaw {
    pub fn new(body: Body, scale: f64, strength: f64, dimension: usize) -> Self {
        BodyLaw { body, scale, strength, dimension, proposal: OnceLock::new() }
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        self.body.contains(z, self.scale)
    }

    /// Unnormalized log-density in `z`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        if self.contains(z) {
            -0.5 * self.strength * z.iter().map(|v| v * v).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Uniform draw on the body.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64]) {
        let n = self.dimension;
        let c = self.scale;
        match self.body {
            Body::Cube => z.iter_mut().for_each(|v| *v = c * (2.0 * rng.random::<f64>() - 1.0)),
            Body::Ball => {
                let mut r2 = 0.0;
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    r2 += *v * *v;
                }
                let radius = c * rng.random::<f64>().powf(1.0 / n as f64) / r2.sqrt();
                z.iter_mut().for_each(|v| *v *= radius);
            }
            Body::Simplex | Body::CrossPolytope => {
                let mut total = 0.0;
                for v in z.iter_mut() {
                    *v = rng.sample(Exp1);
                    total += *v;
                }
                total += rng.sample::<f64, _>(Exp1);
                let signed = self.body == Body::CrossPolytope;
                for v in z.iter_mut() {
                    *v *= c / total;
                    if signed && rng.random::<bool>() {
                        *v = -*v;
                    }
                }
            }
        }
    }

    fn propose<R: Rng + ?Sized>(&self, proposal: Proposal, rng: &mut R, z: &mut [f64]) -> bool {
        match proposal {
            Proposal::UniformBody => {
                self.sample_uniform(rng, z);
                if self.strength == 0.0 {
                    return true;
                }
                let r2: f64 = z.iter().map(|v| v * v).sum();
                rng.random::<f64>() < (-0.5 * self.strength * r2).exp()
            }
            Proposal::Gaussian => {
                let sd = 1.0 / self.strength.sqrt();
                z.iter_mut().for_each(|v| *v = sd * rng.sample::<f64, _>(StandardNormal));
                self.contains(z)
            }
        }
    }

    /// Chosen proposal and its calibrated acceptance rate.
    pub fn calibrated(&self) -> Result<(Proposal, f64)> {
        self.proposal
            .get_or_init(|| {
                let mut candidates = vec![Proposal::UniformBody];
                if self.strength > 0.0 {
                    candidates.push(Proposal::Gaussian);
                } else {
                    return Ok((Proposal::UniformBody, 1.0));
                }
                let mut best = (Proposal::UniformBody, 0.0);
                let mut z = vec![0.0; self.dimension];
                for (k, p) in candidates.into_iter().enumerate() {
                    let mut rng = stream(derive_seed(0, "body-calibration"), k as u64);
                    let acc = (0..CALIBRATION_DRAWS).filter(|_| self.propose(p, &mut rng, &mut z)).count();
                    let rate = acc as f64 / CALIBRATION_DRAWS as f64;
                    if rate > best.1 {
                        best = (p, rate);
                    }
                }
                if best.1 < MIN_ACCEPTANCE {
                    Err(Error::SamplerInfeasible { acceptance: best.1 })
                } else {
                    Ok(best)
                }
            })
            .clone()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64]) -> Result<()> {
        let (proposal, _) = self.calibrated()?;
        while !self.propose(proposal, rng, z) {}
        Ok(())
    }

    /// Exact mean and covariance in `z`, when available in closed form or by
    /// one-dimensional quadrature.
    fn exact_moments(&self) -> Option<(Vec<f64>, Matrix)> {
        let n = self.dimension;
        let c = self.scale;
        let tau = self.strength;
        match self.body {
            Body::Cube => {
                let d = Density1D::new(cube_component(c, tau)).ok()?;
                Some((vec![0.0; n], linalg::diag(&vec![d.var(); n])))
            }
            Body::Ball => {
                let nf = n as f64;
                let w = |r: f64, p: f64| r.powf(p) * (-0.5 * tau * c * c * r * r).exp();
                let num = crate::quad::integrate(0.0, 1.0, 256, |r| w(r, nf + 1.0));
                let den = crate::quad::integrate(0.0, 1.0, 256, |r| w(r, nf - 1.0));
                let v = c * c * num / den / nf;
                Some((vec![0.0; n], linalg::diag(&vec![v; n])))
            }
            Body::Simplex if tau == 0.0 => {
                let nf = n as f64;
                let k = c * c / ((nf + 1.0).powi(2) * (nf + 2.0));
                let cov = Matrix::from_fn(n, n, |i, j| if i == j { k * nf } else { -k });
                Some((vec![c / (nf + 1.0); n], cov))
            }
            Body::CrossPolytope if tau == 0.0 => {
                let nf = n as f64;
                let v = 2.0 * c * c / ((nf + 1.0) * (nf + 2.0));
                Some((vec![0.0; n], linalg::diag(&vec![v; n])))
            }
            _ => None,
        }
    }
}

/// One coordinate of the uniform or Gaussian-restricted cube.
pub fn cube_component(scale: f64, strength: f64) -> Component1D {
    if strength == 0.0 {
        Component1D::uniform(-scale, scale)
    } else {
        Component1D::new(super::component::ComponentKind::Polynomial {
            coeffs: vec![0.0, 0.0, 0.5 * strength],
            lo: Some(-scale),
            hi: Some(scale),
        })
    }
}

/// Base law in `z` before a general linear map.
#[derive(Debug, Clone)]
pub enum Base {
    Product(Vec<Density1D>),
    Body(BodyLaw),
}

impl Base {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64]) -> Result<()> {
        match self {
            Base::Product(ds) => {
                for (v, d) in z.iter_mut().zip(ds) {
                    *v = d.sample(rng);
                }
                Ok(())
            }
            Base::Body(b) => b.sample(rng, z),
        }
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        match self {
            Base::Product(ds) => ds.iter().zip(z).map(|(d, v)| d.log_pdf(*v)).sum(),
            Base::Body(b) => b.log_density(z),
        }
    }
}

/// Prepared law of a measure.
#[derive(Debug, Clone)]
pub enum Law {
    /// Independent coordinates; the tilt factorizes.
    Product(Vec<Density1D>),
    /// Non-diagonal Gaussian.
    Gaussian { mean: Vec<f64>, cov: Matrix, chol: Matrix, precision: Matrix },
    /// `x = linear z + shift`.
    Linear { base: Base, linear: Matrix, inverse: Matrix, shift: Vec<f64>, log_det: f64 },
}

/// Mean and covariance with an exactness flag.
#[derive(Debug, Clone)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub cov: Matrix,
    pub exact: bool,
}

/// A validated spec together with its prepared law and moments.
#[derive(Debug, Clone)]
pub struct Measure {
    spec: MeasureSpec,
    law: Law,
    moments: Moments,
}

fn affine_parts(spec: &MeasureSpec) -> (Matrix, Vec<f64>) {
    let n = spec.dimension;
    match &spec.affine {
        Some(a) => (linalg::from_rows(&a.linear), a.shift.clone()),
        None => (linalg::identity(n), vec![0.0; n]),
    }
}

fn positive_diagonal(spec: &MeasureSpec) -> bool {
    spec.affine
        .as_ref()
        .is_none_or(|a| a.is_diagonal() && (0..spec.dimension).all(|i| a.linear[i][i] > 0.0))
}

fn diag_entry(spec: &MeasureSpec, i: usize) -> (f64, f64) {
    spec.affine.as_ref().map_or((1.0, 0.0), |a| (a.linear[i][i], a.shift[i]))
}

impl Measure {
    pub fn new(spec: &MeasureSpec) -> Result<Self> {
        Self::with_factorization(spec, true)
    }

    /// With `factorize = false`, product structure is not exploited, which
    /// routes tilt statistics through Monte Carlo (used for cross-checks).
    pub fn with_factorization(spec: &MeasureSpec, factorize: bool) -> Result<Self> {
        spec.validate()?;
        let n = spec.dimension;
        let fold = |comps: Vec<Component1D>| -> Result<Law> {
            let ds = comps
                .into_iter()
                .enumerate()
                .map(|(i, c)| {
                    let (a, b) = diag_entry(spec, i);
                    Density1D::new(c.scaled(a, b))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Law::Product(ds))
        };
        let linear_over = |base: Base| -> Result<Law> {
            let (m, b) = affine_parts(spec);
            let (vals, _) = linalg::sym_eigen(&(&linalg::transpose(&m) * &m));
            let min = vals.first().copied().unwrap_or(0.0);
            if !(min > 1e-24 * vals.last().copied().unwrap_or(1.0)) {
                return Err(Error::DegenerateSupport { min_eig: min, trace: vals.iter().sum() });
            }
            let inverse = faer::linalg::solvers::DenseSolveCore::inverse(&m.partial_piv_lu());
            let log_det = 0.5 * vals.iter().map(|v| v.ln()).sum::<f64>();
            Ok(Law::Linear { base, linear: m, inverse, shift: b, log_det })
        };
        let law = match &spec.family {
            Family::Product { components } => {
                if factorize && positive_diagonal(spec) {
                    fold(components.clone())?
                } else {
                    let ds = components.iter().cloned().map(Density1D::new).collect::<Result<Vec<_>>>()?;
                    linear_over(Base::Product(ds))?
                }
            }
            Family::Gaussian { covariance } => {
                let c0 = covariance.as_ref().map_or_else(|| linalg::identity(n), |c| linalg::from_rows(c));
                let (m, b) = affine_parts(spec);
                let cov = linalg::symmetrize(&(&(&m * &c0) * &linalg::transpose(&m)));
                let scale = (0..n).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
                if linalg::is_diagonal(&cov, 1e-12 * scale) && (0..n).all(|i| cov[(i, i)] > 0.0) {
                    let comps = (0..n)
                        .map(|i| Density1D::new(Component1D::gaussian().scaled(cov[(i, i)].sqrt(), b[i])))
                        .collect::<Result<Vec<_>>>()?;
                    Law::Product(comps)
                } else {
                    let chol = linalg::cholesky(&cov).ok_or_else(|| Error::DegenerateSupport {
                        min_eig: linalg::sym_eigenvalues(&cov)[0],
                        trace: linalg::trace(&cov),
                    })?;
                    let precision = linalg::inverse_spd(&cov).expect("cholesky succeeded");
                    Law::Gaussian { mean: b, cov, chol, precision }
                }
            }
            Family::UniformBody { body, scale } | Family::GaussianRestricted { body, scale, .. } => {
                let strength = match spec.family {
                    Family::GaussianRestricted { strength, .. } => strength,
                    _ => 0.0,
                };
                if *body == Body::Cube && factorize && positive_diagonal(spec) {
                    fold(vec![cube_component(*scale, strength); n])?
                } else {
                    let law = BodyLaw::new(*body, *scale, strength, n);
                    if strength > 0.0 {
                        law.calibrated()?;
                    }
                    linear_over(Base::Body(law))?
                }
            }
        };
        let moments = compute_moments(&law, n)?;
        Ok(Measure { spec: spec.clone(), law, moments })
    }

    pub fn spec(&self) -> &MeasureSpec {
        &self.spec
    }

    pub fn law(&self) -> &Law {
        &self.law
    }

    pub fn dimension(&self) -> usize {
        self.spec.dimension
    }

    pub fn is_product(&self) -> bool {
        matches!(self.law, Law::Product(_))
    }

    pub fn components(&self) -> Option<&[Density1D]> {
        match &self.law {
            Law::Product(ds) => Some(ds),
            _ => None,
        }
    }

    pub fn moments(&self) -> &Moments {
        &self.moments
    }

    /// `(|mean|, max |Cov - Id|)`.
    pub fn isotropy_deviation(&self) -> (f64, f64) {
        let n = self.dimension();
        let mean_norm = linalg::norm(&self.moments.mean);
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((self.moments.cov[(i, j)] - id).abs());
            }
        }
        (mean_norm, dev)
    }

    pub fn isotropy_tolerance(&self) -> f64 {
        if self.moments.exact {
            EXACT_ISOTROPY_TOL
        } else {
            PLUG_IN_ISOTROPY_TOL
        }
    }

    pub fn require_isotropic(&self) -> Result<()> {
        let (mean_norm, cov_dev) = self.isotropy_deviation();
        let tol = self.isotropy_tolerance();
        if mean_norm <= tol && cov_dev <= tol {
            Ok(())
        } else {
            Err(Error::IsotropyRequired { mean_norm, cov_dev })
        }
    }

    pub fn require_centered(&self) -> Result<()> {
        let mean = linalg::norm(&self.moments.mean);
        if mean <= self.isotropy_tolerance() * (1.0 + linalg::trace(&self.moments.cov).sqrt()) {
            Ok(())
        } else {
            Err(Error::CenteringRequired { mean })
        }
    }

    /// Log-density up to an additive constant; `-inf` outside the support.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match &self.law {
            Law::Product(ds) => ds.iter().zip(x).map(|(d, v)| d.log_pdf(*v)).sum(),
            Law::Gaussian { mean, precision, .. } => {
                let d: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                -0.5 * linalg::dot(&d, &linalg::mat_vec(precision, &d))
            }
            Law::Linear { base, inverse, shift, log_det, .. } => {
                let d: Vec<f64> = x.iter().zip(shift).map(|(a, b)| a - b).collect();
                base.log_density(&linalg::mat_vec(inverse, &d)) - log_det
            }
        }
    }

    pub(crate) fn draw(&self, rng: &mut StreamRng, x: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        match &self.law {
            Law::Product(ds) => {
                for (v, d) in x.iter_mut().zip(ds) {
                    *v = d.sample(rng);
                }
            }
            Law::Gaussian { mean, chol, .. } => {
                for v in scratch.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                apply_affine(chol, scratch, mean, x);
            }
            Law::Linear { base, linear, shift, .. } => {
                base.sample(rng, scratch)?;
                apply_affine(linear, scratch, shift, x);
            }
        }
        Ok(())
    }

    /// `count` i.i.d. draws from one RNG stream.
    pub fn sample(&self, count: usize, seed: u64, stream_id: u64) -> Result<SamplePack> {
        if count == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let n = self.dimension();
        let mut rng = stream(seed, stream_id);
        let mut points = vec![0.0; count * n];
        let mut scratch = vec![0.0; n];
        for row in points.chunks_exact_mut(n) {
            self.draw(&mut rng, row, &mut scratch)?;
        }
        Ok(SamplePack { points, count, dimension: n, seed, stream_id })
    }

    /// `count` draws split over `streams` consecutive stream ids starting at
    /// `first_stream`, generated in parallel and concatenated in stream order.
    pub fn sample_streams(&self, count: usize, seed: u64, first_stream: u64, streams: usize) -> Result<SamplePack> {
        let streams = streams.max(1).min(count.max(1));
        let per = count.div_ceil(streams);
        let parts: Vec<SamplePack> = (0..streams)
            .into_par_iter()
            .map(|k| {
                let c = per.min(count - (k * per).min(count));
                self.sample(c.max(1), seed, first_stream + k as u64)
            })
            .collect::<Result<_>>()?;
        let n = self.dimension();
        let mut points = Vec::with_capacity(count * n);
        for p in parts {
            points.extend_from_slice(&p.points);
        }
        points.truncate(count * n);
        Ok(SamplePack { points, count, dimension: n, seed, stream_id: first_stream })
    }
}

fn apply_affine(m: &Matrix, z: &[f64], shift: &[f64], out: &mut [f64]) {
    let n = z.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = shift[i];
        for (j, zj) in z.iter().enumerate().take(n) {
            s += m[(i, j)] * zj;
        }
        *o = s;
    }
}

fn compute_moments(law: &Law, n: usize) -> Result<Moments> {
    match law {
        Law::Product(ds) => Ok(Moments {
            mean: ds.iter().map(Density1D::mean).collect(),
            cov: linalg::diag(&ds.iter().map(Density1D::var).collect::<Vec<_>>()),
            exact: true,
        }),
        Law::Gaussian { mean, cov, .. } => Ok(Moments { mean: mean.clone(), cov: cov.clone(), exact: true }),
        Law::Linear { base, linear, shift, .. } => {
            let (mz, cz, exact) = match base {
                Base::Product(ds) => (
                    ds.iter().map(Density1D::mean).collect(),
                    linalg::diag(&ds.iter().map(Density1D::var).collect::<Vec<_>>()),
                    true,
                ),
                Base::Body(b) => match b.exact_moments() {
                    Some((m, c)) => (m, c, true),
                    None => {
                        let (m, c) = plug_in_moments(base, n)?;
                        (m, c, false)
                    }
                },
            };
            let mean: Vec<f64> = linalg::mat_vec(linear, &mz).iter().zip(shift).map(|(a, b)| a + b).collect();
            let cov = linalg::symmetrize(&(&(linear * &cz) * &linalg::transpose(linear)));
            Ok(Moments { mean, cov, exact })
        }
    }
}

/// Plug-in moments from `PLUG_IN_SAMPLES` draws with a fixed internal seed, so
/// whitening by these moments is reproducible and idempotent.
fn plug_in_moments(base: &Base, n: usize) -> Result<(Vec<f64>, Matrix)> {
    let streams = 16;
    let per = PLUG_IN_SAMPLES / streams;
    let seed = derive_seed(0, "plug-in-moments");
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..streams)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream(seed, k as u64);
            let mut z = vec![0.0; n];
            let mut s1 = vec![0.0; n];
            let mut s2 = vec![0.0; n * n];
            for _ in 0..per {
                base.sample(&mut rng, &mut z)?;
                for i in 0..n {
                    s1[i] += z[i];
                    for j in 0..=i {
                        s2[i * n + j] += z[i] * z[j];
                    }
                }
            }
            Ok((s1, s2))
        })
        .collect::<Result<_>>()?;
    let total = (per * streams) as f64;
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n * n];
    for (a, b) in partial {
        s1.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    }
    let mean: Vec<f64> = s1.iter().map(|v| v / total).collect();
    let cov = Matrix::from_fn(n, n, |i, j| {
        let (i, j) = if j <= i { (i, j) } else { (j, i) };
        s2[i * n + j] / total - mean[i] * mean[j]
    });
    Ok((mean, cov))
}

/// Whitening `x -> W (x - mean)` recorded in the affine field. Specs already
/// isotropic within 1e-9 are returned unchanged.
pub fn isotropize(spec: &MeasureSpec) -> Result<MeasureSpec> {
    let measure = Measure::new(spec)?;
    let (mean_norm, cov_dev) = measure.isotropy_deviation();
    if mean_norm <= 1e-9 && cov_dev <= 1e-9 {
        return Ok(spec.clone());
    }
    let Moments { mean, cov, .. } = measure.moments();
    let n = spec.dimension;
    let w = if linalg::is_diagonal(cov, 0.0) {
        let d: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
        let tr: f64 = d.iter().sum();
        let min = d.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 1e-12 * tr) {
            return Err(Error::DegenerateSupport { min_eig: min, trace: tr });
        }
        linalg::diag(&d.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>())
    } else {
        linalg::inv_sqrt_psd(cov)?
    };
    let (m_old, b_old) = affine_parts(spec);
    let linear = &w * &m_old;
    let centered: Vec<f64> = b_old.iter().zip(mean).map(|(b, m)| b - m).collect();
    let shift = linalg::mat_vec(&w, &centered);
    let mut out = spec.clone();
    out.affine = Some(Affine { shift, linear: linalg::to_rows(&linear) });
    Ok(out)
}

/// `count` draws of `spec` from stream `(seed, stream_id)`.
pub fn sample(spec: &MeasureSpec, count: usize, seed: u64, stream_id: u64) -> Result<SamplePack> {
    Measure::new(spec)?.sample(count, seed, stream_id)
}
