//! Gaussian tilts `p_{t,theta} ∝ e^{<theta,x> - t|x|^2/2} rho(x)` and their
//! partition function, barycenter, covariance and third-moment contractions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::measure::density::TILT_PANELS;
use crate::measure::functionals::third_moment_contraction;
use crate::measure::{Base, Law, Measure};
use crate::rng::{derive_seed, stream, StreamRng};
use crate::stats::{Budget, Estimate};

/// Minimum effective sample size of a weighted sample.
pub const MIN_ESS: f64 = 100.0;
const PILOT_DRAWS: usize = 512;
const CHUNK: usize = 2048;
const MAX_DRAW_FACTOR: usize = 20;
const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltOptions {
    pub budget: Budget,
    /// Quadrature panels per coordinate.
    pub panels: usize,
    /// Use quadrature even where a closed form exists.
    pub force_quadrature: bool,
    /// Sub-stream label for Monte Carlo draws.
    pub stream: u64,
    /// Compute `sum |H_ij|^2` in Monte Carlo mode (costs `O(N n^3)`).
    pub third_moments: bool,
}

impl Default for TiltOptions {
    fn default() -> Self {
        TiltOptions {
            budget: Budget::new(20_000, 0),
            panels: TILT_PANELS,
            force_quadrature: false,
            stream: 0,
            third_moments: true,
        }
    }
}

impl TiltOptions {
    pub fn with_budget(budget: Budget) -> Self {
        TiltOptions { budget, ..Self::default() }
    }

    pub fn with_stream(self, stream: u64) -> Self {
        TiltOptions { stream, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TiltMode {
    Quadrature,
    MonteCarlo { se_a: Vec<f64>, se_cov: Vec<Vec<f64>>, ess: f64, sampler: String },
}

#[derive(Debug, Clone)]
pub struct TiltStats {
    pub log_z: Estimate,
    pub a: Vec<f64>,
    pub cov: Matrix,
    /// Per-coordinate central third moments (product bases only).
    pub m3: Option<Vec<f64>>,
    /// `sum_{i,j} |H_ij|^2`.
    pub h_sq: Estimate,
    pub mode: TiltMode,
}

impl TiltStats {
    pub fn tr_a2(&self) -> f64 {
        linalg::frobenius_sq(&self.cov)
    }

    pub fn tr_a3(&self) -> f64 {
        let a2 = &self.cov * &self.cov;
        let n = self.cov.nrows();
        (0..n).map(|i| (0..n).map(|k| a2[(i, k)] * self.cov[(k, i)]).sum::<f64>()).sum()
    }

    pub fn op_norm(&self) -> f64 {
        linalg::op_norm_sym(&self.cov)
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.mode, TiltMode::Quadrature)
    }
}

/// Scalar test functions with exact expectations under product tilts.
#[derive(Clone)]
pub enum TestFn {
    One,
    Coordinate(usize),
    Linear(Vec<f64>),
    /// `sum_k coeffs[k] x_i^k`
    CoordinatePoly(usize, Vec<f64>),
    SquaredNorm,
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for TestFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFn::One => write!(f, "one"),
            TestFn::Coordinate(i) => write!(f, "x_{i}"),
            TestFn::Linear(v) => write!(f, "linear{v:?}"),
            TestFn::CoordinatePoly(i, c) => write!(f, "poly{c:?}(x_{i})"),
            TestFn::SquaredNorm => write!(f, "|x|^2"),
            TestFn::Custom(_) => write!(f, "custom"),
        }
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * x + v)
}

impl TestFn {
    /// `x_i^2 - 1`.
    pub fn hermite2(i: usize) -> Self {
        TestFn::CoordinatePoly(i, vec![-1.0, 0.0, 1.0])
    }

    /// Coordinate read by a function of a single coordinate.
    pub fn single_coordinate(&self) -> Option<usize> {
        match self {
            TestFn::Coordinate(i) | TestFn::CoordinatePoly(i, _) => Some(*i),
            _ => None,
        }
    }

    /// The same single-coordinate function applied to coordinate `j`.
    pub fn on_coordinate(&self, j: usize) -> Option<Self> {
        match self {
            TestFn::Coordinate(_) => Some(TestFn::Coordinate(j)),
            TestFn::CoordinatePoly(_, c) => Some(TestFn::CoordinatePoly(j, c.clone())),
            _ => None,
        }
    }

    /// Value of a single-coordinate function at coordinate value `v`.
    pub fn eval_scalar(&self, v: f64) -> Option<f64> {
        match self {
            TestFn::Coordinate(_) => Some(v),
            TestFn::CoordinatePoly(_, c) => Some(horner(c, v)),
            _ => None,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Coordinate(i) => x[*i],
            TestFn::Linear(v) => linalg::dot(v, x),
            TestFn::CoordinatePoly(i, c) => horner(c, x[*i]),
            TestFn::SquaredNorm => x.iter().map(|v| v * v).sum(),
            TestFn::Custom(f) => f(x),
        }
    }
}

/// Self-normalized weighted sample of a tilted law.
#[derive(Debug, Clone)]
pub struct WeightedSample {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub dimension: usize,
    pub ess: f64,
    pub sampler: &'static str,
    /// `log E_base[tilt factor]` when drawn from the base measure.
    pub log_mean_weight: Option<f64>,
}

impl WeightedSample {
    pub fn count(&self) -> usize {
        self.weights.len()
    }

    pub fn mean(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.chunks_exact(self.dimension).zip(&self.weights).map(|(x, w)| w * f(x)).sum()
    }

    /// Contiguous sub-samples with renormalized weights.
    pub fn batches(&self, k: usize) -> Vec<WeightedSample> {
        let n = self.dimension;
        let size = self.count() / k;
        (0..k)
            .filter_map(|b| {
                let w = &self.weights[b * size..(b + 1) * size];
                let total: f64 = w.iter().sum();
                (total > 0.0).then(|| WeightedSample {
                    points: self.points[b * size * n..(b + 1) * size * n].to_vec(),
                    weights: w.iter().map(|v| v / total).collect(),
                    dimension: n,
                    ess: f64::NAN,
                    sampler: self.sampler,
                    log_mean_weight: None,
                })
            })
            .collect()
    }

    /// Weighted mean and covariance.
    pub fn moments(&self) -> (Vec<f64>, Matrix) {
        let n = self.dimension;
        let mut a = vec![0.0; n];
        for (x, w) in self.points.chunks_exact(n).zip(&self.weights) {
            a.iter_mut().zip(x).for_each(|(s, v)| *s += w * v);
        }
        let mut c = Matrix::zeros(n, n);
        for (x, w) in self.points.chunks_exact(n).zip(&self.weights) {
            for i in 0..n {
                let di = w * (x[i] - a[i]);
                for j in 0..=i {
                    c[(i, j)] += di * (x[j] - a[j]);
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                c[(j, i)] = c[(i, j)];
            }
        }
        (a, c)
    }
}

/// A base measure composed with a Gaussian tilt.
#[derive(Debug, Clone)]
pub struct TiltedMeasure<'a> {
    base: &'a Measure,
    t: f64,
    theta: Vec<f64>,
}

/// `p_{t,theta}` over `base`.
pub fn tilt(base: &Measure, t: f64, theta: Vec<f64>) -> Result<TiltedMeasure<'_>> {
    TiltedMeasure::new(base, t, theta)
}

#[derive(Clone, Copy)]
enum Sampler {
    Base,
    Gaussian,
}

impl<'a> TiltedMeasure<'a> {
    pub fn new(base: &'a Measure, t: f64, theta: Vec<f64>) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidArgument(format!("tilt strength must be >= 0, got {t}")));
        }
        if theta.len() != base.dimension() || theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("theta must be a finite vector of the base dimension".into()));
        }
        Ok(TiltedMeasure { base, t, theta })
    }

    pub fn base(&self) -> &Measure {
        self.base
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// Whether the tilt factorizes over independent coordinates.
    pub fn factorizes(&self) -> bool {
        self.base.is_product()
    }

    /// Unnormalized log-density.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        self.base.log_density(x) + self.log_tilt(x)
    }

    fn log_tilt(&self, x: &[f64]) -> f64 {
        linalg::dot(&self.theta, x) - 0.5 * self.t * x.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn stats(&self, opts: &TiltOptions) -> Result<TiltStats> {
        match self.base.law() {
            Law::Product(ds) => {
                let mut log_z = 0.0;
                let mut a = Vec::with_capacity(ds.len());
                let mut var = Vec::with_capacity(ds.len());
                let mut m3 = Vec::with_capacity(ds.len());
                for (d, th) in ds.iter().zip(&self.theta) {
                    let m = d.tilt_moments(self.t, *th, opts.panels, opts.force_quadrature);
                    log_z += m.log_z;
                    a.push(m.mean);
                    var.push(m.var);
                    m3.push(m.m3);
                }
                let h_sq = m3.iter().map(|v| v * v).sum();
                Ok(TiltStats {
                    log_z: Estimate::exact(log_z),
                    a,
                    cov: linalg::diag(&var),
                    m3: Some(m3),
                    h_sq: Estimate::exact(h_sq),
                    mode: TiltMode::Quadrature,
                })
            }
            Law::Gaussian { mean, cov, precision, .. } => {
                let n = mean.len();
                let p_new = precision + &(linalg::identity(n) * faer::Scale(self.t));
                let cov_new = linalg::inverse_spd(&p_new).expect("tilted precision is positive definite");
                let h: Vec<f64> =
                    linalg::mat_vec(precision, mean).iter().zip(&self.theta).map(|(a, b)| a + b).collect();
                let a = linalg::mat_vec(&cov_new, &h);
                // det(P' C) = det(I + tC)
                let logdet: f64 = linalg::sym_eigenvalues(cov).iter().map(|v| (1.0 + self.t * v).ln()).sum();
                let log_z = 0.5 * linalg::dot(&h, &a)
                    - 0.5 * linalg::dot(mean, &linalg::mat_vec(precision, mean))
                    - 0.5 * logdet;
                Ok(TiltStats {
                    log_z: Estimate::exact(log_z),
                    a,
                    cov: cov_new,
                    m3: None,
                    h_sq: Estimate::exact(0.0),
                    mode: TiltMode::Quadrature,
                })
            }
            Law::Linear { .. } => self.monte_carlo_stats(opts),
        }
    }

    fn monte_carlo_stats(&self, opts: &TiltOptions) -> Result<TiltStats> {
        let ws = self.weighted_sample(opts)?;
        let n = self.base.dimension();
        let (a, cov) = ws.moments();
        let batches = ws.batches(BATCHES);
        let stats: Vec<(Vec<f64>, Matrix)> = batches.iter().map(WeightedSample::moments).collect();
        let se_a: Vec<f64> =
            (0..n).map(|i| Estimate::from_samples(&stats.iter().map(|s| s.0[i]).collect::<Vec<_>>()).se).collect();
        let se_cov: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| Estimate::from_samples(&stats.iter().map(|s| s.1[(i, j)]).collect::<Vec<_>>()).se)
                    .collect()
            })
            .collect();
        let h_sq = if opts.third_moments {
            let value = third_moment_contraction(&ws.points, n, Some(&ws.weights), &a);
            let parts: Vec<f64> = batches
                .iter()
                .map(|b| {
                    let (ab, _) = b.moments();
                    third_moment_contraction(&b.points, n, Some(&b.weights), &ab)
                })
                .collect();
            Estimate { value, se: Estimate::from_samples(&parts).se }
        } else {
            Estimate { value: f64::NAN, se: f64::NAN }
        };
        let log_z = match ws.log_mean_weight {
            Some(v) => Estimate { value: v, se: f64::NAN },
            None => {
                let base_ws = self.draw(Sampler::Base, opts, opts.budget.samples, 1)?;
                Estimate { value: base_ws.log_mean_weight.unwrap_or(f64::NAN), se: f64::NAN }
            }
        };
        Ok(TiltStats {
            log_z,
            a,
            cov,
            m3: None,
            h_sq,
            mode: TiltMode::MonteCarlo { se_a, se_cov, ess: ws.ess, sampler: ws.sampler.to_string() },
        })
    }

    /// Gaussian proposal in `z` for `x = M z + b`: precision and mean.
    fn gaussian_proposal(&self) -> Option<(Matrix, Vec<f64>)> {
        let Law::Linear { base, linear, shift, .. } = self.base.law() else {
            return None;
        };
        let n = self.base.dimension();
        let strength = match base {
            Base::Body(b) => b.strength,
            Base::Product(_) => 0.0,
        };
        let mtm = &linalg::transpose(linear) * linear;
        let prec = &(mtm * faer::Scale(self.t)) + &(linalg::identity(n) * faer::Scale(strength));
        let centered: Vec<f64> = self.theta.iter().zip(shift).map(|(th, b)| th - self.t * b).collect();
        let h = linalg::mat_vec(&linalg::transpose(linear), &centered);
        let cov = linalg::inverse_spd(&prec)?;
        let mean = linalg::mat_vec(&cov, &h);
        let chol = linalg::cholesky(&cov)?;
        Some((chol, mean))
    }

    /// Weighted sample of the tilted law: from the base measure with tilt
    /// weights, or from the matching Gaussian in `z` with base-density weights
    /// (an exact rejection sampler for uniform and Gaussian-restricted bodies),
    /// whichever has the larger pilot effective sample size.
    pub fn weighted_sample(&self, opts: &TiltOptions) -> Result<WeightedSample> {
        let mut candidates = vec![Sampler::Base];
        if self.gaussian_proposal().is_some() {
            candidates.push(Sampler::Gaussian);
        }
        let mut best = (Sampler::Base, -1.0);
        for (k, s) in candidates.into_iter().enumerate() {
            let pilot = self.draw(s, opts, PILOT_DRAWS, 1000 + k as u64)?;
            let frac = pilot.ess / PILOT_DRAWS as f64;
            if frac > best.1 {
                best = (s, frac);
            }
        }
        let target = opts.budget.samples as f64;
        let cap = MAX_DRAW_FACTOR * opts.budget.samples;
        let draws = if best.1 > 0.0 { ((target / best.1).ceil() as usize).clamp(opts.budget.samples, cap) } else { cap };
        let ws = self.draw(best.0, opts, draws, 0)?;
        if ws.ess < MIN_ESS || !ws.ess.is_finite() {
            return Err(Error::TiltTooExtreme { ess: if ws.ess.is_finite() { ws.ess } else { 0.0 } });
        }
        Ok(ws)
    }

    fn draw(&self, sampler: Sampler, opts: &TiltOptions, count: usize, salt: u64) -> Result<WeightedSample> {
        let n = self.base.dimension();
        let seed = derive_seed(opts.budget.seed, &format!("tilt/{}/{salt}", opts.stream));
        let chunks = count.div_ceil(CHUNK);
        let proposal = match sampler {
            Sampler::Gaussian => self.gaussian_proposal(),
            Sampler::Base => None,
        };
        let Law::Linear { base, linear, shift, .. } = self.base.law() else {
            return Err(Error::InvalidArgument("weighted sampling needs a non-factorized base".into()));
        };
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let size = CHUNK.min(count - c * CHUNK);
                let mut rng: StreamRng = stream(seed, c as u64);
                let mut pts = vec![0.0; size * n];
                let mut logw = vec![0.0; size];
                let mut z = vec![0.0; n];
                let mut scratch = vec![0.0; n];
                for (row, lw) in pts.chunks_exact_mut(n).zip(logw.iter_mut()) {
                    match &proposal {
                        None => {
                            self.base.draw(&mut rng, row, &mut scratch)?;
                            *lw = self.log_tilt(row);
                        }
                        Some((chol, mean)) => {
                            scratch.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                            for i in 0..n {
                                z[i] = mean[i] + (0..=i).map(|k| chol[(i, k)] * scratch[k]).sum::<f64>();
                            }
                            *lw = match base {
                                Base::Body(b) => {
                                    if b.contains(&z) {
                                        0.0
                                    } else {
                                        f64::NEG_INFINITY
                                    }
                                }
                                Base::Product(ds) => ds.iter().zip(&z).map(|(d, v)| d.log_pdf(*v)).sum(),
                            };
                            for i in 0..n {
                                row[i] = shift[i] + (0..n).map(|k| linear[(i, k)] * z[k]).sum::<f64>();
                            }
                        }
                    }
                }
                Ok((pts, logw))
            })
            .collect::<Result<_>>()?;
        let mut points = Vec::with_capacity(count * n);
        let mut logw = Vec::with_capacity(count);
        for (p, l) in parts {
            points.extend(p);
            logw.extend(l);
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Ok(WeightedSample {
                points,
                weights: vec![0.0; count],
                dimension: n,
                ess: 0.0,
                sampler: sampler_name(sampler),
                log_mean_weight: None,
            });
        }
        let raw: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        let sq: f64 = raw.iter().map(|w| w * w).sum();
        let log_mean_weight = matches!(sampler, Sampler::Base).then(|| max + (total / count as f64).ln());
        Ok(WeightedSample {
            points,
            weights: raw.iter().map(|w| w / total).collect(),
            dimension: n,
            ess: total * total / sq,
            sampler: sampler_name(sampler),
            log_mean_weight,
        })
    }

    /// `E f(X)` under the tilted law; exact where the law factorizes and the
    /// test function is separable.
    pub fn expect(&self, f: &TestFn, opts: &TiltOptions) -> Result<Estimate> {
        if let Law::Product(ds) = self.base.law() {
            let m = |i: usize| ds[i].tilt_moments(self.t, self.theta[i], opts.panels, opts.force_quadrature);
            let exact = match f {
                TestFn::One => Some(1.0),
                TestFn::Coordinate(i) => Some(m(*i).mean),
                TestFn::Linear(v) => Some(v.iter().enumerate().map(|(i, c)| c * m(i).mean).sum()),
                TestFn::CoordinatePoly(i, c) => {
                    Some(ds[*i].tilt_expect(self.t, self.theta[*i], opts.panels.max(64), |x| horner(c, x)))
                }
                TestFn::SquaredNorm => Some(
                    (0..ds.len())
                        .map(|i| {
                            let mi = m(i);
                            mi.var + mi.mean * mi.mean
                        })
                        .sum(),
                ),
                TestFn::Custom(_) => None,
            };
            if let Some(v) = exact {
                return Ok(Estimate::exact(v));
            }
        }
        if matches!(f, TestFn::One) {
            return Ok(Estimate::exact(1.0));
        }
        if let (Law::Gaussian { .. }, TestFn::Coordinate(_) | TestFn::Linear(_)) = (self.base.law(), f) {
            let s = self.stats(opts)?;
            return Ok(Estimate::exact(f.eval(&s.a)));
        }
        let ws = match self.base.law() {
            Law::Linear { .. } => self.weighted_sample(opts)?,
            _ => self.importance_from_base(opts)?,
        };
        let value = ws.mean(|x| f.eval(x));
        let parts: Vec<f64> = ws.batches(BATCHES).iter().map(|b| b.mean(|x| f.eval(x))).collect();
        Ok(Estimate { value, se: Estimate::from_samples(&parts).se })
    }

    /// Base-measure importance sample for factorized laws and general test
    /// functions.
    fn importance_from_base(&self, opts: &TiltOptions) -> Result<WeightedSample> {
        let n = self.base.dimension();
        let pack = self.base.sample(opts.budget.samples, derive_seed(opts.budget.seed, "tilt-base"), opts.stream)?;
        let logw: Vec<f64> = pack.rows().map(|x| self.log_tilt(x)).collect();
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = raw.iter().sum();
        let ess = total * total / raw.iter().map(|w| w * w).sum::<f64>();
        if ess < MIN_ESS {
            return Err(Error::TiltTooExtreme { ess });
        }
        Ok(WeightedSample {
            points: pack.points,
            weights: raw.iter().map(|w| w / total).collect(),
            dimension: n,
            ess,
            sampler: "base",
            log_mean_weight: Some(max + (total / pack.count as f64).ln()),
        })
    }
}

fn sampler_name(s: Sampler) -> &'static str {
    match s {
        Sampler::Base => "base",
        Sampler::Gaussian => "gaussian",
    }
}

/// Stats of `tilt(base, t, theta)`.
pub fn tilt_stats(base: &Measure, t: f64, theta: &[f64], opts: &TiltOptions) -> Result<TiltStats> {
    tilt(base, t, theta.to_vec())?.stats(opts)
}
