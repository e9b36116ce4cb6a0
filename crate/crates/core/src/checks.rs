//! Standalone inequality checks: third moments against `Tr A^2`, covariance
//! growth, Cheeger–Buser, `kappa` comparison, martingale deviation, and the
//! one-dimensional Brenier map and its martingale representation.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heat::HeatState;
use crate::linalg::{self, Matrix};
use crate::localization::{kim_milman_flow, PathEnsemble};
use crate::measure::functionals::third_moment_gram;
use crate::measure::{kappa_estimate, Density1D, Law, Measure};
use crate::quad;
use crate::report::{CheckReport, Provenance};
use crate::rng::{derive_seed, stream};
use crate::spectral::SpectralModel;
use crate::stats::{ks_critical, ks_statistic, normal_cdf, normal_log_pdf, normal_sf, wilson_interval, Budget, Estimate};
use crate::tilted::{TiltOptions, TiltedMeasure};

/// Significance level of every distributional test.
pub const KS_ALPHA: f64 = 0.01;
const BATCHES: usize = 20;

fn measure_provenance(m: &Measure, seed: u64, samples: usize) -> Provenance {
    Provenance { spec_digest: Some(m.spec().digest()), seed, samples, ..Provenance::default() }
}

/// `E<X,Y>^3 <= (3/t) Tr(A^2)` for independent `X, Y` from a `t`-uniformly
/// log-concave tilt, centered at its own barycenter. Exact for product and
/// Gaussian bases (`E<X,Y>^3 = sum_ijk T_ijk^2`); otherwise `pairs`
/// independent weighted pairs, with the SE of the difference from batches.
pub fn key_chen_check(tm: &TiltedMeasure, pairs: usize, opts: &TiltOptions) -> Result<CheckReport> {
    let t = tm.t();
    if !(t > 0.0) {
        return Err(Error::UniformLogConcavityRequired);
    }
    let n = tm.base().dimension();
    let exact = !matches!(tm.base().law(), Law::Linear { .. });
    let (stat, tr_a2, var1, m3_1, se) = if exact {
        let s = tm.stats(opts)?;
        let var1 = s.cov[(0, 0)];
        let m3 = s.m3.as_ref().map_or(0.0, |m| m[0]);
        (s.h_sq.value, s.tr_a2(), var1, m3, 0.0)
    } else {
        let mut o = opts.clone();
        o.budget.samples = 2 * pairs;
        let ws = tm.weighted_sample(&o)?;
        let count = ws.count() / 2;
        let (a, cov) = ws.moments();
        // pair p couples draw p with draw p + count
        let value = |idx: std::ops::Range<usize>, center: &[f64]| -> (f64, f64) {
            let (mut num, mut den) = (0.0, 0.0);
            for p in idx {
                let x = &ws.points[p * n..(p + 1) * n];
                let y = &ws.points[(p + count) * n..(p + count + 1) * n];
                let ip: f64 = (0..n).map(|k| (x[k] - center[k]) * (y[k] - center[k])).sum();
                let w = ws.weights[p] * ws.weights[p + count];
                num += w * ip * ip * ip;
                den += w;
            }
            (num, den)
        };
        let (num, den) = value(0..count, &a);
        let stat = num / den;
        let tr_a2 = linalg::frobenius_sq(&cov);
        let size = count / BATCHES;
        let diffs: Vec<f64> = (0..BATCHES)
            .map(|b| {
                let r = b * size..(b + 1) * size;
                let (bn, bd) = value(r.clone(), &a);
                let (mut sw, mut sxx) = (0.0, Matrix::zeros(n, n));
                for p in r.clone().chain(r.start + count..r.end + count) {
                    let w = ws.weights[p];
                    sw += w;
                    for i in 0..n {
                        for j in 0..n {
                            sxx[(i, j)] += w * (ws.points[p * n + i] - a[i]) * (ws.points[p * n + j] - a[j]);
                        }
                    }
                }
                bn / bd - 3.0 / t * linalg::frobenius_sq(&(sxx * faer::Scale(1.0 / sw)))
            })
            .collect();
        let m3 = if n == 1 {
            ws.points.iter().zip(&ws.weights).map(|(x, w)| w * (x - a[0]).powi(3)).sum::<f64>()
                / ws.weights.iter().sum::<f64>()
        } else {
            0.0
        };
        (stat, tr_a2, cov[(0, 0)], m3, Estimate::from_samples(&diffs).se)
    };
    let bound = 3.0 / t * tr_a2;
    let mut report = CheckReport::le("key_chen", stat, bound)
        .with_se(se)
        .with_tolerance(if exact { 1e-10 * bound.abs().max(1.0) } else { 0.0 })
        .with_anchor("E<X,Y>^3 <= (3/t) Tr A^2")
        .with_provenance(measure_provenance(tm.base(), opts.budget.seed, if exact { 0 } else { pairs }))
        .detail("t", t)
        .detail("tightness", stat / bound)
        .detail("exact", exact);
    if n == 1 {
        let b1 = 2.0 / t * var1 * var1;
        report = report.detail("one_dim_statistic", m3_1 * m3_1).detail("one_dim_bound", b1);
    }
    Ok(report)
}

/// Report-only constant-2 variant in dimension one: `m_3^2 <= (2/t) Var^2`.
pub fn key_chen_one_dim_report(tm: &TiltedMeasure, opts: &TiltOptions) -> Result<CheckReport> {
    let full = key_chen_check(tm, opts.budget.samples / 2, opts)?;
    let stat = full.details.get("one_dim_statistic").and_then(|v| v.as_f64());
    let bound = full.details.get("one_dim_bound").and_then(|v| v.as_f64());
    match (stat, bound) {
        (Some(s), Some(b)) => Ok(CheckReport::le("key_chen_1d", s, b)
            .with_se(full.se)
            .with_anchor("E<X,Y>^3 <= (2/t) Var^2 in dimension one")
            .with_provenance(full.provenance)
            .detail("t", tm.t())
            .detail("tightness", s / b)
            .report_only()),
        _ => Err(Error::InvalidArgument("constant-2 variant needs dimension one".into())),
    }
}

/// `E Tr A_{t2}^2 <= (t2/t1)^3 E Tr A_{t1}^2` on every recorded pair with
/// `0 < t1 <= t2`; paired per replica, worst pair reported.
pub fn chen_growth_check(ens: &PathEnsemble) -> Result<CheckReport> {
    if ens.complete_count() < 2 {
        return Err(Error::InvalidArgument("growth check needs complete replicas".into()));
    }
    let times = &ens.grid.recorded;
    let values: Vec<Vec<f64>> = (0..times.len()).map(|k| ens.values_at(k, |r| r.tr_a2)).collect();
    let mut worst: Option<(f64, usize, usize, Estimate)> = None;
    let mut pairs = 0usize;
    for k1 in 0..times.len() {
        if times[k1] <= 0.0 {
            continue;
        }
        for k2 in k1..times.len() {
            let ratio = (times[k2] / times[k1]).powi(3);
            let d: Vec<f64> = values[k2].iter().zip(&values[k1]).map(|(b, a)| b - ratio * a).collect();
            let e = Estimate::from_samples(&d);
            let excess = e.value - 4.0 * e.se;
            pairs += 1;
            if worst.as_ref().is_none_or(|w| excess > w.0) {
                worst = Some((excess, k1, k2, e));
            }
        }
    }
    let (_, k1, k2, e) = worst.ok_or_else(|| Error::InvalidArgument("no positive recorded times".into()))?;
    let mean = |k: usize| values[k].iter().sum::<f64>() / values[k].len() as f64;
    let ratio = (times[k2] / times[k1]).powi(3);
    Ok(CheckReport::le("chen_growth", mean(k2), ratio * mean(k1))
        .with_se(e.se)
        .with_anchor("E||A_t2||_2^2 <= (t2/t1)^3 E||A_t1||_2^2")
        .with_provenance(Provenance {
            seed: ens.seed,
            replicas: ens.paths.len(),
            steps: ens.grid.step_count(),
            grid_size: Some(times.len()),
            ..Provenance::default()
        })
        .detail("t1", times[k1])
        .detail("t2", times[k2])
        .detail("pairs", pairs))
}

/// Growth envelope for one pair of recorded times, the nearest to `t1 <= t2`.
/// `t1 == t2` is the trivial instance `E Tr A^2 <= E Tr A^2`.
pub fn chen_growth_pair_check(ens: &PathEnsemble, t1: f64, t2: f64) -> Result<CheckReport> {
    if !(t1 > 0.0 && t1 <= t2) {
        return Err(Error::InvalidArgument(format!("need 0 < t1 <= t2, got t1 = {t1}, t2 = {t2}")));
    }
    if ens.complete_count() < 2 {
        return Err(Error::InvalidArgument("growth check needs complete replicas".into()));
    }
    let times = &ens.grid.recorded;
    let nearest = |t: f64| {
        (0..times.len())
            .min_by(|a, b| (times[*a] - t).abs().total_cmp(&(times[*b] - t).abs()))
            .unwrap_or(0)
    };
    let (k1, k2) = (nearest(t1), nearest(t2));
    if times[k1] <= 0.0 {
        return Err(Error::InvalidArgument(format!("t1 = {t1} rounds to the origin of the time grid")));
    }
    let a = ens.values_at(k1, |r| r.tr_a2);
    let b = ens.values_at(k2, |r| r.tr_a2);
    let ratio = (times[k2] / times[k1]).powi(3);
    let d: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - ratio * x).collect();
    let e = Estimate::from_samples(&d);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(CheckReport::le("chen_growth", mean(&b), ratio * mean(&a))
        .with_se(if k1 == k2 { 0.0 } else { e.se })
        .with_anchor("E||A_t2||_2^2 <= (t2/t1)^3 E||A_t1||_2^2")
        .with_provenance(Provenance {
            seed: ens.seed,
            replicas: ens.paths.len(),
            steps: ens.grid.step_count(),
            grid_size: Some(times.len()),
            ..Provenance::default()
        })
        .detail("t1", times[k1])
        .detail("t2", times[k2])
        .detail("trivial", k1 == k2))
}

/// `psi` of a one-dimensional law: `1/psi = inf_x rho(x) / min(F, 1 - F)`,
/// by a grid scan and golden-section refinement.
pub fn isoperimetric_constant(d: &Density1D) -> f64 {
    const SCAN: usize = 4096;
    let (lo, hi) = d.truncated_support();
    let ratio = |x: f64| {
        let (f, s) = d.cdf_sf(x);
        d.pdf(x) / f.min(s)
    };
    let h = (hi - lo) / SCAN as f64;
    let (mut best, mut arg) = (f64::INFINITY, lo);
    for k in 1..SCAN {
        let x = lo + h * k as f64;
        let r = ratio(x);
        if r < best {
            best = r;
            arg = x;
        }
    }
    let (mut a, mut b) = ((arg - h).max(lo), (arg + h).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let e = a + g * (b - a);
        if ratio(c) < ratio(e) {
            b = e;
        } else {
            a = c;
        }
    }
    1.0 / best.min(ratio(0.5 * (a + b)))
}

/// `1/4 <= psi^2 / C_P <= 9` with `C_P` from the grid model.
pub fn cheeger_buser_check(model: &SpectralModel) -> CheckReport {
    let psi = isoperimetric_constant(model.density());
    let (_, cp) = model.poincare_constant();
    let ratio = psi * psi / cp;
    CheckReport::le("cheeger_buser", ratio, 9.0)
        .with_anchor("1/4 <= psi^2 / C_P <= 9")
        .with_provenance(Provenance { grid_size: Some(model.size()), ..Provenance::default() })
        .detail("psi", psi)
        .detail("poincare_constant", cp)
        .detail("lower_bound", 0.25)
        .fail_if(ratio < 0.25, "ratio below the Cheeger bound 1/4")
}

/// `kappa_X^2 <= ||Cov||^3 kappa_{X'+Y}^2` through the construction with
/// `X' = X / sqrt(s)` and an independent Gaussian `Y ~ N(0, Id - Cov/s)`;
/// `s` defaults to `||Cov||_op`. `E(X'+Y)^{(x)3} = E X'^{(x)3}` is verified
/// through the third-moment contraction.
pub fn kappa_comparison_check(measure: &Measure, s: Option<f64>, budget: &Budget) -> Result<CheckReport> {
    measure.require_centered()?;
    let n = measure.dimension();
    let cov = measure.moments().cov.clone();
    let op = linalg::op_norm_sym(&cov);
    let s = s.unwrap_or(op);
    let rest = &(linalg::identity(n) * faer::Scale(s)) - &cov;
    let min_eig = linalg::sym_eigenvalues(&rest)[0];
    if min_eig < -1e-9 * s {
        return Err(Error::Rescale { excess: -min_eig });
    }
    let y_root = linalg::sqrt_psd(&(rest * faer::Scale(1.0 / s)));
    let kx = kappa_estimate(measure, 16, budget)?;
    let pack = measure.sample_streams(budget.samples, derive_seed(budget.seed, "kappa-comparison"), 0, budget.streams)?;
    let mut rng = stream(derive_seed(budget.seed, "kappa-comparison-gaussian"), 0);
    let scale = 1.0 / s.sqrt();
    let mut z = vec![0.0; pack.count * n];
    let mut g = vec![0.0; n];
    for a in 0..pack.count {
        g.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        let yg = linalg::mat_vec(&y_root, &g);
        for k in 0..n {
            z[a * n + k] = scale * pack.points[a * n + k] + yg[k];
        }
    }
    let size = pack.count / BATCHES;
    let zero = vec![0.0; n];
    let grams: Vec<Matrix> = (0..BATCHES)
        .into_par_iter()
        .map(|b| third_moment_gram(&z[b * size * n..(b + 1) * size * n], n, None, &zero))
        .collect();
    let tops: Vec<f64> = grams.iter().map(|m| *linalg::sym_eigenvalues(m).last().unwrap()).collect();
    let traces: Vec<f64> = grams.iter().map(linalg::trace).collect();
    let kz = Estimate::from_samples(&tops);
    let cz = Estimate::from_samples(&traces);
    // contraction of X' = X / sqrt(s) is that of X over s^3
    let cx = match measure.law() {
        Law::Product(ds) => ds.iter().map(|d| d.central_m3().powi(2)).sum::<f64>(),
        _ => linalg::trace(&third_moment_gram(&pack.points, n, None, &measure.moments().mean)),
    } / s.powi(3);
    let match_z = (cz.value - cx).abs() / cz.se.max(1e-300);
    let bound = s.powi(3) * kz.value;
    Ok(CheckReport::le("kappa_comparison", kx.kappa_sq.value, bound)
        .with_se(s.powi(3) * kz.se.hypot(kx.kappa_sq.se))
        .with_anchor("kappa_X^2 <= ||Cov||^3 kappa^2 of the isotropic completion")
        .with_provenance(measure_provenance(measure, budget.seed, budget.samples))
        .detail("s", s)
        .detail("cov_op_norm", op)
        .detail("contraction_completed", cz.value)
        .detail("contraction_completed_se", cz.se)
        .detail("contraction_original", cx)
        .fail_if(match_z > 4.0, "third-moment tensor changed under completion"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviationMartingale {
    /// Brownian motion run until `[M] = sigma^2`.
    Brownian,
    /// Brownian motion in its quadratic-variation clock stopped at a
    /// path-dependent time (first exit below `-u`, or a geometric clock).
    Stopped,
}

/// `P(M >= u) <= exp(-u^2 / (2 sigma^2))` for a martingale with
/// `[M] <= sigma^2`; passes when the lower Wilson bound (z = 4) is below it.
pub fn martingale_deviation_check(
    kind: DeviationMartingale,
    sigma_sq: f64,
    u: f64,
    replicas: usize,
    steps: usize,
    seed: u64,
) -> Result<CheckReport> {
    if !(sigma_sq > 0.0) || steps == 0 || replicas == 0 {
        return Err(Error::InvalidArgument("need sigma^2 > 0, steps > 0 and replicas > 0".into()));
    }
    let dt = sigma_sq / steps as f64;
    let root = derive_seed(seed, "martingale-deviation");
    let hits: usize = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(root, r as u64);
            let mut m = 0.0;
            for _ in 0..steps {
                if kind == DeviationMartingale::Stopped && (m < -u || rng.random_bool(1.0 / steps as f64)) {
                    break;
                }
                m += dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            }
            usize::from(m >= u)
        })
        .sum();
    let p = hits as f64 / replicas as f64;
    let (lo, hi) = wilson_interval(hits, replicas, 4.0);
    let bound = (-u * u / (2.0 * sigma_sq)).exp();
    Ok(CheckReport::le("martingale_deviation", p, bound)
        .with_tolerance(p - lo)
        .with_anchor("P(M >= u) <= exp(-u^2 / 2 sigma^2)")
        .with_provenance(Provenance { seed, replicas, steps, ..Provenance::default() })
        .detail("kind", kind)
        .detail("u", u)
        .detail("sigma_sq", sigma_sq)
        .detail("wilson", (lo, hi))
        .detail("normal_tail", normal_sf(u / sigma_sq.sqrt())))
}

/// Report-only deviation bound for the soft-max martingale part of the
/// localization paths, with `sigma^2` the largest observed quadratic variation.
pub fn softmax_deviation_report(ens: &PathEnsemble, u: f64) -> Result<CheckReport> {
    let last = ens.grid.recorded.len() - 1;
    let m = ens.values_at(last, |r| r.softmax_martingale);
    let qv = ens.values_at(last, |r| r.softmax_qv);
    let cap = qv.iter().copied().fold(0.0, f64::max);
    if !(cap > 0.0) {
        return Err(Error::InvalidArgument("soft-max martingale was not tracked".into()));
    }
    let hits = m.iter().filter(|v| **v >= u).count();
    let (lo, hi) = wilson_interval(hits, m.len(), 4.0);
    let p = hits as f64 / m.len() as f64;
    Ok(CheckReport::le("softmax_deviation", p, (-u * u / (2.0 * cap)).exp())
        .with_tolerance(p - lo)
        .with_anchor("deviation of the soft-max martingale")
        .with_provenance(Provenance { seed: ens.seed, replicas: m.len(), ..Provenance::default() })
        .detail("sigma_sq_cap", cap)
        .detail("wilson", (lo, hi))
        .report_only())
}

/// `(-log rho)'' >= 1 - 1e-8` on a scan of the truncated support.
pub fn require_one_uniform(d: &Density1D) -> Result<()> {
    let (lo, hi) = d.truncated_support();
    for k in 0..=2048 {
        let x = lo + (hi - lo) * k as f64 / 2048.0;
        let c = -d.d2log(x);
        if c < 1.0 - 1e-8 {
            return Err(Error::HypothesisViolated(format!("(-log rho)'' = {c:.6} < 1 at x = {x:.4}")));
        }
    }
    Ok(())
}

/// Monotone map `T = F^{-1} o Phi` pushing the standard Gaussian to `d`.
pub fn brenier_map(d: &Density1D, x: f64) -> f64 {
    if x <= 0.0 {
        d.quantile(normal_cdf(x))
    } else {
        d.quantile_upper(normal_sf(x))
    }
}

/// `T'(x) = phi(x) / rho(T(x))`.
pub fn brenier_derivative(d: &Density1D, x: f64) -> f64 {
    (normal_log_pdf(x) - d.log_pdf(brenier_map(d, x))).exp()
}

/// Caffarelli contraction in one dimension: `sup T' <= 1 + 1e-6` on the
/// interior grid `|x| <= 6`, both pointwise and as difference quotients.
pub fn brenier_contraction_1d(d: &Density1D) -> Result<CheckReport> {
    require_one_uniform(d)?;
    const NODES: usize = 2401;
    let xs: Vec<f64> = (0..NODES).map(|k| -6.0 + 12.0 * k as f64 / (NODES - 1) as f64).collect();
    let t: Vec<f64> = xs.iter().map(|&x| brenier_map(d, x)).collect();
    let pointwise = xs.iter().map(|&x| brenier_derivative(d, x)).fold(0.0, f64::max);
    let quotient = (1..NODES).map(|k| (t[k] - t[k - 1]) / (xs[k] - xs[k - 1])).fold(0.0, f64::max);
    let monotone = t.windows(2).all(|w| w[1] >= w[0]);
    Ok(CheckReport::le("brenier_contraction", pointwise.max(quotient), 1.0)
        .with_tolerance(1e-6)
        .with_anchor("Brenier map onto a 1-uniformly log-concave law is 1-Lipschitz")
        .with_provenance(Provenance { grid_size: Some(NODES), ..Provenance::default() })
        .detail("max_pointwise", pointwise)
        .detail("max_quotient", quotient)
        .fail_if(!monotone, "map not monotone"))
}

/// Table of `Q_t(x) = E T'(x + sqrt(1 - t) Z)` on `t_k = k / steps` and a
/// uniform `x` grid, with linear interpolation in `x`.
struct QTable {
    x0: f64,
    dx: f64,
    values: Vec<Vec<f64>>,
}

impl QTable {
    const HALF_WIDTH: f64 = 9.0;
    const NODES: usize = 1441;

    fn new(d: &Density1D, steps: usize) -> Self {
        let dx = 2.0 * Self::HALF_WIDTH / (Self::NODES - 1) as f64;
        let x0 = -Self::HALF_WIDTH;
        // T' on a wider table so the heat average stays inside it
        let wide = 2.0 * Self::HALF_WIDTH;
        let fine = 4 * Self::NODES;
        let fdx = 2.0 * wide / (fine - 1) as f64;
        let tp: Vec<f64> = (0..fine).map(|k| brenier_derivative(d, -wide + fdx * k as f64)).collect();
        let tprime = |x: f64| {
            let u = ((x + wide) / fdx).clamp(0.0, (fine - 1) as f64 - 1e-9);
            let k = u as usize;
            let w = u - k as f64;
            tp[k] * (1.0 - w) + tp[k + 1] * w
        };
        let values = (0..steps)
            .into_par_iter()
            .map(|k| {
                let sd = (1.0 - k as f64 / steps as f64).sqrt();
                (0..Self::NODES)
                    .map(|j| {
                        let x = x0 + dx * j as f64;
                        quad::integrate(-8.0, 8.0, 32, |z| tprime(x + sd * z) * normal_log_pdf(z).exp())
                    })
                    .collect()
            })
            .collect();
        QTable { x0, dx, values }
    }

    fn eval(&self, k: usize, x: f64) -> f64 {
        let row = &self.values[k];
        let u = ((x - self.x0) / self.dx).clamp(0.0, (row.len() - 1) as f64 - 1e-9);
        let j = u as usize;
        let w = u - j as f64;
        row[j] * (1.0 - w) + row[j + 1] * w
    }
}

/// `X = int_0^1 Q_t(B_t) dB_t` by Euler–Maruyama against direct draws from
/// the target: `Q` must stay in `[0, 1]` (1e-6 slack) and the two-sample KS
/// statistic must be below its `alpha = 0.01` critical value.
pub fn brenier_martingale_representation(d: &Density1D, steps: usize, replicas: usize, seed: u64) -> Result<CheckReport> {
    require_one_uniform(d)?;
    if d.mean().abs() > 1e-8 {
        return Err(Error::CenteringRequired { mean: d.mean() });
    }
    let table = QTable::new(d, steps);
    let dt = 1.0 / steps as f64;
    let root = derive_seed(seed, "brenier-representation");
    let runs: Vec<(f64, f64, f64)> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(root, r as u64);
            let (mut b, mut x) = (0.0f64, 0.0f64);
            let (mut qmin, mut qmax) = (f64::INFINITY, f64::NEG_INFINITY);
            for k in 0..steps {
                let q = table.eval(k, b);
                qmin = qmin.min(q);
                qmax = qmax.max(q);
                let db = dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
                x += q * db;
                b += db;
            }
            (x, qmin, qmax)
        })
        .collect();
    let simulated: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let qmin = runs.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let qmax = runs.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let mut rng = stream(derive_seed(seed, "brenier-target"), 0);
    let direct: Vec<f64> = (0..replicas).map(|_| d.sample(&mut rng)).collect();
    let ks = ks_statistic(&simulated, &direct);
    let critical = ks_critical(KS_ALPHA, replicas, replicas);
    Ok(CheckReport::le("brenier_representation", ks, critical)
        .with_anchor("int_0^1 Q_t dB_t has the target law with 0 <= Q_t <= 1")
        .with_provenance(Provenance { seed, replicas, steps, ..Provenance::default() })
        .detail("q_min", qmin)
        .detail("q_max", qmax)
        .fail_if(qmin < -1e-6 || qmax > 1.0 + 1e-6, "Q_t left [0, 1]"))
}

/// Kim–Milman transport of `mu_{1/t1}` to `mu_{1/t2}`: starting from
/// `theta = t1 Y`, `Y ~ mu_{1/t1}`, the flow endpoint `theta_{t2} / t2` is
/// compared with fresh draws of `mu_{1/t2}` by a two-sample KS test.
pub fn kim_milman_ks_check(
    base: &Measure,
    t1: f64,
    t2: f64,
    replicas: usize,
    seed: u64,
    opts: &TiltOptions,
) -> Result<CheckReport> {
    if base.dimension() != 1 {
        return Err(Error::InvalidArgument("the KS coupling check is one-dimensional".into()));
    }
    let start = HeatState::new(base, 1.0 / t1)?.sample(replicas, derive_seed(seed, "kim-milman-start"), 0)?;
    let flowed: Vec<(f64, usize)> = start
        .points
        .par_iter()
        .map(|&y| kim_milman_flow(base, &[t1 * y], t1, t2, opts).map(|r| (r.theta[0] / t2, r.steps)))
        .collect::<Result<Vec<_>>>()?;
    let fresh = HeatState::new(base, 1.0 / t2)?.sample(replicas, derive_seed(seed, "kim-milman-target"), 0)?;
    let moved: Vec<f64> = flowed.iter().map(|v| v.0).collect();
    let ks = ks_statistic(&moved, &fresh.points);
    let critical = ks_critical(KS_ALPHA, replicas, replicas);
    let max_steps = flowed.iter().map(|v| v.1).max().unwrap_or(0);
    Ok(CheckReport::le("kim_milman_coupling", ks, critical)
        .with_anchor("Kim-Milman flow transports mu_{1/t1} to mu_{1/t2}")
        .with_provenance(Provenance {
            spec_digest: Some(base.spec().digest()),
            seed,
            replicas,
            steps: max_steps,
            ..Provenance::default()
        })
        .detail("t1", t1)
        .detail("t2", t2))
}
