//! Ensemble diagnostics: martingale property, barycenter growth, the
//! `Tr A^2` drift identity and operator-norm tails.

use serde::{Deserialize, Serialize};

use super::path::{PathEnsemble, PathRecord};
use crate::error::{Error, Result};
use crate::heat::{q_norm_sq, q_norm_sq_coordinate, Phi};
use crate::measure::Measure;
use crate::report::{CheckReport, Provenance};
use crate::stats::{wilson_interval, Budget, Estimate, SE_MULTIPLIER};
use crate::tilted::{tilt, TestFn, TiltOptions};

/// One compared pair inside a diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
    pub tolerance: f64,
}

impl Comparison {
    fn excess(&self) -> f64 {
        (self.lhs - self.rhs).abs() - SE_MULTIPLIER * self.se - self.tolerance
    }
}

/// Equality report on the worst of `items`; all items go to the details.
fn worst_equality(name: &str, anchor: &str, items: Vec<Comparison>, prov: Provenance) -> CheckReport {
    let worst = items
        .iter()
        .max_by(|a, b| a.excess().total_cmp(&b.excess()))
        .cloned()
        .unwrap_or(Comparison { label: "none".into(), t: 0.0, lhs: 0.0, rhs: 0.0, se: 0.0, tolerance: 0.0 });
    CheckReport::eq(name, worst.lhs, worst.rhs)
        .with_se(worst.se)
        .with_tolerance(worst.tolerance)
        .with_anchor(anchor)
        .with_provenance(prov)
        .detail("worst", &worst)
        .detail("items", &items)
}

fn provenance(base: Option<&Measure>, ens: &PathEnsemble) -> Provenance {
    Provenance {
        spec_digest: base.map(|m| m.spec().digest()),
        seed: ens.seed,
        samples: 0,
        replicas: ens.paths.len(),
        steps: ens.grid.step_count(),
        grid_size: Some(ens.grid.recorded.len()),
    }
}

/// `M_t = int phi p_t` for each complete replica at recorded index `k`.
fn martingale_values(base: &Measure, ens: &PathEnsemble, phi: &Phi, k: usize, opts: &TiltOptions) -> Result<Vec<f64>> {
    ens.complete()
        .map(|p| {
            let r: &PathRecord = &p.records[k];
            match phi {
                Phi::Identity => Ok(r.a_sq),
                Phi::Scalar(f) => Ok(tilt(base, r.t, r.theta.clone())?.expect(f, opts)?.value),
            }
        })
        .collect()
}

/// Copies of a single-coordinate `phi` on every coordinate whose law equals
/// that of `phi`'s coordinate under a product base; `[phi]` otherwise.
fn exchangeable_copies(base: &Measure, phi: &TestFn) -> Vec<TestFn> {
    let (Some(i), Some(comps)) = (phi.single_coordinate(), base.components()) else {
        return vec![phi.clone()];
    };
    let law = comps[i].component();
    (0..comps.len())
        .filter(|&j| comps[j].component() == law)
        .filter_map(|j| phi.on_coordinate(j))
        .collect()
}

/// (i) `E M_t = M_0` and (ii) `E M_t^2 = ||Q_{1/t} phi||^2_{L^2(mu_{1/t})}` at
/// the recorded indices `check_indices`. For `Phi::Identity` the martingale
/// is `a_t` and (i) is checked coordinate-wise through `|E a_t|`.
///
/// A single-coordinate `phi` under a product base is pooled over all
/// coordinates with the same law (per-replica averages, so the standard error
/// stays honest), and the right side of (ii) comes from one-dimensional
/// quadrature with its grid-doubling gap as tolerance. Otherwise the right
/// side is sampled with `q_budget`.
pub fn martingale_diagnostic(
    base: &Measure,
    ens: &PathEnsemble,
    phi: &Phi,
    check_indices: &[usize],
    q_budget: &Budget,
    opts: &TiltOptions,
) -> Result<CheckReport> {
    let mut items = Vec::new();
    let copies = match phi {
        Phi::Scalar(f) => exchangeable_copies(base, f),
        Phi::Identity => Vec::new(),
    };
    let m0 = match phi {
        Phi::Identity => 0.0,
        Phi::Scalar(f) => tilt(base, 0.0, vec![0.0; base.dimension()])?.expect(f, opts)?.value,
    };
    for &k in check_indices {
        let t = ens.grid.recorded[k];
        if t <= 0.0 {
            continue;
        }
        let (first, second) = match phi {
            Phi::Identity => {
                let n = base.dimension();
                let mut worst = Estimate::exact(0.0);
                for i in 0..n {
                    let vals: Vec<f64> = ens.complete().map(|p| p.records[k].a[i]).collect();
                    let e = Estimate::from_samples(&vals);
                    if e.value.abs() - 4.0 * e.se > worst.value.abs() - 4.0 * worst.se {
                        worst = e;
                    }
                }
                (worst, Estimate::from_samples(&martingale_values(base, ens, phi, k, opts)?))
            }
            Phi::Scalar(_) => {
                let per_copy: Vec<Vec<f64>> = copies
                    .iter()
                    .map(|f| martingale_values(base, ens, &Phi::Scalar(f.clone()), k, opts))
                    .collect::<Result<_>>()?;
                let c = per_copy.len() as f64;
                let replicas = per_copy[0].len();
                let m: Vec<f64> = (0..replicas).map(|r| per_copy.iter().map(|v| v[r]).sum::<f64>() / c).collect();
                let sq: Vec<f64> =
                    (0..replicas).map(|r| per_copy.iter().map(|v| v[r] * v[r]).sum::<f64>() / c).collect();
                (Estimate::from_samples(&m), Estimate::from_samples(&sq))
            }
        };
        items.push(Comparison {
            label: "mean".into(),
            t,
            lhs: first.value,
            rhs: m0,
            se: first.se,
            tolerance: 1e-10,
        });
        let exact = match phi {
            Phi::Scalar(f) => q_norm_sq_coordinate(base, 1.0 / t, f)?,
            Phi::Identity => None,
        };
        let (rhs, rhs_se, tolerance) = match exact {
            Some((v, tol)) => (v, 0.0, tol.max(1e-10)),
            None => {
                let q = q_norm_sq(base, 1.0 / t, phi, &q_budget.with_seed(q_budget.seed ^ k as u64), opts)?;
                (q.value, q.se, 1e-10)
            }
        };
        items.push(Comparison {
            label: "second_moment".into(),
            t,
            lhs: second.value,
            rhs,
            se: second.se.hypot(rhs_se),
            tolerance,
        });
    }
    let mut prov = provenance(Some(base), ens);
    prov.samples = q_budget.samples;
    Ok(worst_equality("martingale_bridge", "tilt-process martingale and its L2(mu_s) bridge", items, prov)
        .detail("pooled_coordinates", copies.len().max(1)))
}

/// Trapezoid integral of `(t, y)` pairs up to each `t` in `at`.
fn cumulative_at(series: &[(f64, f64)], at: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(at.len());
    let mut acc = 0.0;
    let mut j = 0;
    for &t in at {
        while j + 1 < series.len() && series[j + 1].0 <= t + 1e-15 * t.max(1.0) {
            acc += 0.5 * (series[j].1 + series[j + 1].1) * (series[j + 1].0 - series[j].0);
            j += 1;
        }
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c1: f64,
    pub t1: f64,
}

/// `E|a_t|^2 - int_0^t E||A_r||_2^2 dr = 0` at every recorded time, paired per
/// replica; reports the smallest admissible `C_1` in
/// `E|a_t|^2 <= C_1 n t max(1, (t/t_1)^3)`.
pub fn a_growth_diagnostic(ens: &PathEnsemble, envelope: Option<&Envelope>, t1: f64) -> Result<CheckReport> {
    if ens.complete_count() < 2 {
        return Err(Error::InvalidArgument("growth diagnostic needs complete replicas".into()));
    }
    let times = &ens.grid.recorded;
    let n = ens.paths[0].dimension as f64;
    let mut diffs: Vec<Vec<f64>> = vec![Vec::new(); times.len()];
    for p in ens.complete() {
        let series: Vec<(f64, f64)> = if p.fine_tr_a2.is_empty() {
            p.records.iter().map(|r| (r.t, r.tr_a2)).collect()
        } else {
            p.fine_tr_a2.clone()
        };
        let integral = cumulative_at(&series, times);
        for (k, r) in p.records.iter().enumerate() {
            diffs[k].push(r.a_sq - integral[k]);
        }
    }
    let a_sq = ens.series(|r| r.a_sq);
    let mut items = Vec::new();
    for (k, d) in diffs.iter().enumerate() {
        let e = Estimate::from_samples(d);
        items.push(Comparison {
            label: "a_growth".into(),
            t: times[k],
            lhs: a_sq.mean[k],
            rhs: a_sq.mean[k] - e.value,
            se: e.se,
            tolerance: 1e-12,
        });
    }
    let c1_fit = times
        .iter()
        .zip(&a_sq.mean)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, v)| v / (n * t * (t / t1).powi(3).max(1.0)))
        .fold(0.0, f64::max);
    let mut report = worst_equality(
        "a_growth",
        "barycenter growth d/dt E|a|^2 = E||A||_2^2",
        items,
        provenance(None, ens),
    )
    .detail("fitted_c1", c1_fit)
    .detail("t1", t1);
    if let Some(env) = envelope {
        report = report.detail("envelope_c1", env.c1).detail("envelope_holds", c1_fit <= env.c1);
    }
    Ok(report)
}

/// Interval-wise `E Tr A^2(t_{k+1}) - E Tr A^2(t_k) = int E[sum|H|^2 - 2 Tr A^3]`
/// with the trapezoid rule; the second-difference estimate of its error is
/// reported and used as the tolerance.
pub fn drift_consistency(ens: &PathEnsemble) -> Result<CheckReport> {
    let times = &ens.grid.recorded;
    let g = ens.series(|r| r.h_sq - 2.0 * r.tr_a3);
    let mut items = Vec::new();
    let mut max_disc: f64 = 0.0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        let vals: Vec<f64> = ens
            .complete()
            .map(|p| {
                let (a, b) = (&p.records[k], &p.records[k + 1]);
                b.tr_a2 - a.tr_a2 - 0.5 * dt * ((a.h_sq - 2.0 * a.tr_a3) + (b.h_sq - 2.0 * b.tr_a3))
            })
            .collect();
        let e = Estimate::from_samples(&vals);
        // trapezoid error ~ dt^3 |g''| / 12 with g'' from every second
        // difference of the means that touches the interval
        let second_diff = |j: usize| {
            let (d0, d1) = (times[j] - times[j - 1], times[j + 1] - times[j]);
            let s0 = (g.mean[j] - g.mean[j - 1]) / d0;
            let s1 = (g.mean[j + 1] - g.mean[j]) / d1;
            (2.0 * (s1 - s0) / (d0 + d1)).abs()
        };
        let curvature = [k, k + 1]
            .into_iter()
            .filter(|&j| j >= 1 && j + 1 < times.len())
            .map(second_diff)
            .fold(0.0, f64::max);
        let disc = 2.0 * dt.powi(3) * curvature / 12.0;
        max_disc = max_disc.max(disc);
        let lhs = Estimate::from_samples(&ens.values_at(k + 1, |r| r.tr_a2)).value
            - Estimate::from_samples(&ens.values_at(k, |r| r.tr_a2)).value;
        items.push(Comparison { label: "drift".into(), t: times[k + 1], lhs, rhs: lhs - e.value, se: e.se, tolerance: disc });
    }
    Ok(worst_equality("drift_consistency", "Ito drift of Tr A_t^2", items, provenance(None, ens))
        .detail("max_discretization_bound", max_disc))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub t: f64,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// Empirical `P(||A_t||_op >= threshold)` at recorded index `k` with a Wilson
/// interval at `z = 4`.
pub fn opnorm_tail(ens: &PathEnsemble, k: usize, threshold: f64) -> TailEstimate {
    let vals = ens.values_at(k, |r| r.op_norm);
    let hits = vals.iter().filter(|v| **v >= threshold).count();
    let (lo, hi) = wilson_interval(hits, vals.len(), SE_MULTIPLIER);
    TailEstimate { t: ens.grid.recorded[k], p: hits as f64 / vals.len() as f64, lo, hi, count: vals.len() }
}

/// Report-only fit of `P(||A_t|| >= threshold) ~ e^{-c/t}` on the recorded
/// times with a nonzero empirical tail.
pub fn opnorm_tail_report(ens: &PathEnsemble, threshold: f64) -> CheckReport {
    let tails: Vec<TailEstimate> = (0..ens.grid.recorded.len()).map(|k| opnorm_tail(ens, k, threshold)).collect();
    let fit: Vec<&TailEstimate> = tails.iter().filter(|e| e.p > 0.0 && e.p < 1.0 && e.t > 0.0).collect();
    // least squares of log p = -c / t
    let num: f64 = fit.iter().map(|e| -e.p.ln() / e.t).sum();
    let den: f64 = fit.iter().map(|e| 1.0 / (e.t * e.t)).sum();
    let c = if den > 0.0 { num / den } else { f64::NAN };
    let max_p = tails.iter().map(|e| e.p).fold(0.0, f64::max);
    CheckReport::le("opnorm_tail", max_p, 1.0)
        .with_anchor("operator-norm tail shape e^{-c/t}")
        .with_provenance(provenance(None, ens))
        .detail("threshold", threshold)
        .detail("fitted_c", c)
        .detail("tails", &tails)
        .report_only()
}

/// Cheap equality check of the Gaussian localization oracle at every time.
pub fn gaussian_oracle(ens: &PathEnsemble) -> CheckReport {
    let n = ens.paths[0].dimension as f64;
    let a_sq = ens.series(|r| r.a_sq);
    let mut items = Vec::new();
    for (k, &t) in ens.grid.recorded.iter().enumerate() {
        items.push(Comparison {
            label: "a_sq".into(),
            t,
            lhs: a_sq.mean[k],
            rhs: n * t / (1.0 + t),
            se: a_sq.se[k],
            tolerance: 1e-12,
        });
    }
    let cov_dev = ens
        .complete()
        .flat_map(|p| p.records.iter())
        .map(|r| {
            let target = 1.0 / (1.0 + r.t);
            let m = r.cov.nrows();
            (0..m)
                .flat_map(|i| (0..m).map(move |j| (i, j)))
                .map(|(i, j)| (r.cov[(i, j)] - if i == j { target } else { 0.0 }).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    worst_equality("gaussian_localization", "Gaussian localization closed forms", items, provenance(None, ens))
        .detail("max_cov_deviation", cov_dev)
        .fail_if(cov_dev > 1e-6, "A_t deviates from Id/(1+t)")
}

/// Convenience: `x_i` as a scalar test function.
pub fn coordinate(i: usize) -> Phi {
    Phi::Scalar(TestFn::Coordinate(i))
}
