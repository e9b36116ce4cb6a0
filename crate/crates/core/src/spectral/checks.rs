//! Spectral-side inequalities on one-dimensional grid models and on products
//! of them.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::heat1d::q_norm_sq_grid;
use super::model::{h_minus1_continuum, GridOptions, SpectralMeasureRep, SpectralModel};
use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Matrix};
use crate::measure::{Law, Measure};
use crate::report::{CheckReport, Provenance};
use crate::rng::{derive_seed, stream};

/// Relative tolerance for inequalities whose both sides are quadratures.
pub const QUADRATURE_TOL: f64 = 1e-6;

fn grid_provenance(model: &SpectralModel, seed: u64, replicas: usize) -> Provenance {
    Provenance { grid_size: Some(model.size()), seed, replicas, ..Provenance::default() }
}

/// Per-coordinate grid models of a product measure with the spectral measure
/// of each centered coordinate function. Identical components share a model.
#[derive(Debug)]
pub struct ProductSpectra {
    pub dimension: usize,
    pub models: Vec<Arc<SpectralModel>>,
    /// Coordinate `i` uses `models[index[i]]`.
    pub index: Vec<usize>,
    /// Grid-centered `x` on each model.
    pub coordinates: Vec<Vec<f64>>,
    pub spectra: Vec<SpectralMeasureRep>,
    spec_digest: String,
}

impl ProductSpectra {
    pub fn new(measure: &Measure, options: GridOptions) -> Result<Self> {
        let comps = match measure.law() {
            Law::Product(ds) => ds,
            _ => return Err(Error::InvalidArgument("per-coordinate spectra need a product measure".into())),
        };
        measure.require_isotropic()?;
        let mut models: Vec<Arc<SpectralModel>> = Vec::new();
        let mut keys: Vec<&crate::measure::Component1D> = Vec::new();
        let mut index = Vec::with_capacity(comps.len());
        for d in comps {
            match keys.iter().position(|k| *k == d.component()) {
                Some(j) => index.push(j),
                None => {
                    keys.push(d.component());
                    models.push(Arc::new(SpectralModel::from_density(d.clone(), options)?));
                    index.push(models.len() - 1);
                }
            }
        }
        let coordinates: Vec<Vec<f64>> = models.iter().map(|m| m.center(&m.x)).collect();
        let spectra = models
            .iter()
            .zip(&coordinates)
            .map(|(m, x)| m.spectral_measure(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(ProductSpectra {
            dimension: comps.len(),
            models,
            index,
            coordinates,
            spectra,
            spec_digest: measure.spec().digest(),
        })
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            spec_digest: Some(self.spec_digest.clone()),
            grid_size: Some(self.models[0].size()),
            ..Provenance::default()
        }
    }

    /// `lambda_1` of the product: the smallest coordinate gap.
    pub fn gap(&self) -> f64 {
        self.models.iter().map(|m| m.eigenvalue(1)).fold(f64::INFINITY, f64::min)
    }

    /// `C_P = max_i C_P(mu_i)` by tensorization.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / self.gap()
    }

    /// `F(lambda) = (1/n) sum_i nu_{x_i}([0, lambda])`.
    pub fn f_lambda(&self, lambda: f64) -> f64 {
        let n = self.dimension as f64;
        self.index.iter().map(|&j| self.spectra[j].mass_up_to(lambda)).sum::<f64>() / n
    }

    /// `int_{lambda_1}^inf F(lambda) / lambda^2 d lambda`, exact for the
    /// step function `F`: `sum_k F(lambda_k) (1/lambda_k - 1/lambda_{k+1})`.
    pub fn f_lambda_integral(&self) -> f64 {
        let n = self.dimension as f64;
        let mut atoms: Vec<(f64, f64)> = self
            .index
            .iter()
            .flat_map(|&j| self.spectra[j].atoms.iter().skip(1).map(move |&(l, c)| (l, c / n)))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut f = 0.0;
        let mut total = 0.0;
        for k in 0..atoms.len() {
            f += atoms[k].1;
            let next = atoms.get(k + 1).map_or(0.0, |a| 1.0 / a.0);
            total += f * (1.0 / atoms[k].0 - next);
        }
        total
    }

    /// Grid value of `n sigma^2 = sum_i Var(x_i^2)`.
    pub fn n_sigma_sq_grid(&self) -> f64 {
        self.index
            .iter()
            .map(|&j| {
                let x = &self.coordinates[j];
                self.models[j].variance(&x.iter().map(|v| v * v).collect::<Vec<_>>())
            })
            .sum()
    }

    /// Quadrature value of `n sigma^2` from the component moments.
    pub fn n_sigma_sq_exact(&self) -> f64 {
        self.index
            .iter()
            .map(|&j| {
                let d = self.models[j].density();
                d.central_m4() - d.var() * d.var()
            })
            .sum()
    }
}

/// `n sigma^2 = Var(|x|^2) <= 4 sum_i ||x_i||^2_{H^{-1}}`, asserted on the
/// grid (both sides from the same discrete measure) and in the continuum
/// (component moments against `int G^2 / rho`).
pub fn variance_h1_check(ps: &ProductSpectra) -> Result<CheckReport> {
    let lhs = ps.n_sigma_sq_grid();
    let mut dual = 0.0;
    let mut eigen = 0.0;
    let mut continuum = 0.0;
    let h: Vec<(f64, f64, f64)> = ps
        .models
        .iter()
        .zip(&ps.coordinates)
        .zip(&ps.spectra)
        .map(|((m, x), sp)| {
            let mean = m.density().mean();
            Ok((m.h_minus1_dual(x)?, sp.h_minus1(), h_minus1_continuum(m.density(), |v| v - mean)))
        })
        .collect::<Result<Vec<_>>>()?;
    for &j in &ps.index {
        dual += h[j].0;
        eigen += h[j].1;
        continuum += h[j].2;
    }
    let rhs = 4.0 * dual;
    let lhs_exact = ps.n_sigma_sq_exact();
    let rhs_exact = 4.0 * continuum;
    let tol = QUADRATURE_TOL * rhs.abs().max(1.0);
    let gap = (eigen - dual).abs() / dual.abs().max(1e-300);
    Ok(CheckReport::le("variance_h1", lhs, rhs)
        .with_tolerance(tol)
        .with_anchor("Var(|x|^2) <= 4 sum ||x_i||^2_{H^-1}")
        .with_provenance(ps.provenance())
        .detail("lhs_continuum", lhs_exact)
        .detail("rhs_continuum", rhs_exact)
        .detail("h_minus1_eigen", eigen)
        .detail("eigen_dual_relative_gap", gap)
        .fail_if(lhs_exact > rhs_exact + QUADRATURE_TOL * rhs_exact.abs().max(1.0), "continuum inequality violated")
        .fail_if(gap > 1e-8, "eigen-sum and dual-solve H^-1 disagree"))
}

/// `sigma^2 <= 4 int_{lambda_1}^inf F(lambda) / lambda^2 d lambda`.
pub fn f_lambda_bound_check(ps: &ProductSpectra) -> CheckReport {
    let n = ps.dimension as f64;
    let lhs = ps.n_sigma_sq_grid() / n;
    let rhs = 4.0 * ps.f_lambda_integral();
    CheckReport::le("f_lambda_bound", lhs, rhs)
        .with_tolerance(QUADRATURE_TOL * rhs.abs().max(1.0))
        .with_anchor("sigma^2 <= 4 int F(lambda)/lambda^2")
        .with_provenance(ps.provenance())
        .detail("f_at_gap", ps.f_lambda(ps.gap() * (1.0 - 1e-9)))
        .detail("f_total", ps.f_lambda(f64::INFINITY))
}

/// `sigma^2 <= 4 C_P` with `sigma^2` from component moments and `C_P` from
/// the grid models.
pub fn sigma_vs_poincare_check(ps: &ProductSpectra) -> CheckReport {
    let n = ps.dimension as f64;
    let sigma_sq = ps.n_sigma_sq_exact() / n;
    let cp = ps.poincare_constant();
    CheckReport::le("sigma_vs_poincare", sigma_sq, 4.0 * cp)
        .with_tolerance(QUADRATURE_TOL)
        .with_anchor("sigma^2 <= 4 C_P")
        .with_provenance(ps.provenance())
        .detail("poincare_constant", cp)
}

/// `<E_lambda f, f> <= 4 (||Q_s f||_{L^2(mu_s)} + s lambda)` for one
/// instance; `f` is centered and normalized first.
pub fn spectral_mass_bound_check(model: &SpectralModel, f: &[f64], s: f64, lambda: f64) -> Result<CheckReport> {
    let f = model.normalize(f);
    let lhs = model.spectral_measure(&f)?.mass_up_to(lambda);
    let q = q_norm_sq_grid(model, &f, s)?;
    let rhs = 4.0 * (q.sqrt() + s * lambda);
    Ok(CheckReport::le("spectral_mass_bound", lhs, rhs)
        .with_tolerance(1e-8)
        .with_anchor("spectral mass below lambda vs heat-flow norm, C = 4")
        .with_provenance(grid_provenance(model, 0, 1))
        .detail("s", s)
        .detail("lambda", lambda)
        .detail("q_norm_sq", q))
}

/// Random smooth test function on the grid: a combination of low
/// eigenfunctions or of random ridge functions, centered and normalized.
pub fn random_test_function<R: Rng + ?Sized>(model: &SpectralModel, rng: &mut R) -> Result<Vec<f64>> {
    let m = model.size();
    let mut f = vec![0.0; m];
    if rng.random_bool(0.5) {
        let terms = rng.random_range(1..=10usize);
        let e = model.eigenpairs()?;
        for k in 1..=terms {
            let c: f64 = rng.sample(StandardNormal);
            for i in 0..m {
                f[i] += c * e.vectors[(i, k)];
            }
        }
    } else {
        let sd = model.variance(&model.x).sqrt();
        let mean = model.mean(&model.x);
        for _ in 0..4 {
            let c: f64 = rng.sample(StandardNormal);
            let freq = rng.random_range(0.2..3.0) / sd;
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            for i in 0..m {
                f[i] += c * (freq * (model.x[i] - mean) + phase).sin();
            }
        }
        let (c1, c2): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        for i in 0..m {
            let z = (model.x[i] - mean) / sd;
            f[i] += c1 * z + 0.3 * c2 * z * z;
        }
    }
    Ok(model.normalize(&f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassInstance {
    pub s: f64,
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// `count` random `(f, s, lambda)` instances of the spectral-mass bound;
/// the statistic is the worst `lhs - rhs`.
pub fn spectral_mass_sweep(model: &SpectralModel, count: usize, seed: u64) -> Result<CheckReport> {
    let mut rng = stream(derive_seed(seed, "spectral_mass"), 0);
    let s_min = (super::heat1d::MIN_KERNEL_CELLS * model.h).powi(2).max(1e-2);
    let l1 = model.eigenvalue(1);
    let l_hi = model.eigenvalue(12.min(model.size() - 1));
    let mut items = Vec::with_capacity(count);
    for _ in 0..count {
        let f = random_test_function(model, &mut rng)?;
        let s = (rng.random_range(s_min.ln()..4f64.ln())).exp();
        let lambda = (rng.random_range((0.5 * l1).ln()..(2.0 * l_hi).ln())).exp();
        let lhs = model.spectral_measure(&f)?.mass_up_to(lambda);
        let q = q_norm_sq_grid(model, &f, s)?;
        items.push(MassInstance { s, lambda, lhs, rhs: 4.0 * (q.sqrt() + s * lambda) });
    }
    let worst = items.iter().map(|i| i.lhs - i.rhs).fold(f64::NEG_INFINITY, f64::max);
    let violations = items.iter().filter(|i| i.lhs > i.rhs + 1e-8).count();
    let tightest = items.iter().map(|i| i.lhs / i.rhs).fold(0.0, f64::max);
    Ok(CheckReport::le("spectral_mass_sweep", worst, 0.0)
        .with_tolerance(1e-8)
        .with_anchor("spectral mass below lambda vs heat-flow norm, C = 4")
        .with_provenance(grid_provenance(model, seed, count))
        .detail("instances", count)
        .detail("violations", violations)
        .detail("max_ratio", tightest))
}

/// `||Q_s g||^2_{L^2(mu_s)} >= exp(-s E)` for `||g|| = 1`, `E` the grid
/// Dirichlet energy.
pub fn qs_lower_bound_check(model: &SpectralModel, g: &[f64], s: f64) -> Result<CheckReport> {
    let norm = model.norm_sq(g).sqrt();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("g must be nonzero".into()));
    }
    let g: Vec<f64> = g.iter().map(|v| v / norm).collect();
    let energy = model.dirichlet(&g, &g);
    let q = q_norm_sq_grid(model, &g, s)?;
    Ok(CheckReport::ge("qs_lower_bound", q, (-s * energy).exp())
        .with_tolerance(1e-8)
        .with_anchor("||Q_s g||^2 >= exp(-s E)")
        .with_provenance(grid_provenance(model, 0, 1))
        .detail("energy", energy)
        .detail("s", s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferInstance {
    pub beta: f64,
    pub epsilon: f64,
    pub af_f: f64,
}

impl TransferInstance {
    /// `<Af, f> - (beta/4 - epsilon)`.
    pub fn margin(&self) -> f64 {
        self.af_f - (0.25 * self.beta - self.epsilon)
    }
}

/// One instance: `A` given by its eigenpairs, `f` unit, `g` a projection of
/// `f` (so `||g||^2 = <f, g> = beta`). `epsilon` is the smallest value making
/// the hypothesis `<Ag, g> >= (1 - epsilon) beta` hold.
pub fn transfer_instance(values: &[f64], vectors: &Matrix, f: &[f64], keep: &[bool]) -> Option<TransferInstance> {
    let n = values.len();
    let coef: Vec<f64> = (0..n).map(|k| (0..n).map(|i| vectors[(i, k)] * f[i]).sum()).collect();
    let beta: f64 = (0..n).filter(|&k| keep[k]).map(|k| coef[k] * coef[k]).sum();
    if beta < 1e-12 {
        return None;
    }
    let ag_g: f64 = (0..n).filter(|&k| keep[k]).map(|k| values[k] * coef[k] * coef[k]).sum();
    let af_f: f64 = (0..n).map(|k| values[k] * coef[k] * coef[k]).sum();
    let epsilon = (1.0 - ag_g / beta).max(0.0);
    Some(TransferInstance { beta, epsilon, af_f })
}

/// Random finite-dimensional instances of the projection-transfer lemma:
/// `A` PSD with `||A|| <= 1`, `f` unit, `g = F f` for a spectral projection
/// `F` of `A` (upper spectral window or random eigen-subset).
pub fn projection_transfer_check(dim: usize, trials: usize, seed: u64) -> Result<CheckReport> {
    if dim < 2 {
        return Err(Error::InvalidArgument("dimension must be at least 2".into()));
    }
    let mut rng = stream(derive_seed(seed, "projection_transfer"), 0);
    let mut worst: Option<TransferInstance> = None;
    let mut violations = 0usize;
    let mut used = 0usize;
    for _ in 0..trials {
        let rank = rng.random_range(1..=dim);
        let b = Matrix::from_fn(dim, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
        let a = &b * b.transpose();
        let (mut values, vectors) = sym_eigen(&a);
        let top = values.iter().copied().fold(0.0, f64::max);
        let shape = rng.random_range(0.2..3.0);
        // reshape the spectrum into [0, 1] keeping the eigenvectors
        values.iter_mut().for_each(|v| *v = (v.max(0.0) / top).powf(shape));
        let mut f: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let nf = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        f.iter_mut().for_each(|v| *v /= nf);
        let keep: Vec<bool> = if rng.random_bool(0.5) {
            let r: f64 = rng.random_range(0.0..1.0);
            values.iter().map(|v| *v >= r).collect()
        } else {
            (0..dim).map(|_| rng.random_bool(0.3)).collect()
        };
        let Some(inst) = transfer_instance(&values, &vectors, &f, &keep) else { continue };
        used += 1;
        if inst.margin() < -1e-12 {
            violations += 1;
        }
        if worst.is_none_or(|w| inst.margin() < w.margin()) {
            worst = Some(inst);
        }
    }
    let worst = worst.ok_or_else(|| Error::InvalidArgument("no admissible instance generated".into()))?;
    Ok(CheckReport::le("projection_transfer", violations as f64, 0.0)
        .with_anchor("<Af,f> >= beta/4 - epsilon for spectral projections")
        .with_provenance(Provenance { seed, replicas: trials, ..Provenance::default() })
        .detail("dimension", dim)
        .detail("instances", used)
        .detail("worst", worst)
        .detail("min_margin", worst.margin()))
}

/// `Var f = 2 int ||grad e^{sL} f||^2 ds` (equality) and
/// `int ||grad e^{sL} f||^2 ds <= int ||e^{sL} f'||^2 ds` via eigen-expansions.
/// When `f'` is not centered the right side diverges; the report then
/// carries `f64::MAX` as bound with `rhs_divergent = true`.
pub fn semigroup_variance_identities(model: &SpectralModel, f: &[f64], df: &[f64]) -> Result<CheckReport> {
    let f = model.center(f);
    let sf = model.spectral_measure(&f)?;
    let var = model.norm_sq(&f);
    // int_0^inf sum c_k^2 lambda_k e^{-2 s lambda_k} ds = sum c_k^2 / 2
    let lhs: f64 = sf.atoms.iter().skip(1).map(|(_, c)| 0.5 * c).sum();
    let identity_defect = (var - 2.0 * lhs).abs();
    let dmean = model.mean(df);
    let divergent = dmean.abs() > 1e-8 * model.norm_sq(df).sqrt().max(1.0);
    // int_0^inf ||e^{sL} g||^2 ds = sum d_k^2 / (2 lambda_k) for centered g
    let rhs = if divergent { f64::MAX } else { 0.5 * model.spectral_measure(df)?.h_minus1() };
    let tol = 1e-8 * if divergent { 1.0 } else { rhs.abs().max(1.0) };
    Ok(CheckReport::le("semigroup_commutation", lhs, rhs)
        .with_tolerance(tol)
        .with_anchor("int ||grad e^{sL} f||^2 <= int ||e^{sL} grad f||^2")
        .with_provenance(grid_provenance(model, 0, 1))
        .detail("variance", var)
        .detail("identity_defect", identity_defect)
        .detail("rhs_divergent", divergent)
        .fail_if(identity_defect > 1e-6 * var.max(1.0), "variance identity broken"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CefmResult {
    /// `max Var f / int f'^2` over `int f' dmu = 0`.
    pub best_constant: f64,
    /// The constrained smallest eigenvalue `1 / best_constant`.
    pub constrained_gap: f64,
    pub gap: f64,
}

/// Requires `(-log rho)'' >= 1 - 1e-8` at every node.
pub fn require_uniformly_log_concave(model: &SpectralModel) -> Result<()> {
    let d = model.density();
    for &x in &model.x {
        let k = -d.d2log(x);
        if k < 1.0 - 1e-8 {
            return Err(Error::HypothesisViolated(format!("(-log rho)'' = {k:.6} < 1 at x = {x:.4}")));
        }
    }
    Ok(())
}

/// Constrained Rayleigh problem: minimize `E(u) / Var(u)` over `u` with
/// `int u' dmu = 0`. In eigen-coordinates the constraint is `<b, y> = 0`
/// and the minimum is the smallest root of `sum_k b_k^2 / (lambda_k - z)`.
pub fn centered_gradient_poincare(model: &SpectralModel) -> Result<CefmResult> {
    require_uniformly_log_concave(model)?;
    let e = model.eigenpairs()?;
    let m = model.size();
    // int u' dmu ~ sum_e k_e h (u_{i+1} - u_i) = <c, u>
    let mut c = vec![0.0; m];
    for (edge, k) in model.conductance.iter().enumerate() {
        c[edge] -= k * model.h;
        c[edge + 1] += k * model.h;
    }
    let b: Vec<f64> = (0..m).map(|k| (0..m).map(|i| e.vectors[(i, k)] * c[i]).sum()).collect();
    let total: f64 = b.iter().skip(1).map(|v| v * v).sum();
    let gap = e.values[1];
    let first = (1..m).find(|&k| b[k] * b[k] > 1e-24 * total).unwrap_or(m);
    let constrained = if first > 1 || first + 1 >= m {
        // an eigenvector already satisfies the constraint
        gap
    } else {
        let secular = |z: f64| (1..m).map(|k| b[k] * b[k] / (e.values[k] - z)).sum::<f64>();
        let (mut lo, mut hi) = (e.values[first], e.values[first + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if secular(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        0.5 * (lo + hi)
    };
    Ok(CefmResult { best_constant: 1.0 / constrained, constrained_gap: constrained, gap })
}

/// `best constant <= 1/2 + 1e-4` for 1-uniformly log-concave densities.
pub fn cefm_check(model: &SpectralModel) -> Result<CheckReport> {
    let r = centered_gradient_poincare(model)?;
    Ok(CheckReport::le("centered_gradient_poincare", r.best_constant, 0.5)
        .with_tolerance(1e-4)
        .with_anchor("Poincare constant 1/2 for centered gradients")
        .with_provenance(grid_provenance(model, 0, 1))
        .detail("constrained_gap", r.constrained_gap)
        .detail("gap", r.gap))
}
