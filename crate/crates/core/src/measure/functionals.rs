//! Thin-shell and third-moment functionals.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::law::{Base, Law, Measure, SamplePack};
use crate::error::Result;
use crate::linalg::{self, Matrix};
use crate::rng::{derive_seed, stream};
use crate::stats::{batch_estimate, Budget, Estimate};

const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThinShell {
    /// `Var(|X|^2) / n`.
    pub sigma_sq: Estimate,
    pub exact: bool,
}

impl ThinShell {
    pub fn sigma(&self) -> f64 {
        self.sigma_sq.value.max(0.0).sqrt()
    }
}

/// `sigma^2 = Var(|X|^2)/n` of an isotropic measure.
pub fn thin_shell_sigma(measure: &Measure, budget: &Budget) -> Result<ThinShell> {
    measure.require_isotropic()?;
    let n = measure.dimension() as f64;
    if let Some(ds) = measure.components() {
        let var: f64 = ds.iter().map(|d| d.raw_moment(4) - d.raw_moment(2).powi(2)).sum();
        return Ok(ThinShell { sigma_sq: Estimate::exact(var / n), exact: true });
    }
    let pack = measure.sample_streams(budget.samples, derive_seed(budget.seed, "thin-shell"), 0, budget.streams)?;
    let r2: Vec<f64> = pack.rows().map(|x| x.iter().map(|v| v * v).sum()).collect();
    let est = batch_estimate(&r2, BATCHES, |xs| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
    });
    Ok(ThinShell { sigma_sq: est.scale(1.0 / n), exact: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaEstimate {
    /// `sup_theta || E <X,theta> X (x) X ||_F^2` over the searched directions.
    pub kappa_sq: Estimate,
    pub direction: Vec<f64>,
    pub exact: bool,
}

impl KappaEstimate {
    pub fn kappa(&self) -> f64 {
        self.kappa_sq.value.max(0.0).sqrt()
    }

    /// Standard error of `kappa` by the delta method.
    pub fn kappa_se(&self) -> f64 {
        let k = self.kappa();
        if k > 0.0 {
            (self.kappa_sq.se / (2.0 * k)).max(0.0)
        } else {
            self.kappa_sq.se.sqrt()
        }
    }
}

/// `G_kl = sum_ij T_kij T_lij` for the weighted third central moment tensor
/// `T = sum_a w_a y_a (x) y_a (x) y_a`, `y_a = x_a - center`. Slices only.
pub fn third_moment_gram(points: &[f64], n: usize, weights: Option<&[f64]>, center: &[f64]) -> Matrix {
    let count = points.len() / n;
    let uniform = 1.0 / count as f64;
    let y = Matrix::from_fn(count, n, |a, k| points[a * n + k] - center[k]);
    let yt = linalg::transpose(&y);
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        let z = Matrix::from_fn(count, n, |a, j| weights.map_or(uniform, |w| w[a]) * y[(a, i)] * y[(a, j)]);
        let s = &yt * &z;
        g += &s * &s;
    }
    g
}

/// `sum_ij |H_ij|^2 = Tr G` from weighted samples.
pub fn third_moment_contraction(points: &[f64], n: usize, weights: Option<&[f64]>, center: &[f64]) -> f64 {
    linalg::trace(&third_moment_gram(points, n, weights, center))
}

/// Exact `G` for `x = M z + b` with independent coordinates of central third
/// moments `m3`: `G = M D (MᵀM ∘ MᵀM) D Mᵀ`, `D = diag(m3)`.
pub fn linear_product_gram(linear: &Matrix, m3: &[f64]) -> Matrix {
    let s = &linalg::transpose(linear) * linear;
    let n = m3.len();
    let inner = Matrix::from_fn(n, n, |l, k| m3[l] * s[(l, k)] * s[(l, k)] * m3[k]);
    &(linear * &inner) * &linalg::transpose(linear)
}

fn top_direction(g: &Matrix) -> (f64, Vec<f64>) {
    let (vals, vecs) = linalg::sym_eigen(g);
    let n = g.nrows();
    (vals[n - 1], (0..n).map(|i| vecs[(i, n - 1)]).collect())
}

fn quad_form(g: &Matrix, v: &[f64]) -> f64 {
    linalg::dot(v, &linalg::mat_vec(g, v))
}

/// Unbiased U-statistic of `||E <X,theta> X Xᵀ||_F^2` on a sample.
fn u_statistic(rows: &[&[f64]], theta: &[f64]) -> f64 {
    let n = theta.len();
    let count = rows.len() as f64;
    let mut m = vec![0.0; n * n];
    let mut diag = 0.0;
    for x in rows {
        let p = linalg::dot(x, theta);
        let r2: f64 = x.iter().map(|v| v * v).sum();
        diag += p * p * r2 * r2;
        for i in 0..n {
            let pi = p * x[i];
            for j in 0..n {
                m[i * n + j] += pi * x[j];
            }
        }
    }
    let fro: f64 = m.iter().map(|v| v * v).sum();
    (fro - diag) / (count * (count - 1.0))
}

/// `kappa_X` of a centered measure: the supremum over directions of
/// `||E <X,theta> X (x) X||_F`. Exact when a third-moment tensor is available.
pub fn kappa_estimate(measure: &Measure, direction_count: usize, budget: &Budget) -> Result<KappaEstimate> {
    measure.require_centered()?;
    let n = measure.dimension();
    let exact_gram = match measure.law() {
        Law::Product(ds) => Some(linalg::diag(&ds.iter().map(|d| d.central_m3().powi(2)).collect::<Vec<_>>())),
        Law::Gaussian { .. } => Some(Matrix::zeros(n, n)),
        Law::Linear { base: Base::Product(ds), linear, .. } => {
            Some(linear_product_gram(linear, &ds.iter().map(|d| d.central_m3()).collect::<Vec<_>>()))
        }
        Law::Linear { .. } => None,
    };
    if let Some(g) = exact_gram {
        let (top, dir) = top_direction(&g);
        return Ok(KappaEstimate { kappa_sq: Estimate::exact(top.max(0.0)), direction: dir, exact: true });
    }

    let seed = derive_seed(budget.seed, "kappa");
    let pack: SamplePack = measure.sample_streams(budget.samples.max(4 * BATCHES), seed, 0, budget.streams)?;
    let half = pack.count / 2;
    let search = &pack.points[..half * n];
    let mean = &measure.moments().mean;
    let g = third_moment_gram(search, n, None, mean);
    let (_, mut best) = top_direction(&g);
    let mut best_score = quad_form(&g, &best);
    let mut rng = stream(seed, u64::MAX);
    for _ in 0..direction_count {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = linalg::norm(&v);
        v.iter_mut().for_each(|x| *x /= norm);
        let score = quad_form(&g, &v);
        if score > best_score {
            best_score = score;
            best = v;
        }
    }
    let rows: Vec<Vec<f64>> = pack.rows().skip(half).map(|x| x.iter().zip(mean).map(|(a, m)| a - m).collect()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let size = refs.len() / BATCHES;
    let parts: Vec<f64> = (0..BATCHES).map(|b| u_statistic(&refs[b * size..(b + 1) * size], &best)).collect();
    let spread = Estimate::from_samples(&parts);
    let value = u_statistic(&refs, &best);
    Ok(KappaEstimate { kappa_sq: Estimate { value, se: spread.se }, direction: best, exact: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::component::Component1D;
    use crate::measure::law::isotropize;
    use crate::measure::spec::{Body, MeasureSpec};

    #[test]
    fn exponential_product_kappa_is_two() {
        let m = Measure::new(&MeasureSpec::iid(Component1D::shifted_exponential(), 4)).unwrap();
        let k = kappa_estimate(&m, 8, &Budget::default()).unwrap();
        assert!(k.exact);
        assert!((k.kappa() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn linear_gram_matches_product_gram_for_identity() {
        let m3 = [2.0, -1.0, 0.5];
        let g = linear_product_gram(&linalg::identity(3), &m3);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { m3[i] * m3[i] } else { 0.0 };
                assert!((g[(i, j)] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sample_gram_matches_linear_formula() {
        // Linear images of exponential products have an exact Gram matrix.
        let spec = MeasureSpec::iid(Component1D::shifted_exponential(), 2).with_affine(crate::measure::spec::Affine {
            shift: vec![0.0, 0.0],
            linear: vec![vec![1.0, 0.5], vec![-0.3, 1.0]],
        });
        let m = Measure::new(&spec).unwrap();
        let exact = kappa_estimate(&m, 0, &Budget::default()).unwrap();
        let pack = m.sample(400_000, 5, 0).unwrap();
        let g = third_moment_gram(&pack.points, 2, None, &[0.0, 0.0]);
        let v = quad_form(&g, &exact.direction);
        assert!((v / exact.kappa_sq.value - 1.0).abs() < 0.1, "{v} vs {}", exact.kappa_sq.value);
    }

    #[test]
    fn symmetric_body_kappa_near_zero() {
        let spec = isotropize(&MeasureSpec::uniform_body(Body::Ball, 1.0, 3)).unwrap();
        let m = Measure::new(&spec).unwrap();
        let k = kappa_estimate(&m, 16, &Budget::new(40_000, 1)).unwrap();
        assert!(!k.exact);
        assert!(k.kappa_sq.agrees_with(0.0, 0.0), "{:?}", k.kappa_sq);
    }
}
