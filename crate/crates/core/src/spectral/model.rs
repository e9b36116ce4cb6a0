//! Finite-volume discretization of `-L = -(rho u')'/rho` on a cell-centered
//! uniform grid with zero-flux ends.
//!
//! With cell masses `w_i` and edge conductances `k_e = rho(x_e) / (h Z)` the
//! quadratic form is `E(u) = sum_e k_e (u_{i+1} - u_i)^2`, so `-L = W^{-1} K`
//! is self-adjoint in `l^2(w)` and the constants are an exact null space. The
//! symmetric form `S = W^{-1/2} K W^{-1/2}` is tridiagonal.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eigen, Matrix, SymTridiagonal};
use crate::measure::{Component1D, Density1D};
use crate::quad::GaussLegendre;

/// Smallest admissible grid.
pub const MIN_GRID: usize = 64;
pub const DEFAULT_GRID: usize = 2048;
/// Truncate where the density falls below `1e-16` of its maximum.
pub const DEFAULT_CUT: f64 = 36.841_361_487_904_734;
/// Largest grid for which full eigenpairs are formed.
pub const MAX_DENSE_GRID: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    pub size: usize,
    /// Truncation level in nats below the maximum of the log-density.
    pub cut: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions { size: DEFAULT_GRID, cut: DEFAULT_CUT }
    }
}

impl GridOptions {
    pub fn new(size: usize) -> Self {
        GridOptions { size, ..Self::default() }
    }

    pub fn with_cut(self, cut: f64) -> Self {
        GridOptions { cut, ..self }
    }
}

/// Eigenpairs of `-L`; `vectors` has the `l^2(w)`-orthonormal `phi_k` as columns.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

#[derive(Debug)]
pub struct SpectralModel {
    density: Density1D,
    options: GridOptions,
    pub lo: f64,
    pub hi: f64,
    pub h: f64,
    pub x: Vec<f64>,
    pub weights: Vec<f64>,
    pub log_weights: Vec<f64>,
    /// `k_e` on the `m - 1` interior edges.
    pub conductance: Vec<f64>,
    operator: SymTridiagonal,
    eigen: OnceLock<Eigenpairs>,
}

pub fn build_model(comp: &Component1D, grid_size: usize) -> Result<SpectralModel> {
    SpectralModel::new(comp, GridOptions::new(grid_size))
}

impl SpectralModel {
    pub fn new(comp: &Component1D, options: GridOptions) -> Result<Self> {
        Self::from_density(Density1D::new(comp.clone())?, options)
    }

    pub fn from_density(density: Density1D, options: GridOptions) -> Result<Self> {
        let m = options.size;
        if m < MIN_GRID {
            return Err(Error::GridTooCoarse { grid_size: m });
        }
        if !(options.cut > 0.0) {
            return Err(Error::InvalidArgument(format!("cut must be positive, got {}", options.cut)));
        }
        let (lo, hi) = density.support_at(options.cut);
        let h = (hi - lo) / m as f64;
        let x: Vec<f64> = (0..m).map(|i| lo + h * (i as f64 + 0.5)).collect();
        let top = density.log_max();
        let lr: Vec<f64> = x.iter().map(|&v| density.log_pdf(v) - top).collect();
        let le: Vec<f64> = (1..m).map(|i| density.log_pdf(lo + h * i as f64) - top).collect();
        let log_z = {
            let s: f64 = lr.iter().map(|v| v.exp()).sum();
            (s * h).ln()
        };
        let log_weights: Vec<f64> = lr.iter().map(|v| v + h.ln() - log_z).collect();
        let weights: Vec<f64> = log_weights.iter().map(|v| v.exp()).collect();
        let conductance: Vec<f64> = le.iter().map(|v| (v - h.ln() - log_z).exp()).collect();
        // S_ii = (k_{i-1/2} + k_{i+1/2}) / w_i, S_{i,i+1} = -k / sqrt(w_i w_{i+1}),
        // formed from log-ratios so tail cells stay O(1/h^2)
        let h2 = h * h;
        let diag: Vec<f64> = (0..m)
            .map(|i| {
                let left = if i > 0 { (le[i - 1] - lr[i]).exp() } else { 0.0 };
                let right = if i + 1 < m { (le[i] - lr[i]).exp() } else { 0.0 };
                (left + right) / h2
            })
            .collect();
        let off: Vec<f64> = (0..m - 1).map(|i| -(le[i] - 0.5 * (lr[i] + lr[i + 1])).exp() / h2).collect();
        Ok(SpectralModel {
            density,
            options,
            lo,
            hi,
            h,
            x,
            weights,
            log_weights,
            conductance,
            operator: SymTridiagonal::new(diag, off),
            eigen: OnceLock::new(),
        })
    }

    pub fn density(&self) -> &Density1D {
        &self.density
    }

    pub fn options(&self) -> GridOptions {
        self.options
    }

    pub fn size(&self) -> usize {
        self.x.len()
    }

    /// Symmetric tridiagonal `W^{-1/2} K W^{-1/2}`.
    pub fn operator(&self) -> &SymTridiagonal {
        &self.operator
    }

    pub fn tabulate(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.x.iter().map(|&v| f(v)).collect()
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.weights.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
    }

    pub fn norm_sq(&self, u: &[f64]) -> f64 {
        self.inner(u, u)
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        self.weights.iter().zip(u).map(|(w, a)| w * a).sum()
    }

    pub fn variance(&self, u: &[f64]) -> f64 {
        let m = self.mean(u);
        self.weights.iter().zip(u).map(|(w, a)| w * (a - m) * (a - m)).sum()
    }

    pub fn center(&self, u: &[f64]) -> Vec<f64> {
        let m = self.mean(u);
        u.iter().map(|a| a - m).collect()
    }

    /// Centered and scaled to unit `l^2(w)` norm.
    pub fn normalize(&self, u: &[f64]) -> Vec<f64> {
        let c = self.center(u);
        let n = self.norm_sq(&c).sqrt();
        c.iter().map(|a| a / n).collect()
    }

    /// `(-L u)_i = w_i^{-1} sum_e k_e (u_i - u_j)`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let m = self.size();
        let mut out = vec![0.0; m];
        for (e, k) in self.conductance.iter().enumerate() {
            let flux = k * (u[e] - u[e + 1]);
            out[e] += flux;
            out[e + 1] -= flux;
        }
        out.iter_mut().zip(&self.weights).for_each(|(o, w)| *o /= w);
        out
    }

    /// `E(u, v) = sum_e k_e (u_{i+1} - u_i)(v_{i+1} - v_i)`.
    pub fn dirichlet(&self, u: &[f64], v: &[f64]) -> f64 {
        self.conductance
            .iter()
            .enumerate()
            .map(|(e, k)| k * (u[e + 1] - u[e]) * (v[e + 1] - v[e]))
            .sum()
    }

    /// `k`-th eigenvalue by Sturm bisection; `lambda_0 = 0` exactly.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        self.operator.eigenvalue(k)
    }

    pub fn eigenvalues(&self, count: usize) -> Vec<f64> {
        (0..count.min(self.size())).map(|k| self.eigenvalue(k)).collect()
    }

    /// Full eigenpairs, computed once. The zero mode is replaced by the exact
    /// constant and the others are projected off it.
    pub fn eigenpairs(&self) -> Result<&Eigenpairs> {
        if self.size() > MAX_DENSE_GRID {
            return Err(Error::InvalidArgument(format!(
                "full eigenpairs need grid size <= {MAX_DENSE_GRID}, got {}",
                self.size()
            )));
        }
        Ok(self.eigen.get_or_init(|| {
            let (mut values, v) = sym_eigen(&self.operator.to_dense());
            let m = self.size();
            let root: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
            let mut vectors = Matrix::zeros(m, m);
            values[0] = 0.0;
            for i in 0..m {
                vectors[(i, 0)] = 1.0;
            }
            for k in 1..m {
                let proj: f64 = (0..m).map(|i| v[(i, k)] * root[i]).sum();
                let mut norm = 0.0;
                for i in 0..m {
                    let y = v[(i, k)] - proj * root[i];
                    norm += y * y;
                    vectors[(i, k)] = y;
                }
                let norm = norm.sqrt();
                for i in 0..m {
                    vectors[(i, k)] /= norm * root[i];
                }
            }
            Eigenpairs { values, vectors }
        }))
    }

    /// `phi_k` on the grid.
    pub fn eigenfunction(&self, k: usize) -> Result<Vec<f64>> {
        let e = self.eigenpairs()?;
        Ok((0..self.size()).map(|i| e.vectors[(i, k)]).collect())
    }

    /// `(lambda_1, C_P = 1 / lambda_1)`.
    pub fn poincare_constant(&self) -> (f64, f64) {
        let l1 = self.eigenvalue(1);
        (l1, 1.0 / l1)
    }

    /// Atoms `(lambda_k, <f, phi_k>^2)`.
    pub fn spectral_measure(&self, f: &[f64]) -> Result<SpectralMeasureRep> {
        self.check_len(f)?;
        let e = self.eigenpairs()?;
        let m = self.size();
        let wf: Vec<f64> = self.weights.iter().zip(f).map(|(w, a)| w * a).collect();
        let atoms: Vec<(f64, f64)> = (0..m)
            .map(|k| {
                let c: f64 = (0..m).map(|i| wf[i] * e.vectors[(i, k)]).sum();
                (e.values[k], c * c)
            })
            .collect();
        let total = self.norm_sq(f);
        let mass: f64 = atoms.iter().map(|a| a.1).sum();
        Ok(SpectralMeasureRep { atoms, total, parseval_defect: (mass - total).abs() })
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.size() {
            return Err(Error::InvalidArgument(format!("function has {} values, grid has {}", f.len(), self.size())));
        }
        Ok(())
    }

    fn require_centered(&self, f: &[f64]) -> Result<()> {
        let mean = self.mean(f);
        if mean.abs() > 1e-8 * self.norm_sq(f).sqrt().max(1.0) {
            return Err(Error::CenteringRequired { mean });
        }
        Ok(())
    }

    /// `sum_{k >= 1} <f, phi_k>^2 / lambda_k`.
    pub fn h_minus1_norm(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.require_centered(f)?;
        Ok(self.spectral_measure(f)?.h_minus1())
    }

    /// `<f, u>` for the solution of `(-L) u = f`: the flux through edge `e` is
    /// the cumulative mass `G_e = sum_{i <= e} w_i f_i`, so the value is
    /// `sum_e G_e^2 / k_e`.
    pub fn h_minus1_dual(&self, f: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.require_centered(f)?;
        let mut g = 0.0;
        let mut out = 0.0;
        for (e, k) in self.conductance.iter().enumerate() {
            g += self.weights[e] * f[e];
            out += g * g / k;
        }
        Ok(out)
    }
}

/// Discrete spectral measure of a grid function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasureRep {
    pub atoms: Vec<(f64, f64)>,
    /// `||f||^2` in `l^2(w)`.
    pub total: f64,
    pub parseval_defect: f64,
}

impl SpectralMeasureRep {
    /// `nu_f([0, lambda])`.
    pub fn mass_up_to(&self, lambda: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 <= lambda).map(|a| a.1).sum()
    }

    /// `nu_f([0, lambda))`.
    pub fn mass_below(&self, lambda: f64) -> f64 {
        self.atoms.iter().filter(|a| a.0 < lambda).map(|a| a.1).sum()
    }

    pub fn h_minus1(&self) -> f64 {
        self.atoms.iter().skip(1).map(|(l, c)| c / l).sum()
    }

    /// `int lambda dnu_f`, the Dirichlet energy.
    pub fn energy(&self) -> f64 {
        self.atoms.iter().map(|(l, c)| l * c).sum()
    }

    /// Atoms with mass above `floor`, as `lambda<TAB>mass` rows.
    pub fn atoms_tsv(&self, floor: f64) -> String {
        let mut s = String::from("# schema_version=1\nlambda\tmass\n");
        for (l, c) in self.atoms.iter().filter(|a| a.1 > floor) {
            s.push_str(&format!("{l:e}\t{c:e}\n"));
        }
        s
    }
}

/// `||f - E f||^2_{H^{-1}} = int G^2 / rho` with `G(x) = int_{-inf}^x (f - E f) rho`,
/// by nested Gauss–Legendre quadrature on the density's own support. `G` is
/// accumulated from whichever end is closer in mass.
pub fn h_minus1_continuum(density: &Density1D, f: impl Fn(f64) -> f64) -> f64 {
    const PANELS: usize = 4096;
    let (a, b) = density.truncated_support();
    let rule = GaussLegendre::standard();
    let mean = density.expect(&f);
    let g = |x: f64| (f(x) - mean) * density.pdf(x);
    let width = (b - a) / PANELS as f64;
    let edges: Vec<f64> = (0..=PANELS).map(|k| a + width * k as f64).collect();
    let pieces: Vec<f64> = (0..PANELS).map(|k| rule.integrate(edges[k], edges[k + 1], g)).collect();
    let mut left = vec![0.0; PANELS + 1];
    for k in 0..PANELS {
        left[k + 1] = left[k] + pieces[k];
    }
    let mut right = vec![0.0; PANELS + 1];
    for k in (0..PANELS).rev() {
        right[k] = right[k + 1] + pieces[k];
    }
    let mut total = 0.0;
    for k in 0..PANELS {
        let from_left = density.cdf(edges[k + 1]) <= 0.5;
        total += rule.integrate(edges[k], edges[k + 1], |x| {
            let big_g = if from_left {
                left[k] + rule.integrate(edges[k], x, g)
            } else {
                -(right[k + 1] + rule.integrate(x, edges[k + 1], g))
            };
            big_g * big_g / density.pdf(x)
        });
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_grid_is_rejected() {
        let e = build_model(&Component1D::gaussian(), 32).unwrap_err();
        assert_eq!(e, Error::GridTooCoarse { grid_size: 32 });
    }

    #[test]
    fn hermite_spectrum() {
        let m = build_model(&Component1D::gaussian(), 1024).unwrap();
        for k in 0..6 {
            assert!((m.eigenvalue(k) - k as f64).abs() < 1e-3, "k = {k}");
        }
    }

    #[test]
    fn integration_by_parts_and_dual() {
        let m = build_model(&Component1D::shifted_exponential(), 256).unwrap();
        let u = m.tabulate(|x| (0.3 * x).sin());
        let v = m.tabulate(|x| x * x);
        let lhs = m.inner(&m.apply(&u), &v);
        assert!((lhs - m.dirichlet(&u, &v)).abs() < 1e-12 * lhs.abs().max(1.0));
        let f = m.center(&m.x);
        let a = m.h_minus1_norm(&f).unwrap();
        let b = m.h_minus1_dual(&f).unwrap();
        assert!((a - b).abs() < 1e-8 * b);
    }

    #[test]
    fn continuum_h_minus1_of_exponential_is_two() {
        let d = Density1D::new(Component1D::shifted_exponential()).unwrap();
        assert!((h_minus1_continuum(&d, |x| x) - 2.0).abs() < 1e-9);
    }
}
