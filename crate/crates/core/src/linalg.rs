//! Dense symmetric helpers over `faer` plus a symmetric tridiagonal type with
//! Sturm-sequence bisection for individual eigenvalues.

use faer::{Mat, Side};

use crate::error::{Error, Result};

pub type Matrix = Mat<f64>;

pub fn identity(n: usize) -> Matrix {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn diag(values: &[f64]) -> Matrix {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 })
}

pub fn from_rows(rows: &[Vec<f64>]) -> Matrix {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    Mat::from_fn(n, m, |i, j| rows[i][j])
}

pub fn to_rows(a: &Matrix) -> Vec<Vec<f64>> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect()).collect()
}

pub fn mat_vec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)] * x[j]).sum()).collect()
}

pub fn transpose(a: &Matrix) -> Matrix {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)])
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    a * b
}

pub fn is_diagonal(a: &Matrix, tol: f64) -> bool {
    (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)].abs() <= tol))
}

pub fn trace(a: &Matrix) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// `Tr(A^2)` for symmetric `A` (squared Frobenius norm).
pub fn frobenius_sq(a: &Matrix) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * a[(i, j)];
        }
    }
    acc
}

pub fn max_asymmetry(a: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &Matrix) -> Matrix {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns).
pub fn sym_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let evd = a
        .self_adjoint_eigen(Side::Lower)
        .expect("symmetric eigendecomposition failed to converge");
    let s = evd.S();
    let values = (0..a.nrows()).map(|i| s[i]).collect();
    (values, evd.U().to_owned())
}

pub fn sym_eigenvalues(a: &Matrix) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    if is_diagonal(a, 0.0) {
        let mut v: Vec<f64> = (0..a.nrows()).map(|i| a[(i, i)]).collect();
        v.sort_by(f64::total_cmp);
        return v;
    }
    a.self_adjoint_eigenvalues(Side::Lower)
        .expect("symmetric eigenvalues failed to converge")
}

/// Operator norm of a symmetric matrix.
pub fn op_norm_sym(a: &Matrix) -> f64 {
    sym_eigenvalues(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `f(A) = U f(Λ) Uᵀ` for symmetric `A`.
pub fn sym_apply<F: Fn(f64) -> f64>(a: &Matrix, f: F) -> Matrix {
    let (vals, vecs) = sym_eigen(a);
    let n = a.nrows();
    Mat::from_fn(n, n, |i, j| (0..n).map(|k| vecs[(i, k)] * f(vals[k]) * vecs[(j, k)]).sum())
}

/// Symmetric inverse square root of a covariance matrix.
pub fn inv_sqrt_psd(a: &Matrix) -> Result<Matrix> {
    let vals = sym_eigenvalues(a);
    let tr: f64 = vals.iter().sum();
    let min = vals.first().copied().unwrap_or(0.0);
    if !(min > 1e-12 * tr.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateSupport { min_eig: min, trace: tr });
    }
    Ok(sym_apply(a, |v| 1.0 / v.sqrt()))
}

pub fn sqrt_psd(a: &Matrix) -> Matrix {
    sym_apply(a, |v| v.max(0.0).sqrt())
}

/// Lower Cholesky factor, `None` if not positive definite.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    a.llt(Side::Lower).ok().map(|llt| llt.L().to_owned())
}

pub fn inverse_spd(a: &Matrix) -> Option<Matrix> {
    let n = a.nrows();
    let l = cholesky(a)?;
    // Solve L Lᵀ X = I column by column.
    let mut out = Mat::zeros(n, n);
    for c in 0..n {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        for i in 0..n {
            out[(i, c)] = x[i];
        }
    }
    Some(out)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Symmetric tridiagonal matrix stored as diagonal and off-diagonal.
#[derive(Debug, Clone)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len().max(1));
        SymTridiagonal { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0f64;
        for i in 0..self.dim() {
            let e2 = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] };
            q = self.diag[i] - x - if i == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let n = self.dim();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 }
                + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k`-th smallest eigenvalue (0-based) by bisection.
    pub fn eigenvalue(&self, k: usize) -> f64 {
        assert!(k < self.dim());
        let (mut lo, mut hi) = self.gershgorin();
        let scale = lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * scale {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    pub fn eigen_full(&self) -> (Vec<f64>, Matrix) {
        sym_eigen(&self.to_dense())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_whitens() {
        let a = from_rows(&[vec![4.0, 1.0], vec![1.0, 2.0]]);
        let w = inv_sqrt_psd(&a).unwrap();
        let id = &(&w * &a) * &w;
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_covariance_is_rejected() {
        let a = from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(inv_sqrt_psd(&a), Err(Error::DegenerateSupport { .. })));
    }

    #[test]
    fn bisection_matches_dense_solver() {
        let n = 40;
        let t = SymTridiagonal::new(
            (0..n).map(|i| 2.0 + (i as f64 * 0.3).sin()).collect(),
            (0..n - 1).map(|i| -1.0 - 0.1 * (i as f64).cos()).collect(),
        );
        let (vals, _) = t.eigen_full();
        for k in [0, 1, 5, n - 1] {
            assert!((t.eigenvalue(k) - vals[k]).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn spd_inverse() {
        let a = from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]]);
        let inv = inverse_spd(&a).unwrap();
        let id = &a * &inv;
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[(i, j)] - e).abs() < 1e-12);
            }
        }
    }
}
