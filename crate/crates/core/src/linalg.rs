//! Dense linear algebra helpers on top of faer.

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{EclError, Result};

/// Real dense matrix.
pub type RMat = Mat<f64>;
/// Complex dense matrix.
pub type CMat = Mat<C64>;

/// LU factorization with partial pivoting, checked for a usable pivot.
pub struct RealLu {
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    n: usize,
}

impl RealLu {
    pub fn new(op: &'static str, a: &RMat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(EclError::validation(op, "matrix must be square"));
        }
        if !a.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
            return Err(EclError::numerical(op, "matrix has non-finite entries"));
        }
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let scale = (0..a.nrows()).map(|i| u[(i, i)].abs()).fold(0.0, f64::max);
        let pivot = (0..a.nrows()).map(|i| u[(i, i)].abs()).fold(f64::INFINITY, f64::min);
        if a.nrows() > 0 && !(pivot > 1e-14 * scale) {
            return Err(EclError::numerical(
                op,
                format!("singular matrix (pivot ratio {:.3e})", pivot / scale),
            ));
        }
        Ok(RealLu { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &RMat) -> RMat {
        assert_eq!(b.nrows(), self.n);
        self.lu.solve(b)
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let m = col(b);
        let x = self.solve(&m);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &RMat) -> RMat {
        self.lu.solve_transpose(b)
    }
}

/// Complex LU factorization.
pub struct ComplexLu {
    lu: faer::linalg::solvers::PartialPivLu<C64>,
    n: usize,
}

impl ComplexLu {
    pub fn new(op: &'static str, a: &CMat) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(EclError::validation(op, "matrix must be square"));
        }
        if !a.col_iter().all(|c| c.iter().all(|v| v.re.is_finite() && v.im.is_finite())) {
            return Err(EclError::numerical(op, "matrix has non-finite entries"));
        }
        let lu = a.partial_piv_lu();
        let u = lu.U();
        let scale = (0..a.nrows()).map(|i| u[(i, i)].norm()).fold(0.0, f64::max);
        let pivot = (0..a.nrows()).map(|i| u[(i, i)].norm()).fold(f64::INFINITY, f64::min);
        if a.nrows() > 0 && !(pivot > 1e-14 * scale) {
            return Err(EclError::numerical(
                op,
                format!("singular matrix (pivot ratio {:.3e})", pivot / scale),
            ));
        }
        Ok(ComplexLu { lu, n: a.nrows() })
    }

    pub fn solve(&self, b: &CMat) -> CMat {
        assert_eq!(b.nrows(), self.n);
        self.lu.solve(b)
    }

    pub fn solve_vec(&self, b: &[C64]) -> Vec<C64> {
        let m = CMat::from_fn(b.len(), 1, |i, _| b[i]);
        let x = self.solve(&m);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }
}

/// Column matrix from a slice.
pub fn col(v: &[f64]) -> RMat {
    RMat::from_fn(v.len(), 1, |i, _| v[i])
}

/// Eigenpairs of a symmetric matrix, eigenvalues descending.
pub fn sym_eigen(op: &'static str, a: &RMat) -> Result<(Vec<f64>, RMat)> {
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| EclError::numerical(op, format!("eigensolver failed to converge: {e:?}")))?;
    let n = a.nrows();
    let s = e.S();
    let u = e.U();
    let vals: Vec<f64> = (0..n).rev().map(|i| s[i]).collect();
    let vecs = RMat::from_fn(n, n, |i, j| u[(i, n - 1 - j)]);
    Ok((vals, vecs))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn sym_eigenvalues(op: &'static str, a: &RMat) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| EclError::numerical(op, format!("eigensolver failed to converge: {e:?}")))
}

/// Singular values, descending.
pub fn singular_values(op: &'static str, a: &RMat) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| EclError::numerical(op, format!("svd failed to converge: {e:?}")))
}

/// Largest singular value of a real matrix.
pub fn spectral_norm(op: &'static str, a: &RMat) -> Result<f64> {
    Ok(singular_values(op, a)?.first().copied().unwrap_or(0.0))
}

/// Largest singular value of a complex matrix.
pub fn spectral_norm_c(op: &'static str, a: &CMat) -> Result<f64> {
    let s = a
        .singular_values()
        .map_err(|e| EclError::numerical(op, format!("svd failed to converge: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

/// Singular values of a complex matrix, descending.
pub fn singular_values_c(op: &'static str, a: &CMat) -> Result<Vec<f64>> {
    a.singular_values()
        .map_err(|e| EclError::numerical(op, format!("svd failed to converge: {e:?}")))
}

/// Real matrix lifted to complex.
pub fn to_complex(a: &RMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| C64::new(a[(i, j)], 0.0))
}

/// Real part of a complex matrix.
pub fn real_part(a: &CMat) -> RMat {
    RMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

/// Largest absolute imaginary part relative to the largest modulus.
pub fn imag_ratio(a: &CMat) -> f64 {
    let mut im = 0.0f64;
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            im = im.max(a[(i, j)].im.abs());
            m = m.max(a[(i, j)].norm());
        }
    }
    if m == 0.0 {
        0.0
    } else {
        im / m
    }
}

/// Matrix-vector product `A x`.
pub fn matvec(a: &RMat, x: &[f64]) -> Vec<f64> {
    let y = a * col(x);
    (0..a.nrows()).map(|i| y[(i, 0)]).collect()
}

/// Complex matrix-vector product.
pub fn matvec_c(a: &CMat, x: &[C64]) -> Vec<C64> {
    let xm = CMat::from_fn(x.len(), 1, |i, _| x[i]);
    let y = a * xm;
    (0..a.nrows()).map(|i| y[(i, 0)]).collect()
}

/// `D_l A D_r` with diagonal scalings applied per row and per column.
pub fn scale_rows_cols(a: &RMat, left: &[f64], right: &[f64]) -> RMat {
    RMat::from_fn(a.nrows(), a.ncols(), |i, j| left[i] * a[(i, j)] * right[j])
}

/// Symmetric part `(A + Aᵀ)/2`.
pub fn symmetric_part(a: &RMat) -> RMat {
    RMat::from_fn(a.nrows(), a.ncols(), |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// Maximum of `|A − Aᵀ|` relative to `max |A|`.
pub fn asymmetry(a: &RMat) -> f64 {
    let mut d = 0.0f64;
    let mut m = 0.0f64;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            d = d.max((a[(i, j)] - a[(j, i)]).abs());
            m = m.max(a[(i, j)].abs());
        }
    }
    if m == 0.0 {
        0.0
    } else {
        d / m
    }
}

/// Per-component weights for 3-vector unknowns from per-node weights.
pub fn expand3(w: &[f64]) -> Vec<f64> {
    w.iter().flat_map(|&v| [v, v, v]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves() {
        let a = RMat::from_fn(3, 3, |i, j| if i == j { 4.0 } else { 1.0 });
        let lu = RealLu::new("t", &a).unwrap();
        let x = lu.solve_vec(&[6.0, 6.0, 6.0]);
        for v in x {
            assert!((v - 1.0).abs() < 1e-14);
        }
        let s = RMat::zeros(2, 2);
        assert!(RealLu::new("t", &s).is_err());
    }

    #[test]
    fn eigen_descending() {
        let a = RMat::from_fn(3, 3, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
        let (v, u) = sym_eigen("t", &a).unwrap();
        assert_eq!(v, vec![3.0, 2.0, 1.0]);
        assert!((u[(2, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((spectral_norm("t", &a).unwrap() - 3.0).abs() < 1e-12);
    }
}
