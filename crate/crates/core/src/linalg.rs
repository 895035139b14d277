//! Thin helpers over `nalgebra` for the small dense complex matrices used
//! throughout the crate. Everything here works on Hermitian matrices of
//! modest size (K×K or N×N), so clarity wins over blocking tricks.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

/// Largest element-wise deviation `|m[i,j] - conj(m[j,i])|`.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

pub fn cholesky(m: &CMat, what: &'static str) -> Result<Cholesky<Complex64, Dyn>> {
    // The complex factorization takes principal square roots, so a negative
    // pivot shows up as an imaginary diagonal entry instead of a failure.
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite(what))?;
    let l = chol.l_dirty();
    let positive = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > 0.0 && d.re.is_finite() && d.im.abs() <= 1e-10 * d.re
    });
    if positive {
        Ok(chol)
    } else {
        Err(Error::NotPositiveDefinite(what))
    }
}

/// `ln |M|` from a Cholesky factor `M = L L^H`.
pub fn log_det(chol: &Cholesky<Complex64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].re.ln()).sum::<f64>() * 2.0
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted
/// ascending and eigenvector columns permuted to match.
pub fn hermitian_eigen(m: &CMat) -> (Vec<f64>, CMat) {
    let eig = SymmetricEigen::new(hermitize(m));
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// A factor `L` with `L L^H = m` for Hermitian PSD `m`; negative rounding
/// noise in the spectrum is clipped to zero.
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let mut l = vectors;
    for (c, v) in values.iter().enumerate() {
        let s = v.max(0.0).sqrt();
        l.column_mut(c).scale_mut(s);
    }
    l
}

/// Moore-Penrose pseudo-inverse of a Hermitian PSD matrix. Eigenvalues
/// below `rel_tol * max_eig` are treated as zero.
pub fn pinv_hermitian(m: &CMat, rel_tol: f64) -> CMat {
    let (values, vectors) = hermitian_eigen(m);
    let top = values.iter().cloned().fold(0.0_f64, f64::max);
    let n = m.nrows();
    let mut out = CMat::zeros(n, n);
    for (c, &v) in values.iter().enumerate() {
        if top > 0.0 && v > rel_tol * top {
            let col = vectors.column(c);
            out += (col * col.adjoint()).unscale(v);
        }
    }
    out
}

/// Condition number of a Hermitian PSD matrix (infinite when singular).
pub fn condition_number(m: &CMat) -> f64 {
    let (values, _) = hermitian_eigen(m);
    let lo = values.first().copied().unwrap_or(0.0);
    let hi = values.last().copied().unwrap_or(0.0);
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn trace(m: &CMat) -> Complex64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn frobenius_sq(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn real_vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
