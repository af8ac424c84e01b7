//! Small dense complex linear algebra used by the transport and potential code.
//!
//! Matrices here are tiny (bundle rank r <= 4) or moderate (spectral oracles,
//! a few hundred rows), so everything is dense `nalgebra` storage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{domain, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(r: usize) -> CMat {
    CMat::identity(r, r)
}

/// Max-entry distance between `m` and its adjoint.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let adj = m.adjoint();
    (m - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Max-entry distance between `m` and minus its adjoint.
pub fn anti_hermitian_defect(m: &CMat) -> f64 {
    let adj = m.adjoint();
    (m + adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// `‖U*U − Id‖_op`.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let r = u.ncols();
    op_norm(&(u.adjoint() * u - identity(r)))
}

/// Eigendecomposition of a Hermitian matrix, returning real eigenvalues and
/// the unitary eigenvector matrix.
pub fn hermitian_eigen(h: &CMat) -> (DVector<f64>, CMat) {
    let sym = (h + h.adjoint()).scale(0.5);
    let eig = sym.symmetric_eigen();
    (eig.eigenvalues, eig.eigenvectors)
}

/// `f(H)` for Hermitian `H` via its eigendecomposition.
pub fn hermitian_function(h: &CMat, f: impl Fn(f64) -> Complex64) -> CMat {
    if h.nrows() == 1 {
        return CMat::from_element(1, 1, f(h[(0, 0)].re));
    }
    let (vals, vecs) = hermitian_eigen(h);
    let diag = CVec::from_iterator(vals.len(), vals.iter().map(|&l| f(l)));
    &vecs * CMat::from_diagonal(&diag) * vecs.adjoint()
}

/// `exp(A)` for anti-Hermitian `A`, computed as `exp(−iH)` with `H = iA`.
pub fn expm_anti_hermitian(a: &CMat) -> CMat {
    let h = a * I;
    hermitian_function(&h, |l| Complex64::from_polar(1.0, -l))
}

/// `exp(−s H)` for Hermitian `H`.
pub fn expm_hermitian_decay(h: &CMat, s: f64) -> CMat {
    hermitian_function(h, |l| c((-s * l).exp(), 0.0))
}

/// Unitary factor of the polar decomposition `M = U P`.
pub fn polar_unitary(m: &CMat) -> CMat {
    if m.nrows() == 1 {
        let z = m[(0, 0)];
        let n = z.norm();
        return CMat::from_element(1, 1, if n > 0.0 { z / n } else { c(1.0, 0.0) });
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    u * v_t
}

/// General matrix exponential by scaling and squaring of a Taylor
/// polynomial. Used for non-Hermitian diagnostics only.
pub fn expm_general(m: &CMat) -> Result<CMat> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return domain("matrix exponential of non-finite matrix");
    }
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0u32;
    let mut scale = 1.0;
    while norm1 * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    let a = m * c(scale, 0.0);
    let mut term = identity(n);
    let mut sum = identity(n);
    for k in 1..=18 {
        term = &term * &a * c(1.0 / k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// Hermitian inner product `⟨a, b⟩ = Σ a_i conj(b_i)`.
pub fn inner(a: &CVec, b: &CVec) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
}

pub fn vec_norm(a: &CVec) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn pauli_x() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMat {
    CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMat {
    CMat::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anti_hermitian_exponential_is_unitary() {
        let a = (pauli_x() * c(0.3, 0.0) + pauli_z() * c(-1.1, 0.0)) * I;
        let u = expm_anti_hermitian(&a);
        assert!(unitarity_defect(&u) < 1e-13);
        let reference = expm_general(&a).unwrap();
        assert!((u - reference).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn polar_factor_of_scaled_unitary() {
        let u = expm_anti_hermitian(&(pauli_y() * c(0.0, 0.7)));
        let m = &u * c(3.0, 0.0);
        let p = polar_unitary(&m);
        assert!((p - u).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn general_exponential_of_diagonal() {
        let m = CMat::from_diagonal(&CVec::from_vec(vec![c(-1.0, 0.0), c(2.0, 0.0)]));
        let e = expm_general(&m).unwrap();
        assert!((e[(0, 0)].re - (-1.0f64).exp()).abs() < 1e-13);
        assert!((e[(1, 1)].re - 2.0f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = CMat::from_element(2, 2, c(f64::NAN, 0.0));
        assert!(expm_general(&m).is_err());
    }
}
