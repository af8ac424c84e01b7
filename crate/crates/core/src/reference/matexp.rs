//! Dense grid operators and their semigroups.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{c, expm_general, hermitian_defect, hermitian_function, op_norm, CMat, CVec};

/// Operators closer than this to their adjoint are treated as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `n` equispaced nodes `j·length/n` on a circle of circumference `length`.
    Periodic { n: usize, length: f64 },
    /// `n` interior nodes of `(a, b)` with spacing `(b − a)/(n + 1)`.
    Dirichlet { n: usize, a: f64, b: f64 },
}

impl GridSpec {
    pub fn len(&self) -> usize {
        match *self {
            GridSpec::Periodic { n, .. } | GridSpec::Dirichlet { n, .. } => n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> f64 {
        match *self {
            GridSpec::Periodic { n, length } => length / n as f64,
            GridSpec::Dirichlet { n, a, b } => (b - a) / (n + 1) as f64,
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.spacing();
        match *self {
            GridSpec::Periodic { n, .. } => (0..n).map(|j| j as f64 * h).collect(),
            GridSpec::Dirichlet { n, a, .. } => (1..=n).map(|j| a + j as f64 * h).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOperator {
    pub grid: GridSpec,
    pub matrix: CMat,
    pub hermitian: bool,
}

impl GridOperator {
    pub fn new(grid: GridSpec, matrix: CMat) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return domain("operator matrix does not match the grid");
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("operator matrix has non-finite entries");
        }
        let hermitian = hermitian_defect(&matrix) <= HERMITIAN_TOL;
        Ok(GridOperator { grid, matrix, hermitian })
    }

    /// Second-order difference discretisation of `−(d/dθ + iα)² + V` on a
    /// periodic grid, with the connection entering as link phases.
    pub fn magnetic_laplacean_fd(n: usize, length: f64, alpha: f64, v: &dyn Fn(f64) -> f64) -> Result<Self> {
        if n < 3 {
            return domain("periodic difference operators need at least three nodes");
        }
        let grid = GridSpec::Periodic { n, length };
        let h = grid.spacing();
        let link = num_complex::Complex64::from_polar(1.0, alpha * h);
        let mut m = CMat::zeros(n, n);
        for (j, x) in grid.nodes().into_iter().enumerate() {
            m[(j, j)] = c(2.0 / (h * h) + v(x), 0.0);
            m[(j, (j + 1) % n)] -= link / (h * h);
            m[(j, (j + n - 1) % n)] -= link.conj() / (h * h);
        }
        Self::new(grid, m)
    }

    /// Second-order difference Dirichlet Laplacean `−d²/dx² + V` on `(a, b)`.
    pub fn dirichlet_laplacean_fd(n: usize, a: f64, b: f64, v: &dyn Fn(f64) -> f64) -> Result<Self> {
        if n == 0 || !(a < b) {
            return domain("invalid Dirichlet grid");
        }
        let grid = GridSpec::Dirichlet { n, a, b };
        let h = grid.spacing();
        let mut m = CMat::zeros(n, n);
        for (j, x) in grid.nodes().into_iter().enumerate() {
            m[(j, j)] = c(2.0 / (h * h) + v(x), 0.0);
            if j + 1 < n {
                m[(j, j + 1)] = c(-1.0 / (h * h), 0.0);
                m[(j + 1, j)] = c(-1.0 / (h * h), 0.0);
            }
        }
        Self::new(grid, m)
    }
}

/// `e^{−t·op} η`. Hermitian operators go through their eigendecomposition,
/// anything else through scaling and squaring.
pub fn matexp_semigroup(op: &GridOperator, t: f64, eta: &CVec) -> Result<CVec> {
    if !t.is_finite() {
        return domain("non-finite time");
    }
    if eta.len() != op.grid.len() {
        return domain("grid function does not match the operator");
    }
    if eta.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return domain("grid function has non-finite entries");
    }
    let e = semigroup_matrix(&op.matrix, op.hermitian, t)?;
    Ok(e * eta)
}

fn semigroup_matrix(m: &CMat, hermitian: bool, t: f64) -> Result<CMat> {
    if hermitian {
        Ok(hermitian_function(m, |l| c((-t * l).exp(), 0.0)))
    } else {
        expm_general(&(m * c(-t, 0.0)))
    }
}

/// `‖e^{−t(A+B)} − (e^{−tA/k} e^{−tB/k})^k‖_op`.
pub fn trotter_error(a: &CMat, b: &CMat, t: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return domain("Trotter products need k ≥ 1");
    }
    let ha = hermitian_defect(a) <= HERMITIAN_TOL;
    let hb = hermitian_defect(b) <= HERMITIAN_TOL;
    let hs = hermitian_defect(&(a + b)) <= HERMITIAN_TOL;
    let exact = semigroup_matrix(&(a + b), hs, t)?;
    let step = semigroup_matrix(a, ha, t / k as f64)? * semigroup_matrix(b, hb, t / k as f64)?;
    let mut prod = CMat::identity(a.nrows(), a.ncols());
    for _ in 0..k {
        prod = &step * prod;
    }
    Ok(op_norm(&(exact - prod)))
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return domain("a slope fit needs at least two matching points");
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return domain("log-log fits need positive data");
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{pauli_x, pauli_z};
    use std::f64::consts::PI;

    #[test]
    fn zero_and_diagonal_operators() {
        let grid = GridSpec::Periodic { n: 4, length: 1.0 };
        let eta = CVec::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0), c(0.5, 0.0)]);
        let zero = GridOperator::new(grid, CMat::zeros(4, 4)).unwrap();
        assert_eq!(matexp_semigroup(&zero, 3.0, &eta).unwrap(), eta);
        let d = [0.0, 1.0, 2.5, -0.5];
        let diag = CMat::from_diagonal(&CVec::from_iterator(4, d.iter().map(|&x| c(x, 0.0))));
        let op = GridOperator::new(grid, diag).unwrap();
        let out = matexp_semigroup(&op, 0.7, &eta).unwrap();
        for i in 0..4 {
            assert!((out[i] - eta[i] * (-0.7 * d[i]).exp()).norm() < 1e-14);
        }
        let mut bad = CMat::zeros(4, 4);
        bad[(0, 0)] = c(f64::NAN, 0.0);
        assert!(GridOperator::new(grid, bad).is_err());
    }

    #[test]
    fn non_hermitian_fallback_matches_eigen_route() {
        let grid = GridSpec::Periodic { n: 2, length: 1.0 };
        let mut m = pauli_z() + pauli_x() * c(0.5, 0.0);
        let op = GridOperator::new(grid, m.clone()).unwrap();
        assert!(op.hermitian);
        let eta = CVec::from_vec(vec![c(1.0, 0.0), c(0.3, -0.2)]);
        let a = matexp_semigroup(&op, 1.3, &eta).unwrap();
        m[(0, 1)] += c(1e-9, 0.0);
        let b = matexp_semigroup(&GridOperator::new(grid, m).unwrap(), 1.3, &eta).unwrap();
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn magnetic_difference_operator_spectrum() {
        let op = GridOperator::magnetic_laplacean_fd(256, 2.0 * PI, 0.3, &|_| 0.0).unwrap();
        assert!(op.hermitian);
        let (vals, _) = crate::linalg::hermitian_eigen(&op.matrix);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - 0.09).abs() < 1e-4);
    }

    #[test]
    fn dirichlet_difference_operator_lowest_mode() {
        let op = GridOperator::dirichlet_laplacean_fd(200, 0.0, 1.0, &|_| 0.0).unwrap();
        let (vals, _) = crate::linalg::hermitian_eigen(&op.matrix);
        let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!((min - PI * PI).abs() < 1e-3);
    }

    #[test]
    fn trotter_rates() {
        let a = pauli_z() * c(1.0, 0.0);
        let b = pauli_x() * c(0.7, 0.0);
        let ks = [4usize, 8, 16, 32, 64, 128];
        let errs: Vec<f64> = ks.iter().map(|&k| trotter_error(&a, &b, 1.0, k).unwrap()).collect();
        let xs: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
        let slope = loglog_slope(&xs, &errs).unwrap();
        assert!((slope + 1.0).abs() < 0.2, "slope {slope}");
        // Commuting pieces split without error.
        let d = pauli_z() * c(0.4, 0.0);
        assert!(trotter_error(&a, &d, 1.0, 4).unwrap() < 1e-14);
    }
}
