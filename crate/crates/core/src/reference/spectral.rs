//! Fourier oracles for `H = (−i d/dθ + α)² + V` on the unit circle.
//!
//! `H` is the operator `∇*∇ + V` of the connection `d + iα dθ` written in
//! the global frame; `e^{inθ}` has eigenvalue `(n + α)²` when `V = 0`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Result};
use crate::linalg::{c, hermitian_eigen, hermitian_function, CMat, CVec};
use crate::reference::matexp::{GridOperator, GridSpec};

use std::f64::consts::PI;

/// Converged when doubling the mode count changes no value by more than
/// this (relative to the largest value, or absolutely below 1).
pub const SPECTRAL_TOL: f64 = 1e-12;
/// Modes `|n| ≤ MAX_MODES` at most.
pub const MAX_MODES: usize = 512;

fn fft(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Fourier coefficients `f̂_n = (1/N) Σ_j f(θ_j) e^{−inθ_j}` on `N` nodes,
/// indexed by `n mod N`.
fn coefficients(samples: Vec<Complex64>) -> Vec<Complex64> {
    let n = samples.len();
    let mut buf = samples;
    fft(n, false).process(&mut buf);
    buf.iter().map(|z| z / n as f64).collect()
}

fn coef(hat: &[Complex64], n: i64) -> Complex64 {
    hat[n.rem_euclid(hat.len() as i64) as usize]
}

/// Galerkin matrix of `H` on the modes `−m..=m`.
fn galerkin(alpha: f64, v_hat: Option<&[Complex64]>, m: i64) -> CMat {
    let size = (2 * m + 1) as usize;
    CMat::from_fn(size, size, |i, j| {
        let (n, k) = (i as i64 - m, j as i64 - m);
        let kinetic = if n == k { c((n as f64 + alpha).powi(2), 0.0) } else { c(0.0, 0.0) };
        kinetic + v_hat.map_or(c(0.0, 0.0), |vh| coef(vh, n - k))
    })
}

/// Lowest `count` eigenvalues of `H` truncated to modes `|n| ≤ modes`.
pub fn circle_spectrum(alpha: f64, v: Option<&dyn Fn(f64) -> f64>, modes: usize, count: usize) -> Vec<f64> {
    let m = modes as i64;
    let nodes = 4 * modes.max(1);
    let v_hat = v.map(|f| coefficients((0..nodes).map(|j| c(f(2.0 * PI * j as f64 / nodes as f64), 0.0)).collect()));
    let (vals, _) = hermitian_eigen(&galerkin(alpha, v_hat.as_deref(), m));
    let mut vals: Vec<f64> = vals.iter().cloned().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    vals.truncate(count);
    vals
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSolution {
    pub points: Vec<f64>,
    pub values: Vec<Complex64>,
    /// Modes `|n| ≤ modes` were kept.
    pub modes: usize,
    /// Largest change against the solution with half as many modes.
    pub self_check: f64,
}

fn solve_with_modes(
    alpha: f64,
    v: Option<&dyn Fn(f64) -> f64>,
    t: f64,
    eta: &dyn Fn(f64) -> Complex64,
    points: &[f64],
    modes: usize,
) -> Vec<Complex64> {
    let m = modes as i64;
    let nodes = 4 * modes;
    let theta = |j: usize| 2.0 * PI * j as f64 / nodes as f64;
    let eta_hat = coefficients((0..nodes).map(|j| eta(theta(j))).collect());
    let u0 = CVec::from_iterator((2 * m + 1) as usize, (-m..=m).map(|n| coef(&eta_hat, n)));
    let u = match v {
        None => CVec::from_iterator(u0.len(), (-m..=m).zip(u0.iter()).map(|(n, z)| z * (-(n as f64 + alpha).powi(2) * t).exp())),
        Some(f) => {
            let v_hat = coefficients((0..nodes).map(|j| c(f(theta(j)), 0.0)).collect());
            let h = galerkin(alpha, Some(&v_hat), m);
            hermitian_function(&h, |l| c((-t * l).exp(), 0.0)) * u0
        }
    };
    points
        .iter()
        .map(|&th| (-m..=m).zip(u.iter()).map(|(n, z)| z * Complex64::from_polar(1.0, n as f64 * th)).sum())
        .collect()
}

/// `(e^{−tH} η)` at `points`, doubling the number of Fourier modes until two
/// successive answers agree to [`SPECTRAL_TOL`].
pub fn spectral_semigroup_circle(
    alpha: f64,
    v: Option<&dyn Fn(f64) -> f64>,
    t: f64,
    eta: &dyn Fn(f64) -> Complex64,
    points: &[f64],
) -> Result<SpectralSolution> {
    if !(t > 0.0 && t.is_finite()) || !alpha.is_finite() {
        return domain(format!("invalid spectral parameters t = {t}, alpha = {alpha}"));
    }
    let mut modes = 8;
    let mut prev = solve_with_modes(alpha, v, t, eta, points, modes);
    while modes < MAX_MODES {
        modes *= 2;
        let next = solve_with_modes(alpha, v, t, eta, points, modes);
        if next.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("spectral solution is not finite");
        }
        let scale = next.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let diff = next.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if diff <= SPECTRAL_TOL * scale {
            return Ok(SpectralSolution { points: points.to_vec(), values: next, modes, self_check: diff });
        }
        prev = next;
    }
    domain(format!("spectral solution did not converge with {MAX_MODES} modes"))
}

/// Fourier pseudospectral collocation of `H` on `n` equispaced nodes
/// (`n` even), with wavenumbers `−n/2..n/2`.
pub fn pseudospectral_operator(n: usize, alpha: f64, v: &dyn Fn(f64) -> f64) -> Result<GridOperator> {
    if n < 2 || n % 2 == 1 {
        return domain("pseudospectral grids need an even number of nodes");
    }
    let grid = GridSpec::Periodic { n, length: 2.0 * PI };
    let (fwd, inv) = (fft(n, false), fft(n, true));
    let symbol: Vec<f64> = (0..n)
        .map(|k| {
            let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            (kk + alpha).powi(2)
        })
        .collect();
    let mut m = CMat::zeros(n, n);
    for j in 0..n {
        let mut col = vec![c(0.0, 0.0); n];
        col[j] = c(1.0, 0.0);
        fwd.process(&mut col);
        for (z, s) in col.iter_mut().zip(&symbol) {
            *z *= s / n as f64;
        }
        inv.process(&mut col);
        for i in 0..n {
            m[(i, j)] = col[i];
        }
    }
    for (j, x) in grid.nodes().into_iter().enumerate() {
        m[(j, j)] += c(v(x), 0.0);
    }
    // Round-off from the transforms breaks exact Hermiticity.
    let m = (&m + m.adjoint()).scale(0.5);
    GridOperator::new(grid, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::matexp::matexp_semigroup;

    fn one(_: f64) -> Complex64 {
        c(1.0, 0.0)
    }

    #[test]
    fn free_mode_decays_exactly() {
        let pts = [0.0, 1.0, 4.0];
        let sol = spectral_semigroup_circle(0.0, None, 0.6, &|th| Complex64::from_polar(1.0, th), &pts).unwrap();
        for (th, z) in pts.iter().zip(&sol.values) {
            assert!((z - Complex64::from_polar((-0.6f64).exp(), *th)).norm() < 1e-14);
        }
    }

    #[test]
    fn twisted_ground_state_rate() {
        let vals = circle_spectrum(0.3, None, 16, 3);
        assert!((vals[0] - 0.09).abs() < 1e-14);
        assert!((vals[1] - 0.49).abs() < 1e-14);
    }

    #[test]
    fn cos_potential_is_self_convergent() {
        let v = |th: f64| th.cos();
        let sol = spectral_semigroup_circle(0.0, Some(&v), 0.5, &one, &[0.0, PI]).unwrap();
        assert!(sol.self_check < 1e-8);
        // Symmetric potential with zero mean: value at θ=0 below 1, at π above.
        assert!(sol.values[0].re < 1.0 && sol.values[1].re > 1.0);
        assert!(sol.values[0].im.abs() < 1e-14);
    }

    #[test]
    fn pseudospectral_grid_agrees_with_galerkin() {
        let v = |th: f64| th.cos();
        let n = 64;
        let op = pseudospectral_operator(n, 0.3, &v).unwrap();
        assert!(op.hermitian);
        let nodes = op.grid.nodes();
        let eta = |th: f64| c(th.sin() + 0.5, 0.2 * (2.0 * th).cos());
        let eta_grid = CVec::from_iterator(n, nodes.iter().map(|&th| eta(th)));
        let grid_sol = matexp_semigroup(&op, 0.5, &eta_grid).unwrap();
        let sol = spectral_semigroup_circle(0.3, Some(&v), 0.5, &eta, &nodes).unwrap();
        let diff = grid_sol.iter().zip(&sol.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(spectral_semigroup_circle(0.0, None, -1.0, &one, &[0.0]).is_err());
        assert!(pseudospectral_operator(7, 0.0, &|_| 0.0).is_err());
    }
}
