//! Chernoff product experiments: `(R_{t/k})^k f → e^{tΔ} f`.
//!
//! On the circle, `R_τ f(x) = (1/r) ∫ Tr(h_∇(τ,x,y) P(x,y)*) χ(x,y) f(y) dy`
//! with the twisted kernel of `d + iα dθ` (α = 0 gives the scalar family).
//! On an interval, `S_τ f(x) = ∫ h_D(τ,x,y) χ(x,y) f(y) dy` with the
//! Dirichlet kernel. The cut-off is `χ = κ(d(x,y)² / rad²)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::heat::{dirichlet_kernel_interval, twisted_circle_kernel};
use crate::linalg::{c, CMat, CVec};
use crate::manifold::{short_diff, CUT_RADIUS_FRACTION};
use crate::reference::quadrature::composite_gauss_legendre;

use std::f64::consts::PI;

/// Gauss–Legendre order per panel on intervals.
pub const PANEL_ORDER: usize = 8;
/// A reported error counts as resolved when grid doubling moves it by at
/// most `RESOLUTION_RTOL · error + RESOLUTION_ATOL`.
pub const RESOLUTION_RTOL: f64 = 1e-3;
pub const RESOLUTION_ATOL: f64 = 1e-12;

/// Quintic smoothstep profile: `1` on `[0, 1/3]`, `0` on `[1/2, ∞)`.
pub fn kappa(s: f64) -> f64 {
    const LO: f64 = 1.0 / 3.0;
    const HI: f64 = 0.5;
    if s <= LO {
        1.0
    } else if s >= HI {
        0.0
    } else {
        let u = (s - LO) / (HI - LO);
        1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChernoffDomain {
    /// Unit circle with the connection `d + iα dθ` on the trivial line
    /// bundle; test function `cos θ + ½ sin 2θ`.
    Circle { alpha: f64 },
    /// Dirichlet interval `(a, b)`; test function
    /// `sin(πs) + 0.3 sin(3πs)` with `s = (x − a)/(b − a)`.
    Interval { a: f64, b: f64 },
}

impl ChernoffDomain {
    pub fn family(&self) -> String {
        match *self {
            ChernoffDomain::Circle { alpha } if alpha == 0.0 => "circle_scalar".into(),
            ChernoffDomain::Circle { alpha } => format!("circle_u1:{alpha}"),
            ChernoffDomain::Interval { a, b } => format!("interval_dirichlet:({a},{b})"),
        }
    }

    pub fn test_function_id(&self) -> &'static str {
        match self {
            ChernoffDomain::Circle { .. } => "cos(x)+0.5sin(2x)",
            ChernoffDomain::Interval { .. } => "sin(pi s)+0.3sin(3 pi s)",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ChernoffDomain::Circle { alpha } if alpha.is_finite() => Ok(()),
            ChernoffDomain::Interval { a, b } if a < b && a.is_finite() && b.is_finite() => Ok(()),
            _ => domain(format!("invalid Chernoff domain {self:?}")),
        }
    }

    fn f(&self, x: f64) -> f64 {
        match *self {
            ChernoffDomain::Circle { .. } => x.cos() + 0.5 * (2.0 * x).sin(),
            ChernoffDomain::Interval { a, b } => {
                let s = (x - a) / (b - a);
                (PI * s).sin() + 0.3 * (3.0 * PI * s).sin()
            }
        }
    }

    /// `(e^{tΔ} f)(x)`.
    fn exact(&self, t: f64, x: f64) -> f64 {
        match *self {
            ChernoffDomain::Circle { .. } => (-t).exp() * x.cos() + 0.5 * (-4.0 * t).exp() * (2.0 * x).sin(),
            ChernoffDomain::Interval { a, b } => {
                let l = b - a;
                let s = (x - a) / l;
                let k1 = PI / l;
                (-k1 * k1 * t).exp() * (PI * s).sin() + 0.3 * (-9.0 * k1 * k1 * t).exp() * (3.0 * PI * s).sin()
            }
        }
    }

    /// `Δf`.
    fn laplacean_f(&self, x: f64) -> f64 {
        match *self {
            ChernoffDomain::Circle { .. } => -x.cos() - 2.0 * (2.0 * x).sin(),
            ChernoffDomain::Interval { a, b } => {
                let l = b - a;
                let s = (x - a) / l;
                let k1 = PI / l;
                -k1 * k1 * (PI * s).sin() - 0.3 * 9.0 * k1 * k1 * (3.0 * PI * s).sin()
            }
        }
    }

    /// Quadrature nodes and weights with about `n` nodes.
    fn quadrature(&self, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        match *self {
            ChernoffDomain::Circle { .. } => {
                let h = 2.0 * PI / n as f64;
                Ok(((0..n).map(|j| j as f64 * h).collect(), vec![h; n]))
            }
            ChernoffDomain::Interval { a, b } => composite_gauss_legendre(a, b, n.div_ceil(PANEL_ORDER), PANEL_ORDER),
        }
    }

    /// The quadrature matrix of `R_τ` on the given nodes.
    fn matrix(&self, tau: f64, nodes: &[f64], weights: &[f64]) -> Result<CMat> {
        let n = nodes.len();
        let mut m = CMat::zeros(n, n);
        match *self {
            ChernoffDomain::Circle { alpha } => {
                // Uniform periodic nodes: the matrix is circulant.
                let rad = CUT_RADIUS_FRACTION * PI;
                let row: Vec<Complex64> = (0..n)
                    .map(|j| {
                        let d0 = short_diff(nodes[j] - nodes[0], 2.0 * PI);
                        let chi = kappa(d0 * d0 / (rad * rad));
                        if chi == 0.0 {
                            return c(0.0, 0.0);
                        }
                        let h = twisted_circle_kernel(1.0, alpha, tau, nodes[0], nodes[j]);
                        // P(x, y) carries the fiber over y to x along the
                        // short arc; Tr(h P*) for rank one.
                        let p = Complex64::from_polar(1.0, alpha * d0);
                        h * p.conj() * (chi * weights[j])
                    })
                    .collect();
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = row[(j + n - i) % n];
                    }
                }
            }
            ChernoffDomain::Interval { a, b } => {
                let rad = CUT_RADIUS_FRACTION * 0.5 * (b - a);
                for i in 0..n {
                    for j in 0..n {
                        let d = nodes[j] - nodes[i];
                        let chi = kappa(d * d / (rad * rad));
                        if chi == 0.0 {
                            continue;
                        }
                        let h = dirichlet_kernel_interval(tau, nodes[i], nodes[j], a, b)?;
                        m[(i, j)] = c(h * chi * weights[j], 0.0);
                    }
                }
            }
        }
        Ok(m)
    }
}

/// `‖R‖_{∞→∞}`, the largest absolute row sum.
pub fn sup_norm_operator(m: &CMat) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

struct Run {
    errors: Vec<f64>,
    contraction: f64,
}

fn run(domain_: &ChernoffDomain, t: f64, ks: &[usize], n: usize) -> Result<Run> {
    domain_.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("time must be positive, got {t}"));
    }
    if ks.contains(&0) {
        return domain("Chernoff products need k ≥ 1");
    }
    let (nodes, weights) = domain_.quadrature(n)?;
    let f = CVec::from_iterator(nodes.len(), nodes.iter().map(|&x| c(domain_.f(x), 0.0)));
    let mut errors = Vec::with_capacity(ks.len());
    let mut contraction: f64 = 0.0;
    for &k in ks {
        let m = domain_.matrix(t / k as f64, &nodes, &weights)?;
        contraction = contraction.max(sup_norm_operator(&m));
        let mut u = f.clone();
        for _ in 0..k {
            u = &m * u;
        }
        let err = nodes
            .iter()
            .zip(u.iter())
            .map(|(&x, z)| (z - c(domain_.exact(t, x), 0.0)).norm())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    Ok(Run { errors, contraction })
}

/// `sup_x |(R_{t/k})^k f − e^{tΔ} f|` on a quadrature grid of about `n`
/// nodes.
pub fn chernoff_product_error(domain_: &ChernoffDomain, t: f64, k: usize, n: usize) -> Result<f64> {
    Ok(run(domain_, t, &[k], n)?.errors[0])
}

/// `sup_x |(R_t f − f)/t − Δf|`, the first-order consistency defect.
pub fn generator_defect(domain_: &ChernoffDomain, t: f64, n: usize) -> Result<f64> {
    domain_.validate()?;
    let (nodes, weights) = domain_.quadrature(n)?;
    let m = domain_.matrix(t, &nodes, &weights)?;
    let f = CVec::from_iterator(nodes.len(), nodes.iter().map(|&x| c(domain_.f(x), 0.0)));
    let u = &m * &f;
    Ok(nodes
        .iter()
        .zip(u.iter().zip(f.iter()))
        .map(|(&x, (a, b))| ((a - b) / t - c(domain_.laplacean_f(x), 0.0)).norm())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffRow {
    pub k: usize,
    pub sup_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernoffReport {
    pub family: String,
    pub test_function: String,
    pub t: f64,
    pub grid_points: usize,
    pub rows: Vec<ChernoffRow>,
    /// Largest `‖R_{t/k}‖_{∞→∞}` over the tested `k`.
    pub contraction: f64,
    /// Set when doubling the grid moves some error by more than the
    /// resolution tolerance.
    pub warning: Option<String>,
}

impl ChernoffReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].sup_error < w[0].sup_error)
    }

    pub fn error_at(&self, k: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.k == k).map(|r| r.sup_error)
    }
}

/// Errors for each `k`, checked against a grid with twice as many nodes.
pub fn chernoff_report(domain_: &ChernoffDomain, t: f64, ks: &[usize], n: usize) -> Result<ChernoffReport> {
    let coarse = run(domain_, t, ks, n)?;
    let fine = run(domain_, t, ks, 2 * n)?;
    let unresolved = coarse
        .errors
        .iter()
        .zip(&fine.errors)
        .zip(ks)
        .find(|((a, b), _)| (*a - *b).abs() > RESOLUTION_RTOL * b.abs() + RESOLUTION_ATOL);
    let warning = unresolved.map(|((a, b), k)| {
        format!("k = {k}: grid doubling from {n} nodes moved the error from {a:.3e} to {b:.3e}; quadrature may be under-resolved")
    });
    Ok(ChernoffReport {
        family: domain_.family(),
        test_function: domain_.test_function_id().into(),
        t,
        grid_points: n,
        rows: ks.iter().zip(&coarse.errors).map(|(&k, &e)| ChernoffRow { k, sup_error: e }).collect(),
        contraction: coarse.contraction.max(fine.contraction),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const KS: [usize; 5] = [4, 8, 16, 32, 64];

    #[test]
    fn kappa_plateaus_and_continuity() {
        assert_eq!(kappa(0.0), 1.0);
        assert_eq!(kappa(1.0 / 3.0), 1.0);
        assert_eq!(kappa(0.5), 0.0);
        assert_eq!(kappa(2.0), 0.0);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let s = 1.0 / 3.0 + i as f64 / 6000.0;
            let k = kappa(s);
            assert!(k <= prev + 1e-15 && (prev - k) < 2e-3);
            prev = k;
        }
    }

    #[test]
    fn circle_scalar_and_twisted_products_converge() {
        for alpha in [0.0, 0.3] {
            let report = chernoff_report(&ChernoffDomain::Circle { alpha }, 1.0, &KS, 256).unwrap();
            assert!(report.strictly_decreasing(), "{report:?}");
            assert!(report.error_at(64).unwrap() <= report.error_at(8).unwrap() / 4.0);
            assert!(report.contraction <= 1.0 + 1e-12, "{}", report.contraction);
            assert!(report.warning.is_none(), "{report:?}");
        }
    }

    #[test]
    fn interval_product_improves_with_k() {
        let d = ChernoffDomain::Interval { a: -1.0, b: 1.0 };
        let e8 = chernoff_product_error(&d, 0.25, 8, 128).unwrap();
        let e64 = chernoff_product_error(&d, 0.25, 64, 128).unwrap();
        assert!(e64 < e8, "{e8} {e64}");
        let (nodes, weights) = d.quadrature(128).unwrap();
        assert!(sup_norm_operator(&d.matrix(0.01, &nodes, &weights).unwrap()) <= 1.0 + 1e-12);
    }

    #[test]
    fn first_order_consistency() {
        let d = ChernoffDomain::Circle { alpha: 0.0 };
        let defects: Vec<f64> = [0.04, 0.02, 0.01].iter().map(|&t| generator_defect(&d, t, 256).unwrap()).collect();
        assert!(defects[0] > defects[1] && defects[1] > defects[2], "{defects:?}");
        assert!(defects[0] < 1.0, "{defects:?}");
    }

    #[test]
    fn rejects_bad_input() {
        let d = ChernoffDomain::Circle { alpha: 0.0 };
        assert!(chernoff_product_error(&d, 1.0, 0, 32).is_err());
        assert!(chernoff_product_error(&d, -1.0, 2, 32).is_err());
        assert!(chernoff_product_error(&ChernoffDomain::Interval { a: 1.0, b: 0.0 }, 1.0, 2, 32).is_err());
    }
}
