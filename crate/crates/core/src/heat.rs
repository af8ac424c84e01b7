//! Scalar heat kernels of the full (not halved) Laplacean, Dirichlet kernels
//! on intervals, and one-step Wiener samplers.
//!
//! Every kernel is the density of `e^{tΔ}` with respect to Riemannian volume,
//! so flat increments over time `dt` have variance `2·dt` per coordinate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::bundle::sphere_frame;
use crate::error::{domain, Error, Result};
use crate::manifold::{
    cross3, distance_unchecked, exp_map, log_map, short_diff, unit, ManifoldSpec, Point,
};

/// Image sums stop once the next term is below this fraction of the
/// partial sum.
pub const WRAP_REL_TOL: f64 = 1e-16;
/// Bound on the neglected tail of the spherical-harmonic series.
pub const SPHERE_TAIL_TOL: f64 = 1e-14;
/// Below `SPHERE_SERIES_MIN_T · R²` the sphere kernel uses the Gaussian
/// parametrix instead of the series.
pub const SPHERE_SERIES_MIN_T: f64 = 1e-3;
/// Dirichlet image sums stop once a term is below this fraction of the
/// partial sum of its series.
pub const DIRICHLET_REL_TOL: f64 = 1e-18;
/// Largest geodesic-random-walk step on the sphere, in units of `R²`.
pub const SPHERE_STEP_GUARD: f64 = 1e-2;

/// One-dimensional free kernel `(4πt)^{−1/2} e^{−u²/4t}`.
pub fn gaussian(t: f64, u: f64) -> f64 {
    (-u * u / (4.0 * t)).exp() / (4.0 * PI * t).sqrt()
}

/// `Σ_w g(t, delta + w·period)`.
pub fn wrapped_gaussian(t: f64, delta: f64, period: f64) -> f64 {
    let delta = short_diff(delta, period);
    let mut sum = gaussian(t, delta);
    let mut w = 1.0;
    loop {
        let term = gaussian(t, delta + w * period) + gaussian(t, delta - w * period);
        sum += term;
        if term < WRAP_REL_TOL * sum {
            break;
        }
        w += 1.0;
    }
    sum
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        domain(format!("time must be positive and finite, got {t}"))
    }
}

/// Heat kernel `h(t, x, y)` of the scalar Laplacean.
pub fn heat_kernel(t: f64, x: &Point, y: &Point) -> Result<f64> {
    check_time(t)?;
    if x.manifold() != y.manifold() {
        return domain("heat kernel between points on different manifolds");
    }
    Ok(match *x.manifold() {
        ManifoldSpec::Euclidean { dim } => {
            let d = distance_unchecked(x, y);
            (-d * d / (4.0 * t)).exp() / (4.0 * PI * t).powf(dim as f64 / 2.0)
        }
        ManifoldSpec::Circle { radius } => {
            let d = radius * (y.coords()[0] - x.coords()[0]);
            wrapped_gaussian(t, d, 2.0 * PI * radius)
        }
        ManifoldSpec::FlatTorus { l1, l2 } => {
            wrapped_gaussian(t, y.coords()[0] - x.coords()[0], l1)
                * wrapped_gaussian(t, y.coords()[1] - x.coords()[1], l2)
        }
        ManifoldSpec::Sphere2 { radius } => {
            let gamma = distance_unchecked(x, y) / radius;
            sphere_kernel(t, gamma, radius)
        }
    })
}

/// Sphere kernel as a function of the angular separation `gamma`.
pub fn sphere_kernel(t: f64, gamma: f64, radius: f64) -> f64 {
    let tau = t / (radius * radius);
    if tau < SPHERE_SERIES_MIN_T {
        return sphere_parametrix(t, gamma, radius);
    }
    let z = gamma.cos();
    let norm = 1.0 / (4.0 * PI * radius * radius);
    let (mut p_prev, mut p) = (1.0, z);
    let mut sum = norm;
    let mut l = 1.0f64;
    loop {
        let bound = norm * (2.0 * l + 1.0) * (-l * (l + 1.0) * tau).exp();
        sum += bound * p;
        let next = norm * (2.0 * l + 3.0) * (-(l + 1.0) * (l + 2.0) * tau).exp();
        let q = next / bound;
        if q < 1.0 && next / (1.0 - q) < SPHERE_TAIL_TOL {
            break;
        }
        let p_next = ((2.0 * l + 1.0) * z * p - l * p_prev) / (l + 1.0);
        p_prev = p;
        p = p_next;
        l += 1.0;
    }
    sum.max(0.0)
}

/// Leading small-time parametrix on the sphere: flat Gaussian in geodesic
/// distance, van Vleck factor `(γ / sin γ)^{1/2}` and the first heat
/// invariant `1 + t K/3`. Intended for `t < 1e−3·R²` and `γ` away from π.
pub fn sphere_parametrix(t: f64, gamma: f64, radius: f64) -> f64 {
    let d = gamma * radius;
    let vv = if gamma < 1e-8 { 1.0 } else { (gamma / gamma.sin()).sqrt() };
    (-d * d / (4.0 * t)).exp() / (4.0 * PI * t) * vv * (1.0 + t / (3.0 * radius * radius))
}

/// Heat kernel of `∇ = d + iα dθ` on the circle of radius `radius`, in the
/// global frame: `(1/2πR) Σ_n e^{−(n+α)² t/R²} e^{in(θ−θ')}`.
///
/// Small times use the equivalent image sum
/// `Σ_w g(t, R·D_w) e^{iα D_w}` with `D_w = θ' − θ + 2πw`.
pub fn twisted_circle_kernel(radius: f64, alpha: f64, t: f64, theta: f64, theta2: f64) -> Complex64 {
    let tau = t / (radius * radius);
    if tau < 0.5 {
        let base = short_diff(theta2 - theta, 2.0 * PI);
        let term = |w: f64| {
            let d = base + 2.0 * PI * w;
            Complex64::from_polar(gaussian(t, radius * d), alpha * d)
        };
        let mut sum = term(0.0);
        let mut w = 1.0;
        loop {
            let pair = term(w) + term(-w);
            sum += pair;
            if gaussian(t, radius * (2.0 * PI * w - PI)) <= WRAP_REL_TOL * gaussian(t, 0.0) {
                break;
            }
            w += 1.0;
        }
        sum
    } else {
        let mut sum = Complex64::new(0.0, 0.0);
        let n0 = (-alpha).round();
        let mut k = 0.0;
        loop {
            let mut add = Complex64::new(0.0, 0.0);
            for n in if k == 0.0 { vec![n0] } else { vec![n0 + k, n0 - k] } {
                let decay = (-(n + alpha) * (n + alpha) * tau).exp();
                add += Complex64::from_polar(decay, n * (theta - theta2));
            }
            sum += add;
            let next = (-(k + 0.5) * (k + 0.5) * tau).exp();
            if k > 0.0 && next < 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum / (2.0 * PI * radius)
    }
}

fn check_interval(x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    if !(a < b) || !(a < x && x < b) || !(a < y && y < b) {
        return domain(format!("points ({x}, {y}) must lie inside ({a}, {b})"));
    }
    Ok(b - a)
}

fn image_sum(t: f64, centre: f64, step: f64, skip_zero: bool) -> f64 {
    // Terms g(t, centre + n·step), summed outward from the largest.
    let mut terms = Vec::new();
    let n_star = (-centre / step).round();
    if !(skip_zero && n_star == 0.0) {
        terms.push(gaussian(t, centre + n_star * step));
    }
    let mut k = 1.0;
    loop {
        let mut added = 0.0;
        for n in [n_star + k, n_star - k] {
            if skip_zero && n == 0.0 {
                continue;
            }
            let g = gaussian(t, centre + n * step);
            terms.push(g);
            added += g;
        }
        let partial: f64 = terms.iter().sum();
        if added <= DIRICHLET_REL_TOL * partial || (partial == 0.0 && k > 3.0) {
            break;
        }
        k += 1.0;
    }
    terms.sort_by(|p, q| p.partial_cmp(q).expect("finite"));
    terms.iter().sum()
}

/// `h(t,x,y) − h_D(t,x,y)`: how far the Dirichlet kernel of `(a, b)` falls
/// below the free kernel. Computed from the image terms directly so it keeps
/// full relative precision even when it is far below `h · ε`.
pub fn dirichlet_deficit(t: f64, x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    check_time(t)?;
    let len = check_interval(x, y, a, b)?;
    let reflected = image_sum(t, x + y - 2.0 * a, 2.0 * len, false);
    let periodic = image_sum(t, x - y, 2.0 * len, true);
    Ok(reflected - periodic)
}

/// Dirichlet heat kernel of `(a, b)` by the method of images.
pub fn dirichlet_kernel_interval(t: f64, x: f64, y: f64, a: f64, b: f64) -> Result<f64> {
    let deficit = dirichlet_deficit(t, x, y, a, b)?;
    Ok((gaussian(t, x - y) - deficit).max(0.0))
}

/// Number of geodesic-random-walk sub-steps used for a sphere increment of
/// duration `dt`.
pub fn sphere_substeps(dt: f64, radius: f64) -> usize {
    ((dt / (SPHERE_STEP_GUARD * radius * radius)).ceil() as usize).max(1)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn tangent_gaussian<R: Rng + ?Sized>(rng: &mut R, at: &Point, radius: f64, sd: f64) -> Point {
    let e1 = sphere_frame(at, radius);
    let n = unit(at.coords(), radius);
    let e2 = cross3(&n, &e1);
    let (z1, z2) = (normal(rng) * sd, normal(rng) * sd);
    let comps = [z1 * e1[0] + z2 * e2[0], z1 * e1[1] + z2 * e2[1], z1 * e1[2] + z2 * e2[2]];
    let v = at.manifold().tangent(at, &comps).expect("tangent at a valid sphere point");
    exp_map(&v)
}

/// Samples one Wiener increment of duration `dt` from `x`.
///
/// Exact on the flat models. On the sphere this is a geodesic random walk
/// (tangent Gaussian + exponential map, weak order one) subdivided so no
/// sub-step exceeds `SPHERE_STEP_GUARD · R²`; its bias is `O(dt)` per step.
pub fn sample_transition<R: Rng + ?Sized>(rng: &mut R, x: &Point, dt: f64) -> Result<Point> {
    check_time(dt)?;
    let m = *x.manifold();
    let sd = (2.0 * dt).sqrt();
    match m {
        ManifoldSpec::Euclidean { .. } => {
            let c: Vec<f64> = x.coords().iter().map(|c| c + sd * normal(rng)).collect();
            m.point(&c)
        }
        ManifoldSpec::Circle { radius } => m.point(&[x.coords()[0] + sd / radius * normal(rng)]),
        ManifoldSpec::FlatTorus { .. } => {
            let c = [x.coords()[0] + sd * normal(rng), x.coords()[1] + sd * normal(rng)];
            m.point(&c)
        }
        ManifoldSpec::Sphere2 { radius } => {
            let n = sphere_substeps(dt, radius);
            let sub_sd = (2.0 * dt / n as f64).sqrt();
            let mut p = x.clone();
            for _ in 0..n {
                p = tangent_gaussian(rng, &p, radius, sub_sd);
            }
            Ok(p)
        }
    }
}

/// Samples the winding-resolved displacement `D = delta + w·period` of a
/// periodic coordinate whose increment over `dt` is Gaussian with variance
/// `2·dt·scale⁻²`.
fn sample_winding<R: Rng + ?Sized>(rng: &mut R, delta: f64, period: f64, dt: f64, scale: f64) -> f64 {
    let delta = short_diff(delta, period);
    let energy = |d: f64| scale * scale * d * d / (4.0 * dt);
    let e0 = energy(delta);
    let mut candidates = vec![(delta, 1.0)];
    let mut w = 1.0;
    loop {
        let mut any = false;
        for d in [delta + w * period, delta - w * period] {
            let rel = energy(d) - e0;
            if rel < 45.0 {
                candidates.push((d, (-rel).exp()));
                any = true;
            }
        }
        if !any {
            break;
        }
        w += 1.0;
    }
    if candidates.len() == 1 {
        return delta;
    }
    let total: f64 = candidates.iter().map(|c| c.1).sum();
    let mut u = rng.random::<f64>() * total;
    for &(d, wt) in &candidates {
        if u < wt {
            return d;
        }
        u -= wt;
    }
    candidates.last().expect("non-empty").0
}

/// Samples the time-midpoint of the Brownian bridge from `x` to `y` over
/// duration `dt_total`: density proportional to
/// `h(dt/2, x, m) · h(dt/2, m, y)`.
///
/// Exact on the flat models. On the sphere this is a tangent-plane Gaussian
/// bridge around the geodesic midpoint; it requires
/// `dt_total ≤ SPHERE_STEP_GUARD · R²` and a unique geodesic from `x` to `y`.
pub fn sample_bridge_midpoint<R: Rng + ?Sized>(
    rng: &mut R,
    x: &Point,
    y: &Point,
    dt_total: f64,
) -> Result<Point> {
    check_time(dt_total)?;
    if x.manifold() != y.manifold() {
        return domain("bridge endpoints on different manifolds");
    }
    let m = *x.manifold();
    let sd = (0.5 * dt_total).sqrt();
    match m {
        ManifoldSpec::Euclidean { .. } => {
            let c: Vec<f64> = x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| 0.5 * (a + b) + sd * normal(rng))
                .collect();
            m.point(&c)
        }
        ManifoldSpec::Circle { radius } => {
            let d = sample_winding(rng, y.coords()[0] - x.coords()[0], 2.0 * PI, dt_total, radius);
            m.point(&[x.coords()[0] + 0.5 * d + sd / radius * normal(rng)])
        }
        ManifoldSpec::FlatTorus { l1, l2 } => {
            let d1 = sample_winding(rng, y.coords()[0] - x.coords()[0], l1, dt_total, 1.0);
            let d2 = sample_winding(rng, y.coords()[1] - x.coords()[1], l2, dt_total, 1.0);
            m.point(&[
                x.coords()[0] + 0.5 * d1 + sd * normal(rng),
                x.coords()[1] + 0.5 * d2 + sd * normal(rng),
            ])
        }
        ManifoldSpec::Sphere2 { radius } => {
            if dt_total > SPHERE_STEP_GUARD * radius * radius {
                return Err(Error::Guard(format!(
                    "sphere bridge step {dt_total} exceeds {}·R²",
                    SPHERE_STEP_GUARD
                )));
            }
            let v = log_map(x, y)?.ok_or_else(|| {
                Error::Guard("sphere bridge endpoints are antipodal".to_string())
            })?;
            let mid = exp_map(&v.scaled(0.5));
            Ok(tangent_gaussian(rng, &mid, radius, sd))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const C1: ManifoldSpec = ManifoldSpec::Circle { radius: 1.0 };

    fn trapezoid_circle(n: usize, f: impl Fn(f64) -> f64) -> f64 {
        let h = 2.0 * PI / n as f64;
        (0..n).map(|i| f(i as f64 * h)).sum::<f64>() * h
    }

    #[test]
    fn euclidean_diagonal_value() {
        let e = ManifoldSpec::Euclidean { dim: 1 };
        let o = e.point(&[0.0]).unwrap();
        let h = heat_kernel(1.0, &o, &o).unwrap();
        assert!((h - 0.282_094_791_773_878_1).abs() < 1e-15);
        assert!(heat_kernel(0.0, &o, &o).is_err());
        assert!(heat_kernel(-1.0, &o, &o).is_err());
    }

    #[test]
    fn circle_kernel_conserves_mass() {
        let x = C1.point(&[0.4]).unwrap();
        for t in [0.1, 1.0, 10.0] {
            let mass = trapezoid_circle(1 << 10, |th| heat_kernel(t, &x, &C1.point(&[th]).unwrap()).unwrap());
            assert!((mass - 1.0).abs() < 1e-12, "t = {t}: {mass}");
        }
    }

    #[test]
    fn circle_kernel_matches_fourier_series() {
        for (t, d) in [(0.05, 0.3), (0.7, 2.0), (3.0, 3.1)] {
            let x = C1.point(&[0.0]).unwrap();
            let y = C1.point(&[d]).unwrap();
            let series: f64 = (-60..=60)
                .map(|n: i32| (-(n * n) as f64 * t).exp() * (n as f64 * d).cos())
                .sum::<f64>()
                / (2.0 * PI);
            assert!((heat_kernel(t, &x, &y).unwrap() - series).abs() < 1e-13);
        }
    }

    #[test]
    fn chapman_kolmogorov_on_circle() {
        let x = C1.point(&[0.3]).unwrap();
        let y = C1.point(&[2.2]).unwrap();
        let (s, u) = (0.2, 0.45);
        let conv = trapezoid_circle(1 << 12, |th| {
            let z = C1.point(&[th]).unwrap();
            heat_kernel(s, &x, &z).unwrap() * heat_kernel(u, &z, &y).unwrap()
        });
        assert!((conv - heat_kernel(s + u, &x, &y).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn sphere_kernel_large_time_and_normalisation() {
        let s = ManifoldSpec::Sphere2 { radius: 1.0 };
        let a = s.sphere_point(0.2, 0.0).unwrap();
        for g in [0.0, 1.0, 3.0] {
            let b = s.sphere_point(0.2 + g, 0.0).unwrap();
            let h = heat_kernel(20.0, &a, &b).unwrap();
            assert!((h - 1.0 / (4.0 * PI)).abs() < 1e-12);
        }
        // ∫ h dA = 2π ∫ h(γ) sin γ dγ = 1.
        for t in [0.01, 0.3] {
            let n = 40_000;
            let hstep = PI / n as f64;
            let mass: f64 = (0..n)
                .map(|i| {
                    let g = (i as f64 + 0.5) * hstep;
                    sphere_kernel(t, g, 1.0) * g.sin()
                })
                .sum::<f64>()
                * hstep
                * 2.0
                * PI;
            assert!((mass - 1.0).abs() < 1e-6, "t = {t}: {mass}");
        }
    }

    #[test]
    fn sphere_parametrix_agrees_with_series_at_small_time() {
        let t = 2e-3;
        for g in [0.0, 0.02, 0.05] {
            let series = sphere_kernel(t, g, 1.0);
            let para = sphere_parametrix(t, g, 1.0);
            assert!((series - para).abs() / series < 1e-4, "gamma {g}");
        }
    }

    #[test]
    fn twisted_kernel_forms_agree() {
        for alpha in [0.0, 0.3, 0.5, -1.7] {
            for (th, th2) in [(0.0, 0.0), (0.4, 2.9), (6.0, 0.5)] {
                let t = 0.5;
                let images = {
                    let base = short_diff(th2 - th, 2.0 * PI);
                    (-20..=20)
                        .map(|w| {
                            let d = base + 2.0 * PI * w as f64;
                            Complex64::from_polar(gaussian(t, d), alpha * d)
                        })
                        .sum::<Complex64>()
                };
                let k = twisted_circle_kernel(1.0, alpha, t, th, th2);
                assert!((k - images).norm() < 1e-13, "alpha {alpha}");
                let k_small = twisted_circle_kernel(1.0, alpha, 0.1, th, th2);
                let k_big = twisted_circle_kernel(1.0, alpha, 0.4999, th, th2);
                assert!(k_small.norm().is_finite() && k_big.norm().is_finite());
            }
        }
        // α = 0 reduces to the scalar kernel.
        let x = C1.point(&[0.1]).unwrap();
        let y = C1.point(&[1.4]).unwrap();
        let k = twisted_circle_kernel(1.0, 0.0, 1.3, 0.1, 1.4);
        assert!((k.re - heat_kernel(1.3, &x, &y).unwrap()).abs() < 1e-14);
        assert!(k.im.abs() < 1e-14);
    }

    #[test]
    fn dirichlet_examples() {
        let free = gaussian(0.1, 0.0);
        let d = dirichlet_kernel_interval(0.1, 0.0, 0.0, -5.0, 5.0).unwrap();
        assert!((d - free).abs() < 1e-12);
        let near = dirichlet_kernel_interval(0.3, -1.0 + 1e-9, 0.2, -1.0, 1.0).unwrap();
        assert!(near < 1e-8);
        assert!(dirichlet_kernel_interval(0.3, 1.5, 0.2, -1.0, 1.0).is_err());
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let t = rng.random_range(0.01..3.0);
            let x = rng.random_range(-0.99..0.99);
            let y = rng.random_range(-0.99..0.99);
            let dk = dirichlet_kernel_interval(t, x, y, -1.0, 1.0).unwrap();
            assert!(dk >= 0.0 && dk <= gaussian(t, x - y));
            assert!(dirichlet_deficit(t, x, y, -1.0, 1.0).unwrap() >= 0.0);
        }
    }

    #[test]
    fn dirichlet_matches_sine_series() {
        let (a, b) = (-1.0, 2.0);
        let l: f64 = b - a;
        for (t, x, y) in [(0.05, 0.3, 0.6), (0.8, -0.5, 1.7)] {
            let series: f64 = (1..400)
                .map(|n| {
                    let k = n as f64 * PI / l;
                    (2.0 / l) * (-k * k * t).exp() * (k * (x - a)).sin() * (k * (y - a)).sin()
                })
                .sum();
            let images = dirichlet_kernel_interval(t, x, y, a, b).unwrap();
            assert!((series - images).abs() < 1e-12);
        }
    }

    #[test]
    fn euclidean_increment_moments() {
        let e = ManifoldSpec::Euclidean { dim: 1 };
        let o = e.point(&[0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100_000;
        let dt = 0.5;
        let xs: Vec<f64> = (0..n).map(|_| sample_transition(&mut rng, &o, dt).unwrap().coords()[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (var / n as f64).sqrt());
        // Var of the sample variance of a Gaussian: 2σ⁴/(n−1).
        let se_var = (2.0 * 1.0f64.powi(2) / (n - 1) as f64).sqrt();
        assert!((var - 2.0 * dt).abs() < 4.0 * se_var, "var {var}");
        assert!(sample_transition(&mut rng, &o, 0.0).is_err());
    }

    #[test]
    fn circle_increments_follow_wrapped_gaussian() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let x = C1.point(&[1.0]).unwrap();
        let dt = 1.5;
        let bins = 32;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let p = sample_transition(&mut rng, &x, dt).unwrap();
            let b = ((p.coords()[0] / (2.0 * PI)) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let width = 2.0 * PI / bins as f64;
        let chi2: f64 = (0..bins)
            .map(|b| {
                let sub = 64;
                let p: f64 = (0..sub)
                    .map(|i| {
                        let th = (b as f64 + (i as f64 + 0.5) / sub as f64) * width;
                        heat_kernel(dt, &x, &C1.point(&[th]).unwrap()).unwrap()
                    })
                    .sum::<f64>()
                    * width
                    / sub as f64;
                let e = p * n as f64;
                (counts[b] as f64 - e).powi(2) / e
            })
            .sum();
        let pval = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
        assert!(pval > 1e-3, "chi2 {chi2}, p {pval}");
    }

    #[test]
    fn gaussian_bridge_midpoint_moments() {
        let e = ManifoldSpec::Euclidean { dim: 1 };
        let x = e.point(&[-1.0]).unwrap();
        let y = e.point(&[2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 100_000;
        let ms: Vec<f64> = (0..n).map(|_| sample_bridge_midpoint(&mut rng, &x, &y, 1.0).unwrap().coords()[0]).collect();
        let mean = ms.iter().sum::<f64>() / n as f64;
        let var = ms.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 0.5).abs() < 4.0 * (0.5 / n as f64).sqrt());
        let se_var = (2.0 * 0.25 / (n - 1) as f64).sqrt();
        assert!((var - 0.5).abs() < 4.0 * se_var, "var {var}");
    }

    #[test]
    fn circle_bridge_midpoint_density_matches_kernel_product() {
        // Law of the midpoint vs h(dt/2, x, m) h(dt/2, m, y) / h(dt, x, y).
        let x = C1.point(&[0.5]).unwrap();
        let y = C1.point(&[3.5]).unwrap();
        let dt = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 100_000;
        let bins = 16;
        let mut counts = vec![0usize; bins];
        for _ in 0..n {
            let m = sample_bridge_midpoint(&mut rng, &x, &y, dt).unwrap();
            let b = ((m.coords()[0] / (2.0 * PI)) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let norm = heat_kernel(dt, &x, &y).unwrap();
        let width = 2.0 * PI / bins as f64;
        for b in 0..bins {
            let sub = 64;
            let p: f64 = (0..sub)
                .map(|i| {
                    let m = C1.point(&[(b as f64 + (i as f64 + 0.5) / sub as f64) * width]).unwrap();
                    heat_kernel(dt / 2.0, &x, &m).unwrap() * heat_kernel(dt / 2.0, &m, &y).unwrap()
                })
                .sum::<f64>()
                * width
                / sub as f64
                / norm;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = counts[b] as f64 / n as f64;
            assert!((freq - p).abs() < 4.5 * se, "bin {b}: {freq} vs {p}");
        }
    }

    #[test]
    fn circle_bridge_loop_is_symmetric() {
        let x = C1.point(&[1.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 50_000;
        let mean_offset = (0..n)
            .map(|_| short_diff(sample_bridge_midpoint(&mut rng, &x, &x, 1.0).unwrap().coords()[0] - 1.0, 2.0 * PI))
            .sum::<f64>()
            / n as f64;
        assert!(mean_offset.abs() < 4.0 * (0.5f64 / n as f64).sqrt());
    }

    #[test]
    fn sphere_samplers_respect_guards() {
        let s = ManifoldSpec::Sphere2 { radius: 1.0 };
        let a = s.sphere_point(0.5, 0.5).unwrap();
        let b = s.sphere_point(0.6, 0.4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(sample_bridge_midpoint(&mut rng, &a, &b, 0.5), Err(Error::Guard(_))));
        assert!(sample_bridge_midpoint(&mut rng, &a, &b, 0.005).is_ok());
        assert_eq!(sphere_substeps(0.05, 1.0), 5);
        let p = sample_transition(&mut rng, &a, 0.05).unwrap();
        assert!((crate::manifold::norm3(p.coords()) - 1.0).abs() < 1e-12);
    }
}
