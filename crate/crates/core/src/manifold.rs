//! Closed-form model manifolds: Euclidean space, the circle, the flat torus
//! and the round 2-sphere.
//!
//! Points carry the manifold they live on. Circle points are angles in
//! `[0, 2π)`, torus points are arc-length coordinates in `[0, L1) × [0, L2)`,
//! and sphere points are embedding coordinates in R³ of norm `R`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{domain, Result};

pub type Coords = SmallVec<[f64; 3]>;

/// Fraction of the injectivity radius inside which geodesics are accepted
/// by [`minimizing_geodesic`] and the cut-off transport.
pub const CUT_RADIUS_FRACTION: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldSpec {
    Euclidean { dim: usize },
    Circle { radius: f64 },
    FlatTorus { l1: f64, l2: f64 },
    Sphere2 { radius: f64 },
}

impl ManifoldSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            ManifoldSpec::Euclidean { dim } => dim >= 1,
            ManifoldSpec::Circle { radius } | ManifoldSpec::Sphere2 { radius } => {
                radius.is_finite() && radius > 0.0
            }
            ManifoldSpec::FlatTorus { l1, l2 } => {
                l1.is_finite() && l2.is_finite() && l1 > 0.0 && l2 > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            domain(format!("invalid manifold parameters: {self:?}"))
        }
    }

    /// Number of stored coordinates per point.
    pub fn coord_dim(&self) -> usize {
        match *self {
            ManifoldSpec::Euclidean { dim } => dim,
            ManifoldSpec::Circle { .. } => 1,
            ManifoldSpec::FlatTorus { .. } => 2,
            ManifoldSpec::Sphere2 { .. } => 3,
        }
    }

    /// Intrinsic dimension.
    pub fn dim(&self) -> usize {
        match *self {
            ManifoldSpec::Sphere2 { .. } => 2,
            _ => self.coord_dim(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManifoldSpec::Euclidean { .. } => "euclidean",
            ManifoldSpec::Circle { .. } => "circle",
            ManifoldSpec::FlatTorus { .. } => "flat_torus",
            ManifoldSpec::Sphere2 { .. } => "sphere2",
        }
    }

    /// Builds a point, reducing angles into the fundamental domain and
    /// renormalising sphere coordinates onto the sphere.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        self.validate()?;
        if coords.len() != self.coord_dim() {
            return domain(format!(
                "{} expects {} coordinates, got {}",
                self.name(),
                self.coord_dim(),
                coords.len()
            ));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return domain("non-finite coordinates");
        }
        let coords: Coords = match *self {
            ManifoldSpec::Euclidean { .. } => coords.iter().copied().collect(),
            ManifoldSpec::Circle { .. } => [wrap(coords[0], 2.0 * PI)].into_iter().collect(),
            ManifoldSpec::FlatTorus { l1, l2 } => {
                [wrap(coords[0], l1), wrap(coords[1], l2)].into_iter().collect()
            }
            ManifoldSpec::Sphere2 { radius } => {
                let n = norm3(coords);
                if n == 0.0 {
                    return domain("sphere point at the origin");
                }
                coords.iter().map(|c| c * radius / n).collect()
            }
        };
        Ok(Point { manifold: *self, coords })
    }

    /// Rebuilds a point from coordinates already in canonical form (as
    /// stored by [`Point::coords`]) without rounding them again.
    pub fn stored_point(&self, coords: &[f64]) -> Result<Point> {
        let p = self.point(coords)?;
        let close = p.coords.iter().zip(coords).all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        if !close {
            return domain(format!("coordinates {coords:?} are not canonical for {}", self.name()));
        }
        Ok(Point { manifold: *self, coords: coords.iter().copied().collect() })
    }

    /// Sphere point from polar angle θ (from +z) and azimuth φ.
    pub fn sphere_point(&self, theta: f64, phi: f64) -> Result<Point> {
        match *self {
            ManifoldSpec::Sphere2 { radius } => self.point(&[
                radius * theta.sin() * phi.cos(),
                radius * theta.sin() * phi.sin(),
                radius * theta.cos(),
            ]),
            _ => domain("sphere_point on a non-sphere manifold"),
        }
    }

    /// A tangent vector at `base`; sphere components are projected onto the
    /// tangent plane.
    pub fn tangent(&self, base: &Point, components: &[f64]) -> Result<TangentVec> {
        same_manifold(self, &base.manifold)?;
        if components.len() != self.coord_dim() {
            return domain("tangent vector has the wrong number of components");
        }
        if components.iter().any(|c| !c.is_finite()) {
            return domain("non-finite tangent components");
        }
        let components: Coords = match *self {
            ManifoldSpec::Sphere2 { radius } => {
                let u = unit(&base.coords, radius);
                let d = dot3(&u, components);
                (0..3).map(|i| components[i] - d * u[i]).collect()
            }
            _ => components.iter().copied().collect(),
        };
        Ok(TangentVec { base: base.clone(), components })
    }

    pub fn injectivity_radius(&self) -> f64 {
        match *self {
            ManifoldSpec::Euclidean { .. } => f64::INFINITY,
            ManifoldSpec::Circle { radius } | ManifoldSpec::Sphere2 { radius } => PI * radius,
            ManifoldSpec::FlatTorus { l1, l2 } => 0.5 * l1.min(l2),
        }
    }

    /// `0.9 × injectivity radius`, the gate for accepted geodesics.
    pub fn cut_radius(&self) -> f64 {
        CUT_RADIUS_FRACTION * self.injectivity_radius()
    }
}

/// A point on a model manifold.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    manifold: ManifoldSpec,
    coords: Coords,
}

impl Point {
    pub fn manifold(&self) -> &ManifoldSpec {
        &self.manifold
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

/// A tangent vector, in chart components (circle: dθ, torus and Euclidean:
/// coordinate increments) or embedding components (sphere).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVec {
    base: Point,
    components: Coords,
}

impl TangentVec {
    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// Riemannian length.
    pub fn norm(&self) -> f64 {
        match self.base.manifold {
            ManifoldSpec::Circle { radius } => radius * self.components[0].abs(),
            _ => self.components.iter().map(|c| c * c).sum::<f64>().sqrt(),
        }
    }

    pub fn scaled(&self, s: f64) -> TangentVec {
        TangentVec {
            base: self.base.clone(),
            components: self.components.iter().map(|c| c * s).collect(),
        }
    }
}

/// A constant-speed geodesic parameterised on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSegment {
    start: Point,
    end: Point,
    initial_velocity: TangentVec,
    length: f64,
}

impl GeodesicSegment {
    pub fn start(&self) -> &Point {
        &self.start
    }

    pub fn end(&self) -> &Point {
        &self.end
    }

    pub fn initial_velocity(&self) -> &TangentVec {
        &self.initial_velocity
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Position at parameter `s ∈ [0, 1]`.
    pub fn at(&self, s: f64) -> Point {
        if s == 1.0 {
            return self.end.clone();
        }
        exp_map(&self.initial_velocity.scaled(s))
    }

    /// The same geodesic traversed from `end` to `start`.
    pub fn reversed(&self) -> GeodesicSegment {
        let v = velocity_at_end(self);
        GeodesicSegment {
            start: self.end.clone(),
            end: self.start.clone(),
            initial_velocity: v.scaled(-1.0),
            length: self.length,
        }
    }

    /// The sub-segments `[0, s]` and `[s, 1]`, each reparameterised on `[0, 1]`.
    pub fn split(&self, s: f64) -> (GeodesicSegment, GeodesicSegment) {
        let mid = self.at(s);
        let first = GeodesicSegment {
            start: self.start.clone(),
            end: mid.clone(),
            initial_velocity: self.initial_velocity.scaled(s),
            length: self.length * s,
        };
        let v_mid = velocity_at(self, s).scaled(1.0 - s);
        let second = GeodesicSegment {
            start: mid,
            end: self.end.clone(),
            initial_velocity: v_mid,
            length: self.length * (1.0 - s),
        };
        (first, second)
    }
}

/// Velocity of the segment at parameter `s`.
pub(crate) fn velocity_at(seg: &GeodesicSegment, s: f64) -> TangentVec {
    let v = &seg.initial_velocity;
    match seg.start.manifold {
        ManifoldSpec::Sphere2 { radius } => {
            let p = seg.at(s);
            let u = unit(&seg.start.coords, radius);
            let speed = v.norm();
            if speed == 0.0 {
                return TangentVec { base: p, components: v.components.clone() };
            }
            let e: Vec<f64> = v.components.iter().map(|c| c / speed).collect();
            let a = s * speed / radius;
            let comps: Coords = (0..3)
                .map(|i| speed * (-a.sin() * u[i] + a.cos() * e[i]))
                .collect();
            TangentVec { base: p, components: comps }
        }
        _ => TangentVec { base: seg.at(s), components: v.components.clone() },
    }
}

fn velocity_at_end(seg: &GeodesicSegment) -> TangentVec {
    let mut v = velocity_at(seg, 1.0);
    v.base = seg.end.clone();
    v
}

fn same_manifold(a: &ManifoldSpec, b: &ManifoldSpec) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        domain(format!("points on different manifolds: {a:?} vs {b:?}"))
    }
}

/// Reduces `x` into `[0, period)`.
pub(crate) fn wrap(x: f64, period: f64) -> f64 {
    let r = x.rem_euclid(period);
    if r >= period {
        0.0
    } else {
        r
    }
}

/// Signed representative of `d` modulo `period` in `[−period/2, period/2)`.
pub(crate) fn short_diff(d: f64, period: f64) -> f64 {
    let r = (d + 0.5 * period).rem_euclid(period) - 0.5 * period;
    if r >= 0.5 * period {
        r - period
    } else {
        r
    }
}

pub(crate) fn norm3(v: &[f64]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot3(a: &[f64], b: &[f64]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn unit(p: &[f64], radius: f64) -> [f64; 3] {
    [p[0] / radius, p[1] / radius, p[2] / radius]
}

/// Geodesic distance.
pub fn distance(x: &Point, y: &Point) -> Result<f64> {
    same_manifold(&x.manifold, &y.manifold)?;
    Ok(distance_unchecked(x, y))
}

// Ordered so that the result is bit-identical under swapping.
fn periodic_gap(a: f64, b: f64, period: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let d = (hi - lo).rem_euclid(period);
    d.min(period - d)
}

pub(crate) fn distance_unchecked(x: &Point, y: &Point) -> f64 {
    // Symmetric by construction: every branch is invariant under x <-> y.
    match x.manifold {
        ManifoldSpec::Euclidean { .. } => x
            .coords
            .iter()
            .zip(y.coords.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt(),
        ManifoldSpec::Circle { radius } => radius * periodic_gap(x.coords[0], y.coords[0], 2.0 * PI),
        ManifoldSpec::FlatTorus { l1, l2 } => {
            let d1 = periodic_gap(x.coords[0], y.coords[0], l1);
            let d2 = periodic_gap(x.coords[1], y.coords[1], l2);
            (d1 * d1 + d2 * d2).sqrt()
        }
        ManifoldSpec::Sphere2 { radius } => {
            let c = cross3(&x.coords, &y.coords);
            let s = norm3(&c);
            let d = dot3(&x.coords, &y.coords);
            radius * s.atan2(d)
        }
    }
}

/// Endpoint of the constant-speed geodesic with initial velocity `v`.
pub fn exp_map(v: &TangentVec) -> Point {
    let x = &v.base;
    let coords: Coords = match x.manifold {
        ManifoldSpec::Euclidean { .. } => {
            x.coords.iter().zip(v.components.iter()).map(|(a, b)| a + b).collect()
        }
        ManifoldSpec::Circle { .. } => [wrap(x.coords[0] + v.components[0], 2.0 * PI)]
            .into_iter()
            .collect(),
        ManifoldSpec::FlatTorus { l1, l2 } => [
            wrap(x.coords[0] + v.components[0], l1),
            wrap(x.coords[1] + v.components[1], l2),
        ]
        .into_iter()
        .collect(),
        ManifoldSpec::Sphere2 { radius } => {
            let speed = v.norm();
            if speed == 0.0 {
                x.coords.clone()
            } else {
                let u = unit(&x.coords, radius);
                let a = speed / radius;
                let mut out: Coords = (0..3)
                    .map(|i| radius * (a.cos() * u[i] + a.sin() * v.components[i] / speed))
                    .collect();
                let n = norm3(&out);
                for c in out.iter_mut() {
                    *c *= radius / n;
                }
                out
            }
        }
    };
    Point { manifold: x.manifold, coords }
}

/// Initial velocity of the shortest geodesic from `x` to `y` when it is
/// unique; `None` on the cut locus.
pub fn log_map(x: &Point, y: &Point) -> Result<Option<TangentVec>> {
    same_manifold(&x.manifold, &y.manifold)?;
    Ok(log_map_unchecked(x, y))
}

fn log_map_unchecked(x: &Point, y: &Point) -> Option<TangentVec> {
    let comps: Coords = match x.manifold {
        ManifoldSpec::Euclidean { .. } => {
            y.coords.iter().zip(x.coords.iter()).map(|(b, a)| b - a).collect()
        }
        ManifoldSpec::Circle { .. } => {
            let d = short_diff(y.coords[0] - x.coords[0], 2.0 * PI);
            if d.abs() >= PI * (1.0 - 1e-12) {
                return None;
            }
            [d].into_iter().collect()
        }
        ManifoldSpec::FlatTorus { l1, l2 } => {
            let d1 = short_diff(y.coords[0] - x.coords[0], l1);
            let d2 = short_diff(y.coords[1] - x.coords[1], l2);
            if d1.abs() >= 0.5 * l1 * (1.0 - 1e-12) || d2.abs() >= 0.5 * l2 * (1.0 - 1e-12) {
                return None;
            }
            [d1, d2].into_iter().collect()
        }
        ManifoldSpec::Sphere2 { radius } => {
            let u = unit(&x.coords, radius);
            let w = unit(&y.coords, radius);
            let d = dot3(&u, &w);
            let perp: [f64; 3] = [w[0] - d * u[0], w[1] - d * u[1], w[2] - d * u[2]];
            let s = norm3(&perp);
            let angle = s.atan2(d);
            if angle >= PI * (1.0 - 1e-9) {
                return None;
            }
            if s == 0.0 {
                [0.0, 0.0, 0.0].into_iter().collect()
            } else {
                perp.iter().map(|p| radius * angle * p / s).collect()
            }
        }
    };
    Some(TangentVec { base: x.clone(), components: comps })
}

fn segment_from_velocity(x: &Point, y: &Point, v: TangentVec) -> GeodesicSegment {
    let length = v.norm();
    GeodesicSegment { start: x.clone(), end: y.clone(), initial_velocity: v, length }
}

/// The minimizing geodesic from `x` to `y` whenever it is unique, that is
/// whenever `y` is not on the cut locus of `x`.
pub fn unique_geodesic(x: &Point, y: &Point) -> Result<Option<GeodesicSegment>> {
    same_manifold(&x.manifold, &y.manifold)?;
    Ok(log_map_unchecked(x, y).map(|v| segment_from_velocity(x, y, v)))
}

/// The minimizing geodesic from `x` to `y`, present only when
/// `d(x, y) < cut_radius`.
pub fn minimizing_geodesic(x: &Point, y: &Point) -> Result<Option<GeodesicSegment>> {
    same_manifold(&x.manifold, &y.manifold)?;
    Ok(minimizing_geodesic_unchecked(x, y))
}

pub(crate) fn minimizing_geodesic_unchecked(x: &Point, y: &Point) -> Option<GeodesicSegment> {
    if distance_unchecked(x, y) >= x.manifold.cut_radius() {
        return None;
    }
    log_map_unchecked(x, y).map(|v| segment_from_velocity(x, y, v))
}

pub fn injectivity_radius(x: &Point) -> f64 {
    x.manifold.injectivity_radius()
}

/// Geodesic segment with prescribed initial velocity (no minimality check).
pub fn geodesic_from(v: &TangentVec) -> GeodesicSegment {
    let end = exp_map(v);
    segment_from_velocity(&v.base, &end, v.clone())
}
