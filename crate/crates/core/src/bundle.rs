//! Hermitian bundles with Hermitian connections over the model manifolds,
//! parallel transport along geodesic segments, and the cut-off transport
//! `P(x, y)` that vanishes when no accepted geodesic joins `y` to `x`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::linalg::{
    self, anti_hermitian_defect, c, expm_anti_hermitian, identity, op_norm, pauli_x, pauli_y,
    pauli_z, polar_unitary, CMat, CVec, I,
};
use crate::manifold::{
    cross3, distance_unchecked, dot3, minimizing_geodesic_unchecked, norm3, short_diff, unit,
    GeodesicSegment, ManifoldSpec, Point,
};

/// Maximum Magnus sub-step length.
pub const MAGNUS_MAX_STEP: f64 = 1e-2;

/// Tolerance used when checking that a loop closes.
const CLOSURE_TOL: f64 = 1e-9;

/// Connections built from an explicit anti-Hermitian matrix-valued 1-form,
/// integrated numerically along segments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum MatrixForm {
    /// `A = iα dθ` on a circle, the rank-one U(1) form integrated with the
    /// generic Magnus scheme (used to cross-check [`Connection::CircleU1`]).
    U1Circle { alpha: f64 },
    /// `A = i(a σx dx¹ + b σy dx²)` on the plane or the flat torus. Constant
    /// coefficients, non-commuting: curvature `−ab[σx, σy]` is nonzero.
    Su2Planar { a: f64, b: f64 },
    /// `A = i(a σz + b(cos θ σx + sin θ σy)) dθ` on a circle.
    Su2Twisted { a: f64, b: f64 },
}

impl MatrixForm {
    pub fn rank(&self) -> usize {
        match self {
            MatrixForm::U1Circle { .. } => 1,
            MatrixForm::Su2Planar { .. } | MatrixForm::Su2Twisted { .. } => 2,
        }
    }

    fn supports(&self, base: &ManifoldSpec) -> bool {
        match self {
            MatrixForm::U1Circle { .. } | MatrixForm::Su2Twisted { .. } => {
                matches!(base, ManifoldSpec::Circle { .. })
            }
            MatrixForm::Su2Planar { .. } => matches!(
                base,
                ManifoldSpec::Euclidean { dim: 2 } | ManifoldSpec::FlatTorus { .. }
            ),
        }
    }

    /// Connection coefficient `A_x(v)` (anti-Hermitian); transport solves
    /// `u' = −A(c') u`.
    pub fn coefficient(&self, x: &Point, velocity: &[f64]) -> CMat {
        match *self {
            MatrixForm::U1Circle { alpha } => CMat::from_element(1, 1, I * (alpha * velocity[0])),
            MatrixForm::Su2Planar { a, b } => {
                (pauli_x() * c(a * velocity[0], 0.0) + pauli_y() * c(b * velocity[1], 0.0)) * I
            }
            MatrixForm::Su2Twisted { a, b } => {
                let th = x.coords()[0];
                let gen = pauli_z() * c(a, 0.0)
                    + pauli_x() * c(b * th.cos(), 0.0)
                    + pauli_y() * c(b * th.sin(), 0.0);
                gen * (I * velocity[0])
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Connection {
    TrivialFlat,
    /// `∇ = d + iα dθ` on the trivial line bundle over a circle.
    CircleU1 { alpha: f64 },
    /// The tangent bundle of the round sphere as a complex line bundle.
    LeviCivitaSphere,
    Matrix(MatrixForm),
}

/// A Hermitian vector bundle of rank `r` with a Hermitian connection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleSpec {
    pub base: ManifoldSpec,
    pub rank: usize,
    pub connection: Connection,
}

impl BundleSpec {
    pub fn trivial(base: ManifoldSpec, rank: usize) -> Result<Self> {
        Self::new(base, rank, Connection::TrivialFlat)
    }

    pub fn circle_u1(base: ManifoldSpec, alpha: f64) -> Result<Self> {
        Self::new(base, 1, Connection::CircleU1 { alpha })
    }

    pub fn levi_civita_sphere(base: ManifoldSpec) -> Result<Self> {
        Self::new(base, 1, Connection::LeviCivitaSphere)
    }

    pub fn matrix(base: ManifoldSpec, form: MatrixForm) -> Result<Self> {
        Self::new(base, form.rank(), Connection::Matrix(form))
    }

    pub fn new(base: ManifoldSpec, rank: usize, connection: Connection) -> Result<Self> {
        base.validate()?;
        if rank == 0 || rank > 4 {
            return domain(format!("bundle rank must be in 1..=4, got {rank}"));
        }
        let ok = match connection {
            Connection::TrivialFlat => true,
            Connection::CircleU1 { alpha } => {
                rank == 1 && alpha.is_finite() && matches!(base, ManifoldSpec::Circle { .. })
            }
            Connection::LeviCivitaSphere => {
                rank == 1 && matches!(base, ManifoldSpec::Sphere2 { .. })
            }
            Connection::Matrix(form) => rank == form.rank() && form.supports(&base),
        };
        if !ok {
            return domain(format!("connection {connection:?} incompatible with rank {rank} over {base:?}"));
        }
        Ok(BundleSpec { base, rank, connection })
    }

    pub fn is_flat_trivial(&self) -> bool {
        matches!(self.connection, Connection::TrivialFlat)
    }

    fn check_point(&self, p: &Point) -> Result<()> {
        if *p.manifold() != self.base {
            return domain(format!("point on {:?} is not over the bundle base {:?}", p.manifold(), self.base));
        }
        Ok(())
    }
}

/// A vector in the fiber over `fiber`, in the bundle's reference frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FiberVector {
    pub fiber: Point,
    pub components: CVec,
}

impl FiberVector {
    pub fn new(fiber: Point, components: Vec<Complex64>) -> Result<Self> {
        if components.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return domain("non-finite fiber vector components");
        }
        Ok(FiberVector { fiber, components: CVec::from_vec(components) })
    }

    pub fn zero(fiber: Point, rank: usize) -> Self {
        FiberVector { fiber, components: CVec::zeros(rank) }
    }

    pub fn rank(&self) -> usize {
        self.components.len()
    }

    pub fn norm(&self) -> f64 {
        linalg::vec_norm(&self.components)
    }

    pub fn inner(&self, other: &FiberVector) -> Complex64 {
        linalg::inner(&self.components, &other.components)
    }
}

/// A linear form on the fiber over `fiber`, acting as `w ↦ Σ ω_i w_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct Covector {
    pub fiber: Point,
    pub components: CVec,
}

impl Covector {
    pub fn norm(&self) -> f64 {
        linalg::vec_norm(&self.components)
    }

    pub fn apply(&self, v: &FiberVector) -> Complex64 {
        self.components.iter().zip(v.components.iter()).map(|(a, b)| a * b).sum()
    }
}

/// A linear map from the fiber over `source` to the fiber over `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportOp {
    pub source: Point,
    pub target: Point,
    pub matrix: CMat,
    pub is_zero: bool,
}

impl TransportOp {
    pub fn identity(at: Point, rank: usize) -> Self {
        TransportOp { source: at.clone(), target: at, matrix: identity(rank), is_zero: false }
    }

    pub fn zero(source: Point, target: Point, rank: usize) -> Self {
        TransportOp { source, target, matrix: CMat::zeros(rank, rank), is_zero: true }
    }

    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    /// `next ∘ self`: first `self`, then `next`.
    pub fn then(&self, next: &TransportOp) -> TransportOp {
        if self.is_zero || next.is_zero {
            return TransportOp::zero(self.source.clone(), next.target.clone(), self.rank());
        }
        TransportOp {
            source: self.source.clone(),
            target: next.target.clone(),
            matrix: &next.matrix * &self.matrix,
            is_zero: false,
        }
    }

    /// The adjoint map, from `target` back to `source`. For a unitary
    /// transport this is the inverse.
    pub fn adjoint(&self) -> TransportOp {
        TransportOp {
            source: self.target.clone(),
            target: self.source.clone(),
            matrix: self.matrix.adjoint(),
            is_zero: self.is_zero,
        }
    }

    pub fn apply(&self, v: &FiberVector) -> Result<FiberVector> {
        if v.fiber != self.source {
            return domain("fiber vector is not in the source fiber of the transport");
        }
        Ok(FiberVector { fiber: self.target.clone(), components: &self.matrix * &v.components })
    }

    pub fn op_norm(&self) -> f64 {
        if self.is_zero {
            0.0
        } else {
            op_norm(&self.matrix)
        }
    }

    pub fn unitarity_defect(&self) -> f64 {
        linalg::unitarity_defect(&self.matrix)
    }
}

/// Unit tangent reference frame vector of the sphere bundle at `p`.
///
/// Away from the poles this is the normalised `∂θ`; inside the caps
/// `|z| > 0.8 R` the analogous field for the x-axis is used. The companion
/// vector is `n × e` with `n` the outward normal.
pub fn sphere_frame(p: &Point, radius: f64) -> [f64; 3] {
    let u = unit(p.coords(), radius);
    let axis = if u[2].abs() <= 0.8 { 2 } else { 0 };
    let mut e = [u[axis] * u[0], u[axis] * u[1], u[axis] * u[2]];
    e[axis] -= 1.0;
    let n = norm3(&e);
    [e[0] / n, e[1] / n, e[2] / n]
}

/// Rotates `v` about the unit `axis` by `angle` (Rodrigues).
fn rotate(v: &[f64; 3], axis: &[f64; 3], angle: f64) -> [f64; 3] {
    let (s, co) = angle.sin_cos();
    let kxv = cross3(axis, v);
    let kdv = dot3(axis, v);
    [
        v[0] * co + kxv[0] * s + axis[0] * kdv * (1.0 - co),
        v[1] * co + kxv[1] * s + axis[1] * kdv * (1.0 - co),
        v[2] * co + kxv[2] * s + axis[2] * kdv * (1.0 - co),
    ]
}

fn sphere_transport_phase(seg: &GeodesicSegment, radius: f64) -> Complex64 {
    let a = seg.start();
    let b = seg.end();
    let ea = sphere_frame(a, radius);
    let eb = sphere_frame(b, radius);
    let v = seg.initial_velocity().components();
    let axis = cross3(a.coords(), v);
    let an = norm3(&axis);
    // Along a great circle the transport generator in R³ is the constant
    // rotation generator of that plane, so one rotation is the exact step.
    let moved = if an == 0.0 || seg.length() == 0.0 {
        ea
    } else {
        let axis = [axis[0] / an, axis[1] / an, axis[2] / an];
        rotate(&ea, &axis, seg.length() / radius)
    };
    let nb = unit(b.coords(), radius);
    let jeb = cross3(&nb, &eb);
    let phi = dot3(&moved, &jeb).atan2(dot3(&moved, &eb));
    Complex64::from_polar(1.0, phi)
}

/// Fourth-order (two-point Gauss) Magnus integration of `u' = −A(c') u`
/// along `seg`, with `length / steps ≤ MAGNUS_MAX_STEP` and polar
/// re-unitarisation after every step. The scheme is symmetric, so the
/// reversed segment yields the adjoint.
pub fn magnus_transport(form: &MatrixForm, seg: &GeodesicSegment) -> CMat {
    let steps = ((seg.length() / MAGNUS_MAX_STEP).ceil() as usize).max(1);
    let h = 1.0 / steps as f64;
    let v = seg.initial_velocity().components().to_vec();
    let offset = 0.5 - 3f64.sqrt() / 6.0;
    let generator = |s: f64| form.coefficient(&seg.at(s), &v) * c(-1.0, 0.0);
    let mut u = identity(form.rank());
    for i in 0..steps {
        let s0 = i as f64 * h;
        let b1 = generator(s0 + offset * h);
        let b2 = generator(s0 + (1.0 - offset) * h);
        let commutator = &b1 * &b2 - &b2 * &b1;
        let omega = (&b1 + &b2) * c(0.5 * h, 0.0) - commutator * c(3f64.sqrt() / 12.0 * h * h, 0.0);
        u = polar_unitary(&(expm_anti_hermitian(&omega) * u));
    }
    u
}

/// Parallel transport along `seg`, as a map from the fiber over its start to
/// the fiber over its end.
pub fn transport_along_segment(seg: &GeodesicSegment, spec: &BundleSpec) -> Result<TransportOp> {
    spec.check_point(seg.start())?;
    Ok(transport_unchecked(seg, spec))
}

fn transport_unchecked(seg: &GeodesicSegment, spec: &BundleSpec) -> TransportOp {
    let matrix = match spec.connection {
        Connection::TrivialFlat => identity(spec.rank),
        Connection::CircleU1 { alpha } => {
            let dtheta = seg.initial_velocity().components()[0];
            CMat::from_element(1, 1, Complex64::from_polar(1.0, -alpha * dtheta))
        }
        Connection::LeviCivitaSphere => {
            let radius = match spec.base {
                ManifoldSpec::Sphere2 { radius } => radius,
                _ => unreachable!("validated in BundleSpec::new"),
            };
            CMat::from_element(1, 1, sphere_transport_phase(seg, radius))
        }
        Connection::Matrix(form) => magnus_transport(&form, seg),
    };
    TransportOp { source: seg.start().clone(), target: seg.end().clone(), matrix, is_zero: false }
}

/// The cut-off parallel transport `P(x, y)`: transport from the fiber over
/// `y` to the fiber over `x` along the minimizing geodesic when it lies within
/// the cut radius, and the zero map otherwise.
pub fn cutoff_transport(x: &Point, y: &Point, spec: &BundleSpec) -> Result<TransportOp> {
    spec.check_point(x)?;
    spec.check_point(y)?;
    Ok(cutoff_transport_unchecked(x, y, spec))
}

pub(crate) fn cutoff_transport_unchecked(x: &Point, y: &Point, spec: &BundleSpec) -> TransportOp {
    if spec.is_flat_trivial() {
        if distance_unchecked(x, y) < spec.base.cut_radius() {
            return TransportOp { source: y.clone(), target: x.clone(), matrix: identity(spec.rank), is_zero: false };
        }
        return TransportOp::zero(y.clone(), x.clone(), spec.rank);
    }
    match minimizing_geodesic_unchecked(y, x) {
        Some(seg) => transport_unchecked(&seg, spec),
        None => TransportOp::zero(y.clone(), x.clone(), spec.rank),
    }
}

/// Normalised endomorphism inner product `(1/r) Tr(A B*)`.
pub fn endo_inner(a: &CMat, b: &CMat) -> Result<Complex64> {
    let r = a.nrows();
    if a.ncols() != r || b.nrows() != r || b.ncols() != r || r == 0 {
        return domain(format!(
            "endo_inner needs equal square matrices, got {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        ));
    }
    Ok((a * b.adjoint()).trace() / r as f64)
}

/// `v♭ = √r ⟨·, v⟩`, with components `√r conj(v_i)`.
pub fn flat_map(v: &FiberVector) -> Covector {
    let s = (v.rank() as f64).sqrt();
    Covector { fiber: v.fiber.clone(), components: v.components.map(|z| z.conj() * s) }
}

/// Inverse of [`flat_map`].
pub fn sharp_map(omega: &Covector) -> FiberVector {
    let s = (omega.components.len() as f64).sqrt();
    FiberVector { fiber: omega.fiber.clone(), components: omega.components.map(|z| z.conj() / s) }
}

/// Transport around a closed chain of segments.
pub fn holonomy(segments: &[GeodesicSegment], spec: &BundleSpec) -> Result<TransportOp> {
    let first = match segments.first() {
        Some(s) => s,
        None => return domain("empty loop"),
    };
    for pair in segments.windows(2) {
        if distance_unchecked(pair[0].end(), pair[1].start()) > CLOSURE_TOL {
            return domain("loop segments do not concatenate");
        }
    }
    let last = segments.last().expect("non-empty");
    if distance_unchecked(last.end(), first.start()) > CLOSURE_TOL {
        return domain("loop does not close");
    }
    let mut op = TransportOp::identity(first.start().clone(), spec.rank);
    for seg in segments {
        op = op.then(&transport_along_segment(seg, spec)?);
    }
    Ok(op)
}

/// Holonomy angle of a rank-one transport.
pub fn phase_angle(op: &TransportOp) -> f64 {
    op.matrix[(0, 0)].arg()
}

/// Checks `A(v)` is anti-Hermitian at the given point and velocity.
pub fn coefficient_defect(form: &MatrixForm, x: &Point, velocity: &[f64]) -> f64 {
    anti_hermitian_defect(&form.coefficient(x, velocity))
}

pub(crate) fn circle_step_angle(from: &Point, to: &Point) -> f64 {
    short_diff(to.coords()[0] - from.coords()[0], 2.0 * PI)
}
