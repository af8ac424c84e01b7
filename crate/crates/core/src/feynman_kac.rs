//! Feynman–Kac estimators for `e^{−t(H_∇ + V)}` on sections of a bundle:
//! Trotter-weighted reverse transport along sampled paths, the scalar
//! potential shortcut, and bridge estimates of the bundle heat kernel.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{cutoff_transport_unchecked, BundleSpec, FiberVector, TransportOp};
use crate::error::{domain, Error, Result};
use crate::heat::heat_kernel;
use crate::linalg::{self, c, hermitian_defect, hermitian_eigen, CMat, CVec};
use crate::manifold::{ManifoldSpec, Point};
use crate::paths::{sample_bridge_ensemble, sample_path, DyadicPath, PathEnsemble};
use crate::rng::{tags, StreamKey};
use crate::stats::{mean_and_stderr, sigma_distance};
use crate::transport::endpoint_operator;

/// Slack allowed below the declared lower bound of a potential.
pub const LOWER_BOUND_SLACK: f64 = 1e-9;
/// Largest tolerated Hermiticity defect of an endomorphism potential.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type EndomorphismFn = Arc<dyn Fn(&Point) -> CMat + Send + Sync>;

#[derive(Clone)]
pub enum PotentialKind {
    Scalar(ScalarFn),
    Endomorphism(EndomorphismFn),
}

/// A potential `V` bounded below by `lower_bound`.
#[derive(Clone)]
pub struct Potential {
    pub id: String,
    pub kind: PotentialKind,
    pub lower_bound: f64,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            PotentialKind::Scalar(_) => "scalar",
            PotentialKind::Endomorphism(_) => "endomorphism",
        };
        f.debug_struct("Potential")
            .field("id", &self.id)
            .field("kind", &kind)
            .field("lower_bound", &self.lower_bound)
            .finish()
    }
}

impl Potential {
    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn constant(value: f64) -> Self {
        Potential { id: format!("const:{value}"), kind: PotentialKind::Scalar(Arc::new(move |_| value)), lower_bound: value }
    }

    pub fn scalar(id: impl Into<String>, lower_bound: f64, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Potential { id: id.into(), kind: PotentialKind::Scalar(Arc::new(f)), lower_bound }
    }

    pub fn endomorphism(
        id: impl Into<String>,
        lower_bound: f64,
        f: impl Fn(&Point) -> CMat + Send + Sync + 'static,
    ) -> Self {
        Potential { id: id.into(), kind: PotentialKind::Endomorphism(Arc::new(f)), lower_bound }
    }

    /// `V(θ) = cos θ` on a circle, bounded below by −1.
    pub fn cos_theta() -> Self {
        Self::scalar("cos_theta", -1.0, |p| p.coords()[0].cos())
    }

    /// `e^{−s V(x)}` on a rank-`rank` fiber, checking Hermiticity and the
    /// lower bound at `x`.
    pub fn decay_factor(&self, x: &Point, s: f64, rank: usize) -> Result<CMat> {
        match &self.kind {
            PotentialKind::Scalar(f) => {
                let v = f(x);
                self.check_value(v, x)?;
                Ok(CMat::from_diagonal_element(rank, rank, c((-s * v).exp(), 0.0)))
            }
            PotentialKind::Endomorphism(f) => {
                let m = f(x);
                if m.nrows() != rank || m.ncols() != rank {
                    return domain(format!("potential {} is not {rank}x{rank}", self.id));
                }
                if hermitian_defect(&m) > HERMITIAN_TOL {
                    return domain(format!("potential {} is not Hermitian at {:?}", self.id, x.coords()));
                }
                let (vals, vecs) = hermitian_eigen(&m);
                let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
                self.check_value(min, x)?;
                let diag = CVec::from_iterator(rank, vals.iter().map(|&l| c((-s * l).exp(), 0.0)));
                Ok(&vecs * CMat::from_diagonal(&diag) * vecs.adjoint())
            }
        }
    }

    fn check_value(&self, v: f64, x: &Point) -> Result<()> {
        if !v.is_finite() {
            return domain(format!("potential {} is not finite at {:?}", self.id, x.coords()));
        }
        if v < self.lower_bound - LOWER_BOUND_SLACK {
            return domain(format!(
                "potential {} has value {v} below its bound {} at {:?}",
                self.id,
                self.lower_bound,
                x.coords()
            ));
        }
        Ok(())
    }
}

/// `Π_j P(x_{j−1} ← x_j) e^{−Δ V(x_j)}`, a map from the fiber over `c(t)`
/// to the fiber over `c(0)`. Within each slice the potential acts first and
/// the transport second; the slice nearest `c(0)` is applied last.
pub fn trotter_weight(path: &DyadicPath, pot: &Potential, spec: &BundleSpec) -> Result<TransportOp> {
    if *path.manifold() != spec.base {
        return domain("path and bundle live on different manifolds");
    }
    let nodes = path.nodes();
    let dt = path.step();
    let (x0, end) = (nodes[0].clone(), path.endpoint().clone());
    let mut acc = linalg::identity(spec.rank);
    for j in (1..nodes.len()).rev() {
        let e = pot.decay_factor(&nodes[j], dt, spec.rank)?;
        let p = cutoff_transport_unchecked(&nodes[j - 1], &nodes[j], spec);
        if p.is_zero {
            return Ok(TransportOp::zero(end, x0, spec.rank));
        }
        acc = p.matrix * e * acc;
    }
    Ok(TransportOp { source: end, target: x0, matrix: acc, is_zero: false })
}

/// The scalar-potential weight `e^{−Δ Σ_{j≥1} V(x_j)}` times the inverse
/// endpoint transport.
pub fn scalar_weight(
    path: &DyadicPath,
    v: &(dyn Fn(&Point) -> f64 + Sync),
    spec: &BundleSpec,
) -> Result<TransportOp> {
    let op = endpoint_operator(path, spec)?.adjoint();
    if op.is_zero {
        return Ok(op);
    }
    let sum: f64 = path.nodes()[1..].iter().map(|p| v(p)).sum();
    let w = (-path.step() * sum).exp();
    if !w.is_finite() {
        return domain("scalar potential weight is not finite");
    }
    Ok(TransportOp { matrix: op.matrix * c(w, 0.0), ..op })
}

/// Sampling parameters for Monte-Carlo estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub depth: u32,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentStderr {
    pub re: f64,
    pub im: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FkEstimate {
    pub value: FiberVector,
    pub stderr: Vec<ComponentStderr>,
    pub n_paths: usize,
    pub depth: u32,
    pub rejection_rate: f64,
}

impl FkEstimate {
    /// `sqrt(Σ_i se_re² + se_im²)`, the standard error scale of the
    /// estimated vector.
    pub fn stderr_norm(&self) -> f64 {
        self.stderr.iter().map(|s| s.re * s.re + s.im * s.im).sum::<f64>().sqrt()
    }

    /// Largest componentwise distance to `target` in standard errors.
    pub fn sigma_distance(&self, target: &[Complex64]) -> f64 {
        self.value
            .components
            .iter()
            .zip(target)
            .zip(&self.stderr)
            .map(|((z, w), s)| sigma_distance(z.re, w.re, s.re).max(sigma_distance(z.im, w.im, s.im)))
            .fold(0.0, f64::max)
    }
}

struct Samples {
    values: Vec<CVec>,
    rejected: usize,
}

fn summarize(fiber: Point, rank: usize, depth: u32, s: Samples) -> Result<FkEstimate> {
    let n = s.values.len();
    if s.rejected == n {
        return Err(Error::EstimationFailure(format!("all {n} paths were rejected")));
    }
    let mut comps = Vec::with_capacity(rank);
    let mut stderr = Vec::with_capacity(rank);
    for i in 0..rank {
        let re: Vec<f64> = s.values.iter().map(|v| v[i].re).collect();
        let im: Vec<f64> = s.values.iter().map(|v| v[i].im).collect();
        let (mr, mi) = (mean_and_stderr(&re), mean_and_stderr(&im));
        comps.push(c(mr.mean, mi.mean));
        stderr.push(ComponentStderr { re: mr.stderr, im: mi.stderr });
    }
    if stderr.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
        return Err(Error::EstimationFailure("non-finite standard error".into()));
    }
    Ok(FkEstimate {
        value: FiberVector::new(fiber, comps)?,
        stderr,
        n_paths: n,
        depth,
        rejection_rate: s.rejected as f64 / n as f64,
    })
}

fn check_params(t: f64, params: &EnsembleParams) -> Result<()> {
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("time must be positive, got {t}"));
    }
    if params.n_paths < 2 {
        return domain("estimators need at least two paths");
    }
    Ok(())
}

fn section_value<F>(eta: &F, p: &Point, rank: usize) -> Result<CVec>
where
    F: Fn(&Point) -> CVec + Sync,
{
    let v = eta(p);
    if v.len() != rank {
        return domain(format!("section has {} components, bundle rank is {rank}", v.len()));
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return domain(format!("section is not finite at {:?}", p.coords()));
    }
    Ok(v)
}

fn fk_samples<F, W>(x: &Point, t: f64, params: &EnsembleParams, spec: &BundleSpec, eta: &F, weight: W) -> Result<Samples>
where
    F: Fn(&Point) -> CVec + Sync,
    W: Fn(&DyadicPath) -> Result<TransportOp> + Sync,
{
    let key = StreamKey::new(params.seed, tags::FK_PATHS);
    let results = (0..params.n_paths)
        .into_par_iter()
        .map(|i| {
            let path = sample_path(&mut key.stream(i as u64), x, t, params.depth)?;
            let k = weight(&path)?;
            if k.is_zero {
                return Ok((CVec::zeros(spec.rank), true));
            }
            Ok((&k.matrix * section_value(eta, path.endpoint(), spec.rank)?, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let rejected = results.iter().filter(|r| r.1).count();
    Ok(Samples { values: results.into_iter().map(|r| r.0).collect(), rejected })
}

/// Estimates `(e^{−t(H_∇ + V)} η)(x)` as the mean of
/// `trotter_weight(c) · η(c(t))` over forward paths from `x`.
pub fn fk_estimate<F>(
    x: &Point,
    t: f64,
    eta: &F,
    pot: &Potential,
    spec: &BundleSpec,
    params: &EnsembleParams,
) -> Result<FkEstimate>
where
    F: Fn(&Point) -> CVec + Sync,
{
    check_params(t, params)?;
    let s = fk_samples(x, t, params, spec, eta, |p| trotter_weight(p, pot, spec))?;
    summarize(x.clone(), spec.rank, params.depth, s)
}

/// [`fk_estimate`] over a given forward ensemble.
pub fn fk_estimate_on_ensemble<F>(ens: &PathEnsemble, eta: &F, pot: &Potential, spec: &BundleSpec) -> Result<FkEstimate>
where
    F: Fn(&Point) -> CVec + Sync,
{
    if ens.len() < 2 {
        return domain("estimators need at least two paths");
    }
    let results = ens
        .paths
        .par_iter()
        .map(|path| {
            let k = trotter_weight(path, pot, spec)?;
            if k.is_zero {
                return Ok((CVec::zeros(spec.rank), true));
            }
            Ok((&k.matrix * section_value(eta, path.endpoint(), spec.rank)?, false))
        })
        .collect::<Result<Vec<_>>>()?;
    let rejected = results.iter().filter(|r| r.1).count();
    let s = Samples { values: results.into_iter().map(|r| r.0).collect(), rejected };
    summarize(ens.base_point().clone(), spec.rank, ens.depth(), s)
}

/// [`fk_estimate`] for a scalar potential through [`scalar_weight`].
pub fn scalar_fk_estimate<F>(
    x: &Point,
    t: f64,
    eta: &F,
    v: &(dyn Fn(&Point) -> f64 + Sync),
    spec: &BundleSpec,
    params: &EnsembleParams,
) -> Result<FkEstimate>
where
    F: Fn(&Point) -> CVec + Sync,
{
    check_params(t, params)?;
    let s = fk_samples(x, t, params, spec, eta, |p| scalar_weight(p, v, spec))?;
    summarize(x.clone(), spec.rank, params.depth, s)
}

/// Bridge estimate of the bundle heat kernel `h_∇(t, x, y)`, a map from the
/// fiber over `y` to the fiber over `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelEstimate {
    pub value: CMat,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    /// Scalar heat kernel `h(t, x, y)`.
    pub scalar: f64,
    pub n_paths: usize,
    pub rejection_rate: f64,
}

impl KernelEstimate {
    pub fn op_norm(&self) -> f64 {
        linalg::op_norm(&self.value)
    }

    /// Frobenius norm of the componentwise standard errors.
    pub fn stderr_norm(&self) -> f64 {
        (self.stderr_re.norm_squared() + self.stderr_im.norm_squared()).sqrt()
    }

    /// Largest componentwise distance to `target` in standard errors.
    pub fn sigma_distance(&self, target: &CMat) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.value.nrows() {
            for j in 0..self.value.ncols() {
                let (z, w) = (self.value[(i, j)], target[(i, j)]);
                worst = worst
                    .max(sigma_distance(z.re, w.re, self.stderr_re[(i, j)]))
                    .max(sigma_distance(z.im, w.im, self.stderr_im[(i, j)]));
            }
        }
        worst
    }
}

/// `h(t,x,y) · E[P(c)^{−1}]` over bridges from `x` to `y`.
///
/// Bridges are exact on the flat models. On the sphere they are an
/// approximation and `allow_biased` must be set.
pub fn heat_kernel_estimate(
    t: f64,
    x: &Point,
    y: &Point,
    spec: &BundleSpec,
    params: &EnsembleParams,
    allow_biased: bool,
) -> Result<KernelEstimate> {
    check_params(t, params)?;
    if matches!(spec.base, ManifoldSpec::Sphere2 { .. }) && !allow_biased {
        return Err(Error::Guard("sphere bridges are approximate; pass allow_biased to use them".into()));
    }
    let ens = sample_bridge_ensemble(x, y, t, params.depth, params.n_paths, params.seed)?;
    kernel_from_bridges(t, &ens, spec)
}

/// [`heat_kernel_estimate`] on a given bridge ensemble.
pub fn kernel_from_bridges(t: f64, ens: &PathEnsemble, spec: &BundleSpec) -> Result<KernelEstimate> {
    let h = heat_kernel(t, ens.base_point(), ens.paths[0].endpoint())?;
    let ops = ens
        .paths
        .par_iter()
        .map(|p| endpoint_operator(p, spec).map(|op| op.adjoint()))
        .collect::<Result<Vec<_>>>()?;
    let n = ops.len();
    let rejected = ops.iter().filter(|o| o.is_zero).count();
    if rejected == n {
        return Err(Error::EstimationFailure(format!("all {n} bridges were rejected")));
    }
    let r = spec.rank;
    let mut value = CMat::zeros(r, r);
    let mut se_re = DMatrix::zeros(r, r);
    let mut se_im = DMatrix::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            let re: Vec<f64> = ops.iter().map(|o| h * o.matrix[(i, j)].re).collect();
            let im: Vec<f64> = ops.iter().map(|o| h * o.matrix[(i, j)].im).collect();
            let (mr, mi) = (mean_and_stderr(&re), mean_and_stderr(&im));
            value[(i, j)] = c(mr.mean, mi.mean);
            se_re[(i, j)] = mr.stderr;
            se_im[(i, j)] = mi.stderr;
        }
    }
    Ok(KernelEstimate {
        value,
        stderr_re: se_re,
        stderr_im: se_im,
        scalar: h,
        n_paths: n,
        rejection_rate: rejected as f64 / n as f64,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiamagneticRow {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub op_norm: f64,
    pub scalar: f64,
    pub stderr: f64,
    pub ratio: f64,
    /// `(op_norm − scalar) / stderr`, stderr floored at `1e-12·scalar`;
    /// positive values exceed the bound.
    pub excess_sigma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiamagneticReport {
    pub t: f64,
    pub rows: Vec<DiamagneticRow>,
    pub max_excess_sigma: f64,
}

impl DiamagneticReport {
    /// Every `‖h_∇‖ ≤ h + k·stderr`.
    pub fn holds_within(&self, k: f64) -> bool {
        self.rows.iter().all(|r| r.op_norm <= r.scalar + k * r.stderr + 1e-12 * r.scalar)
    }
}

/// Compares `‖h_∇(t,x,y)‖_op` with `h(t,x,y)` on each pair. Pair `i` uses
/// the seed `params.seed + i`.
pub fn diamagnetic_check(
    t: f64,
    pairs: &[(Point, Point)],
    spec: &BundleSpec,
    params: &EnsembleParams,
) -> Result<DiamagneticReport> {
    let mut rows = Vec::with_capacity(pairs.len());
    for (i, (x, y)) in pairs.iter().enumerate() {
        let p = EnsembleParams { seed: params.seed.wrapping_add(i as u64), ..*params };
        let est = heat_kernel_estimate(t, x, y, spec, &p, false)?;
        let norm = est.op_norm();
        let se = est.stderr_norm();
        // Relative floor so that rounding on a phase-constant ensemble is not read as excess.
        let excess = (norm - est.scalar) / se.max(1e-12 * est.scalar);
        rows.push(DiamagneticRow {
            x: x.coords().to_vec(),
            y: y.coords().to_vec(),
            op_norm: norm,
            scalar: est.scalar,
            stderr: se,
            ratio: norm / est.scalar,
            excess_sigma: excess,
        });
    }
    let max_excess_sigma = rows.iter().map(|r| r.excess_sigma).fold(f64::NEG_INFINITY, f64::max);
    Ok(DiamagneticReport { t, rows, max_excess_sigma })
}
