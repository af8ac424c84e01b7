//! Dyadic Brownian paths.
//!
//! A [`DyadicPath`] records a path at the times `j·t/2^k`. Paths can be
//! refined by bridge sampling (existing nodes are kept bit for bit) and
//! coarsened by subsampling, so transports at several depths can be computed
//! on the same underlying path.

use std::io::{self, Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::heat::{sample_bridge_midpoint, sample_transition, sphere_substeps};
use crate::manifold::{distance_unchecked, ManifoldSpec, Point};
use crate::rng::{tags, StreamKey};

/// Largest supported depth; `2^20 + 1` nodes per path.
pub const MAX_DEPTH: u32 = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicPath {
    base_point: Point,
    horizon: f64,
    depth: u32,
    nodes: Vec<Point>,
}

fn check_depth(k: u32) -> Result<()> {
    if k > MAX_DEPTH {
        domain(format!("depth {k} exceeds the maximum {MAX_DEPTH}"))
    } else {
        Ok(())
    }
}

fn check_horizon(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        domain(format!("horizon must be positive and finite, got {t}"))
    }
}

impl DyadicPath {
    pub fn new(horizon: f64, depth: u32, nodes: Vec<Point>) -> Result<Self> {
        check_horizon(horizon)?;
        check_depth(depth)?;
        if nodes.len() != (1usize << depth) + 1 {
            return domain(format!(
                "depth {depth} needs {} nodes, got {}",
                (1usize << depth) + 1,
                nodes.len()
            ));
        }
        let m = *nodes[0].manifold();
        if nodes.iter().any(|p| *p.manifold() != m) {
            return domain("path nodes on different manifolds");
        }
        Ok(DyadicPath { base_point: nodes[0].clone(), horizon, depth, nodes })
    }

    pub fn base_point(&self) -> &Point {
        &self.base_point
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn manifold(&self) -> &ManifoldSpec {
        self.base_point.manifold()
    }

    pub fn endpoint(&self) -> &Point {
        self.nodes.last().expect("paths have at least two nodes")
    }

    /// Time of node `j`.
    pub fn time(&self, j: usize) -> f64 {
        self.horizon * j as f64 / (1u64 << self.depth) as f64
    }

    /// Time step between consecutive nodes.
    pub fn step(&self) -> f64 {
        self.horizon / (1u64 << self.depth) as f64
    }

    /// The same path observed at the coarser depth `k`.
    pub fn at_depth(&self, k: u32) -> Result<DyadicPath> {
        if k > self.depth {
            return domain(format!("cannot coarsen depth {} to {k}", self.depth));
        }
        let stride = 1usize << (self.depth - k);
        let nodes = self.nodes.iter().step_by(stride).cloned().collect();
        Ok(DyadicPath { base_point: self.base_point.clone(), horizon: self.horizon, depth: k, nodes })
    }
}

/// Samples `x0 = c(0), c(t/2^k), …, c(t)` by sequential transitions.
pub fn sample_path<R: Rng + ?Sized>(rng: &mut R, x0: &Point, t: f64, k: u32) -> Result<DyadicPath> {
    check_horizon(t)?;
    check_depth(k)?;
    let n = 1usize << k;
    let dt = t / n as f64;
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(x0.clone());
    for j in 0..n {
        let next = sample_transition(rng, &nodes[j], dt)?;
        nodes.push(next);
    }
    Ok(DyadicPath { base_point: x0.clone(), horizon: t, depth: k, nodes })
}

/// Inserts a bridge-sampled midpoint between every pair of nodes.
pub fn refine<R: Rng + ?Sized>(path: &DyadicPath, rng: &mut R) -> Result<DyadicPath> {
    check_depth(path.depth + 1)?;
    let dt = path.step();
    let mut nodes = Vec::with_capacity(2 * path.nodes.len() - 1);
    for w in path.nodes.windows(2) {
        nodes.push(w[0].clone());
        nodes.push(sample_bridge_midpoint(rng, &w[0], &w[1], dt)?);
    }
    nodes.push(path.endpoint().clone());
    Ok(DyadicPath { base_point: path.base_point.clone(), horizon: path.horizon, depth: path.depth + 1, nodes })
}

/// A path from `x0` conditioned to end at `y`, built by recursive midpoint
/// bridging.
pub fn sample_bridge_path<R: Rng + ?Sized>(
    rng: &mut R,
    x0: &Point,
    y: &Point,
    t: f64,
    k: u32,
) -> Result<DyadicPath> {
    check_horizon(t)?;
    check_depth(k)?;
    if x0.manifold() != y.manifold() {
        return domain("bridge endpoints on different manifolds");
    }
    let mut path = DyadicPath { base_point: x0.clone(), horizon: t, depth: 0, nodes: vec![x0.clone(), y.clone()] };
    for _ in 0..k {
        path = refine(&path, rng)?;
    }
    Ok(path)
}

/// Largest distance between consecutive nodes.
pub fn max_step(path: &DyadicPath) -> f64 {
    path.nodes.windows(2).map(|w| distance_unchecked(&w[0], &w[1])).fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Sequential transitions from the base point.
    Forward,
    /// Recursive midpoint bridging between pinned endpoints.
    Bridge,
    /// Forward or bridge paths refined by bridge midpoints.
    Refined,
}

impl Scheme {
    fn code(self) -> u16 {
        match self {
            Scheme::Forward => 0,
            Scheme::Bridge => 1,
            Scheme::Refined => 2,
        }
    }

    fn from_code(c: u16) -> Option<Scheme> {
        match c {
            0 => Some(Scheme::Forward),
            1 => Some(Scheme::Bridge),
            2 => Some(Scheme::Refined),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub scheme: Scheme,
    /// Sphere transitions that were subdivided to respect the step guard.
    pub guards_triggered: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub paths: Vec<DyadicPath>,
    pub seed: u64,
    pub manifold: ManifoldSpec,
    pub meta: GenerationMeta,
}

impl PathEnsemble {
    pub fn new(paths: Vec<DyadicPath>, seed: u64, meta: GenerationMeta) -> Result<Self> {
        let first = paths.first().ok_or_else(|| Error::Domain("empty ensemble".into()))?;
        let manifold = *first.manifold();
        let consistent = paths.iter().all(|p| {
            p.base_point == first.base_point && p.horizon == first.horizon && p.depth == first.depth
        });
        if !consistent {
            return domain("ensemble paths differ in base point, horizon or depth");
        }
        Ok(PathEnsemble { paths, seed, manifold, meta })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn depth(&self) -> u32 {
        self.paths[0].depth
    }

    pub fn horizon(&self) -> f64 {
        self.paths[0].horizon
    }

    pub fn base_point(&self) -> &Point {
        &self.paths[0].base_point
    }

    pub fn at_depth(&self, k: u32) -> Result<PathEnsemble> {
        let paths = self.paths.iter().map(|p| p.at_depth(k)).collect::<Result<Vec<_>>>()?;
        Ok(PathEnsemble { paths, ..self.clone_header() })
    }

    fn clone_header(&self) -> PathEnsemble {
        PathEnsemble { paths: Vec::new(), seed: self.seed, manifold: self.manifold, meta: self.meta }
    }
}

fn check_count(n_paths: usize) -> Result<()> {
    if n_paths == 0 {
        domain("an ensemble needs at least one path")
    } else {
        Ok(())
    }
}

fn subdivided_transitions(x0: &Point, dt: f64, count: usize) -> u64 {
    match *x0.manifold() {
        ManifoldSpec::Sphere2 { radius } if sphere_substeps(dt, radius) > 1 => count as u64,
        _ => 0,
    }
}

/// `n_paths` forward paths from `x0`; path `i` uses its own random stream.
pub fn sample_ensemble(x0: &Point, t: f64, k: u32, n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    check_count(n_paths)?;
    check_horizon(t)?;
    check_depth(k)?;
    let key = StreamKey::new(seed, tags::FORWARD_PATHS);
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| sample_path(&mut key.stream(i as u64), x0, t, k))
        .collect::<Result<Vec<_>>>()?;
    let guards = subdivided_transitions(x0, t / (1u64 << k) as f64, n_paths << k);
    PathEnsemble::new(paths, seed, GenerationMeta { scheme: Scheme::Forward, guards_triggered: guards })
}

/// `n_paths` bridge paths from `x0` to `y`.
pub fn sample_bridge_ensemble(
    x0: &Point,
    y: &Point,
    t: f64,
    k: u32,
    n_paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    check_count(n_paths)?;
    let key = StreamKey::new(seed, tags::BRIDGE_PATHS);
    let paths = (0..n_paths)
        .into_par_iter()
        .map(|i| sample_bridge_path(&mut key.stream(i as u64), x0, y, t, k))
        .collect::<Result<Vec<_>>>()?;
    PathEnsemble::new(paths, seed, GenerationMeta { scheme: Scheme::Bridge, guards_triggered: 0 })
}

/// Refines every path of the ensemble by one level.
pub fn refine_ensemble(ensemble: &PathEnsemble) -> Result<PathEnsemble> {
    let key = StreamKey::new(ensemble.seed, tags::REFINE).child(ensemble.depth() as u64);
    let paths = ensemble
        .paths
        .par_iter()
        .enumerate()
        .map(|(i, p)| refine(p, &mut key.stream(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let meta = GenerationMeta { scheme: Scheme::Refined, ..ensemble.meta };
    PathEnsemble::new(paths, ensemble.seed, meta)
}

/// Columnar CSV: `path_id,j,time,c0[,c1,c2]`, one row per node.
pub fn write_csv<W: Write>(ensemble: &PathEnsemble, mut out: W) -> io::Result<()> {
    let dim = ensemble.manifold.coord_dim();
    write!(out, "path_id,j,time")?;
    for c in 0..dim {
        write!(out, ",c{c}")?;
    }
    writeln!(out)?;
    for (i, p) in ensemble.paths.iter().enumerate() {
        for (j, node) in p.nodes.iter().enumerate() {
            write!(out, "{i},{j},{}", p.time(j))?;
            for c in node.coords() {
                write!(out, ",{c}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

pub const BINARY_MAGIC: &[u8; 4] = b"DYAD";
pub const BINARY_VERSION: u16 = 1;

fn manifold_header(m: &ManifoldSpec) -> (u16, [f64; 2]) {
    match *m {
        ManifoldSpec::Euclidean { dim } => (0, [dim as f64, 0.0]),
        ManifoldSpec::Circle { radius } => (1, [radius, 0.0]),
        ManifoldSpec::FlatTorus { l1, l2 } => (2, [l1, l2]),
        ManifoldSpec::Sphere2 { radius } => (3, [radius, 0.0]),
    }
}

/// Compact little-endian binary layout; see `docs/formats.md`.
pub fn write_binary<W: Write>(ensemble: &PathEnsemble, mut out: W) -> io::Result<()> {
    let (kind, params) = manifold_header(&ensemble.manifold);
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&BINARY_VERSION.to_le_bytes())?;
    out.write_all(&kind.to_le_bytes())?;
    out.write_all(&(ensemble.manifold.coord_dim() as u16).to_le_bytes())?;
    out.write_all(&ensemble.meta.scheme.code().to_le_bytes())?;
    for p in params {
        out.write_all(&p.to_le_bytes())?;
    }
    out.write_all(&ensemble.seed.to_le_bytes())?;
    out.write_all(&(ensemble.len() as u64).to_le_bytes())?;
    out.write_all(&ensemble.depth().to_le_bytes())?;
    out.write_all(&ensemble.meta.guards_triggered.to_le_bytes())?;
    out.write_all(&ensemble.horizon().to_le_bytes())?;
    for p in &ensemble.paths {
        for node in &p.nodes {
            for c in node.coords() {
                out.write_all(&c.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf).map_err(|e| Error::Domain(format!("truncated ensemble file: {e}")))?;
    Ok(buf)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    Ok(u16::from_le_bytes(read_array(r)?))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

/// Reads an ensemble written by [`write_binary`].
pub fn read_binary<R: Read>(mut r: R) -> Result<PathEnsemble> {
    if &read_array::<4, _>(&mut r)? != BINARY_MAGIC {
        return domain("not a DYAD ensemble file");
    }
    let version = read_u16(&mut r)?;
    if version != BINARY_VERSION {
        return domain(format!("unsupported ensemble format version {version}"));
    }
    let kind = read_u16(&mut r)?;
    let dim = read_u16(&mut r)? as usize;
    let scheme = Scheme::from_code(read_u16(&mut r)?).ok_or_else(|| Error::Domain("unknown scheme".into()))?;
    let params = [read_f64(&mut r)?, read_f64(&mut r)?];
    let manifold = match kind {
        0 => ManifoldSpec::Euclidean { dim: params[0] as usize },
        1 => ManifoldSpec::Circle { radius: params[0] },
        2 => ManifoldSpec::FlatTorus { l1: params[0], l2: params[1] },
        3 => ManifoldSpec::Sphere2 { radius: params[0] },
        _ => return domain(format!("unknown manifold code {kind}")),
    };
    manifold.validate()?;
    if manifold.coord_dim() != dim {
        return domain("coordinate count does not match the manifold");
    }
    let seed = read_u64(&mut r)?;
    let n_paths = read_u64(&mut r)? as usize;
    let depth = read_u32(&mut r)?;
    check_depth(depth)?;
    let guards_triggered = read_u64(&mut r)?;
    let horizon = read_f64(&mut r)?;
    let n_nodes = (1usize << depth) + 1;
    let mut paths = Vec::with_capacity(n_paths.min(1 << 20));
    let mut coords = vec![0.0; dim];
    for _ in 0..n_paths {
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            for c in coords.iter_mut() {
                *c = read_f64(&mut r)?;
            }
            nodes.push(manifold.stored_point(&coords)?);
        }
        paths.push(DyadicPath::new(horizon, depth, nodes)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::Domain(e.to_string()))? != 0 {
        return domain("trailing bytes after ensemble data");
    }
    PathEnsemble::new(paths, seed, GenerationMeta { scheme, guards_triggered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_stderr;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn line() -> ManifoldSpec {
        ManifoldSpec::Euclidean { dim: 1 }
    }

    #[test]
    fn depth_zero_is_a_single_increment() {
        let x0 = line().point(&[0.3]).unwrap();
        let p = sample_path(&mut ChaCha8Rng::seed_from_u64(1), &x0, 0.5, 0).unwrap();
        let expected = sample_transition(&mut ChaCha8Rng::seed_from_u64(1), &x0, 0.5).unwrap();
        assert_eq!(p.nodes().len(), 2);
        assert_eq!(p.nodes()[0], x0);
        assert_eq!(p.nodes()[1], expected);
    }

    #[test]
    fn endpoint_law_is_independent_of_depth() {
        let x0 = line().point(&[1.0]).unwrap();
        for k in [0, 3, 6] {
            let ens = sample_ensemble(&x0, 0.7, k, 20_000, 5).unwrap();
            let ends: Vec<f64> = ens.paths.iter().map(|p| p.endpoint().coords()[0] - 1.0).collect();
            let m = mean_and_stderr(&ends);
            assert!(m.mean.abs() < 4.0 * m.stderr, "k={k}");
            let sq: Vec<f64> = ends.iter().map(|e| e * e).collect();
            let v = mean_and_stderr(&sq);
            assert!((v.mean - 1.4).abs() < 4.0 * v.stderr, "k={k}: {}", v.mean);
        }
    }

    #[test]
    fn ensembles_are_deterministic() {
        let s = ManifoldSpec::Sphere2 { radius: 1.0 };
        let x0 = s.sphere_point(1.0, 0.5).unwrap();
        let a = sample_ensemble(&x0, 0.2, 4, 50, 9).unwrap();
        let b = sample_ensemble(&x0, 0.2, 4, 50, 9).unwrap();
        assert_eq!(a, b);
        let c = sample_ensemble(&x0, 0.2, 4, 50, 10).unwrap();
        assert_ne!(a.paths[0], c.paths[0]);
    }

    #[test]
    fn refinement_keeps_nodes_and_has_bridge_variance() {
        let x0 = line().point(&[0.0]).unwrap();
        let ens = sample_ensemble(&x0, 1.0, 3, 20_000, 3).unwrap();
        let fine = refine_ensemble(&ens).unwrap();
        let dt = ens.paths[0].step();
        let mut dev = Vec::new();
        for (p, q) in ens.paths.iter().zip(&fine.paths) {
            assert_eq!(q.depth(), 4);
            assert_eq!(q.at_depth(3).unwrap(), *p);
            let n = q.nodes();
            dev.push(n[1].coords()[0] - 0.5 * (n[0].coords()[0] + n[2].coords()[0]));
        }
        let m = mean_and_stderr(&dev);
        assert!(m.mean.abs() < 4.0 * m.stderr);
        let sq: Vec<f64> = dev.iter().map(|d| d * d).collect();
        let v = mean_and_stderr(&sq);
        assert!((v.mean - dt / 2.0).abs() < 4.0 * v.stderr, "{} vs {}", v.mean, dt / 2.0);
        let ends_before: Vec<f64> = ens.paths.iter().map(|p| p.endpoint().coords()[0]).collect();
        let ends_after: Vec<f64> = fine.paths.iter().map(|p| p.endpoint().coords()[0]).collect();
        assert_eq!(ends_before, ends_after);
    }

    #[test]
    fn bridge_paths_are_pinned_and_straight_on_average() {
        let e2 = ManifoldSpec::Euclidean { dim: 2 };
        let x0 = e2.point(&[0.0, 0.0]).unwrap();
        let y = e2.point(&[2.0, -1.0]).unwrap();
        let ens = sample_bridge_ensemble(&x0, &y, 1.0, 3, 20_000, 4).unwrap();
        for p in &ens.paths {
            assert_eq!(p.nodes()[0], x0);
            assert_eq!(*p.endpoint(), y);
        }
        for j in 1..8 {
            let s = j as f64 / 8.0;
            for c in 0..2 {
                let xs: Vec<f64> = ens.paths.iter().map(|p| p.nodes()[j].coords()[c]).collect();
                let m = mean_and_stderr(&xs);
                let target = s * y.coords()[c];
                assert!((m.mean - target).abs() < 4.0 * m.stderr, "j={j} c={c}");
            }
        }
    }

    #[test]
    fn circle_loop_bridge_is_time_symmetric() {
        let circle = ManifoldSpec::Circle { radius: 1.0 };
        let x0 = circle.point(&[0.0]).unwrap();
        let ens = sample_bridge_ensemble(&x0, &x0, 2.0, 3, 20_000, 8).unwrap();
        for j in 1..4 {
            let diff: Vec<f64> = ens
                .paths
                .iter()
                .map(|p| p.nodes()[j].coords()[0].cos() - p.nodes()[8 - j].coords()[0].cos())
                .collect();
            let m = mean_and_stderr(&diff);
            assert!(m.mean.abs() < 4.0 * m.stderr, "j={j}");
        }
    }

    #[test]
    fn max_step_examples() {
        let x0 = line().point(&[0.0]).unwrap();
        let constant = DyadicPath::new(1.0, 2, vec![x0.clone(); 5]).unwrap();
        assert_eq!(max_step(&constant), 0.0);
        let nodes = (0..5).map(|j| line().point(&[0.25 * j as f64]).unwrap()).collect();
        let straight = DyadicPath::new(1.0, 2, nodes).unwrap();
        assert_eq!(max_step(&straight), 0.25);
    }

    #[test]
    fn sphere_cut_fraction_shrinks_with_depth() {
        let s = ManifoldSpec::Sphere2 { radius: 1.0 };
        let x0 = s.sphere_point(0.4, 0.0).unwrap();
        let ens = sample_ensemble(&x0, 3.0, 4, 4000, 12).unwrap();
        let frac = |k: u32| {
            let e = ens.at_depth(k).unwrap();
            e.paths.iter().filter(|p| max_step(p) >= s.cut_radius()).count() as f64 / e.len() as f64
        };
        let f: Vec<f64> = (0..=4).map(frac).collect();
        // At coarse depths a step is nearly uniform on the sphere; the
        // decrease sets in once steps are short compared with the radius.
        assert!(f[2] > f[3] && f[3] > f[4], "{f:?}");
        assert!(f[4] < 0.1 * f[2], "{f:?}");
    }

    #[test]
    fn euclidean_covariance_small_sample() {
        let x0 = line().point(&[0.0]).unwrap();
        let ens = sample_ensemble(&x0, 1.0, 2, 20_000, 21).unwrap();
        for (a, b) in [(1, 3), (2, 2), (2, 4)] {
            let prod: Vec<f64> =
                ens.paths.iter().map(|p| p.nodes()[a].coords()[0] * p.nodes()[b].coords()[0]).collect();
            let m = mean_and_stderr(&prod);
            let target = 2.0 * (a.min(b) as f64 / 4.0);
            assert!((m.mean - target).abs() < 4.0 * m.stderr, "({a},{b})");
        }
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let torus = ManifoldSpec::FlatTorus { l1: 1.0, l2: 2.0 * PI };
        let x0 = torus.point(&[0.5, 1.0]).unwrap();
        let ens = sample_ensemble(&x0, 0.3, 2, 3, 77).unwrap();
        let mut buf = Vec::new();
        write_binary(&ens, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"DYAD");
        let back = read_binary(buf.as_slice()).unwrap();
        assert_eq!(back, ens);
        let mut bad = buf.clone();
        bad.push(0);
        assert!(read_binary(bad.as_slice()).is_err());
        assert!(read_binary(&buf[..buf.len() - 1]).is_err());

        let mut csv = Vec::new();
        write_csv(&ens, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "path_id,j,time,c0,c1");
        assert_eq!(lines.len(), 1 + 3 * 5);
        assert_eq!(lines[1], "0,0,0,0.5,1");
    }

    #[test]
    fn sphere_ensembles_report_guards() {
        let s = ManifoldSpec::Sphere2 { radius: 1.0 };
        let x0 = s.sphere_point(1.0, 0.0).unwrap();
        assert_eq!(sample_ensemble(&x0, 0.2, 6, 4, 1).unwrap().meta.guards_triggered, 0);
        assert_eq!(sample_ensemble(&x0, 0.2, 2, 4, 1).unwrap().meta.guards_triggered, 16);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn refinement_retains_nodes(seed in any::<u64>(), k in 0u32..5, which in 0usize..3) {
            let (m, x0) = match which {
                0 => (line(), vec![0.2]),
                1 => (ManifoldSpec::Circle { radius: 1.5 }, vec![6.0]),
                _ => (ManifoldSpec::FlatTorus { l1: 1.0, l2: 3.0 }, vec![0.1, 2.9]),
            };
            let x0 = m.point(&x0).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = sample_path(&mut rng, &x0, 0.8, k).unwrap();
            let q = refine(&p, &mut rng).unwrap();
            for j in 0..p.nodes().len() {
                prop_assert_eq!(&q.nodes()[2 * j], &p.nodes()[j]);
            }
            prop_assert_eq!(q.at_depth(k).unwrap(), p);
        }
    }
}
