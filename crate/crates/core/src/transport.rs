//! Transport along dyadic paths: the finite-depth products
//! `P(c(t), c(t − Δ)) ⋯ P(c(Δ), c(0))`, the pairing with a section at the
//! endpoint, and the depth-to-depth convergence study.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bundle::{circle_step_angle, cutoff_transport_unchecked, sharp_map, BundleSpec, Covector, FiberVector, TransportOp};
use crate::error::{domain, Result};
use crate::manifold::ManifoldSpec;
use crate::paths::{DyadicPath, PathEnsemble};
use crate::stats::{mean_and_stderr, pairwise_sum};

/// Transported vector at the path endpoint, or zero if any factor was cut
/// off.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportResult {
    pub value: FiberVector,
    pub rejected: bool,
    pub depth: u32,
}

fn check_path(path: &DyadicPath, spec: &BundleSpec) -> Result<()> {
    if *path.manifold() != spec.base {
        return domain(format!("path on {:?} but bundle over {:?}", path.manifold(), spec.base));
    }
    Ok(())
}

/// The full transport from the fiber over `c(0)` to the fiber over `c(t)`,
/// applying the earliest step first. Rejected paths give the zero operator.
pub fn endpoint_operator(path: &DyadicPath, spec: &BundleSpec) -> Result<TransportOp> {
    check_path(path, spec)?;
    let nodes = path.nodes();
    let mut op = TransportOp::identity(nodes[0].clone(), spec.rank);
    for w in nodes.windows(2) {
        let step = cutoff_transport_unchecked(&w[1], &w[0], spec);
        if step.is_zero {
            return Ok(TransportOp::zero(nodes[0].clone(), path.endpoint().clone(), spec.rank));
        }
        op = op.then(&step);
    }
    Ok(op)
}

pub fn transport_product(path: &DyadicPath, v: &FiberVector, spec: &BundleSpec) -> Result<TransportResult> {
    if v.fiber != *path.base_point() {
        return domain("vector is not in the fiber over the path's base point");
    }
    if v.rank() != spec.rank {
        return domain(format!("vector of rank {} in a rank {} bundle", v.rank(), spec.rank));
    }
    let op = endpoint_operator(path, spec)?;
    Ok(TransportResult { value: op.apply(v)?, rejected: op.is_zero, depth: path.depth() })
}

/// `⟨η(c(t)), P v⟩` with `v = ω♯`.
pub fn pairing_functional(
    path: &DyadicPath,
    omega: &Covector,
    eta_value: &FiberVector,
    spec: &BundleSpec,
) -> Result<Complex64> {
    if eta_value.fiber != *path.endpoint() {
        return domain("section value is not in the fiber over the path endpoint");
    }
    if eta_value.rank() != spec.rank {
        return domain("section value has the wrong rank");
    }
    let v = sharp_map(omega);
    let moved = transport_product(path, &v, spec)?;
    Ok(eta_value.inner(&moved.value))
}

/// Sum of signed short-arc increments `θ_{j+1} − θ_j` of a circle path.
pub fn accumulated_angle(path: &DyadicPath) -> Result<f64> {
    if !matches!(path.manifold(), ManifoldSpec::Circle { .. }) {
        return domain("accumulated angle is defined for circle paths");
    }
    let steps: Vec<f64> = path.nodes().windows(2).map(|w| circle_step_angle(&w[0], &w[1])).collect();
    Ok(pairwise_sum(&steps))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub k: u32,
    /// Mean of `‖P_{k+1} v − P_k v‖²` over the ensemble.
    pub mean_sq_diff: f64,
    pub stderr: f64,
    /// Fraction of paths rejected at depth `k`.
    pub rejection_rate: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

pub const CONVERGENCE_CSV_HEADER: &str = "k,mean_sq_diff,stderr,rejection_rate,n_paths,seed";

impl ConvergenceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CONVERGENCE_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.k, r.mean_sq_diff, r.stderr, r.rejection_rate, r.n_paths, r.seed
            ));
        }
        s
    }

    pub fn row(&self, k: u32) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.k == k)
    }
}

/// For each `k` in `depths`, compares `P_{k+1} v` with `P_k v` on the same
/// paths. The ensemble must have depth at least `max(depths) + 1`; rejected
/// paths contribute the zero vector.
pub fn convergence_study(
    ensemble: &PathEnsemble,
    v: &FiberVector,
    spec: &BundleSpec,
    depths: &[u32],
) -> Result<ConvergenceTable> {
    let top = match depths.iter().max() {
        Some(&k) => k,
        None => return domain("no depths requested"),
    };
    if ensemble.is_empty() {
        return domain("empty ensemble");
    }
    let base = ensemble.base_point();
    let depth = ensemble.depth();
    let consistent = ensemble.paths.iter().all(|p| {
        p.depth() == depth && p.base_point() == base && p.horizon() == ensemble.horizon()
    });
    if !consistent {
        return domain("ensemble paths do not share depth, horizon and base point");
    }
    if top + 1 > depth {
        return domain(format!("depth {} needs an ensemble of depth {}, got {depth}", top, top + 1));
    }
    let lo = *depths.iter().min().expect("non-empty");
    // Per path: (P_k v, rejected) for k = lo..=top+1.
    let per_path: Vec<Vec<(FiberVector, bool)>> = ensemble
        .paths
        .par_iter()
        .map(|p| {
            (lo..=top + 1)
                .map(|k| {
                    let r = transport_product(&p.at_depth(k)?, v, spec)?;
                    Ok((r.value, r.rejected))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let n = ensemble.len();
    let rows = depths
        .iter()
        .map(|&k| {
            let i = (k - lo) as usize;
            let sq: Vec<f64> = per_path
                .iter()
                .map(|row| (&row[i + 1].0.components - &row[i].0.components).norm_squared())
                .collect();
            let rejected = per_path.iter().filter(|row| row[i].1).count();
            let m = mean_and_stderr(&sq);
            ConvergenceRow {
                k,
                mean_sq_diff: m.mean,
                stderr: m.stderr,
                rejection_rate: rejected as f64 / n as f64,
                n_paths: n,
                seed: ensemble.seed,
            }
        })
        .collect();
    Ok(ConvergenceTable { rows })
}
