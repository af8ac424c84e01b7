//! Experiment execution. Each experiment produces a result payload plus a
//! flat map of scalar metrics that suites compare against thresholds.

use std::collections::BTreeMap;

use dyadic_transport::bundle::{Connection, FiberVector};
use dyadic_transport::feynman_kac::{fk_estimate, heat_kernel_estimate, EnsembleParams};
use dyadic_transport::heat::{heat_kernel, twisted_circle_kernel};
use dyadic_transport::linalg::{c, CMat, CVec};
use dyadic_transport::manifold::{ManifoldSpec, Point};
use dyadic_transport::paths::{max_step, sample_bridge_ensemble, sample_ensemble, write_binary, write_csv, PathEnsemble};
use dyadic_transport::reference::chernoff::{chernoff_report, ChernoffDomain};
use dyadic_transport::reference::exhaustion::{exhaustion_convergence, symmetric_intervals};
use dyadic_transport::reference::spectral::spectral_semigroup_circle;
use dyadic_transport::stats::mean_and_stderr;
use dyadic_transport::transport::convergence_study;
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{parse_observable, parse_potential, ExperimentKind, Format, PathScheme, Resolved};
use crate::error::{config_err, CliResult};

pub const SCHEMA_VERSION: u32 = 1;
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub enum Table {
    Csv(String),
    Paths(PathEnsemble),
    None,
}

pub struct Outcome {
    pub result: Value,
    pub table: Table,
    pub metrics: BTreeMap<String, f64>,
    /// Metrics that could not be produced, with the reason.
    pub skipped: BTreeMap<String, String>,
}

impl Outcome {
    fn new(result: Value, table: Table) -> Self {
        Outcome { result, table, metrics: BTreeMap::new(), skipped: BTreeMap::new() }
    }

    fn metric(&mut self, name: &str, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    fn skip(&mut self, name: &str, reason: impl Into<String>) {
        self.skipped.insert(name.into(), reason.into());
    }
}

pub fn run(cfg: &Resolved) -> CliResult<Outcome> {
    match cfg.kind {
        ExperimentKind::SamplePaths => sample_paths(cfg),
        ExperimentKind::TransportConvergence => transport(cfg),
        ExperimentKind::FeynmanKac => feynman_kac(cfg),
        ExperimentKind::HeatKernel => kernel(cfg),
        ExperimentKind::Chernoff => chernoff(cfg),
        ExperimentKind::Exhaustion => exhaustion(cfg),
    }
}

/// Metadata block shared by JSON outputs, CSV comment headers and binary
/// sidecars.
pub fn envelope(cfg: &Resolved) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "tool": "dyadic",
        "version": VERSION,
        "experiment": cfg.kind.name(),
        "config": cfg,
    })
}

/// Serializes the primary artifact in the configured format.
pub fn render(cfg: &Resolved, out: &Outcome) -> CliResult<Vec<u8>> {
    let mut env = envelope(cfg);
    match cfg.format {
        Format::Json => {
            env["result"] = out.result.clone();
            env["metrics"] = serde_json::to_value(&out.metrics)?;
            env["skipped"] = serde_json::to_value(&out.skipped)?;
            let mut s = serde_json::to_string_pretty(&env)?;
            s.push('\n');
            Ok(s.into_bytes())
        }
        Format::Csv => {
            let mut buf = format!(
                "# dyadic {VERSION} schema_version={SCHEMA_VERSION}\n# config {}\n",
                serde_json::to_string(&env["config"])?
            )
            .into_bytes();
            match &out.table {
                Table::Csv(s) => buf.extend_from_slice(s.as_bytes()),
                Table::Paths(ens) => write_csv(ens, &mut buf)?,
                Table::None => return config_err(format!("{} has no CSV form", cfg.kind.name())),
            }
            Ok(buf)
        }
        Format::Binary => match &out.table {
            Table::Paths(ens) => {
                let mut buf = Vec::new();
                write_binary(ens, &mut buf)?;
                Ok(buf)
            }
            _ => config_err("binary output is only available for sample-paths"),
        },
    }
}

fn params(cfg: &Resolved) -> EnsembleParams {
    EnsembleParams { depth: cfg.depth, n_paths: cfg.n_paths, seed: cfg.seed }
}

fn complex_json(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn sample_paths(cfg: &Resolved) -> CliResult<Outcome> {
    let ens = match cfg.scheme {
        PathScheme::Forward => sample_ensemble(&cfg.x(), cfg.t, cfg.depth, cfg.n_paths, cfg.seed)?,
        PathScheme::Bridge => sample_bridge_ensemble(&cfg.x(), &cfg.y(), cfg.t, cfg.depth, cfg.n_paths, cfg.seed)?,
    };
    let worst_step = ens.paths.iter().map(max_step).fold(0.0, f64::max);
    let result = json!({
        "n_paths": ens.len(),
        "depth": ens.depth(),
        "horizon": ens.horizon(),
        "meta": ens.meta,
        "paths": ens.paths.iter().map(|p| p.nodes().iter().map(|n| n.coords().to_vec()).collect::<Vec<_>>()).collect::<Vec<_>>(),
    });
    let mut out = Outcome::new(result, Table::Paths(ens.clone()));
    out.metric("guards_triggered", ens.meta.guards_triggered as f64);
    out.metric("max_step", worst_step);
    if matches!(cfg.manifold, ManifoldSpec::Euclidean { .. }) && cfg.scheme == PathScheme::Forward {
        // Each coordinate of the endpoint has variance 2t about the base point.
        let x0 = cfg.base_point[0];
        let sq: Vec<f64> = ens.paths.iter().map(|p| (p.endpoint().coords()[0] - x0).powi(2)).collect();
        let m = mean_and_stderr(&sq);
        out.metric("endpoint_second_moment_sigma", (m.mean - 2.0 * cfg.t).abs() / m.stderr);
    } else {
        out.skip("endpoint_second_moment_sigma", "closed-form endpoint law only for forward Euclidean paths");
    }
    Ok(out)
}

fn unit_vector(x: Point, rank: usize) -> CliResult<FiberVector> {
    let mut comps = vec![c(0.0, 0.0); rank];
    comps[0] = c(1.0, 0.0);
    Ok(FiberVector::new(x, comps)?)
}

fn transport(cfg: &Resolved) -> CliResult<Outcome> {
    let top = *cfg.depths.last().expect("nonempty");
    let ens = sample_ensemble(&cfg.x(), cfg.t, top + 1, cfg.n_paths, cfg.seed)?;
    let v = unit_vector(cfg.x(), cfg.bundle.rank)?;
    let table = convergence_study(&ens, &v, &cfg.bundle, &cfg.depths)?;
    let mut violations = 0;
    for w in table.rows.windows(2) {
        let slack = 4.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        violations += (w[1].mean_sq_diff > w[0].mean_sq_diff + slack) as usize;
    }
    let first = table.rows[0].mean_sq_diff;
    let last = table.rows.last().expect("nonempty").mean_sq_diff;
    let mut out = Outcome::new(serde_json::to_value(&table)?, Table::Csv(table.to_csv()));
    out.metric("final_over_initial", if first > 0.0 { last / first } else if last == 0.0 { 0.0 } else { f64::INFINITY });
    out.metric("max_mean_sq_diff", table.rows.iter().map(|r| r.mean_sq_diff).fold(0.0, f64::max));
    out.metric("max_rejection_rate", table.rows.iter().map(|r| r.rejection_rate).fold(0.0, f64::max));
    out.metric("nonincreasing_violations", violations as f64);
    Ok(out)
}

fn feynman_kac(cfg: &Resolved) -> CliResult<Outcome> {
    let (pot, v) = parse_potential(&cfg.potential)?;
    let n = parse_observable(&cfg.observable, &cfg.manifold)?;
    let rank = cfg.bundle.rank;
    let eta = move |p: &Point| {
        let mut out = CVec::zeros(rank);
        out[0] = if n == 0 { c(1.0, 0.0) } else { Complex64::from_polar(1.0, n as f64 * p.coords()[0]) };
        out
    };
    let est = fk_estimate(&cfg.x(), cfg.t, &eta, &pot, &cfg.bundle, &params(cfg))?;
    let oracle: Result<Complex64, String> = match (cfg.manifold, cfg.bundle.connection) {
        (ManifoldSpec::Circle { radius }, conn) if radius == 1.0 && rank == 1 => {
            let alpha = match conn {
                Connection::TrivialFlat => Some(0.0),
                Connection::CircleU1 { alpha } => Some(alpha),
                _ => None,
            };
            match alpha {
                Some(alpha) => {
                    let f = |th: f64| if n == 0 { c(1.0, 0.0) } else { Complex64::from_polar(1.0, n as f64 * th) };
                    let sol = spectral_semigroup_circle(alpha, Some(&*v), cfg.t, &f, &[cfg.x().coords()[0]])?;
                    Ok(sol.values[0])
                }
                None => Err("spectral oracle covers only the trivial and U(1) circle connections".into()),
            }
        }
        (ManifoldSpec::Euclidean { .. } | ManifoldSpec::FlatTorus { .. }, Connection::TrivialFlat)
            if n == 0 && cfg.potential != "cos_theta" =>
        {
            Ok(c((-cfg.t * v(0.0)).exp(), 0.0))
        }
        _ => Err(format!("no oracle for {} with bundle {}", cfg.manifold_id, cfg.bundle_id)),
    };
    let value = est.value.components[0];
    let se = est.stderr_norm();
    let mut result = json!({
        "value": est.value.components.iter().map(|z| complex_json(*z)).collect::<Vec<_>>(),
        "stderr": est.stderr,
        "n_paths": est.n_paths,
        "depth": est.depth,
        "rejection_rate": est.rejection_rate,
    });
    let oracle_sigma = oracle.as_ref().ok().map(|o| {
        let mut target = vec![c(0.0, 0.0); rank];
        target[0] = *o;
        est.sigma_distance(&target)
    });
    result["oracle"] = match &oracle {
        Ok(o) => json!({ "value": complex_json(*o), "sigma_distance": oracle_sigma }),
        Err(reason) => json!({ "skipped": reason }),
    };
    let mut out = Outcome::new(result, Table::None);
    out.metric("value_re", value.re);
    out.metric("value_im", value.im);
    out.metric("stderr_norm", se);
    out.metric("rel_stderr", if value.norm() > 0.0 { se / value.norm() } else { f64::INFINITY });
    out.metric("rejection_rate", est.rejection_rate);
    match (oracle, oracle_sigma) {
        (Ok(o), Some(s)) => {
            out.metric("oracle_re", o.re);
            out.metric("oracle_im", o.im);
            out.metric("oracle_sigma", s);
        }
        (Err(reason), _) => out.skip("oracle_sigma", reason),
        (Ok(_), None) => unreachable!("sigma is computed whenever the oracle exists"),
    }
    Ok(out)
}

fn kernel(cfg: &Resolved) -> CliResult<Outcome> {
    let (x, y) = (cfg.x(), cfg.y());
    let est = heat_kernel_estimate(cfg.t, &x, &y, &cfg.bundle, &params(cfg), cfg.allow_biased)?;
    let rank = cfg.bundle.rank;
    let oracle: Result<CMat, String> = match (cfg.manifold, cfg.bundle.connection) {
        (ManifoldSpec::Circle { radius }, Connection::CircleU1 { alpha }) => {
            Ok(CMat::from_element(1, 1, twisted_circle_kernel(radius, alpha, cfg.t, x.coords()[0], y.coords()[0])))
        }
        (ManifoldSpec::Sphere2 { .. }, _) => Err("sphere bridges are approximate; no exact comparison".into()),
        (_, Connection::TrivialFlat) => {
            Ok(CMat::from_diagonal_element(rank, rank, c(heat_kernel(cfg.t, &x, &y)?, 0.0)))
        }
        _ => Err(format!("no closed-form kernel for bundle {}", cfg.bundle_id)),
    };
    let norm = est.op_norm();
    let se = est.stderr_norm();
    let matrix_json = |m: &CMat| -> Value {
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| complex_json(m[(i, j)])).collect::<Vec<_>>()).collect()
    };
    let mut result = json!({
        "value": matrix_json(&est.value),
        "stderr_norm": se,
        "scalar": est.scalar,
        "op_norm": norm,
        "n_paths": est.n_paths,
        "rejection_rate": est.rejection_rate,
    });
    result["oracle"] = match &oracle {
        Ok(o) => json!({ "value": matrix_json(o), "sigma_distance": est.sigma_distance(o) }),
        Err(reason) => json!({ "skipped": reason }),
    };
    let mut out = Outcome::new(result, Table::None);
    out.metric("op_norm", norm);
    out.metric("scalar", est.scalar);
    out.metric("ratio", norm / est.scalar);
    // Same relative floor as the library's diamagnetic report.
    out.metric("excess_sigma", (norm - est.scalar) / se.max(1e-12 * est.scalar));
    out.metric("stderr_norm", se);
    out.metric("rejection_rate", est.rejection_rate);
    match oracle {
        Ok(o) => out.metric("oracle_sigma", est.sigma_distance(&o)),
        Err(reason) => out.skip("oracle_sigma", reason),
    }
    Ok(out)
}

fn chernoff(cfg: &Resolved) -> CliResult<Outcome> {
    let domain = match cfg.interval {
        Some([a, b]) => ChernoffDomain::Interval { a, b },
        None => {
            if cfg.manifold != (ManifoldSpec::Circle { radius: 1.0 }) {
                return config_err("chernoff runs on the unit circle or on an `interval`");
            }
            match cfg.bundle.connection {
                Connection::TrivialFlat if cfg.bundle.rank == 1 => ChernoffDomain::Circle { alpha: 0.0 },
                Connection::CircleU1 { alpha } => ChernoffDomain::Circle { alpha },
                _ => return config_err("chernoff supports the trivial line bundle and circle_u1 only"),
            }
        }
    };
    let report = chernoff_report(&domain, cfg.t, &cfg.ks, cfg.grid_points)?;
    let mut csv = String::from("k,sup_error\n");
    for r in &report.rows {
        csv.push_str(&format!("{},{}\n", r.k, r.sup_error));
    }
    let mut out = Outcome::new(serde_json::to_value(&report)?, Table::Csv(csv));
    for r in &report.rows {
        out.metric(&format!("error_k{}", r.k), r.sup_error);
    }
    if let (Some(e8), Some(e64)) = (report.error_at(8), report.error_at(64)) {
        out.metric("error_k64_over_k8", e64 / e8);
    }
    out.metric("strictly_decreasing", report.strictly_decreasing() as u8 as f64);
    out.metric("contraction", report.contraction);
    out.metric("resolution_warning", report.warning.is_some() as u8 as f64);
    Ok(out)
}

fn exhaustion(cfg: &Resolved) -> CliResult<Outcome> {
    if cfg.count == 0 {
        return config_err("count must be at least 1");
    }
    let table = exhaustion_convergence(
        cfg.t,
        cfg.base_point[0],
        cfg.target_point[0],
        cfg.alpha,
        &symmetric_intervals(cfg.count),
    )?;
    let mut csv = String::from("j,a,b,value,deficit,free,twisted_modulus\n");
    for r in &table.rows {
        csv.push_str(&format!("{},{},{},{},{},{},{}\n", r.j, r.a, r.b, r.value, r.deficit, r.free, r.twisted_modulus));
    }
    let mut out = Outcome::new(serde_json::to_value(&table)?, Table::Csv(csv));
    out.metric("monotonicity_violations", table.monotonicity_violations() as f64);
    out.metric("domination_violations", table.domination_violations() as f64);
    out.metric("terminal_gap", table.terminal_gap());
    Ok(out)
}
