//! Experiment configuration: a partial, file-or-flag form that is merged and
//! then resolved into concrete library specs.
//!
//! Shorthands accepted for the catalog fields:
//!
//! | field        | forms                                                              |
//! |--------------|--------------------------------------------------------------------|
//! | `manifold`   | `euclidean:D`, `circle[:R]`, `torus:L1,L2`, `sphere2[:R]`           |
//! | `bundle`     | `trivial[:r]`, `levi-civita`, `circle_u1:α`, `su2_planar:a,b`, `su2_twisted:a,b`, `u1_matrix:α` |
//! | `potential`  | `zero`, `const:c`, `cos_theta`                                      |
//! | `observable` | `one`, `fourier:n`                                                  |
//! | `depths`     | `a..b` (inclusive) or an explicit list                              |

use std::path::{Path, PathBuf};

use dyadic_transport::bundle::{BundleSpec, Connection, MatrixForm};
use dyadic_transport::feynman_kac::Potential;
use dyadic_transport::manifold::{ManifoldSpec, Point};
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SamplePaths,
    TransportConvergence,
    FeynmanKac,
    HeatKernel,
    Chernoff,
    Exhaustion,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SamplePaths => "sample-paths",
            ExperimentKind::TransportConvergence => "transport-convergence",
            ExperimentKind::FeynmanKac => "feynman-kac",
            ExperimentKind::HeatKernel => "heat-kernel",
            ExperimentKind::Chernoff => "chernoff",
            ExperimentKind::Exhaustion => "exhaustion",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    /// Path ensembles only.
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PathScheme {
    Forward,
    Bridge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Depths {
    Range(String),
    List(Vec<u32>),
}

impl Depths {
    pub fn expand(&self) -> CliResult<Vec<u32>> {
        let v = match self {
            Depths::List(v) => v.clone(),
            Depths::Range(s) => {
                let Some((a, b)) = s.split_once("..") else {
                    return config_err(format!("depth range {s:?} is not of the form a..b"));
                };
                let b = b.strip_prefix('=').unwrap_or(b);
                let (a, b) = (parse_num::<u32>(a, "depths")?, parse_num::<u32>(b, "depths")?);
                if a > b {
                    return config_err(format!("empty depth range {s:?}"));
                }
                (a..=b).collect()
            }
        };
        if v.is_empty() || v.windows(2).any(|w| w[1] <= w[0]) {
            return config_err("depths must be a nonempty increasing list");
        }
        Ok(v)
    }
}

/// Partial configuration as read from a file or assembled from flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Option<ExperimentKind>,
    pub manifold: Option<String>,
    pub bundle: Option<String>,
    pub potential: Option<String>,
    pub observable: Option<String>,
    pub t: Option<f64>,
    pub depth: Option<u32>,
    pub depths: Option<Depths>,
    pub n_paths: Option<usize>,
    pub seed: Option<u64>,
    pub base_point: Option<Vec<f64>>,
    pub target_point: Option<Vec<f64>>,
    pub scheme: Option<PathScheme>,
    pub allow_biased: Option<bool>,
    pub ks: Option<Vec<usize>>,
    pub grid_points: Option<usize>,
    pub interval: Option<[f64; 2]>,
    pub alpha: Option<f64>,
    pub count: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ExperimentConfig {
    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_str(&text)?)
        } else {
            Ok(toml::from_str(&text)?)
        }
    }

    /// Fields set in `top` win.
    pub fn overlay(mut self, top: ExperimentConfig) -> Self {
        overlay!(
            self, top, kind, manifold, bundle, potential, observable, t, depth, depths, n_paths, seed, base_point,
            target_point, scheme, allow_biased, ks, grid_points, interval, alpha, count, output, format
        );
        self
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let kind = self.kind.ok_or_else(|| CliError::Config("experiment kind is required".into()))?;
        let manifold_id = self.manifold.clone().unwrap_or_else(|| "circle".into());
        let manifold = parse_manifold(&manifold_id)?;
        let bundle_id = self.bundle.clone().unwrap_or_else(|| "trivial".into());
        let bundle = parse_bundle(&bundle_id, manifold)?;
        let potential = self.potential.clone().unwrap_or_else(|| "zero".into());
        let _ = parse_potential(&potential)?;
        let observable = self.observable.clone().unwrap_or_else(|| "one".into());
        parse_observable(&observable, &manifold)?;
        let t = self.t.unwrap_or(1.0);
        if !(t.is_finite() && t > 0.0) {
            return config_err(format!("t must be positive, got {t}"));
        }
        let n_paths = self.n_paths.unwrap_or(10_000);
        if n_paths == 0 {
            return config_err("n_paths must be at least 1");
        }
        let base_point = match &self.base_point {
            Some(p) => p.clone(),
            None => default_point(&manifold)?,
        };
        manifold.point(&base_point)?;
        let target_point = self.target_point.clone().unwrap_or_else(|| base_point.clone());
        manifold.point(&target_point)?;
        let format = self.format.unwrap_or(match kind {
            ExperimentKind::SamplePaths | ExperimentKind::TransportConvergence => Format::Csv,
            _ => Format::Json,
        });
        if format == Format::Binary && kind != ExperimentKind::SamplePaths {
            return config_err("binary output is only available for sample-paths");
        }
        let ks = self.ks.clone().unwrap_or_else(|| vec![4, 8, 16, 32, 64]);
        if ks.is_empty() || ks.contains(&0) {
            return config_err("ks must be a nonempty list of positive integers");
        }
        let alpha = self.alpha.unwrap_or(match bundle.connection {
            Connection::CircleU1 { alpha } => alpha,
            _ => 0.0,
        });
        Ok(Resolved {
            kind,
            manifold_id,
            manifold,
            bundle_id,
            bundle,
            potential,
            observable,
            t,
            depth: self.depth.unwrap_or(6),
            depths: self.depths.clone().unwrap_or(Depths::Range("2..7".into())).expand()?,
            n_paths,
            seed: self.seed.unwrap_or(0),
            base_point,
            target_point,
            scheme: self.scheme.unwrap_or(PathScheme::Forward),
            allow_biased: self.allow_biased.unwrap_or(false),
            ks,
            grid_points: self.grid_points.unwrap_or(256),
            interval: self.interval,
            alpha,
            count: self.count.unwrap_or(6),
            output: self.output.clone(),
            format,
        })
    }
}

/// Fully defaulted configuration; echoed into every output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Resolved {
    pub kind: ExperimentKind,
    pub manifold_id: String,
    pub manifold: ManifoldSpec,
    pub bundle_id: String,
    pub bundle: BundleSpec,
    pub potential: String,
    pub observable: String,
    pub t: f64,
    pub depth: u32,
    pub depths: Vec<u32>,
    pub n_paths: usize,
    pub seed: u64,
    pub base_point: Vec<f64>,
    pub target_point: Vec<f64>,
    pub scheme: PathScheme,
    pub allow_biased: bool,
    pub ks: Vec<usize>,
    pub grid_points: usize,
    pub interval: Option<[f64; 2]>,
    pub alpha: f64,
    pub count: usize,
    pub output: Option<PathBuf>,
    pub format: Format,
}

impl Resolved {
    pub fn x(&self) -> Point {
        self.manifold.point(&self.base_point).expect("validated in resolve")
    }

    pub fn y(&self) -> Point {
        self.manifold.point(&self.target_point).expect("validated in resolve")
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, field: &str) -> CliResult<T> {
    s.trim().parse().map_err(|_| CliError::Config(format!("{field}: cannot parse {s:?}")))
}

fn split_id(id: &str) -> (&str, Option<&str>) {
    match id.split_once(':') {
        Some((a, b)) => (a.trim(), Some(b)),
        None => (id.trim(), None),
    }
}

fn params(arg: Option<&str>, field: &str, n: usize) -> CliResult<Vec<f64>> {
    let Some(arg) = arg else {
        return config_err(format!("{field} needs {n} parameter(s)"));
    };
    let v = arg.split(',').map(|s| parse_num::<f64>(s, field)).collect::<CliResult<Vec<_>>>()?;
    if v.len() != n {
        return config_err(format!("{field} needs {n} parameter(s), got {}", v.len()));
    }
    Ok(v)
}

pub fn parse_manifold(id: &str) -> CliResult<ManifoldSpec> {
    let (name, arg) = split_id(id);
    let spec = match name {
        "euclidean" => ManifoldSpec::Euclidean { dim: parse_num(arg.unwrap_or("1"), "manifold")? },
        "circle" => ManifoldSpec::Circle { radius: arg.map_or(Ok(1.0), |a| parse_num(a, "manifold"))? },
        "torus" => {
            let p = params(arg, "manifold torus", 2)?;
            ManifoldSpec::FlatTorus { l1: p[0], l2: p[1] }
        }
        "sphere2" => ManifoldSpec::Sphere2 { radius: arg.map_or(Ok(1.0), |a| parse_num(a, "manifold"))? },
        _ => return config_err(format!("unknown manifold {id:?}")),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn parse_bundle(id: &str, base: ManifoldSpec) -> CliResult<BundleSpec> {
    let (name, arg) = split_id(id);
    let spec = match name {
        "trivial" => BundleSpec::trivial(base, arg.map_or(Ok(1), |a| parse_num(a, "bundle"))?)?,
        "levi-civita" => BundleSpec::levi_civita_sphere(base)?,
        "circle_u1" => BundleSpec::circle_u1(base, params(arg, "bundle circle_u1", 1)?[0])?,
        "u1_matrix" => BundleSpec::matrix(base, MatrixForm::U1Circle { alpha: params(arg, "bundle u1_matrix", 1)?[0] })?,
        "su2_planar" => {
            let p = params(arg, "bundle su2_planar", 2)?;
            BundleSpec::matrix(base, MatrixForm::Su2Planar { a: p[0], b: p[1] })?
        }
        "su2_twisted" => {
            let p = params(arg, "bundle su2_twisted", 2)?;
            BundleSpec::matrix(base, MatrixForm::Su2Twisted { a: p[0], b: p[1] })?
        }
        _ => return config_err(format!("unknown bundle {id:?}")),
    };
    Ok(spec)
}

/// Returns the potential together with `θ ↦ V(θ)` when it depends on the
/// first coordinate only (used by the circle oracle).
pub fn parse_potential(id: &str) -> CliResult<(Potential, Box<dyn Fn(f64) -> f64 + Send + Sync>)> {
    let (name, arg) = split_id(id);
    Ok(match name {
        "zero" => (Potential::zero(), Box::new(|_| 0.0)),
        "const" => {
            let c = params(arg, "potential const", 1)?[0];
            (Potential::constant(c), Box::new(move |_| c))
        }
        "cos_theta" => (Potential::cos_theta(), Box::new(f64::cos)),
        _ => return config_err(format!("unknown potential {id:?}")),
    })
}

/// Fourier mode index of the observable; `one` is mode 0.
pub fn parse_observable(id: &str, manifold: &ManifoldSpec) -> CliResult<i32> {
    let (name, arg) = split_id(id);
    match name {
        "one" => Ok(0),
        "fourier" => {
            if !matches!(manifold, ManifoldSpec::Circle { .. }) {
                return config_err("fourier observables need a circle base");
            }
            parse_num(arg.unwrap_or(""), "observable fourier")
        }
        _ => config_err(format!("unknown observable {id:?}")),
    }
}

fn default_point(m: &ManifoldSpec) -> CliResult<Vec<f64>> {
    Ok(match *m {
        ManifoldSpec::Sphere2 { .. } => m.sphere_point(std::f64::consts::FRAC_PI_3, 0.0)?.coords().to_vec(),
        _ => vec![0.0; m.coord_dim()],
    })
}
