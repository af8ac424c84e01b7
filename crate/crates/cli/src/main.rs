//! `dyadic`: runs path-integral experiments and acceptance suites.
//!
//! Thread count comes from `DYADIC_THREADS`; results do not depend on it.

mod config;
mod error;
mod output;
mod run;
mod suite;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{Depths, ExperimentConfig, ExperimentKind, Format, PathScheme};
use crate::error::{CliError, CliResult};
use crate::suite::{Status, Suite};

#[derive(Parser)]
#[command(name = "dyadic", version, about = "Dyadic path-integral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment; flags override values from --config.
    Run(RunArgs),
    /// Run an acceptance suite and compare metrics against its thresholds.
    Verify { suite: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    #[arg(value_enum)]
    kind: Option<ExperimentKind>,
    /// TOML or JSON (by extension) experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifold: Option<String>,
    #[arg(long)]
    bundle: Option<String>,
    #[arg(long)]
    potential: Option<String>,
    #[arg(long)]
    observable: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    #[arg(long)]
    depth: Option<u32>,
    /// Inclusive range `a..b`.
    #[arg(long)]
    depths: Option<String>,
    #[arg(long)]
    n_paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    base_point: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target_point: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    scheme: Option<PathScheme>,
    #[arg(long)]
    allow_biased: bool,
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    interval: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl RunArgs {
    fn flags(&self) -> CliResult<ExperimentConfig> {
        let interval = match &self.interval {
            None => None,
            Some(v) if v.len() == 2 => Some([v[0], v[1]]),
            Some(_) => return Err(CliError::Config("--interval takes two values a,b".into())),
        };
        Ok(ExperimentConfig {
            kind: self.kind,
            manifold: self.manifold.clone(),
            bundle: self.bundle.clone(),
            potential: self.potential.clone(),
            observable: self.observable.clone(),
            t: self.t,
            depth: self.depth,
            depths: self.depths.clone().map(Depths::Range),
            n_paths: self.n_paths,
            seed: self.seed,
            base_point: self.base_point.clone(),
            target_point: self.target_point.clone(),
            scheme: self.scheme,
            allow_biased: self.allow_biased.then_some(true),
            ks: self.ks.clone(),
            grid_points: self.grid_points,
            interval,
            alpha: self.alpha,
            count: self.count,
            output: self.output.clone(),
            format: self.format,
        })
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("DYADIC_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("DYADIC_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}

fn run_command(args: &RunArgs) -> CliResult<()> {
    let file = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let cfg = file.overlay(args.flags()?).resolve()?;
    let outcome = run::run(&cfg)?;
    let bytes = run::render(&cfg, &outcome)?;
    match &cfg.output {
        Some(path) => {
            output::write_atomic(path, &bytes)?;
            if cfg.format == Format::Binary {
                let meta = serde_json::to_string_pretty(&run::envelope(&cfg))? + "\n";
                output::write_atomic(&output::sidecar_path(path), meta.as_bytes())?;
            }
        }
        None if cfg.format == Format::Binary => {
            return Err(CliError::Config("binary output needs --output".into()));
        }
        None => std::io::stdout().write_all(&bytes)?,
    }
    for (name, v) in &outcome.metrics {
        eprintln!("{name} = {v:e}");
    }
    for (name, reason) in &outcome.skipped {
        eprintln!("{name} skipped: {reason}");
    }
    Ok(())
}

fn verify_command(path: &PathBuf) -> CliResult<bool> {
    let suite = Suite::from_file(path)?;
    let results = suite.verify();
    let width = results.iter().map(|r| r.experiment.len()).max().unwrap_or(0);
    for r in &results {
        println!("{}  {:width$}  {:28}  {}", r.status, r.experiment, r.metric, r.note);
    }
    let count = |s| results.iter().filter(|r| r.status == s).count();
    let failed = count(Status::Fail);
    println!("{} passed, {failed} failed, {} skipped", count(Status::Pass), count(Status::Skip));
    Ok(failed == 0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": first } }));
            return ExitCode::from(2);
        }
    };
    let result = configure_threads().and_then(|_| match &cli.command {
        Command::Run(args) => run_command(args).map(|_| true),
        Command::Verify { suite } => verify_command(suite),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", json!({ "error": { "kind": e.kind(), "message": e.to_string() } }));
            ExitCode::from(2)
        }
    }
}
