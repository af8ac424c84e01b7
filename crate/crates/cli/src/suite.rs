//! Acceptance suites: experiments paired with metric thresholds.
//!
//! ```toml
//! [[experiment]]
//! name = "exhaustion"
//! config = { kind = "exhaustion", t = 0.25 }
//! checks = [{ metric = "terminal_gap", max = 1e-10 }]
//! ```

use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::run::run;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    #[serde(default)]
    pub experiment: Vec<SuiteExperiment>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteExperiment {
    pub name: String,
    pub config: ExperimentConfig,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub metric: String,
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Check {
    fn admits(&self, v: f64) -> bool {
        !v.is_nan() && self.min.is_none_or(|m| v >= m) && self.max.is_none_or(|m| v <= m)
    }

    fn bounds(&self) -> String {
        match (self.min, self.max) {
            (Some(a), Some(b)) => format!("[{a:e}, {b:e}]"),
            (Some(a), None) => format!(">= {a:e}"),
            (None, Some(b)) => format!("<= {b:e}"),
            (None, None) => "any".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        })
    }
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub experiment: String,
    pub metric: String,
    pub status: Status,
    pub note: String,
}

impl Suite {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)?;
        let suite: Suite = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        if suite.experiment.is_empty() {
            return Err(CliError::Suite("no experiments".into()));
        }
        for e in &suite.experiment {
            if e.checks.is_empty() {
                return Err(CliError::Suite(format!("experiment {:?} has no checks", e.name)));
            }
            if let Some(c) = e.checks.iter().find(|c| c.min.is_none() && c.max.is_none()) {
                return Err(CliError::Suite(format!("check {:?} in {:?} has no threshold", c.metric, e.name)));
            }
        }
        Ok(suite)
    }

    /// Runs every experiment. Output paths in suite configs are ignored.
    pub fn verify(&self) -> Vec<CheckResult> {
        let mut results = Vec::new();
        for e in &self.experiment {
            let config = ExperimentConfig { output: None, ..e.config.clone() };
            let outcome = config.resolve().and_then(|r| run(&r));
            for check in &e.checks {
                let (status, note) = match &outcome {
                    Err(err) => (Status::Fail, format!("experiment failed: {err}")),
                    Ok(o) => match (o.metrics.get(&check.metric), o.skipped.get(&check.metric)) {
                        (Some(&v), _) => {
                            let s = if check.admits(v) { Status::Pass } else { Status::Fail };
                            (s, format!("{v:e} vs {}", check.bounds()))
                        }
                        (None, Some(reason)) => (Status::Skip, format!("skipped: {reason}")),
                        (None, None) => (Status::Fail, "metric not produced by this experiment".into()),
                    },
                };
                results.push(CheckResult { experiment: e.name.clone(), metric: check.metric.clone(), status, note });
            }
        }
        results
    }
}
