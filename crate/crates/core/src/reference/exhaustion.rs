//! Dirichlet kernels of an increasing family of intervals and their
//! approach to the free kernel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::heat::{dirichlet_deficit, gaussian};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionRow {
    pub j: usize,
    pub a: f64,
    pub b: f64,
    /// `h^{(j)}(t, x, y)`.
    pub value: f64,
    /// `h(t, x, y) − h^{(j)}(t, x, y)`, computed without cancellation.
    pub deficit: f64,
    /// Free kernel `h(t, x, y)`.
    pub free: f64,
    /// `|h_α^{(j)}(t, x, y)|` for the connection `d + iα dx`, which on an
    /// interval is gauge equivalent to the trivial one.
    pub twisted_modulus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionTable {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub alpha: f64,
    pub rows: Vec<ExhaustionRow>,
}

impl ExhaustionTable {
    /// Number of consecutive rows whose deficit fails to decrease strictly.
    pub fn monotonicity_violations(&self) -> usize {
        self.rows.windows(2).filter(|w| !(w[1].deficit < w[0].deficit)).count()
    }

    /// Rows whose Dirichlet or twisted value exceeds the free kernel.
    pub fn domination_violations(&self) -> usize {
        self.rows.iter().filter(|r| r.value > r.free || r.twisted_modulus > r.free || r.deficit < 0.0).count()
    }

    pub fn terminal_gap(&self) -> f64 {
        self.rows.last().map_or(f64::INFINITY, |r| r.deficit)
    }
}

/// Kernels on the nested intervals `domains`, which must increase and
/// contain `x` and `y`.
pub fn exhaustion_convergence(t: f64, x: f64, y: f64, alpha: f64, domains: &[(f64, f64)]) -> Result<ExhaustionTable> {
    if domains.is_empty() {
        return domain("no domains given");
    }
    for w in domains.windows(2) {
        let ((a0, b0), (a1, b1)) = (w[0], w[1]);
        if !(a1 <= a0 && b0 <= b1) {
            return domain(format!("intervals ({a0}, {b0}) and ({a1}, {b1}) are not nested"));
        }
    }
    let free = gaussian(t, x - y);
    let gauge = Complex64::from_polar(1.0, alpha * (y - x));
    let rows = domains
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let deficit = dirichlet_deficit(t, x, y, a, b)?;
            let value = (free - deficit).max(0.0);
            Ok(ExhaustionRow {
                j: i + 1,
                a,
                b,
                value,
                deficit,
                free,
                twisted_modulus: (gauge * value).norm(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExhaustionTable { t, x, y, alpha, rows })
}

/// The symmetric intervals `(−j, j)` for `j = 1..=count`.
pub fn symmetric_intervals(count: usize) -> Vec<(f64, f64)> {
    (1..=count).map(|j| (-(j as f64), j as f64)).collect()
}
