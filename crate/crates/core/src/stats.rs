//! Order-deterministic sample statistics.

/// Pairwise (tree) summation in index order; the result depends only on the
/// sequence, not on how it was produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Sample mean and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

pub fn mean_and_stderr(xs: &[f64]) -> MeanEstimate {
    let n = xs.len();
    if n == 0 {
        return MeanEstimate { mean: f64::NAN, stderr: f64::NAN, n };
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n < 2 {
        return MeanEstimate { mean, stderr: f64::INFINITY, n };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    MeanEstimate { mean, stderr: (var / n as f64).sqrt(), n }
}

/// `|a − b|` in units of `stderr`, with a rounding floor: values that agree
/// to `1e−12` are at distance zero even when `stderr` is zero.
pub fn sigma_distance(a: f64, b: f64, stderr: f64) -> f64 {
    let d = (a - b).abs();
    if d <= 1e-12 {
        0.0
    } else if stderr == 0.0 {
        f64::INFINITY
    } else {
        d / stderr
    }
}
