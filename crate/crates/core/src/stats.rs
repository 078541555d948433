//! Small statistical helpers shared by the Monte Carlo estimators and the
//! test suites: moments, standard errors, Kolmogorov-Smirnov statistics and
//! equal-mass binned total variation for continuous samples.

use crate::error::{CoreError, Result};

/// Sample mean and (n-1)-normalized standard deviation.
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Standard error of the mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    let (_, sd) = mean_sd(xs);
    sd / (xs.len() as f64).sqrt()
}

/// Standard error of a time-series mean via non-overlapping batch means,
/// robust to autocorrelation at lags shorter than the batch.
pub fn batch_means_se(xs: &[f64], batch: usize) -> Result<f64> {
    if batch == 0 || xs.len() < 2 * batch {
        return Err(CoreError::Argument(format!(
            "need at least two batches of {batch}, have {} points",
            xs.len()
        )));
    }
    let means: Vec<f64> = xs
        .chunks_exact(batch)
        .map(|c| c.iter().sum::<f64>() / batch as f64)
        .collect();
    Ok(standard_error(&means))
}

/// Kolmogorov-Smirnov statistic of a sample against a CDF.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in samples.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Asymptotic KS critical value at the given significance level.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    ((-0.5 * (alpha / 2.0).ln()) / n as f64).sqrt()
}

/// Equal-mass bin edges computed from the pooled sample: interior
/// boundaries at the pooled quantiles, outer bins unbounded.
pub fn equal_mass_edges(pooled: &mut Vec<f64>, bins: usize) -> Result<Vec<f64>> {
    if bins < 2 {
        return Err(CoreError::Argument("need at least 2 bins".into()));
    }
    if pooled.is_empty() {
        return Err(CoreError::Argument("empty sample".into()));
    }
    pooled.sort_by(|a, b| a.total_cmp(b));
    let n = pooled.len();
    let edges = (1..bins)
        .map(|k| pooled[(k * n / bins).min(n - 1)])
        .collect();
    Ok(edges)
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    edges.partition_point(|e| *e <= x)
}

/// Histogram over the bins induced by `edges` (edges.len() + 1 bins),
/// normalized to a probability vector.
pub fn bin_counts(xs: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![0.0; edges.len() + 1];
    for x in xs {
        counts[bin_of(edges, *x)] += 1.0;
    }
    let n = xs.len() as f64;
    for c in counts.iter_mut() {
        *c /= n;
    }
    counts
}

/// Binned total-variation estimate between two scalar samples, with
/// equal-mass bins taken from the pooled sample.
#[derive(Clone, Copy, Debug)]
pub struct BinnedTv {
    pub value: f64,
    /// Expected value of the estimator under equal distributions; acts as a
    /// bias floor that should be budgeted when interpreting `value`.
    pub bias_floor: f64,
    pub bins: usize,
}

pub fn binned_tv(a: &[f64], b: &[f64], bins: usize) -> Result<BinnedTv> {
    let mut pooled: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let edges = equal_mass_edges(&mut pooled, bins)?;
    let pa = bin_counts(a, &edges);
    let pb = bin_counts(b, &edges);
    let value = 0.5
        * pa.iter()
            .zip(&pb)
            .map(|(x, y)| (x - y).abs())
            .sum::<f64>();
    // Under H0 each bin difference is ~ N(0, 2 p (1-p) / n) with p = 1/bins;
    // summing E|.| over bins gives sqrt(bins / (pi * n_harmonic)).
    let n_h = 2.0 / (1.0 / a.len() as f64 + 1.0 / b.len() as f64);
    let bias_floor = (bins as f64 / (std::f64::consts::PI * n_h)).sqrt();
    Ok(BinnedTv {
        value,
        bias_floor,
        bins,
    })
}

/// A point estimate with an attached standard error (zero when exact).
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, se: 0.0 }
    }
}
