//! Empirical tails, quantiles, confidence intervals and decay fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Reported quantile levels.
pub const QUANTILES: [f64; 5] = [0.5, 0.9, 0.99, 0.999, 0.9999];

/// Fit window and minimum tail count for [`fit_decay`].
pub const FIT_LO: f64 = 0.90;
pub const FIT_HI: f64 = 0.9999;
pub const MIN_TAIL_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPoint {
    pub t: f64,
    pub survival: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub rate: f64,
    pub stderr: f64,
    pub t_lo: f64,
    pub t_hi: f64,
    pub points: usize,
    /// Samples beyond `t_lo`.
    pub tail_samples: usize,
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// `P̂{T > t}` from sorted samples.
pub fn survival(sorted: &[f64], t: f64) -> TailPoint {
    let n = sorted.len();
    let k = n - sorted.partition_point(|&x| x <= t);
    let (ci_lo, ci_hi) = wilson(k, n);
    TailPoint {
        t,
        survival: if n == 0 { f64::NAN } else { k as f64 / n as f64 },
        ci_lo,
        ci_hi,
    }
}

/// Empirical quantile `inf{t : F̂(t) ≥ p}` of sorted samples.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 || !(hi > lo) {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Mean and 95% half-width from independent batch or replication means.
pub fn t_interval(means: &[f64]) -> (f64, f64) {
    let k = means.len();
    let mean = means.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(Z95);
    (mean, t * (var / k as f64).sqrt())
}

/// Means of `batches` contiguous batches.
pub fn batch_means(xs: &[f64], batches: usize) -> Vec<f64> {
    let size = xs.len() / batches.max(1);
    if size == 0 {
        return vec![xs.iter().sum::<f64>() / xs.len().max(1) as f64];
    }
    xs.chunks_exact(size)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

fn slope(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let b = sxy / sxx;
    let resid: f64 = ts
        .iter()
        .zip(ys)
        .map(|(t, y)| (y - my - b * (t - mt)).powi(2))
        .sum();
    let se = if ts.len() > 2 {
        (resid / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (b, se)
}

const FIT_POINTS: usize = 64;

fn window_slope(sorted: &[f64], grid: &[f64], power: f64) -> Option<(f64, f64, usize)> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = grid
        .iter()
        .map(|&t| (t, survival(sorted, t).survival))
        .filter(|&(_, s)| s > 0.0)
        .map(|(t, s)| (t, -s.ln() - power * t.ln()))
        .unzip();
    if ts.len() < 8 {
        return None;
    }
    let (b, se) = slope(&ts, &ys);
    Some((b, se, ts.len()))
}

/// Least-squares slope of `−log P̂{V > t}` over `t ∈ [q_lo, q_hi]` of the
/// pooled samples; the standard error comes from the spread of the same fit
/// on each replication (or the regression residual with one replication).
pub fn fit_decay_samples(
    pooled: &[f64],
    per_rep: &[Vec<f64>],
    q_lo: f64,
    q_hi: f64,
    min_tail: usize,
) -> Result<DecayFit> {
    fit_decay_prefactor(pooled, per_rep, q_lo, q_hi, min_tail, 0.0)
}

/// As [`fit_decay_samples`] for a tail of the form `C t^{−k} e^{−d t}`:
/// fits the slope of `−log P̂{V > t} − k log t`. Branch-point singularities
/// of the transform give `k = 3/2`.
pub fn fit_decay_prefactor(
    pooled: &[f64],
    per_rep: &[Vec<f64>],
    q_lo: f64,
    q_hi: f64,
    min_tail: usize,
    power: f64,
) -> Result<DecayFit> {
    let n = pooled.len();
    let t_lo = quantile(pooled, q_lo);
    let t_hi = quantile(pooled, q_hi);
    let tail_samples = n - pooled.partition_point(|&x| x <= t_lo);
    if tail_samples < min_tail || !(t_hi > t_lo) {
        return Err(Error::InsufficientData(format!(
            "{tail_samples} samples beyond the fit window start; {min_tail} required"
        )));
    }
    let grid: Vec<f64> = (0..FIT_POINTS)
        .map(|i| t_lo + (t_hi - t_lo) * i as f64 / (FIT_POINTS - 1) as f64)
        .collect();
    let (rate, reg_se, points) = window_slope(pooled, &grid, power)
        .ok_or_else(|| Error::InsufficientData("empty fit window".into()))?;
    let rep_rates: Vec<f64> = per_rep
        .iter()
        .filter_map(|s| window_slope(s, &grid, power).map(|x| x.0))
        .collect();
    let stderr = if rep_rates.len() >= 2 {
        let k = rep_rates.len() as f64;
        let m = rep_rates.iter().sum::<f64>() / k;
        let var = rep_rates.iter().map(|r| (r - m).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        reg_se
    };
    Ok(DecayFit {
        rate,
        stderr,
        t_lo,
        t_hi,
        points,
        tail_samples,
    })
}
