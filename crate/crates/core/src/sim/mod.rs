//! Preemptive event-driven M/G/1 simulator for SOAP rank functions.
//!
//! `n_jobs` arrivals are split evenly across replications. In each
//! replication the first `warmup` arrivals are discarded and the run
//! continues, with fresh unmeasured arrivals, until every measured job has
//! completed, so long jobs are never censored. Replications run in parallel
//! on independent streams and are merged in replication order.

mod engine;
pub mod rng;
pub mod stats;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use engine::{run_trace, RepOutput, MAX_IN_SYSTEM};
pub use stats::{DecayFit, TailPoint, MIN_TAIL_SAMPLES, QUANTILES};

use crate::dist::{JobSizeDistribution, SystemParams};
use crate::error::{Error, Result};
use crate::rank::RankFunction;
use engine::RepConfig;

/// Points on the stored tail curve.
pub const TAIL_POINTS: usize = 512;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub d: JobSizeDistribution,
    pub lambda: f64,
    pub policy: RankFunction,
    /// Arrivals across all replications, warmup included.
    pub n_jobs: u64,
    /// Discarded arrivals across all replications; 10% of `n_jobs` if unset.
    pub warmup: Option<u64>,
    pub seed: u64,
    pub replications: usize,
    pub record_busy_periods: bool,
}

impl SimConfig {
    pub fn new(d: JobSizeDistribution, lambda: f64, policy: RankFunction) -> Self {
        SimConfig {
            d,
            lambda,
            policy,
            n_jobs: 1_000_000,
            warmup: None,
            seed: 1,
            replications: 10,
            record_busy_periods: false,
        }
    }

    pub fn jobs(mut self, n: u64) -> Self {
        self.n_jobs = n;
        self
    }

    pub fn reps(mut self, k: usize) -> Self {
        self.replications = k;
        self
    }

    pub fn seed(mut self, s: u64) -> Self {
        self.seed = s;
        self
    }

    pub fn params(&self) -> Result<SystemParams> {
        SystemParams::from_lambda(&self.d, self.lambda)
    }

    /// Arrivals and warmup per replication.
    fn split(&self) -> Result<(u64, u64)> {
        if self.replications == 0 {
            return Err(Error::param("replications", "must be at least 1"));
        }
        let k = self.replications as u64;
        let per = self.n_jobs.div_ceil(k);
        let warm = self.warmup.unwrap_or(self.n_jobs / 10).div_ceil(k);
        if self.warmup.is_some_and(|w| w >= self.n_jobs) || warm >= per {
            return Err(Error::param("warmup", "must be below n_jobs per replication"));
        }
        Ok((per, warm))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepSummary {
    pub rep: usize,
    pub samples: usize,
    pub mean: f64,
    pub busy_time: f64,
    pub work_gap: f64,
    pub max_in_system: usize,
    pub events: u64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub policy: String,
    pub lambda: f64,
    pub rho: f64,
    pub n_samples: usize,
    pub mean: f64,
    /// 95% half-width from replication means (batch means with one replication).
    pub ci_half: f64,
    pub rep_means: Vec<f64>,
    pub quantiles: Vec<(f64, f64)>,
    /// `(t, P̂{T>t})` on [`TAIL_POINTS`] log-spaced points from the median to the maximum.
    pub tail: Vec<TailPoint>,
    pub reps: Vec<RepSummary>,
    /// Largest relative gap between busy time and delivered service.
    pub work_gap: f64,
    samples: Vec<f64>,
    rep_samples: Vec<Vec<f64>>,
    busy: Vec<Vec<f64>>,
}

impl SimResult {
    /// Pooled sorted response times.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Sorted response times per replication.
    pub fn rep_samples(&self) -> &[Vec<f64>] {
        &self.rep_samples
    }

    /// Sorted busy periods per replication (empty unless recorded).
    pub fn busy_periods(&self) -> &[Vec<f64>] {
        &self.busy
    }

    pub fn survival(&self, t: f64) -> TailPoint {
        stats::survival(&self.samples, t)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        stats::quantile(&self.samples, p)
    }

    /// Relative standard error of the mean.
    pub fn rel_stderr(&self) -> f64 {
        self.ci_half / stats::Z95 / self.mean
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn simulate(cfg: &SimConfig) -> Result<SimResult> {
    let params = cfg.params()?;
    let (per, warm) = cfg.split()?;
    let outs: Vec<RepOutput> = (0..cfg.replications)
        .into_par_iter()
        .map(|rep| {
            engine::run(RepConfig {
                d: &cfg.d,
                lambda: cfg.lambda,
                rank: &cfg.policy,
                n_jobs: per,
                warmup: warm,
                seed: cfg.seed,
                rep: rep as u64,
                record_busy: cfg.record_busy_periods,
            })
        })
        .collect::<Result<_>>()?;

    let reps: Vec<RepSummary> = outs
        .iter()
        .enumerate()
        .map(|(rep, o)| RepSummary {
            rep,
            samples: o.response.len(),
            mean: o.response.iter().sum::<f64>() / o.response.len() as f64,
            busy_time: o.busy_time,
            work_gap: (o.busy_time - o.served_work).abs() / o.busy_time.max(f64::MIN_POSITIVE),
            max_in_system: o.max_in_system,
            events: o.events,
        })
        .collect();
    let rep_means: Vec<f64> = reps.iter().map(|r| r.mean).collect();
    let ci_means = if rep_means.len() >= 2 {
        rep_means.clone()
    } else {
        stats::batch_means(&outs[0].response, 20)
    };
    let (_, ci_half) = stats::t_interval(&ci_means);
    let work_gap = reps.iter().map(|r| r.work_gap).fold(0.0, f64::max);

    let mut busy = Vec::with_capacity(outs.len());
    let mut rep_samples = Vec::with_capacity(outs.len());
    for o in outs {
        busy.push(sorted(o.busy_periods));
        rep_samples.push(sorted(o.response));
    }
    let samples = sorted(rep_samples.concat());
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let quantiles = QUANTILES
        .iter()
        .map(|&p| (p, stats::quantile(&samples, p)))
        .collect();
    let tail = stats::log_grid(stats::quantile(&samples, 0.5), samples[n - 1], TAIL_POINTS)
        .into_iter()
        .map(|t| stats::survival(&samples, t))
        .collect();
    Ok(SimResult {
        policy: cfg.policy.label().to_string(),
        lambda: cfg.lambda,
        rho: params.rho,
        n_samples: n,
        mean,
        ci_half,
        rep_means,
        quantiles,
        tail,
        reps,
        work_gap,
        samples,
        rep_samples,
        busy,
    })
}

/// Decay-rate fit of the response time over `[q0.90, q0.9999]`.
pub fn fit_decay(result: &SimResult) -> Result<DecayFit> {
    fit_decay_with(result, MIN_TAIL_SAMPLES)
}

pub fn fit_decay_with(result: &SimResult, min_tail: usize) -> Result<DecayFit> {
    stats::fit_decay_samples(
        &result.samples,
        &result.rep_samples,
        stats::FIT_LO,
        stats::FIT_HI,
        min_tail,
    )
}

/// Decay-rate fit of the busy-period length over the same window.
pub fn fit_busy_decay(result: &SimResult, min_tail: usize) -> Result<DecayFit> {
    let pooled = sorted(result.busy.concat());
    stats::fit_decay_samples(&pooled, &result.busy, stats::FIT_LO, stats::FIT_HI, min_tail)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioPoint {
    pub t: f64,
    pub survival: f64,
    /// `F̄((1−ρ)t)`.
    pub target: f64,
    pub ratio: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// `P̂{T>t} / F̄((1−ρ)t)` with Wilson bands at one `t`.
pub fn ratio_at(result: &SimResult, d: &JobSizeDistribution, p: &SystemParams, t: f64) -> RatioPoint {
    let s = result.survival(t);
    let target = crate::heavy::tail_target(d, p, t);
    RatioPoint {
        t,
        survival: s.survival,
        target,
        ratio: s.survival / target,
        ci_lo: s.ci_lo / target,
        ci_hi: s.ci_hi / target,
    }
}

/// Ratio curve over the stored tail grid.
pub fn tail_ratio(result: &SimResult, d: &JobSizeDistribution, p: &SystemParams) -> Vec<RatioPoint> {
    result.tail.iter().map(|pt| ratio_at(result, d, p, pt.t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;

    #[test]
    fn rejects_unstable_and_bad_warmup() {
        let d = catalog::get("exp");
        let cfg = SimConfig::new(d.clone(), 1.0, RankFunction::fcfs());
        assert!(matches!(simulate(&cfg), Err(Error::Unstable { .. })));
        let mut cfg = SimConfig::new(d, 0.5, RankFunction::fcfs()).jobs(100);
        cfg.warmup = Some(100);
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn mm1_fcfs_mean_small_run() {
        let d = catalog::get("exp");
        let cfg = SimConfig::new(d, 0.5, RankFunction::fcfs()).jobs(200_000).reps(4);
        let r = simulate(&cfg).unwrap();
        assert!((r.mean - 2.0).abs() < 0.1, "{}", r.mean);
        assert!(r.work_gap < 1e-9);
        assert!(r.tail.windows(2).all(|w| w[0].survival >= w[1].survival));
        assert!(r.quantiles.windows(2).all(|w| w[0].1 <= w[1].1));
        assert_eq!(r.rep_means.len(), 4);
    }

    #[test]
    fn identical_seeds_reproduce() {
        let d = catalog::get("hyperexp");
        let cfg = SimConfig::new(d, 0.5, RankFunction::fb()).jobs(20_000).reps(3).seed(9);
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert_eq!(a.rep_means, b.rep_means);
    }

    #[test]
    fn ratio_is_one_at_zero() {
        let d = catalog::get("pareto");
        let p = SystemParams::from_rho(&d, 0.5).unwrap();
        let cfg = SimConfig::new(d.clone(), p.lambda, RankFunction::fcfs()).jobs(5_000).reps(1);
        let r = simulate(&cfg).unwrap();
        assert_eq!(ratio_at(&r, &d, &p, 0.0).ratio, 1.0);
    }
}
