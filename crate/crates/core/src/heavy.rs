//! Diagnostics for heavy-tailed job sizes.
//!
//! For a size `x` with worst-ever rank `w_x`, the w_x-intervals that start
//! at or after `x` describe how long a job of size `x` can be delayed by
//! later arrivals. Their geometry is summarized by exponents `(ζ, θ, η)`
//! with `c − b ≲ b^ζ x^θ` and `c ≲ x^η`; the policy is tail-optimal when
//! `ζ + (θ−1)⁺ − (1−θ)⁺/η < (α−1)/β`. The exponents are fitted by least
//! squares on logs, so they are point estimates with residuals, not
//! certificates of asymptotic behavior.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{JobSizeDistribution, SystemParams, TailClass};
use crate::error::{Error, Result};
use crate::quad::{integrate_with_breaks, QuadOptions};
use crate::rank::{left_limit_level, segment_moment, RankFunction};

/// `ζ + (θ−1)⁺ − (1−θ)⁺/η < (α−1)/β`. Returns the verdict and the margin
/// `(α−1)/β − LHS` (positive when satisfied).
pub fn sufficient_condition(
    zeta: f64,
    theta: f64,
    eta: f64,
    alpha: f64,
    beta: f64,
) -> Result<(bool, f64)> {
    if !(alpha > 1.0) {
        return Err(Error::Domain(format!("alpha must exceed 1, got {alpha}")));
    }
    if !(beta >= alpha) {
        return Err(Error::Domain(format!("beta must be at least alpha, got {beta}")));
    }
    if zeta.is_nan() || theta.is_nan() || !(eta >= 1.0_f64.max(zeta + theta)) {
        return Err(Error::Domain(format!(
            "exponents must satisfy eta >= max(1, zeta + theta), got ({zeta}, {theta}, {eta})"
        )));
    }
    let shortfall = if eta.is_infinite() {
        0.0
    } else {
        (1.0 - theta).max(0.0) / eta
    };
    let lhs = zeta + (theta - 1.0).max(0.0) - shortfall;
    let margin = (alpha - 1.0) / beta - lhs;
    Ok((margin > 0.0, margin))
}

/// Optimal heavy-tail asymptote `F̄((1−ρ)t)`.
pub fn tail_target(d: &JobSizeDistribution, p: &SystemParams, t: f64) -> f64 {
    d.tail((1.0 - p.rho) * t.max(0.0))
}

/// One w_x-interval starting at or after `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub x: f64,
    pub w_x: f64,
    pub b: f64,
    pub c: f64,
    /// `c` is the scan horizon, not a true endpoint.
    pub open: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResiduals {
    /// Root-mean-square residual of the `log(c−b)` regression.
    pub interval_rms: f64,
    /// Root-mean-square residual of the `log(max c)` regression.
    pub reach_rms: f64,
    pub interval_points: usize,
    pub reach_points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeavyTailFit {
    pub zeta: f64,
    pub theta: f64,
    pub eta: f64,
    pub residuals: FitResiduals,
    pub alpha: f64,
    pub beta: f64,
    pub sufficient: bool,
    pub margin: f64,
    /// No w_x-interval starts at or after `x` anywhere on the grid; the
    /// exponents are the degenerate `(0, 0, 1)`.
    pub vacuous: bool,
    pub records: Vec<IntervalRecord>,
    /// Sizes on the grid without any interval past `x`.
    pub empty_sizes: Vec<f64>,
}

impl HeavyTailFit {
    /// `max (c − b)/x` over closed intervals.
    pub fn length_ratio_bound(&self) -> f64 {
        self.records
            .iter()
            .filter(|r| !r.open)
            .map(|r| (r.c - r.b) / r.x)
            .fold(0.0, f64::max)
    }
}

fn heavy_indices(d: &JobSizeDistribution) -> Result<(f64, f64)> {
    match d.tail_class() {
        TailClass::NicelyHeavy { alpha, beta } => Ok((alpha, beta)),
        other => Err(Error::ClassMismatch {
            expected: "nicely heavy-tailed".into(),
            actual: format!("{other:?}"),
        }),
    }
}

fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = rows.len();
    let k = rows[0].len();
    let a = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let coef = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::InsufficientData(format!("least squares failed: {e}")))?;
    let resid = &a * &coef - &b;
    let rms = (resid.norm_squared() / n as f64).sqrt();
    Ok((coef.iter().copied().collect(), rms))
}

/// Fits `(ζ, θ, η)` from the w_x-intervals with `b ≥ x` for each `x` on
/// the grid, scanning up to `horizon`, and evaluates the sufficient condition
/// with the distribution's index bracket.
pub fn fit_exponents(
    r: &RankFunction,
    d: &JobSizeDistribution,
    x_grid: &[f64],
    horizon: f64,
) -> Result<HeavyTailFit> {
    let (alpha, beta) = heavy_indices(d)?;
    let per_x: Vec<(f64, Vec<IntervalRecord>, bool)> = x_grid
        .par_iter()
        .map(|&x| {
            let w_x = r.sup_on(0.0, x);
            let set = r.w_intervals(w_x, horizon);
            let recs: Vec<IntervalRecord> = set
                .intervals
                .iter()
                .filter(|iv| iv.b >= x && iv.c > iv.b)
                .map(|iv| IntervalRecord {
                    x,
                    w_x,
                    b: iv.b,
                    c: iv.c,
                    open: iv.open,
                })
                .collect();
            (x, recs, set.open_ended)
        })
        .collect();

    let records: Vec<IntervalRecord> = per_x.iter().flat_map(|(_, r, _)| r.clone()).collect();
    let empty_sizes: Vec<f64> = per_x
        .iter()
        .filter(|(_, r, _)| r.is_empty())
        .map(|(x, _, _)| *x)
        .collect();

    if records.is_empty() {
        let (sufficient, margin) = sufficient_condition(0.0, 0.0, 1.0, alpha, beta)?;
        return Ok(HeavyTailFit {
            zeta: 0.0,
            theta: 0.0,
            eta: 1.0,
            residuals: FitResiduals {
                interval_rms: 0.0,
                reach_rms: 0.0,
                interval_points: 0,
                reach_points: 0,
            },
            alpha,
            beta,
            sufficient,
            margin,
            vacuous: true,
            records,
            empty_sizes,
        });
    }
    let sizes_with_data = per_x.iter().filter(|(_, r, _)| !r.is_empty()).count();
    if sizes_with_data < 3 {
        return Err(Error::InsufficientData(format!(
            "only {sizes_with_data} sizes have intervals past x; at least 3 are needed"
        )));
    }

    // An infinite `c` means the rank never climbs back above w_x.
    let closed: Vec<&IntervalRecord> = records
        .iter()
        .filter(|r| !r.open && r.c.is_finite())
        .collect();
    if closed.len() < 3 {
        return Err(Error::InsufficientData(
            "fewer than 3 closed intervals past x".into(),
        ));
    }
    let rows: Vec<Vec<f64>> = closed
        .iter()
        .map(|r| vec![1.0, r.b.ln(), r.x.ln()])
        .collect();
    let y: Vec<f64> = closed.iter().map(|r| (r.c - r.b).ln()).collect();
    let (coef, interval_rms) = least_squares(&rows, &y)?;
    let (zeta, theta) = (coef[1], coef[2]);

    // Reach: the furthest closed endpoint per size; open-ended scans mean no bound.
    let unbounded = per_x
        .iter()
        .any(|(_, recs, open)| {
            !recs.is_empty() && (*open || recs.iter().any(|r| r.open || r.c.is_infinite()))
        });
    let reach: Vec<(f64, f64)> = per_x
        .iter()
        .filter_map(|(x, recs, _)| {
            recs.iter()
                .filter(|r| !r.open && r.c.is_finite())
                .map(|r| r.c)
                .fold(None, |m: Option<f64>, c| Some(m.map_or(c, |m| m.max(c))))
                .map(|c| (*x, c))
        })
        .collect();
    let floor = 1.0_f64.max(zeta + theta);
    let (eta, reach_rms) = if unbounded {
        (f64::INFINITY, 0.0)
    } else if reach.len() >= 2 {
        let rows: Vec<Vec<f64>> = reach.iter().map(|(x, _)| vec![1.0, x.ln()]).collect();
        let y: Vec<f64> = reach.iter().map(|(_, c)| c.ln()).collect();
        let (coef, rms) = least_squares(&rows, &y)?;
        (coef[1].max(floor), rms)
    } else {
        (floor, 0.0)
    };
    let (sufficient, margin) = sufficient_condition(zeta, theta, eta, alpha, beta)?;
    Ok(HeavyTailFit {
        zeta,
        theta,
        eta,
        residuals: FitResiduals {
            interval_rms,
            reach_rms,
            interval_points: closed.len(),
            reach_points: reach.len(),
        },
        alpha,
        beta,
        sufficient,
        margin,
        vacuous: false,
        records,
        empty_sizes,
    })
}

/// One row of the finite-x diagnostic table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub x: f64,
    pub p: f64,
    /// `Σ_k E[X_k[w_x]^{p+1}]` over the maximal w_x-intervals found.
    pub moment_sum: f64,
    /// `moment_sum / x^p`.
    pub moment_ratio: f64,
    /// Number of intervals in the sum.
    pub intervals: usize,
    /// More intervals exist past the scan horizon.
    pub open_ended: bool,
    /// `∫_0^x da / (1 − λ E[X_0[w_x(a)−]])`.
    pub integral: f64,
    /// `integral · (1−ρ) / x`, at most 1.
    pub integral_ratio: f64,
}

/// `E[X_0[w−]] = ∫_0^{c₀[w−]} F̄`.
fn first_segment_mean(r: &RankFunction, d: &JobSizeDistribution, w: f64) -> f64 {
    let c0 = r.c0(left_limit_level(w));
    d.tail_integral(0.0, c0)
}

/// Delay integral `∫_0^x da / (1 − λ E[X_0[w_x(a)−]])`.
pub fn delay_integral(r: &RankFunction, d: &JobSizeDistribution, p: &SystemParams, x: f64) -> f64 {
    let f = |a: f64| {
        let w = r.sup_on(a, x);
        1.0 / (1.0 - p.lambda * first_segment_mean(r, d, w))
    };
    let mut breaks: Vec<f64> = r
        .pieces()
        .iter()
        .map(|q| q.start)
        .filter(|&s| s > 0.0 && s < x)
        .collect();
    breaks.extend(r.spikes().iter().map(|s| s.age).filter(|&s| s > 0.0 && s < x));
    let opts = QuadOptions {
        abs_tol: 1e-9,
        rel_tol: 1e-8,
        max_panels: 4000,
    };
    integrate_with_breaks(f, 0.0, x, &breaks, opts).value
}

/// Diagnostic table over `x_grid × p_list`.
pub fn diagnostic_curves(
    r: &RankFunction,
    d: &JobSizeDistribution,
    p: &SystemParams,
    x_grid: &[f64],
    p_list: &[f64],
    horizon: f64,
) -> Result<Vec<DiagnosticRow>> {
    let rows: Vec<Vec<DiagnosticRow>> = x_grid
        .par_iter()
        .map(|&x| {
            let w_x = r.sup_on(0.0, x);
            let set = r.w_intervals(w_x, horizon);
            let integral = delay_integral(r, d, p, x);
            p_list
                .iter()
                .map(|&pp| {
                    let mut sum = 0.0;
                    for iv in set.intervals.iter().filter(|iv| iv.c > iv.b) {
                        sum += segment_moment(d, iv.b, iv.c, pp)?;
                    }
                    Ok(DiagnosticRow {
                        x,
                        p: pp,
                        moment_sum: sum,
                        moment_ratio: sum / x.powf(pp),
                        intervals: set.count(),
                        open_ended: set.open_ended,
                        integral,
                        integral_ratio: integral * (1.0 - p.rho) / x,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// `2^k` for `k` in `lo..=hi`.
pub fn geometric_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::dist::GridSpec;
    use crate::rank::{build_gittins, Piece};
    use proptest::prelude::*;

    /// Teeth on `[2^k, 2^{k+1})` rising from 0 to `2^{k+1}`: every w-interval
    /// past `x` has length about `w/2`, so `ζ = 0`, `θ = 1`.
    fn comb(top: i32) -> RankFunction {
        let mut pieces = vec![Piece {
            start: 0.0,
            end: 1.0,
            value: 0.0,
            slope: 1.0,
        }];
        for k in 0..top {
            let s = 2f64.powi(k);
            pieces.push(Piece {
                start: s,
                end: 2.0 * s,
                value: 0.0,
                slope: 2.0,
            });
        }
        RankFunction::from_pieces(pieces, vec![], "comb", 2f64.powi(top)).unwrap()
    }

    /// Rank 0 on `[2k, 2k+1)` and `k+1` on `[2k+1, 2k+2)`: every dip below
    /// w_x past `x` has length 1, whatever `x`.
    fn rising_teeth(teeth: usize) -> RankFunction {
        let mut pieces = Vec::new();
        for k in 0..teeth {
            let s = 2.0 * k as f64;
            pieces.push(Piece {
                start: s,
                end: s + 1.0,
                value: 0.0,
                slope: 0.0,
            });
            pieces.push(Piece {
                start: s + 1.0,
                end: s + 2.0,
                value: k as f64 + 1.0,
                slope: 0.0,
            });
        }
        RankFunction::from_pieces(pieces, vec![], "teeth", 2.0 * teeth as f64).unwrap()
    }

    #[test]
    fn plain_sawtooth_never_exceeds_worst_rank() {
        // r(a) = a mod 2 has w_x = 2 for x >= 2 and never exceeds it.
        let pieces = (0..64)
            .map(|k| Piece {
                start: 2.0 * k as f64,
                end: 2.0 * k as f64 + 2.0,
                value: 0.0,
                slope: 1.0,
            })
            .collect();
        let r = RankFunction::from_pieces(pieces, vec![], "sawtooth", 128.0).unwrap();
        let fit = fit_exponents(&r, &catalog::get("pareto"), &geometric_grid(1, 5), 100.0).unwrap();
        assert!(fit.vacuous);
    }

    #[test]
    fn constant_length_dips_give_zero_exponents() {
        let r = rising_teeth(4096);
        let fit = fit_exponents(&r, &catalog::get("pareto"), &geometric_grid(1, 8), 4096.0).unwrap();
        assert!(fit.zeta.abs() < 1e-9 && fit.theta.abs() < 1e-9, "{fit:?}");
        assert_eq!(fit.eta, f64::INFINITY);
        assert!(fit.sufficient);
    }

    #[test]
    fn never_closing_dip_means_unbounded_reach() {
        // Growing dips with a final stretch at rank 0 forever.
        let mut pieces = vec![Piece {
            start: 0.0,
            end: 1.0,
            value: 0.0,
            slope: 0.0,
        }];
        for k in 0..20 {
            let s = 2f64.powi(k);
            pieces.push(Piece {
                start: s,
                end: 1.5 * s,
                value: 0.0,
                slope: 0.0,
            });
            pieces.push(Piece {
                start: 1.5 * s,
                end: 2.0 * s,
                value: 4.0 * s,
                slope: 0.0,
            });
        }
        pieces.push(Piece {
            start: 2f64.powi(20),
            end: f64::INFINITY,
            value: 0.0,
            slope: 0.0,
        });
        let r = RankFunction::from_pieces(pieces, vec![], "ladder", f64::INFINITY).unwrap();
        let fit = fit_exponents(&r, &catalog::get("pareto"), &geometric_grid(1, 8), 1e9).unwrap();
        assert!((fit.zeta - 1.0).abs() < 1e-6 && fit.theta.abs() < 1e-6, "{fit:?}");
        assert_eq!(fit.eta, f64::INFINITY);
        assert!(!fit.sufficient);
    }

    #[test]
    fn sufficient_condition_examples() {
        let (ok, margin) = sufficient_condition(0.0, 1.0, f64::INFINITY, 2.5, 2.5).unwrap();
        assert!(ok && (margin - 0.6).abs() < 1e-15);
        let (ok, _) = sufficient_condition(1.0, 0.0, f64::INFINITY, 2.5, 2.5).unwrap();
        assert!(!ok);
        let (ok, margin) = sufficient_condition(0.0, 0.0, 1.0, 2.0, 2.0).unwrap();
        assert!(ok && (margin - 1.5).abs() < 1e-15);
        assert!(sufficient_condition(0.0, 1.0, 0.5, 2.0, 2.0).is_err());
        assert!(sufficient_condition(0.0, 1.0, 2.0, 1.0, 2.0).is_err());
    }

    #[test]
    fn tail_target_examples() {
        let d = catalog::get("pareto");
        let p = SystemParams::from_rho(&d, 0.5).unwrap();
        assert!((tail_target(&d, &p, 4.0) - 2f64.powf(-2.5)).abs() < 1e-15);
        assert_eq!(tail_target(&d, &p, 0.0), 1.0);
        let tiny = SystemParams::from_rho(&d, 1e-12).unwrap();
        assert!((tail_target(&d, &tiny, 7.0) - d.tail(7.0)).abs() < 1e-10);
    }

    #[test]
    fn fb_fit_is_vacuous() {
        let d = catalog::get("pareto");
        let fit = fit_exponents(&RankFunction::fb(), &d, &geometric_grid(1, 8), 1e5).unwrap();
        assert!(fit.vacuous);
        assert_eq!((fit.zeta, fit.theta, fit.eta), (0.0, 0.0, 1.0));
    }

    #[test]
    fn comb_fit_recovers_linear_interval_growth() {
        let d = catalog::get("pareto");
        let r = comb(20);
        let fit = fit_exponents(&r, &d, &geometric_grid(1, 8), 2f64.powi(20)).unwrap();
        assert!(!fit.vacuous);
        assert!(fit.zeta.abs() < 0.05, "{fit:?}");
        assert!((fit.theta - 1.0).abs() < 0.05, "{fit:?}");
        assert!(fit.length_ratio_bound() <= 1.0 + 1e-9);
    }

    #[test]
    fn pareto_gittins_has_no_interval_past_x() {
        // The rank is a/α past age 1, so w_x is reached only at x itself.
        let d = catalog::get("pareto");
        let g = build_gittins(&d, &GridSpec::default()).unwrap();
        let fit = fit_exponents(&g, &d, &geometric_grid(1, 8), 1e5).unwrap();
        assert!(fit.vacuous);
        assert!(fit.sufficient);
    }

    #[test]
    fn fb_moment_sum_is_single_segment() {
        let d = catalog::get("pareto");
        let p = SystemParams::from_rho(&d, 0.5).unwrap();
        let rows = diagnostic_curves(&RankFunction::fb(), &d, &p, &[4.0, 16.0], &[1.0], 1e5).unwrap();
        for row in rows {
            assert_eq!(row.intervals, 1);
            let direct = segment_moment(&d, 0.0, row.x, 1.0).unwrap();
            assert!((row.moment_sum - direct).abs() < 1e-12);
            assert!(row.integral_ratio <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn gittins_moment_ratio_decreases() {
        let d = catalog::get("pareto");
        let p = SystemParams::from_rho(&d, 0.5).unwrap();
        let g = build_gittins(&d, &GridSpec::default()).unwrap();
        let rows = diagnostic_curves(&g, &d, &p, &geometric_grid(1, 8), &[1.0], 1e5).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].moment_ratio < w[0].moment_ratio, "{rows:?}");
        }
    }

    #[test]
    fn fcfs_integral_ratio_is_one_minus_rho() {
        // Constant rank: c₀[w−] = 0 for every a, so the integrand is 1.
        let d = catalog::get("pareto");
        let p = SystemParams::from_rho(&d, 0.5).unwrap();
        let rows = diagnostic_curves(&RankFunction::fcfs(), &d, &p, &[2.0, 8.0], &[1.0], 100.0).unwrap();
        for row in rows {
            assert!((row.integral - row.x).abs() < 1e-9);
            assert!((row.integral_ratio - 0.5).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn sufficient_condition_is_monotone(
            zeta in 0.0f64..1.0, theta in 0.0f64..2.0, dz in 0.0f64..0.5, dt in 0.0f64..0.5,
            alpha in 1.1f64..4.0, da in 0.0f64..1.0, eta_inf in proptest::bool::ANY
        ) {
            let beta = alpha + 1.0;
            let eta = |z: f64, t: f64| if eta_inf { f64::INFINITY } else { (z + t).max(1.0) + 0.5 };
            let base = sufficient_condition(zeta, theta, eta(zeta + dz, theta + dt), alpha, beta).unwrap().0;
            let bigger = sufficient_condition(zeta + dz, theta + dt, eta(zeta + dz, theta + dt), alpha, beta).unwrap().0;
            prop_assert!(!(bigger && !base));
            let lighter_alpha = sufficient_condition(zeta, theta, eta(zeta + dz, theta + dt), (alpha + da).min(beta), beta).unwrap().0;
            prop_assert!(!(base && !lighter_alpha));
        }

        #[test]
        fn tail_target_is_monotone(t1 in 0.0f64..50.0, t2 in 0.0f64..50.0, r1 in 0.05f64..0.95, r2 in 0.05f64..0.95) {
            let d = catalog::get("pareto");
            let (ta, tb) = (t1.min(t2), t1.max(t2));
            let p = SystemParams::from_rho(&d, r1).unwrap();
            prop_assert!(tail_target(&d, &p, ta) >= tail_target(&d, &p, tb));
            let (lo, hi) = (r1.min(r2), r1.max(r2));
            let plo = SystemParams::from_rho(&d, lo).unwrap();
            let phi = SystemParams::from_rho(&d, hi).unwrap();
            prop_assert!(tail_target(&d, &plo, tb) <= tail_target(&d, &phi, tb));
        }
    }
}
