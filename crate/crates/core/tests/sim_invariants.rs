//! Simulator properties checked against queueing identities and exact laws.

use soap_tails::light::decay_rates;
use soap_tails::rank::{approx_gittins, build_gittins};
use soap_tails::sim::{fit_busy_decay, fit_decay_with, simulate, SimConfig, SimResult};
use soap_tails::{catalog, GridSpec, RankFunction, SystemParams};
use statrs::function::gamma::ln_gamma;

fn paired(d: &soap_tails::JobSizeDistribution, lambda: f64, r: RankFunction, jobs: u64, seed: u64) -> SimResult {
    simulate(&SimConfig::new(d.clone(), lambda, r).jobs(jobs).reps(8).seed(seed)).unwrap()
}

/// Mean and relative standard error of per-replication ratios.
fn ratio_stats(num: &SimResult, den: &SimResult) -> (f64, f64) {
    let r: Vec<f64> = num.rep_means.iter().zip(&den.rep_means).map(|(a, b)| a / b).collect();
    let k = r.len() as f64;
    let m = r.iter().sum::<f64>() / k;
    let sd = (r.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    (m, sd / k.sqrt() / m)
}

#[test]
fn gittins_mean_is_never_beaten() {
    let grid = GridSpec::default();
    for d in catalog::all() {
        let g = build_gittins(&d, &grid).unwrap();
        for rho in [0.5, 0.8] {
            let p = SystemParams::from_rho(&d, rho).unwrap();
            let base = paired(&d, p.lambda, g.clone(), 200_000, 21);
            for other in [RankFunction::fcfs(), RankFunction::fb()] {
                let label = other.label().to_string();
                let res = paired(&d, p.lambda, other, 200_000, 21);
                let (m, rel) = ratio_stats(&base, &res);
                assert!(
                    m <= 1.0 + 3.0 * rel + 1e-3,
                    "{} rho={rho}: gittins/{label} = {m:.4} (rel se {rel:.4})",
                    d.name()
                );
            }
        }
    }
}

#[test]
fn approximate_gittins_mean_within_one_plus_eps() {
    let d = catalog::get("hyperexp");
    let p = SystemParams::from_rho(&d, 0.5).unwrap();
    let grid = GridSpec::default();
    let base = paired(&d, p.lambda, build_gittins(&d, &grid).unwrap(), 300_000, 22);
    for eps in [0.05, 0.2, 1.0] {
        let res = paired(&d, p.lambda, approx_gittins(&d, eps, &grid).unwrap(), 300_000, 22);
        let (m, rel) = ratio_stats(&res, &base);
        assert!(m <= (1.0 + eps) * (1.0 + 3.0 * rel), "eps={eps}: {m:.4}");
        assert!(m >= 1.0 - 3.0 * rel, "eps={eps}: {m:.4}");
    }
}

#[test]
fn blind_policies_share_the_mm1_mean() {
    // Memoryless sizes: every blind work-conserving policy has E[T] = 1/(μ−λ).
    let d = catalog::get("exp");
    let policies = [
        RankFunction::fcfs(),
        RankFunction::fb(),
        RankFunction::step(1.0).unwrap(),
        RankFunction::spike(1.0).unwrap(),
    ];
    for r in policies {
        let label = r.label().to_string();
        let res = paired(&d, 0.5, r, 800_000, 23);
        assert!((res.mean - 2.0).abs() <= 3.0 * res.ci_half.max(0.01), "{label}: {} +/- {}", res.mean, res.ci_half);
        assert!(res.work_gap < 1e-9);
    }
}

#[test]
fn hyperexponential_decay_ordering() {
    let d = catalog::get("hyperexp");
    let p = SystemParams::from_rho(&d, 0.5).unwrap();
    let want = decay_rates(&d, &p, Some(2.0)).unwrap();
    let fit = |r: RankFunction| {
        let res = paired(&d, p.lambda, r, 2_000_000, 24);
        fit_decay_with(&res, 50_000).unwrap().rate
    };
    let fcfs = fit(RankFunction::fcfs());
    let step = fit(RankFunction::step(2.0).unwrap());
    let fb = fit(RankFunction::fb());
    assert!(fb < step && step < fcfs, "fb {fb} step {step} fcfs {fcfs}");
    assert!((fcfs / want.d_fcfs.value - 1.0).abs() < 0.1, "{fcfs} vs {}", want.d_fcfs.value);
}

/// `e^{−x} I₁(x)` from the power series, summed in log space.
fn bessel_i1_scaled(x: f64) -> f64 {
    let lh = (0.5 * x).ln();
    let mut sum = 0.0;
    let mut k = 0u32;
    loop {
        let kf = f64::from(k);
        let term = ((2.0 * kf + 1.0) * lh - ln_gamma(kf + 1.0) - ln_gamma(kf + 2.0) - x).exp();
        sum += term;
        if kf > x && term < 1e-18 * sum {
            return sum;
        }
        k += 1;
    }
}

/// `P{B > t}` for the M/M/1 busy period, integrating the Bessel density.
fn mm1_busy_survival(lambda: f64, mu: f64, t: f64) -> f64 {
    let s = (lambda * mu).sqrt();
    let density = |u: f64| {
        let x = 2.0 * u * s;
        (mu / lambda).sqrt() / u * (-(lambda + mu) * u + x).exp() * bessel_i1_scaled(x)
    };
    // Simpson on [t, t + 60/d], where the remaining mass is negligible.
    let decay = (mu.sqrt() - lambda.sqrt()).powi(2);
    let hi = t + 60.0 / decay;
    let n = 20_000;
    let h = (hi - t) / n as f64;
    let mut acc = density(t) + density(hi);
    for i in 1..n {
        acc += density(t + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

#[test]
fn busy_period_bessel_law_sanity() {
    // P{B > 0} = 1 and E[B] = 1/(μ−λ).
    let (l, m) = (0.5, 1.0);
    let total = mm1_busy_survival(l, m, 1e-9);
    assert!((total - 1.0).abs() < 1e-4, "{total}");
}

#[test]
fn busy_period_tail_matches_exact_law_on_the_fit_window() {
    // The tail is C t^{-3/2} e^{-dt}; compare the fitted slope with the slope
    // of the exact survival over the same window rather than with d itself.
    let d = catalog::get("exp");
    let mut cfg = SimConfig::new(d, 0.5, RankFunction::fcfs()).jobs(2_000_000).reps(8).seed(25);
    cfg.record_busy_periods = true;
    let res = simulate(&cfg).unwrap();
    let fit = fit_busy_decay(&res, 50_000).unwrap();

    let n = fit.points;
    let ts: Vec<f64> = (0..n)
        .map(|i| fit.t_lo + (fit.t_hi - fit.t_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let ys: Vec<f64> = ts.iter().map(|&t| -mm1_busy_survival(0.5, 1.0, t).ln()).collect();
    let mt = ts.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let exact = sxy / sxx;
    assert!(
        (fit.rate - exact).abs() <= (4.0 * fit.stderr).max(0.03 * exact),
        "fitted {} +/- {} vs exact window slope {exact}",
        fit.rate,
        fit.stderr
    );
}
