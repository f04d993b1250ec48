// Simulates M/M/1 at ρ = 0.5 under FCFS, FB and a step policy on the same
// seed, then compares means and fitted decay rates with the analytic ones.

use soap_tails::light::decay_rates;
use soap_tails::sim::{fit_decay_with, simulate, SimConfig};
use soap_tails::{catalog, RankFunction, Result, SystemParams};

pub struct Row {
    pub policy: String,
    pub mean: f64,
    pub ci_half: f64,
    pub fitted: f64,
    pub analytic: f64,
}

pub fn run_example() -> Result<Vec<Row>> {
    let d = catalog::get("exp");
    let p = SystemParams::from_lambda(&d, 0.5)?;
    let step = RankFunction::step(1.0)?;
    let base = decay_rates(&d, &p, Some(1.0))?;
    let analytic = [
        base.d_fcfs.value,
        base.d_fb.value,
        base.d_policy().expect("a* given"),
    ];

    let mut rows = Vec::new();
    println!("{:<10} {:>8} {:>8} {:>9} {:>9}", "policy", "mean", "+/-", "fitted", "analytic");
    for (policy, want) in [RankFunction::fcfs(), RankFunction::fb(), step].into_iter().zip(analytic) {
        let cfg = SimConfig::new(d.clone(), p.lambda, policy).jobs(400_000).reps(4).seed(7);
        let res = simulate(&cfg)?;
        // A short run: relax the tail-count floor; the FB fit is biased high
        // by the t^{-3/2} prefactor over this window.
        let fit = fit_decay_with(&res, 10_000)?;
        println!(
            "{:<10} {:>8.4} {:>8.4} {:>9.4} {:>9.4}",
            res.policy, res.mean, res.ci_half, fit.rate, want
        );
        rows.push(Row {
            policy: res.policy.clone(),
            mean: res.mean,
            ci_half: res.ci_half,
            fitted: fit.rate,
            analytic: want,
        });
    }
    Ok(rows)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
