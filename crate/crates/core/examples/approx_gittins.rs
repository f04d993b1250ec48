// The Gittins rank for a hyperexponential is increasing, so Gittins is
// log-tail pessimal there. Raising one age by a factor 1+ε moves the worst
// age inside the support and buys a strictly better decay rate for a small
// cost in mean response time.

use soap_tails::light::{decay_rates, Verdict};
use soap_tails::rank::{approx_gittins, build_gittins, worst_age};
use soap_tails::sim::{simulate, SimConfig};
use soap_tails::{catalog, GridSpec, Result, SystemParams};

pub struct Row {
    pub label: String,
    pub worst_age: f64,
    pub decay: f64,
    pub verdict: Verdict,
    pub mean: f64,
}

pub fn run_example() -> Result<Vec<Row>> {
    let d = catalog::get("hyperexp");
    let p = SystemParams::from_rho(&d, 0.7)?;
    let grid = GridSpec::default();

    let mut policies = vec![build_gittins(&d, &grid)?];
    for eps in [0.1, 0.5] {
        policies.push(approx_gittins(&d, eps, &grid)?);
    }

    let mut rows = Vec::new();
    for r in policies {
        let a = worst_age(&r);
        let rep = decay_rates(&d, &p, (a > 0.0 && a < d.x_max()).then_some(a))?;
        let (decay, verdict) = match rep.policy {
            Some(pd) => (pd.rate.value, rep.verdict.expect("a* given")),
            None => (rep.d_fb.value, Verdict::LogTailPessimal),
        };
        let cfg = SimConfig::new(d.clone(), p.lambda, r.clone()).jobs(200_000).reps(4).seed(3);
        let mean = simulate(&cfg)?.mean;
        println!(
            "{:<20} a* = {:<8.4} decay = {:.5} {:?} mean = {:.4}",
            r.label(),
            a,
            decay,
            verdict,
            mean
        );
        rows.push(Row {
            label: r.label().to_string(),
            worst_age: a,
            decay,
            verdict,
            mean,
        });
    }
    Ok(rows)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
