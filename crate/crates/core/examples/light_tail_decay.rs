// Response-time decay rates for light-tailed job sizes: FCFS, FB, and step
// policies, with the singularity chain that orders them.

use soap_tails::light::{decay_rates, Verdict};
use soap_tails::{catalog, Result, SystemParams};

pub struct Summary {
    pub mm1_fcfs: f64,
    pub mm1_fb: f64,
    /// `(a*, d_step)` for the hyperexponential at ρ = 0.5.
    pub step: Vec<(f64, f64)>,
}

pub fn run_example() -> Result<Summary> {
    let exp = catalog::get("exp");
    let mm1 = SystemParams::from_lambda(&exp, 0.5)?;
    let r = decay_rates(&exp, &mm1, None)?;
    println!("M/M/1 at rho = 0.5");
    println!("  d_fcfs = {:.10}  (mu - lambda = 0.5)", r.d_fcfs.value);
    println!("  d_fb   = {:.10}  ((1 - sqrt 0.5)^2 = {:.10})", r.d_fb.value, (1.0 - 0.5f64.sqrt()).powi(2));

    let d = catalog::get("hyperexp");
    let p = SystemParams::from_rho(&d, 0.5)?;
    let base = decay_rates(&d, &p, None)?;
    println!("{} at rho = 0.5", d.name());
    println!(
        "  gamma_X = {:.4} < gamma_W = {:.4} < argmin = {:.4} < min = {:.4}",
        base.gamma_x, base.gamma_w.value, base.sigma_at_gamma.value, base.gamma_sigma.value
    );
    let mut step = Vec::new();
    for a in [0.5, 1.0, 2.0, 4.0] {
        let rep = decay_rates(&d, &p, Some(a))?;
        let pd = rep.policy.as_ref().expect("a* given");
        assert_eq!(rep.verdict, Some(Verdict::LogTailIntermediate));
        println!(
            "  step({a}): d = {:.6} via {:?}; d_fb = {:.6} < d < d_fcfs = {:.6}",
            pd.rate.value, pd.singularity, rep.d_fb.value, rep.d_fcfs.value
        );
        step.push((a, pd.rate.value));
    }
    Ok(Summary {
        mm1_fcfs: r.d_fcfs.value,
        mm1_fb: r.d_fb.value,
        step,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
