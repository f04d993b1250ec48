//! Decay rates of the response time for light-tailed job sizes.
//!
//! With `σ⁻¹(s) = s − λ(1 − X̃(s))`, which is convex on the convergence
//! domain of `X̃`:
//!
//! * the stationary-work transform `W̃(s) = (1−ρ)s / σ⁻¹(s)` has its
//!   singularity at the negative root `γ_W` of `σ⁻¹`, giving FCFS the rate `−γ_W`;
//! * `σ`, the branch of the inverse through the origin, is defined on
//!   `s ≥ γ(σ) = min σ⁻¹`, with `σ(γ(σ)) = argmin σ⁻¹`;
//! * FB decays at `−γ(σ)`, and step/spike policies with worst age `a*` at
//!   `−γ(W̃∘σ_Y)` for `Y = min{X, a*}`.
//!
//! Every root and extremum comes with a bracket certified by a sign change
//! (roots) or by convexity (minimum value).

use serde::{Deserialize, Serialize};

use crate::dist::{classify_nbue, GridSpec, JobSizeDistribution, NbueClass, SystemParams, TailClass};
use crate::error::{Error, Result};
use crate::rank::{build_gittins, worst_age};

const MAX_ITER: usize = 200;

/// A point estimate with a certified enclosing interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracketed {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Bracketed {
    fn from_interval(lo: f64, hi: f64) -> Self {
        Bracketed {
            value: 0.5 * (lo + hi),
            lo,
            hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// The bracket of `−x`.
    pub fn negate(&self) -> Self {
        Bracketed {
            value: -self.value,
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    LogTailOptimal,
    LogTailIntermediate,
    LogTailPessimal,
}

fn require_light(d: &JobSizeDistribution) -> Result<()> {
    match d.tail_class() {
        TailClass::NicelyLight => Ok(()),
        other => Err(Error::ClassMismatch {
            expected: "nicely light-tailed".into(),
            actual: format!("{other:?}"),
        }),
    }
}

/// `σ⁻¹(s) = s − λ(1 − X̃(s))`, or `None` where `X̃` diverges.
pub fn sigma_inv(d: &JobSizeDistribution, p: &SystemParams, s: f64) -> Option<f64> {
    let x = d.lst(s).finite()?;
    Some(s - p.lambda * (1.0 - x))
}

/// Derivative `1 − λ E[X e^{−sX}]` of `σ⁻¹`.
pub fn sigma_inv_deriv(d: &JobSizeDistribution, p: &SystemParams, s: f64) -> Option<f64> {
    Some(1.0 - p.lambda * d.lst_neg_derivative(s)?)
}

/// Stationary work transform `W̃(s) = (1−ρ)s / σ⁻¹(s)`.
pub fn work_lst(d: &JobSizeDistribution, p: &SystemParams, s: f64) -> Option<f64> {
    if s == 0.0 {
        return Some(1.0);
    }
    Some((1.0 - p.rho) * s / sigma_inv(d, p, s)?)
}

/// A point left of the minimum of `σ⁻¹` where `σ⁻¹ > 0` and it is decreasing.
fn left_anchor(d: &JobSizeDistribution, p: &SystemParams) -> Result<f64> {
    let abscissa = d.lst_abscissa();
    let ok = |s: f64| {
        let v = sigma_inv(d, p, s).unwrap_or(f64::INFINITY);
        let dv = sigma_inv_deriv(d, p, s).unwrap_or(f64::NEG_INFINITY);
        v > 0.0 && dv < 0.0
    };
    if abscissa.is_finite() {
        let mut gap = -abscissa;
        for _ in 0..MAX_ITER {
            gap *= 0.5;
            let s = abscissa + gap;
            if ok(s) {
                return Ok(s);
            }
        }
    } else {
        let mut s = -1.0;
        for _ in 0..MAX_ITER {
            if ok(s) {
                return Ok(s);
            }
            s *= 2.0;
        }
    }
    Err(Error::BracketFailure(format!(
        "no point with positive, decreasing σ⁻¹ found for {}",
        d.name()
    )))
}

/// Minimum of `σ⁻¹`: `value` is `γ(σ)`, `argmin` is `σ(γ(σ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaMin {
    pub value: Bracketed,
    pub argmin: Bracketed,
}

/// Minimizes the convex `σ⁻¹` by bisection on the sign of its derivative.
pub fn gamma_sigma(d: &JobSizeDistribution, p: &SystemParams) -> Result<SigmaMin> {
    require_light(d)?;
    let mut lo = left_anchor(d, p)?;
    let mut hi = 0.0;
    let deriv = |s: f64| sigma_inv_deriv(d, p, s).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * lo.abs().max(1.0) {
            break;
        }
    }
    let f = |s: f64| sigma_inv(d, p, s).expect("inside convergence domain");
    let (fl, fh) = (f(lo), f(hi));
    let (dl, dh) = (deriv(lo), deriv(hi));
    let upper = fl.min(fh);
    // Convexity: the function lies above both tangents, which meet inside [lo, hi].
    let lower = if dh > dl {
        let cross = (fh - fl + dl * lo - dh * hi) / (dl - dh);
        let cross = cross.clamp(lo, hi);
        (fl + dl * (cross - lo)).min(upper)
    } else {
        upper
    };
    if !(upper < 0.0) {
        return Err(Error::BracketFailure(format!(
            "minimum of σ⁻¹ is not negative for {}",
            d.name()
        )));
    }
    Ok(SigmaMin {
        value: Bracketed {
            value: upper,
            lo: lower,
            hi: upper,
        },
        argmin: Bracketed::from_interval(lo, hi),
    })
}

/// Outcome of the pole-order check on `W̃` at `γ_W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleDiagnostic {
    /// `(s, s·W̃(γ_W + s))` samples.
    pub samples: Vec<(f64, f64)>,
    /// Analytic residue `(1−ρ)γ_W / σ⁻¹'(γ_W)`.
    pub limit: f64,
    /// Largest relative spread between consecutive samples.
    pub drift: f64,
    /// Samples converge to a finite nonzero constant.
    pub first_order: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaW {
    pub root: Bracketed,
    pub pole: PoleDiagnostic,
}

/// Negative root of `σ⁻¹`: the singularity of the work transform.
pub fn gamma_w(d: &JobSizeDistribution, p: &SystemParams) -> Result<GammaW> {
    let min = gamma_sigma(d, p)?;
    let mut lo = left_anchor(d, p)?;
    let mut hi = min.argmin.lo;
    let f = |s: f64| sigma_inv(d, p, s).unwrap_or(f64::INFINITY);
    if !(f(lo) > 0.0 && f(hi) < 0.0) {
        return Err(Error::BracketFailure(format!(
            "σ⁻¹ has no sign change below its minimum for {}",
            d.name()
        )));
    }
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * lo.abs().max(1.0) {
            break;
        }
    }
    let root = Bracketed::from_interval(lo, hi);
    let pole = pole_diagnostic(d, p, root.value);
    Ok(GammaW { root, pole })
}

fn pole_diagnostic(d: &JobSizeDistribution, p: &SystemParams, gamma: f64) -> PoleDiagnostic {
    let samples: Vec<(f64, f64)> = [1e-3, 1e-4, 1e-5]
        .iter()
        .map(|&s| (s, s * work_lst(d, p, gamma + s).unwrap_or(f64::NAN)))
        .collect();
    let limit = sigma_inv_deriv(d, p, gamma)
        .map(|dv| (1.0 - p.rho) * gamma / dv)
        .unwrap_or(f64::NAN);
    let drift = samples
        .windows(2)
        .map(|w| ((w[1].1 - w[0].1) / w[1].1).abs())
        .fold(0.0, f64::max);
    let last = samples.last().map_or(f64::NAN, |x| x.1);
    let first_order = last.is_finite() && last != 0.0 && drift < 0.02;
    PoleDiagnostic {
        samples,
        limit,
        drift,
        first_order,
    }
}

/// `σ(s)`: the solution `u ≥ argmin σ⁻¹` of `σ⁻¹(u) = s`, defined for `s ≥ γ(σ)`.
pub fn sigma(d: &JobSizeDistribution, p: &SystemParams, s: f64) -> Result<f64> {
    let min = gamma_sigma(d, p)?;
    sigma_on_branch(d, p, s, &min)
}

fn sigma_on_branch(
    d: &JobSizeDistribution,
    p: &SystemParams,
    s: f64,
    min: &SigmaMin,
) -> Result<f64> {
    if s < min.value.hi {
        return Err(Error::Domain(format!(
            "σ is only defined at or above γ(σ) = {}, got {s}",
            min.value.value
        )));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = if s > 0.0 {
        (s, s / (1.0 - p.rho))
    } else {
        (min.argmin.hi, 0.0)
    };
    let f = |u: f64| sigma_inv(d, p, u).unwrap_or(f64::INFINITY) - s;
    for _ in 0..MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which singularity of `W̃∘σ_Y` is rightmost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Singularity {
    /// `σ_Y(s)` reaches the pole `γ_W` of `W̃` first.
    WorkPole,
    /// `s` reaches the branch point `γ(σ_Y)` first.
    BranchPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecay {
    pub a_star: f64,
    pub rate: Bracketed,
    pub singularity: Singularity,
    /// `γ_W` and `σ_Y(γ(σ_Y))` agree to within 1e−10: a square-root branch point.
    pub degenerate: bool,
}

/// Decay rates and singularity locations for one (distribution, load).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightTailReport {
    pub gamma_x: f64,
    pub gamma_w: Bracketed,
    /// `argmin σ⁻¹ = σ(γ(σ))`.
    pub sigma_at_gamma: Bracketed,
    /// `min σ⁻¹ = γ(σ)`.
    pub gamma_sigma: Bracketed,
    pub d_fcfs: Bracketed,
    pub d_fb: Bracketed,
    pub policy: Option<PolicyDecay>,
    pub verdict: Option<Verdict>,
    pub pole: PoleDiagnostic,
}

impl LightTailReport {
    pub fn d_policy(&self) -> Option<f64> {
        self.policy.as_ref().map(|p| p.rate.value)
    }
}

/// Decay rate of the response time under a policy with worst age `a_star`.
pub fn policy_decay(
    d: &JobSizeDistribution,
    p: &SystemParams,
    a_star: f64,
    gw: &Bracketed,
) -> Result<PolicyDecay> {
    if !(a_star > 0.0 && a_star < d.x_max()) {
        return Err(Error::param("a_star", "must lie in (0, x_max)"));
    }
    let y = d.truncate(a_star);
    let min_y = gamma_sigma(&y, p)?;
    let degenerate = (gw.value - min_y.argmin.value).abs() <= 1e-10;
    if gw.value >= min_y.argmin.value {
        // σ_Y⁻¹ is increasing to the right of its minimum, so the bracket maps over.
        let at = |s: f64| sigma_inv(&y, p, s).expect("bounded support");
        let lo = at(gw.lo.max(min_y.argmin.lo));
        let hi = at(gw.hi);
        let gamma = Bracketed {
            value: at(gw.value),
            lo: lo.min(hi),
            hi: hi.max(lo),
        };
        Ok(PolicyDecay {
            a_star,
            rate: gamma.negate(),
            singularity: Singularity::WorkPole,
            degenerate,
        })
    } else {
        Ok(PolicyDecay {
            a_star,
            rate: min_y.value.negate(),
            singularity: Singularity::BranchPoint,
            degenerate,
        })
    }
}

/// FCFS, FB and (optionally) step/spike decay rates, with the γ chain.
pub fn decay_rates(
    d: &JobSizeDistribution,
    p: &SystemParams,
    a_star: Option<f64>,
) -> Result<LightTailReport> {
    require_light(d)?;
    let min = gamma_sigma(d, p)?;
    let gw = gamma_w(d, p)?;
    let policy = a_star
        .map(|a| policy_decay(d, p, a, &gw.root))
        .transpose()?;
    let verdict = a_star.map(|a| classify_soap(a, d.x_max()));
    Ok(LightTailReport {
        gamma_x: d.lst_abscissa(),
        gamma_w: gw.root,
        sigma_at_gamma: min.argmin,
        gamma_sigma: min.value,
        d_fcfs: gw.root.negate(),
        d_fb: min.value.negate(),
        policy,
        verdict,
        pole: gw.pole,
    })
}

/// Light-tail verdict of a SOAP policy from its worst age.
pub fn classify_soap(a_star: f64, x_max: f64) -> Verdict {
    if a_star <= 0.0 {
        Verdict::LogTailOptimal
    } else if a_star >= x_max {
        Verdict::LogTailPessimal
    } else {
        Verdict::LogTailIntermediate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GittinsClassification {
    pub verdict: Verdict,
    pub nbue: NbueClass,
    /// Worst age of the numerically built Gittins rank.
    pub worst_age: f64,
    /// Verdict implied by that worst age.
    pub rank_verdict: Verdict,
}

impl GittinsClassification {
    pub fn consistent(&self) -> bool {
        self.verdict == self.rank_verdict
    }
}

/// Gittins verdict from the residual-life class, cross-checked against the
/// worst age of the computed Gittins rank.
pub fn classify_gittins(d: &JobSizeDistribution, grid: &GridSpec) -> Result<GittinsClassification> {
    require_light(d)?;
    let nbue = classify_nbue(d, grid)?;
    let verdict = match nbue {
        NbueClass::Nbue => Verdict::LogTailOptimal,
        NbueClass::EnbueNotNbue => Verdict::LogTailIntermediate,
        NbueClass::NotEnbue => Verdict::LogTailPessimal,
    };
    let g = build_gittins(d, grid)?;
    let a_star = worst_age(&g);
    Ok(GittinsClassification {
        verdict,
        nbue,
        worst_age: a_star,
        rank_verdict: classify_soap(a_star, d.x_max()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::dist::{make_distribution, DistSpec};
    use proptest::prelude::*;

    fn mm1() -> (JobSizeDistribution, SystemParams) {
        let d = catalog::get("exp");
        let p = SystemParams::from_lambda(&d, 0.5).unwrap();
        (d, p)
    }

    fn det1() -> JobSizeDistribution {
        catalog::get("det")
    }

    #[test]
    fn sigma_inv_examples() {
        let (d, p) = mm1();
        assert_eq!(sigma_inv(&d, &p, 0.0), Some(0.0));
        assert!(sigma_inv(&d, &p, -0.5).unwrap().abs() < 1e-15);
        let det = det1();
        let pd = SystemParams::from_lambda(&det, 0.5).unwrap();
        let direct = -1.0 - 0.5 * (1.0 - 1f64.exp());
        assert!((sigma_inv(&det, &pd, -1.0).unwrap() - direct).abs() < 1e-14);
        assert!((direct + 0.1409).abs() < 1e-4);
        assert_eq!(sigma_inv(&d, &p, -1.0), None);
    }

    #[test]
    fn gamma_w_examples() {
        let (d, p) = mm1();
        let g = gamma_w(&d, &p).unwrap();
        assert!((g.root.value + 0.5).abs() < 1e-10);
        assert!(g.root.lo <= -0.5 && -0.5 <= g.root.hi);
        assert!(g.pole.first_order, "{:?}", g.pole);
        let e2 = make_distribution(&DistSpec::Exponential { rate: 2.0 }).unwrap();
        let p2 = SystemParams::from_lambda(&e2, 1.0).unwrap();
        assert!((gamma_w(&e2, &p2).unwrap().root.value + 1.0).abs() < 1e-10);
    }

    #[test]
    fn deterministic_gamma_w_agrees_with_secant() {
        let det = det1();
        let p = SystemParams::from_lambda(&det, 0.5).unwrap();
        let bis = gamma_w(&det, &p).unwrap().root.value;
        // oracle: secant iteration on s − 0.5(1 − e^{−s}) from a left start
        let f = |s: f64| s - 0.5 * (1.0 - (-s).exp());
        let (mut x0, mut x1) = (-2.0f64, -1.0f64);
        for _ in 0..100 {
            let x2 = x1 - f(x1) * (x1 - x0) / (f(x1) - f(x0));
            x0 = x1;
            x1 = x2;
            if (x1 - x0).abs() < 1e-12 {
                break;
            }
        }
        assert!((bis - x1).abs() < 1e-9, "{bis} vs {x1}");
        assert!(x1 < -1.0);
    }

    #[test]
    fn gamma_sigma_examples() {
        let (d, p) = mm1();
        let m = gamma_sigma(&d, &p).unwrap();
        assert!((m.argmin.value - (-1.0 + 0.5f64.sqrt())).abs() < 1e-9);
        let v = -(1.0 - 0.5f64.sqrt()).powi(2);
        assert!((m.value.value - v).abs() < 1e-12);
        assert!(m.value.lo <= v && v <= m.value.hi + 1e-15);
        // light-load trend toward −μ
        let mut prev = 0.0;
        for lambda in [0.5, 0.1, 0.01, 0.0001] {
            let p = SystemParams::from_lambda(&d, lambda).unwrap();
            let v = gamma_sigma(&d, &p).unwrap().value.value;
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < -0.97);
        let gw = gamma_w(&d, &p).unwrap().root.value;
        assert!(m.value.value > gw);
    }

    #[test]
    fn mm1_decay_rates() {
        let (d, p) = mm1();
        let r = decay_rates(&d, &p, Some(1.0)).unwrap();
        assert!((r.d_fcfs.value - 0.5).abs() < 1e-10);
        assert!((r.d_fb.value - (1.0 - 0.5f64.sqrt()).powi(2)).abs() < 1e-10);
        let step = r.d_policy().unwrap();
        assert!(r.d_fb.value < step && step < r.d_fcfs.value);
        assert_eq!(r.verdict, Some(Verdict::LogTailIntermediate));
        let light = SystemParams::from_lambda(&d, 1e-6).unwrap();
        assert!((decay_rates(&d, &light, None).unwrap().d_fcfs.value - 1.0).abs() < 1e-5);
    }

    #[test]
    fn classify_soap_examples() {
        assert_eq!(classify_soap(0.0, 5.0), Verdict::LogTailOptimal);
        assert_eq!(classify_soap(5.0, 5.0), Verdict::LogTailPessimal);
        assert_eq!(classify_soap(1.0, f64::INFINITY), Verdict::LogTailIntermediate);
        assert_eq!(
            classify_soap(f64::INFINITY, f64::INFINITY),
            Verdict::LogTailPessimal
        );
    }

    #[test]
    fn classify_gittins_examples() {
        let g = GridSpec::default();
        for (name, want) in [
            ("exp", Verdict::LogTailOptimal),
            ("uniform", Verdict::LogTailOptimal),
            ("hyperexp", Verdict::LogTailPessimal),
        ] {
            let c = classify_gittins(&catalog::get(name), &g).unwrap();
            assert_eq!(c.verdict, want, "{name}");
            assert!(c.consistent(), "{name}: {c:?}");
        }
        assert!(matches!(
            classify_gittins(&catalog::get("pareto"), &g),
            Err(Error::ClassMismatch { .. })
        ));
    }

    #[test]
    fn fb_rate_matches_closed_form() {
        for (mu, lambda) in [(1.0, 0.5), (2.0, 0.3), (1.0, 0.9)] {
            let d = make_distribution(&DistSpec::Exponential { rate: mu }).unwrap();
            let p = SystemParams::from_lambda(&d, lambda).unwrap();
            let r = decay_rates(&d, &p, None).unwrap();
            let closed = (f64::sqrt(mu) - f64::sqrt(lambda)).powi(2);
            assert!((r.d_fb.value - closed).abs() < 1e-8);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn sigma_inverts_sigma_inv(which in 0usize..5, rho in 0.2f64..0.9, t in 0.0f64..1.0) {
            let d = catalog::get(["exp", "hyperexp", "det", "erlang2", "uniform"][which]);
            let p = SystemParams::from_rho(&d, rho).unwrap();
            let min = gamma_sigma(&d, &p).unwrap();
            let u = min.argmin.hi + t * (1.0 - min.argmin.hi);
            let s = sigma_inv(&d, &p, u).unwrap();
            let back = sigma(&d, &p, s).unwrap();
            prop_assert!((sigma_inv(&d, &p, back).unwrap() - s).abs() <= 1e-8);
        }

        #[test]
        fn truncation_orders_sigma(which in 0usize..4, rho in 0.2f64..0.9, a_idx in 0usize..3, t in 0.01f64..0.99) {
            let d = catalog::get(["exp", "hyperexp", "erlang2", "uniform"][which]);
            let a_star = [0.3, 0.5, 0.8][a_idx];
            let p = SystemParams::from_rho(&d, rho).unwrap();
            let y = d.truncate(a_star);
            let min = gamma_sigma(&d, &p).unwrap();
            let min_y = gamma_sigma(&y, &p).unwrap();
            // common domain of σ and σ_Y on the negative axis
            let s = min.value.hi * t;
            prop_assert!(s >= min_y.value.hi);
            let (sx, sy) = (sigma(&d, &p, s).unwrap(), sigma(&y, &p, s).unwrap());
            prop_assert!(sx < sy && sy < s);
            let (ix, iy) = (sigma_inv(&d, &p, s).unwrap(), sigma_inv(&y, &p, s).unwrap());
            prop_assert!(ix > iy && iy > s);
        }
    }
}
