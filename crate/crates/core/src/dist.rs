//! Job-size distribution catalog.
//!
//! Every member exposes its tail `F̄(t) = P(X > t)`, the density of its
//! absolutely continuous part, point masses, the Laplace–Stieltjes transform
//! `X̃(s) = E[exp(-sX)]` with an explicit divergence signal, a seeded sampler,
//! and tail-class metadata. Closed forms are used wherever they exist; the
//! quadrature path (`tail_integral_quad`) is kept separate so tests can use
//! it as an independent oracle.

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, Pareto as ParetoSampler, Weibull as WeibullSampler};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::quad::{integrate_with_breaks, QuadOptions};

/// Ages where the tail drops below this are treated as the end of the
/// numerically relevant range.
pub const TAIL_FLOOR: f64 = 1e-12;
/// Hard cap on the analysis horizon for unbounded distributions.
pub const HORIZON_CAP: f64 = 1e6;

/// Parsed distribution description; see [`make_distribution`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistSpec {
    Exponential { rate: f64 },
    Hyperexponential { probs: Vec<f64>, rates: Vec<f64> },
    Uniform { upper: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
    Pareto { alpha: f64, scale: f64 },
    BoundedPareto { alpha: f64, lower: f64, upper: f64 },
    Weibull { shape: f64, scale: f64 },
    Mixture { weights: Vec<f64>, components: Vec<DistSpec> },
}

/// Coarse tail classification used to pick the light- or heavy-tailed analyzers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum TailClass {
    NicelyLight,
    /// Matuszewska-index bracket `1 < alpha <= beta`.
    NicelyHeavy { alpha: f64, beta: f64 },
    Other,
}

/// Value of a Laplace–Stieltjes transform at a real point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lst {
    Finite(f64),
    Divergent,
}

impl Lst {
    pub fn finite(self) -> Option<f64> {
        match self {
            Lst::Finite(v) => Some(v),
            Lst::Divergent => None,
        }
    }

    pub fn is_divergent(self) -> bool {
        matches!(self, Lst::Divergent)
    }
}

/// A point mass of the job-size distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub at: f64,
    pub mass: f64,
}

/// How the mean residual life `m(a)` behaves as `a → x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ResidualApproach {
    /// Bounded support: `m(a) → 0`.
    Vanishing,
    /// `m(a)` equals the limit from some age on (memoryless tail).
    Equal,
    /// `m(a)` increases to the limit without attaining it.
    Below,
    /// `m(a)` decreases to the limit.
    Above,
    /// `m(a) → ∞`.
    Unbounded,
    /// Not characterized analytically for this member.
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualLimit {
    pub value: f64,
    pub approach: ResidualApproach,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Exponential { rate: f64 },
    Hyperexponential { probs: Vec<f64>, rates: Vec<f64> },
    Uniform { upper: f64 },
    Deterministic { value: f64 },
    Erlang { shape: u32, rate: f64 },
    Pareto { alpha: f64, scale: f64 },
    BoundedPareto { alpha: f64, lower: f64, upper: f64 },
    Weibull { shape: f64, scale: f64 },
    Mixture { weights: Vec<f64>, components: Vec<JobSizeDistribution> },
    Truncated { base: Box<JobSizeDistribution>, at: f64 },
}

/// An immutable job-size distribution. Cheap to clone and `Sync`.
#[derive(Debug, Clone, PartialEq)]
pub struct JobSizeDistribution {
    kind: Kind,
    mean: f64,
    x_max: f64,
    tail_class: TailClass,
    atoms: Vec<Atom>,
    name: String,
}

/// Arrival rate and load of the M/G/1 queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub lambda: f64,
    pub rho: f64,
}

impl SystemParams {
    pub fn from_lambda(d: &JobSizeDistribution, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::param("lambda", "must be a positive finite rate"));
        }
        let rho = lambda * d.mean();
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(SystemParams { lambda, rho })
    }

    pub fn from_rho(d: &JobSizeDistribution, rho: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::param("rho", "must be positive"));
        }
        if rho >= 1.0 {
            return Err(Error::Unstable { rho });
        }
        Ok(SystemParams {
            lambda: rho / d.mean(),
            rho,
        })
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be positive and finite, got {v}")))
    }
}

fn check_weights(field: &str, w: &[f64]) -> Result<()> {
    if w.is_empty() {
        return Err(Error::param(field, "must not be empty"));
    }
    if w.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::param(field, "entries must be non-negative"));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::param(field, format!("must sum to 1, got {total}")));
    }
    Ok(())
}

/// Builds a catalog distribution, validating its parameters.
pub fn make_distribution(spec: &DistSpec) -> Result<JobSizeDistribution> {
    use DistSpec as S;
    let d = match spec {
        S::Exponential { rate } => {
            check_positive("rate", *rate)?;
            JobSizeDistribution {
                kind: Kind::Exponential { rate: *rate },
                mean: 1.0 / rate,
                x_max: f64::INFINITY,
                tail_class: TailClass::NicelyLight,
                atoms: vec![],
                name: format!("exponential(rate={rate})"),
            }
        }
        S::Hyperexponential { probs, rates } => {
            check_weights("probs", probs)?;
            if rates.len() != probs.len() {
                return Err(Error::param("rates", "must have the same length as probs"));
            }
            for &r in rates {
                check_positive("rates", r)?;
            }
            let mean = probs.iter().zip(rates).map(|(p, r)| p / r).sum();
            JobSizeDistribution {
                kind: Kind::Hyperexponential {
                    probs: probs.clone(),
                    rates: rates.clone(),
                },
                mean,
                x_max: f64::INFINITY,
                tail_class: TailClass::NicelyLight,
                atoms: vec![],
                name: format!("hyperexponential(probs={probs:?}, rates={rates:?})"),
            }
        }
        S::Uniform { upper } => {
            check_positive("upper", *upper)?;
            JobSizeDistribution {
                kind: Kind::Uniform { upper: *upper },
                mean: upper / 2.0,
                x_max: *upper,
                tail_class: TailClass::NicelyLight,
                atoms: vec![],
                name: format!("uniform(0, {upper})"),
            }
        }
        S::Deterministic { value } => deterministic(*value)?,
        S::Erlang { shape, rate } => {
            if *shape == 0 {
                return Err(Error::param("shape", "must be at least 1"));
            }
            check_positive("rate", *rate)?;
            JobSizeDistribution {
                kind: Kind::Erlang {
                    shape: *shape,
                    rate: *rate,
                },
                mean: *shape as f64 / rate,
                x_max: f64::INFINITY,
                tail_class: TailClass::NicelyLight,
                atoms: vec![],
                name: format!("erlang(shape={shape}, rate={rate})"),
            }
        }
        S::Pareto { alpha, scale } => {
            check_positive("scale", *scale)?;
            if !(*alpha > 1.0) || !alpha.is_finite() {
                return Err(Error::param("alpha", format!("must exceed 1, got {alpha}")));
            }
            JobSizeDistribution {
                kind: Kind::Pareto {
                    alpha: *alpha,
                    scale: *scale,
                },
                mean: alpha * scale / (alpha - 1.0),
                x_max: f64::INFINITY,
                tail_class: TailClass::NicelyHeavy {
                    alpha: *alpha,
                    beta: *alpha,
                },
                atoms: vec![],
                name: format!("pareto(alpha={alpha}, scale={scale})"),
            }
        }
        S::BoundedPareto {
            alpha,
            lower,
            upper,
        } => {
            check_positive("alpha", *alpha)?;
            check_positive("lower", *lower)?;
            check_positive("upper", *upper)?;
            if upper <= lower {
                return Err(Error::param("upper", "must exceed lower"));
            }
            let mut d = JobSizeDistribution {
                kind: Kind::BoundedPareto {
                    alpha: *alpha,
                    lower: *lower,
                    upper: *upper,
                },
                mean: 0.0,
                x_max: *upper,
                tail_class: TailClass::NicelyLight,
                atoms: vec![],
                name: format!("bounded_pareto(alpha={alpha}, lower={lower}, upper={upper})"),
            };
            d.mean = d.tail_integral(0.0, *upper);
            d
        }
        S::Weibull { shape, scale } => {
            check_positive("shape", *shape)?;
            check_positive("scale", *scale)?;
            // Stretched-exponential tails (shape < 1) are subexponential but not of
            // intermediate regular variation.
            let tail_class = if *shape < 1.0 {
                TailClass::Other
            } else {
                TailClass::NicelyLight
            };
            JobSizeDistribution {
                kind: Kind::Weibull {
                    shape: *shape,
                    scale: *scale,
                },
                mean: scale * gamma(1.0 + 1.0 / shape),
                x_max: f64::INFINITY,
                tail_class,
                atoms: vec![],
                name: format!("weibull(shape={shape}, scale={scale})"),
            }
        }
        S::Mixture {
            weights,
            components,
        } => {
            check_weights("weights", weights)?;
            if components.len() != weights.len() {
                return Err(Error::param(
                    "components",
                    "must have the same length as weights",
                ));
            }
            let comps = components
                .iter()
                .map(make_distribution)
                .collect::<Result<Vec<_>>>()?;
            mixture(weights.clone(), comps)
        }
    };
    Ok(d)
}

fn deterministic(value: f64) -> Result<JobSizeDistribution> {
    check_positive("value", value)?;
    Ok(JobSizeDistribution {
        kind: Kind::Deterministic { value },
        mean: value,
        x_max: value,
        tail_class: TailClass::NicelyLight,
        atoms: vec![Atom {
            at: value,
            mass: 1.0,
        }],
        name: format!("deterministic({value})"),
    })
}

fn mixture(weights: Vec<f64>, comps: Vec<JobSizeDistribution>) -> JobSizeDistribution {
    let active = || {
        weights
            .iter()
            .zip(comps.iter())
            .filter(|(w, _)| **w > 0.0)
    };
    let mean = active().map(|(w, c)| w * c.mean).sum();
    let x_max = active().map(|(_, c)| c.x_max).fold(0.0, f64::max);
    let tail_class = if active().all(|(_, c)| c.tail_class == TailClass::NicelyLight) {
        TailClass::NicelyLight
    } else {
        TailClass::Other
    };
    let mut atoms: Vec<Atom> = Vec::new();
    for (w, c) in active() {
        for a in &c.atoms {
            match atoms.iter_mut().find(|b| b.at == a.at) {
                Some(b) => b.mass += w * a.mass,
                None => atoms.push(Atom {
                    at: a.at,
                    mass: w * a.mass,
                }),
            }
        }
    }
    atoms.sort_by(|a, b| a.at.total_cmp(&b.at));
    let name = format!(
        "mixture({})",
        active()
            .map(|(w, c)| format!("{w}*{}", c.name))
            .collect::<Vec<_>>()
            .join(" + ")
    );
    JobSizeDistribution {
        kind: Kind::Mixture {
            weights,
            components: comps,
        },
        mean,
        x_max,
        tail_class,
        atoms,
        name,
    }
}

fn erlang_partial(shape: u32, z: f64) -> (f64, f64) {
    // Returns (Σ_{n<k} z^n/n!, Σ_{j<k} (k-j) z^j/j!) without the e^{-z} factor.
    let mut term = 1.0;
    let mut tail = 0.0;
    let mut integ = 0.0;
    for j in 0..shape {
        if j > 0 {
            term *= z / j as f64;
        }
        tail += term;
        integ += (shape - j) as f64 * term;
    }
    (tail, integ)
}

impl JobSizeDistribution {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest possible job size (`+∞` for unbounded support).
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn tail_class(&self) -> TailClass {
        self.tail_class
    }

    /// Point masses, sorted by location.
    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn is_light(&self) -> bool {
        self.tail_class == TailClass::NicelyLight
    }

    /// `F̄(t) = P(X > t)`.
    pub fn tail(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        if t == f64::INFINITY {
            return 0.0;
        }
        match &self.kind {
            Kind::Exponential { rate } => (-rate * t).exp(),
            Kind::Hyperexponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * (-r * t).exp())
                .sum(),
            Kind::Uniform { upper } => (1.0 - t / upper).max(0.0),
            Kind::Deterministic { value } => {
                if t < *value {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::Erlang { shape, rate } => {
                let z = rate * t;
                erlang_partial(*shape, z).0 * (-z).exp()
            }
            Kind::Pareto { alpha, scale } => {
                if t <= *scale {
                    1.0
                } else {
                    (scale / t).powf(*alpha)
                }
            }
            Kind::BoundedPareto {
                alpha,
                lower,
                upper,
            } => {
                if t <= *lower {
                    1.0
                } else if t >= *upper {
                    0.0
                } else {
                    // (L/t)^α − (L/U)^α without cancellation near U.
                    let floor = (lower / upper).powf(*alpha);
                    let excess = floor * (alpha * ((upper - t) / t).ln_1p()).exp_m1();
                    (excess / (1.0 - floor)).max(0.0)
                }
            }
            Kind::Weibull { shape, scale } => (-(t / scale).powf(*shape)).exp(),
            Kind::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| if *w > 0.0 { w * c.tail(t) } else { 0.0 })
                .sum(),
            Kind::Truncated { base, at } => {
                if t >= *at {
                    0.0
                } else {
                    base.tail(t)
                }
            }
        }
    }

    /// Density of the absolutely continuous part (zero where there is none).
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match &self.kind {
            Kind::Exponential { rate } => rate * (-rate * t).exp(),
            Kind::Hyperexponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * r * (-r * t).exp())
                .sum(),
            Kind::Uniform { upper } => {
                if t < *upper {
                    1.0 / upper
                } else {
                    0.0
                }
            }
            Kind::Deterministic { .. } => 0.0,
            Kind::Erlang { shape, rate } => {
                let k = *shape as f64;
                let z = rate * t;
                // μ (μt)^{k-1} e^{-μt} / (k-1)!
                let log = (k - 1.0) * z.ln() - z - statrs::function::gamma::ln_gamma(k);
                if *shape == 1 {
                    rate * (-z).exp()
                } else if z == 0.0 {
                    0.0
                } else {
                    rate * log.exp()
                }
            }
            Kind::Pareto { alpha, scale } => {
                if t < *scale {
                    0.0
                } else {
                    alpha / t * (scale / t).powf(*alpha)
                }
            }
            Kind::BoundedPareto {
                alpha,
                lower,
                upper,
            } => {
                if t < *lower || t >= *upper {
                    0.0
                } else {
                    let floor = (lower / upper).powf(*alpha);
                    alpha / t * (lower / t).powf(*alpha) / (1.0 - floor)
                }
            }
            Kind::Weibull { shape, scale } => {
                let z = t / scale;
                shape / scale * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            Kind::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| if *w > 0.0 { w * c.density(t) } else { 0.0 })
                .sum(),
            Kind::Truncated { base, at } => {
                if t >= *at {
                    0.0
                } else {
                    base.density(t)
                }
            }
        }
    }

    /// Hazard rate of the continuous part, `f(t) / F̄(t)`; `None` past the support.
    pub fn hazard(&self, t: f64) -> Option<f64> {
        let tail = self.tail(t);
        if tail <= 0.0 {
            return None;
        }
        match &self.kind {
            Kind::Exponential { rate } => Some(*rate),
            Kind::Hyperexponential { probs, rates } => {
                // Factor out the slowest exponential so large ages do not underflow.
                let slow = rates.iter().copied().fold(f64::INFINITY, f64::min);
                let (num, den) = probs.iter().zip(rates).fold((0.0, 0.0), |(n, d), (p, r)| {
                    let e = p * (-(r - slow) * t).exp();
                    (n + r * e, d + e)
                });
                Some(num / den)
            }
            Kind::Erlang { shape, rate } => {
                let z = rate * t;
                let (s, _) = erlang_partial(*shape, z);
                let last = if *shape == 1 {
                    1.0
                } else {
                    (((*shape - 1) as f64) * z.ln() - statrs::function::gamma::ln_gamma(*shape as f64))
                        .exp()
                };
                let last = if z == 0.0 && *shape > 1 { 0.0 } else { last };
                Some(rate * last / s)
            }
            Kind::Pareto { alpha, scale } => Some(if t < *scale { 0.0 } else { alpha / t }),
            Kind::Weibull { shape, scale } => {
                Some(shape / scale * (t / scale).powf(shape - 1.0))
            }
            _ => Some(self.density(t) / tail),
        }
    }

    /// `∫_lo^hi F̄(t) dt` in closed form where one exists (quadrature otherwise).
    pub fn tail_integral(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        let hi = hi.min(self.x_max);
        if !(hi > lo) {
            return 0.0;
        }
        match &self.kind {
            Kind::Exponential { rate } => exp_drop(*rate, lo, hi) / rate,
            Kind::Hyperexponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * exp_drop(*r, lo, hi) / r)
                .sum(),
            Kind::Uniform { upper } => {
                let g = |t: f64| t - t * t / (2.0 * upper);
                g(hi) - g(lo)
            }
            Kind::Deterministic { .. } => hi - lo,
            Kind::Erlang { shape, rate } => {
                let upper_part = |t: f64| {
                    if t.is_infinite() {
                        0.0
                    } else {
                        let z = rate * t;
                        erlang_partial(*shape, z).1 * (-z).exp() / rate
                    }
                };
                upper_part(lo) - upper_part(hi)
            }
            Kind::Pareto { alpha, scale } => {
                let below = (hi.min(*scale) - lo).max(0.0);
                let a = lo.max(*scale);
                if hi <= a {
                    return below;
                }
                let pw = |t: f64| {
                    if t.is_infinite() {
                        0.0
                    } else {
                        scale.powf(*alpha) * t.powf(1.0 - alpha) / (alpha - 1.0)
                    }
                };
                below + pw(a) - pw(hi)
            }
            Kind::BoundedPareto {
                alpha,
                lower,
                upper,
            } => {
                let below = (hi.min(*lower) - lo).max(0.0);
                let a = lo.max(*lower);
                if hi <= a {
                    return below;
                }
                if hi - a <= 1e-2 * hi {
                    // The antiderivative difference cancels badly on short stretches.
                    return below + self.tail_integral_quad(a, hi);
                }
                let floor = (lower / upper).powf(*alpha);
                let anti = |t: f64| {
                    let power = if (alpha - 1.0).abs() < 1e-12 {
                        lower * t.ln()
                    } else {
                        lower.powf(*alpha) * t.powf(1.0 - alpha) / (1.0 - alpha)
                    };
                    (power - floor * t) / (1.0 - floor)
                };
                below + anti(hi) - anti(a)
            }
            Kind::Weibull { shape, scale } => {
                let upper_part = |t: f64| {
                    let s = 1.0 / shape;
                    let z = (t / scale).powf(*shape);
                    if t.is_infinite() {
                        0.0
                    } else if z <= 0.0 {
                        scale * s * gamma(s)
                    } else {
                        scale * s * gamma(s) * gamma_ur(s, z)
                    }
                };
                upper_part(lo) - upper_part(hi)
            }
            Kind::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, c)| {
                    if *w > 0.0 {
                        w * c.tail_integral(lo, hi)
                    } else {
                        0.0
                    }
                })
                .sum(),
            Kind::Truncated { base, at } => base.tail_integral(lo, hi.min(*at)),
        }
    }

    /// `F̄(b) − F̄(c)`, without cancellation for the exponential families.
    pub fn tail_drop(&self, b: f64, c: f64) -> f64 {
        if !(c > b) {
            return 0.0;
        }
        match &self.kind {
            Kind::Exponential { rate } if b >= 0.0 => exp_drop(*rate, b, c),
            Kind::Hyperexponential { probs, rates } if b >= 0.0 => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * exp_drop(*r, b, c))
                .sum(),
            Kind::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .map(|(w, x)| if *w > 0.0 { w * x.tail_drop(b, c) } else { 0.0 })
                .sum(),
            Kind::Truncated { base, at } if c < *at => base.tail_drop(b, c),
            _ => self.tail(b) - self.tail(c),
        }
    }

    /// `∫_lo^hi F̄(t) dt` by adaptive quadrature, independent of the closed forms.
    pub fn tail_integral_quad(&self, lo: f64, hi: f64) -> f64 {
        let lo = lo.max(0.0);
        let hi = hi.min(self.x_max);
        if !(hi > lo) {
            return 0.0;
        }
        let mut breaks: Vec<f64> = self.atoms.iter().map(|a| a.at).collect();
        breaks.extend(self.kink_points());
        let opts = QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_panels: 8000,
        };
        integrate_with_breaks(|t| self.tail(t), lo, hi, &breaks, opts).value
    }

    fn kink_points(&self) -> Vec<f64> {
        match &self.kind {
            Kind::Pareto { scale, .. } => vec![*scale],
            Kind::BoundedPareto { lower, .. } => vec![*lower],
            Kind::Mixture { components, .. } => {
                components.iter().flat_map(|c| c.kink_points()).collect()
            }
            Kind::Truncated { base, .. } => base.kink_points(),
            _ => vec![],
        }
    }

    /// Mean residual life `m(a) = E[X - a | X > a]`.
    pub fn mean_residual_life(&self, a: f64) -> Result<f64> {
        if a <= 0.0 {
            return Ok(self.mean);
        }
        let tail = self.tail(a);
        if !(tail > 0.0) {
            return Err(Error::PastSupport { age: a });
        }
        let m = match &self.kind {
            Kind::Exponential { rate } => 1.0 / rate,
            Kind::Hyperexponential { probs, rates } => {
                let slow = rates.iter().copied().fold(f64::INFINITY, f64::min);
                let (num, den) = probs.iter().zip(rates).fold((0.0, 0.0), |(n, d), (p, r)| {
                    let e = p * (-(r - slow) * a).exp();
                    (n + e / r, d + e)
                });
                num / den
            }
            Kind::Erlang { shape, rate } => {
                let (s, i) = erlang_partial(*shape, rate * a);
                i / (rate * s)
            }
            Kind::Pareto { alpha, scale } if a >= *scale => a / (alpha - 1.0),
            _ => self.tail_integral(a, f64::INFINITY) / tail,
        };
        Ok(m)
    }

    /// Analytic limit of `m(a)` as `a → x_max`.
    pub fn residual_limit(&self) -> ResidualLimit {
        use ResidualApproach as R;
        if self.x_max.is_finite() {
            return ResidualLimit {
                value: 0.0,
                approach: R::Vanishing,
            };
        }
        match &self.kind {
            Kind::Exponential { rate } => ResidualLimit {
                value: 1.0 / rate,
                approach: R::Equal,
            },
            Kind::Hyperexponential { probs, rates } => {
                let live: Vec<f64> = probs
                    .iter()
                    .zip(rates)
                    .filter(|(p, _)| **p > 0.0)
                    .map(|(_, r)| *r)
                    .collect();
                let slow = live.iter().copied().fold(f64::INFINITY, f64::min);
                let distinct = live.iter().any(|r| *r != slow);
                ResidualLimit {
                    value: 1.0 / slow,
                    approach: if distinct { R::Below } else { R::Equal },
                }
            }
            Kind::Erlang { shape, rate } => ResidualLimit {
                value: 1.0 / rate,
                approach: if *shape > 1 { R::Above } else { R::Equal },
            },
            Kind::Pareto { .. } => ResidualLimit {
                value: f64::INFINITY,
                approach: R::Unbounded,
            },
            Kind::Weibull { shape, scale } => {
                if *shape < 1.0 {
                    ResidualLimit {
                        value: f64::INFINITY,
                        approach: R::Unbounded,
                    }
                } else if *shape == 1.0 {
                    ResidualLimit {
                        value: *scale,
                        approach: R::Equal,
                    }
                } else {
                    ResidualLimit {
                        value: 0.0,
                        approach: R::Above,
                    }
                }
            }
            Kind::Mixture {
                weights,
                components,
            } => {
                let live: Vec<&JobSizeDistribution> = weights
                    .iter()
                    .zip(components)
                    .filter(|(w, c)| **w > 0.0 && c.x_max.is_infinite())
                    .map(|(_, c)| c)
                    .collect();
                if live.iter().any(|c| !c.is_light()) {
                    return ResidualLimit {
                        value: f64::INFINITY,
                        approach: R::Unbounded,
                    };
                }
                let top = live
                    .iter()
                    .map(|c| c.lst_abscissa())
                    .fold(f64::NEG_INFINITY, f64::max);
                let dominant: Vec<&&JobSizeDistribution> =
                    live.iter().filter(|c| c.lst_abscissa() == top).collect();
                let memoryless = dominant.iter().all(|c| {
                    matches!(
                        c.kind,
                        Kind::Exponential { .. } | Kind::Hyperexponential { .. }
                    )
                });
                if !memoryless || !top.is_finite() {
                    return ResidualLimit {
                        value: if top.is_finite() { -1.0 / top } else { 0.0 },
                        approach: R::Unknown,
                    };
                }
                let lighter_unbounded = live.len() > dominant.len()
                    || dominant
                        .iter()
                        .any(|c| c.residual_limit().approach == R::Below);
                ResidualLimit {
                    value: -1.0 / top,
                    approach: if lighter_unbounded { R::Below } else { R::Equal },
                }
            }
            Kind::Truncated { base, .. } => base.residual_limit(),
            _ => ResidualLimit {
                value: f64::NAN,
                approach: R::Unknown,
            },
        }
    }

    /// Abscissa of convergence `γ(X̃) = inf{s : X̃(s) < ∞}`.
    pub fn lst_abscissa(&self) -> f64 {
        match &self.kind {
            Kind::Exponential { rate } => -rate,
            Kind::Hyperexponential { probs, rates } => -probs
                .iter()
                .zip(rates)
                .filter(|(p, _)| **p > 0.0)
                .map(|(_, r)| *r)
                .fold(f64::INFINITY, f64::min),
            Kind::Erlang { rate, .. } => -rate,
            Kind::Pareto { .. } => 0.0,
            Kind::Weibull { shape, scale } => {
                if *shape < 1.0 {
                    0.0
                } else if *shape == 1.0 {
                    -1.0 / scale
                } else {
                    f64::NEG_INFINITY
                }
            }
            Kind::Mixture {
                weights,
                components,
            } => weights
                .iter()
                .zip(components)
                .filter(|(w, _)| **w > 0.0)
                .map(|(_, c)| c.lst_abscissa())
                .fold(f64::NEG_INFINITY, f64::max),
            Kind::Uniform { .. }
            | Kind::Deterministic { .. }
            | Kind::BoundedPareto { .. }
            | Kind::Truncated { .. } => f64::NEG_INFINITY,
        }
    }

    /// Laplace–Stieltjes transform `E[exp(-sX)]`.
    pub fn lst(&self, s: f64) -> Lst {
        if s == 0.0 {
            return Lst::Finite(1.0);
        }
        let abscissa = self.lst_abscissa();
        if s <= abscissa {
            return Lst::Divergent;
        }
        let v = match &self.kind {
            Kind::Exponential { rate } => rate / (rate + s),
            Kind::Hyperexponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * r / (r + s))
                .sum(),
            Kind::Uniform { upper } => {
                let z = s * upper;
                if z.abs() < 1e-8 {
                    1.0 - z / 2.0
                } else {
                    -(-z).exp_m1() / z
                }
            }
            Kind::Deterministic { value } => (-s * value).exp(),
            Kind::Erlang { shape, rate } => (rate / (rate + s)).powi(*shape as i32),
            Kind::Mixture {
                weights,
                components,
            } => {
                let mut total = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    if *w > 0.0 {
                        match c.lst(s) {
                            Lst::Finite(v) => total += w * v,
                            Lst::Divergent => return Lst::Divergent,
                        }
                    }
                }
                total
            }
            Kind::Truncated { base, at } => truncated_lst(base, *at, s),
            _ => 1.0 - s * self.weighted_tail_integral(s, false),
        };
        Lst::Finite(v)
    }

    /// `E[X exp(-sX)] = -X̃'(s)`, or `None` where the transform diverges.
    pub fn lst_neg_derivative(&self, s: f64) -> Option<f64> {
        if s <= self.lst_abscissa() {
            return None;
        }
        let v = match &self.kind {
            Kind::Exponential { rate } => rate / ((rate + s) * (rate + s)),
            Kind::Hyperexponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * r / ((r + s) * (r + s)))
                .sum(),
            Kind::Uniform { upper } => {
                let b = *upper;
                let z = s * b;
                if z.abs() < 1e-4 {
                    b / 2.0 - s * b * b / 3.0 + s * s * b * b * b / 8.0
                } else {
                    // ∫_0^b t e^{-st} dt / b
                    (1.0 - (-z).exp() * (1.0 + z)) / (s * s * b)
                }
            }
            Kind::Deterministic { value } => value * (-s * value).exp(),
            Kind::Erlang { shape, rate } => {
                let k = *shape as f64;
                k / (rate + s) * (rate / (rate + s)).powi(*shape as i32)
            }
            Kind::Mixture {
                weights,
                components,
            } => {
                let mut total = 0.0;
                for (w, c) in weights.iter().zip(components) {
                    if *w > 0.0 {
                        total += w * c.lst_neg_derivative(s)?;
                    }
                }
                total
            }
            Kind::Truncated { base, at } => truncated_lst_neg_derivative(base, *at, s),
            _ => self.weighted_tail_integral(s, true),
        };
        Some(v)
    }

    // ∫ e^{-st} F̄(t) dt, or ∫ (1 - st) e^{-st} F̄(t) dt when `derivative`.
    fn weighted_tail_integral(&self, s: f64, derivative: bool) -> f64 {
        let mut breaks: Vec<f64> = self.atoms.iter().map(|a| a.at).collect();
        breaks.extend(self.kink_points());
        let f = |t: f64| {
            let tail = self.tail(t);
            if tail == 0.0 {
                return 0.0;
            }
            let e = (-s * t).exp() * tail;
            if derivative {
                (1.0 - s * t) * e
            } else {
                e
            }
        };
        let opts = QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-11,
            max_panels: 8000,
        };
        integrate_with_breaks(f, 0.0, self.x_max, &breaks, opts).value
    }

    /// Draws one job size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            Kind::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Kind::Hyperexponential { probs, rates } => {
                let i = pick(probs, rng.random::<f64>());
                Exp::new(rates[i]).expect("validated rate").sample(rng)
            }
            Kind::Uniform { upper } => rng.random::<f64>() * upper,
            Kind::Deterministic { value } => *value,
            Kind::Erlang { shape, rate } => Gamma::new(*shape as f64, 1.0 / rate)
                .expect("validated shape")
                .sample(rng),
            Kind::Pareto { alpha, scale } => ParetoSampler::new(*scale, *alpha)
                .expect("validated pareto")
                .sample(rng),
            Kind::BoundedPareto {
                alpha,
                lower,
                upper,
            } => {
                let u: f64 = rng.random();
                let floor = (lower / upper).powf(*alpha);
                (lower * (1.0 - u * (1.0 - floor)).powf(-1.0 / alpha)).min(*upper)
            }
            Kind::Weibull { shape, scale } => WeibullSampler::new(*scale, *shape)
                .expect("validated weibull")
                .sample(rng),
            Kind::Mixture {
                weights,
                components,
            } => {
                let i = pick(weights, rng.random::<f64>());
                components[i].sample(rng)
            }
            Kind::Truncated { base, at } => base.sample(rng).min(*at),
        }
    }

    /// Distribution of `min(X, a)`.
    pub fn truncate(&self, a: f64) -> JobSizeDistribution {
        if !(a < self.x_max) {
            return self.clone();
        }
        if let Kind::Deterministic { .. } = self.kind {
            return deterministic(a).expect("positive truncation age");
        }
        let mut atoms: Vec<Atom> = self.atoms.iter().copied().filter(|x| x.at < a).collect();
        let top = self.tail(a);
        if top > 0.0 {
            atoms.push(Atom { at: a, mass: top });
        }
        JobSizeDistribution {
            mean: self.tail_integral(0.0, a),
            x_max: a,
            tail_class: TailClass::NicelyLight,
            atoms,
            name: format!("min({}, {a})", self.name),
            kind: Kind::Truncated {
                base: Box::new(self.clone()),
                at: a,
            },
        }
    }

    /// End of the numerically relevant age range: `x_max` for bounded support,
    /// otherwise the age where `F̄` first drops below [`TAIL_FLOOR`] (capped
    /// at [`HORIZON_CAP`]).
    pub fn horizon(&self) -> f64 {
        if self.x_max.is_finite() {
            return self.x_max;
        }
        if self.tail(HORIZON_CAP) >= TAIL_FLOOR {
            return HORIZON_CAP;
        }
        let (mut lo, mut hi) = (0.0, HORIZON_CAP);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.tail(mid) < TAIL_FLOOR {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        hi
    }

    /// `E[X^2] = ∫ 2t F̄(t) dt`.
    pub fn second_moment(&self) -> f64 {
        match &self.kind {
            Kind::Exponential { rate } => 2.0 / (rate * rate),
            Kind::Deterministic { value } => value * value,
            Kind::Uniform { upper } => upper * upper / 3.0,
            _ => {
                let mut breaks: Vec<f64> = self.atoms.iter().map(|a| a.at).collect();
                breaks.extend(self.kink_points());
                integrate_with_breaks(
                    |t| 2.0 * t * self.tail(t),
                    0.0,
                    self.x_max,
                    &breaks,
                    QuadOptions::default(),
                )
                .value
            }
        }
    }
}

// e^{-r lo} − e^{-r hi}
fn exp_drop(rate: f64, lo: f64, hi: f64) -> f64 {
    if hi.is_infinite() {
        (-rate * lo).exp()
    } else {
        -(-rate * lo).exp() * (-rate * (hi - lo)).exp_m1()
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

// ∫_0^a e^{-ct} dt and ∫_0^a t e^{-ct} dt, stable near c = 0.
fn exp_moments(c: f64, a: f64) -> (f64, f64) {
    let z = c * a;
    if z.abs() < 1e-6 {
        (a * (1.0 - z / 2.0), a * a * (0.5 - z / 3.0))
    } else {
        let e = (-z).exp();
        (-(-z).exp_m1() / c, (1.0 - e * (1.0 + z)) / (c * c))
    }
}

fn truncated_lst(base: &JobSizeDistribution, at: f64, s: f64) -> f64 {
    // E[e^{-s min(X,a)}] = 1 - s ∫_0^a e^{-st} F̄(t) dt
    match &base.kind {
        Kind::Exponential { rate } => 1.0 - s * exp_moments(s + rate, at).0,
        Kind::Hyperexponential { probs, rates } => {
            1.0 - s
                * probs
                    .iter()
                    .zip(rates)
                    .map(|(p, r)| p * exp_moments(s + r, at).0)
                    .sum::<f64>()
        }
        _ => 1.0 - s * truncated_weighted(base, at, s, false),
    }
}

fn truncated_lst_neg_derivative(base: &JobSizeDistribution, at: f64, s: f64) -> f64 {
    // E[Y e^{-sY}] = ∫_0^a (1 - st) e^{-st} F̄(t) dt
    let one = |rate: f64| {
        let (m0, m1) = exp_moments(s + rate, at);
        m0 - s * m1
    };
    match &base.kind {
        Kind::Exponential { rate } => one(*rate),
        Kind::Hyperexponential { probs, rates } => {
            probs.iter().zip(rates).map(|(p, r)| p * one(*r)).sum()
        }
        _ => truncated_weighted(base, at, s, true),
    }
}

fn truncated_weighted(base: &JobSizeDistribution, at: f64, s: f64, derivative: bool) -> f64 {
    let mut breaks: Vec<f64> = base.atoms.iter().map(|a| a.at).collect();
    breaks.extend(base.kink_points());
    let f = |t: f64| {
        let e = (-s * t).exp() * base.tail(t);
        if derivative {
            (1.0 - s * t) * e
        } else {
            e
        }
    };
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-11,
        max_panels: 8000,
    };
    integrate_with_breaks(f, 0.0, at, &breaks, opts).value
}

/// Age grid used by the rank builders and the NBUE scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub knots: usize,
    /// Defaults to [`JobSizeDistribution::horizon`].
    pub horizon: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            knots: 2048,
            horizon: None,
        }
    }
}

impl GridSpec {
    /// Ages in `[0, horizon]`, linear below age 1 and log-spaced above, with
    /// atom locations (and points just before them) spliced in. Every age is
    /// strictly inside the support.
    pub fn ages(&self, d: &JobSizeDistribution) -> Vec<f64> {
        let horizon = self.horizon.unwrap_or_else(|| d.horizon()).min(d.horizon());
        let n = self.knots.max(4);
        let end = if horizon >= d.x_max() {
            d.x_max() * (1.0 - 1e-9)
        } else {
            horizon
        };
        let mut ages = Vec::with_capacity(n + 2 * d.atoms().len());
        if end <= 1.0 {
            for i in 0..n {
                ages.push(end * i as f64 / (n - 1) as f64);
            }
        } else {
            let n_lin = n / 4;
            let n_log = n - n_lin;
            for i in 0..n_lin {
                ages.push(i as f64 / n_lin as f64);
            }
            let ratio = end.ln() / (n_log - 1) as f64;
            for i in 0..n_log {
                ages.push((ratio * i as f64).exp());
            }
            ages[n - 1] = end;
        }
        for a in d.atoms() {
            if a.at > 0.0 && a.at < end {
                ages.push(a.at);
                ages.push(a.at * (1.0 - 1e-9));
            }
        }
        ages.sort_by(f64::total_cmp);
        ages.dedup();
        ages.retain(|&a| d.tail(a) > 0.0);
        ages
    }
}

/// Residual-life class of a distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NbueClass {
    Nbue,
    EnbueNotNbue,
    NotEnbue,
}

/// Relative tolerance on mean-residual-life comparisons.
pub const NBUE_TOL: f64 = 1e-6;
const NBUE_BAND: f64 = 100.0 * NBUE_TOL;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Verdict {
    Yes,
    No,
    Ambiguous(f64),
}

// Is x >= y, with a tolerance band where the answer is ambiguous?
fn at_least(x: f64, y: f64) -> Verdict {
    if x.is_infinite() && y.is_infinite() {
        return Verdict::Yes;
    }
    let scale = x.abs().max(y.abs()).max(1e-300);
    let deficit = (y - x) / scale;
    if deficit <= NBUE_TOL {
        Verdict::Yes
    } else if deficit > NBUE_BAND {
        Verdict::No
    } else {
        Verdict::Ambiguous(deficit)
    }
}

// Is x >= m(a) for every a beyond the grid, given the analytic tail of m?
fn at_least_limit(x: f64, limit: ResidualLimit) -> Verdict {
    use ResidualApproach as R;
    match limit.approach {
        R::Vanishing => Verdict::Yes,
        R::Unbounded => Verdict::No,
        R::Equal | R::Above | R::Unknown => at_least(x, limit.value),
        // m climbs to the limit without attaining it. A value that agrees with the
        // limit to within the band sits on the approach itself, strictly below.
        R::Below => {
            let excess = (x - limit.value) / limit.value.abs().max(1e-300);
            if excess > NBUE_TOL {
                Verdict::Yes
            } else {
                Verdict::No
            }
        }
    }
}

fn combine(vs: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut out = Verdict::Yes;
    for v in vs {
        match v {
            Verdict::No => return Verdict::No,
            Verdict::Ambiguous(m) => {
                if let Verdict::Ambiguous(old) = out {
                    out = Verdict::Ambiguous(old.max(m));
                } else {
                    out = Verdict::Ambiguous(m);
                }
            }
            Verdict::Yes => {}
        }
    }
    out
}

/// Classifies `d` as NBUE, ENBUE but not NBUE, or not ENBUE by scanning the
/// mean residual life on `grid` plus its analytic tail limit.
pub fn classify_nbue(d: &JobSizeDistribution, grid: &GridSpec) -> Result<NbueClass> {
    let ages = grid.ages(d);
    let m: Vec<f64> = ages
        .iter()
        .map(|&a| d.mean_residual_life(a))
        .collect::<Result<_>>()?;
    let limit = d.residual_limit();

    let nbue = combine(
        m.iter()
            .map(|&ma| at_least(m[0], ma))
            .chain(std::iter::once(at_least_limit(m[0], limit))),
    );
    match nbue {
        Verdict::Yes => return Ok(NbueClass::Nbue),
        Verdict::Ambiguous(margin) => {
            return Err(Error::Inconclusive {
                reason: "NBUE comparison within tolerance band".into(),
                margin,
            })
        }
        Verdict::No => {}
    }

    // Suffix maxima of m over the grid.
    let mut suffix = vec![f64::NEG_INFINITY; m.len() + 1];
    for i in (0..m.len()).rev() {
        suffix[i] = suffix[i + 1].max(m[i]);
    }
    let mut ambiguous: Option<f64> = None;
    for i in 0..m.len() {
        let v = combine([at_least(m[i], suffix[i + 1]), at_least_limit(m[i], limit)]);
        match v {
            Verdict::Yes => return Ok(NbueClass::EnbueNotNbue),
            Verdict::Ambiguous(margin) => {
                ambiguous = Some(ambiguous.map_or(margin, |x: f64| x.min(margin)))
            }
            Verdict::No => {}
        }
    }
    match ambiguous {
        Some(margin) => Err(Error::Inconclusive {
            reason: "ENBUE comparison within tolerance band".into(),
            margin,
        }),
        None => Ok(NbueClass::NotEnbue),
    }
}
