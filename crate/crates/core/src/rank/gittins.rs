use rayon::prelude::*;

use super::{Piece, RankFunction, Spike};
use crate::dist::{GridSpec, JobSizeDistribution, ResidualApproach, TailClass};
use crate::error::{Error, Result};
use crate::quad::{integrate_with_breaks, QuadOptions};

/// Time-per-completion `φ(b, c)`: expected service spent in `(b, c]` per unit
/// probability of completing there. `+∞` when no completion mass lies in `(b, c]`.
pub fn phi(d: &JobSizeDistribution, b: f64, c: f64) -> Result<f64> {
    if !(b < c) || b < 0.0 {
        return Err(Error::Domain(format!("phi needs 0 <= b < c, got b={b}, c={c}")));
    }
    let c = c.min(d.x_max());
    let done = d.tail_drop(b, c);
    if !(done > 0.0) {
        return Ok(f64::INFINITY);
    }
    Ok(d.tail_integral(b, c) / done)
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

pub(super) fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Log-spaced stop ages in `(a, end]`, where `end` is `x_max` for bounded
/// support and well past the residual life `m` otherwise.
pub(super) fn lookahead_grid(d: &JobSizeDistribution, a: f64, m: f64, n: usize) -> Vec<f64> {
    let end = if d.x_max().is_finite() {
        d.x_max()
    } else {
        d.horizon().max(a + 50.0 * m)
    };
    let span = end - a;
    if !(span > 0.0) {
        return vec![];
    }
    let lo = 1e-6 * span;
    let ratio = (span / lo).ln() / (n - 1) as f64;
    let mut cs: Vec<f64> = (0..n).map(|j| a + lo * (ratio * j as f64).exp()).collect();
    cs[n - 1] = end;
    cs
}

/// Gittins rank `r(a) = inf_{c > a} φ(a, c)`.
///
/// Candidates: the `c → a+` limit `F̄(a)/f(a)`, the `c = ∞` value `m(a)`,
/// every atom past `a`, and a log-spaced lookahead grid refined by
/// golden-section search around its best point.
pub fn gittins_rank(d: &JobSizeDistribution, a: f64, tol: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::param("age", "must be non-negative"));
    }
    let tail = d.tail(a);
    if !(tail > 0.0) {
        return Err(Error::PastSupport { age: a });
    }
    let m = d.mean_residual_life(a)?;
    let mut best = m;
    if let Some(h) = d.hazard(a) {
        if h > 0.0 {
            best = best.min(1.0 / h);
        }
    }
    for atom in d.atoms() {
        if atom.at > a {
            best = best.min(phi(d, a, atom.at)?);
        }
    }
    let cs = lookahead_grid(d, a, m, 200);
    if let Some(&end) = cs.last() {
        let vals: Vec<f64> = cs
            .iter()
            .map(|&c| phi(d, a, c).unwrap_or(f64::INFINITY))
            .collect();
        let (j, &v) = vals
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(y.1))
            .expect("non-empty grid");
        best = best.min(v);
        let left = if j == 0 { a + (cs[0] - a) * 1e-3 } else { cs[j - 1] };
        let right = if j + 1 == cs.len() { end } else { cs[j + 1] };
        // Atoms split φ into smooth stretches; refine only within one.
        let smooth = !d.atoms().iter().any(|x| x.at > left && x.at < right);
        if smooth && v.is_finite() {
            let f = |c: f64| phi(d, a, c).unwrap_or(f64::INFINITY);
            let (_, fv) = golden_min(f, left, right, (tol * 1e-3).max(1e-12 * right));
            best = best.min(fv);
        }
    }
    Ok(best)
}

/// Piecewise-linear Gittins rank over the grid, with midpoint refinement
/// where linear interpolation misses the rank by more than a relative 1e−7.
pub fn build_gittins(d: &JobSizeDistribution, grid: &GridSpec) -> Result<RankFunction> {
    let tol = 1e-9;
    let ages = grid.ages(d);
    let ranks: Vec<f64> = ages
        .par_iter()
        .map(|&a| gittins_rank(d, a, tol))
        .collect::<Result<_>>()?;

    // Refine each gap independently, then splice.
    let refined: Vec<Vec<(f64, f64)>> = (0..ages.len() - 1)
        .into_par_iter()
        .map(|i| refine(d, (ages[i], ranks[i]), (ages[i + 1], ranks[i + 1]), 8, tol))
        .collect::<Result<_>>()?;
    let mut knots: Vec<(f64, f64)> = Vec::with_capacity(ages.len() * 2);
    for (i, extra) in refined.into_iter().enumerate() {
        knots.push((ages[i], ranks[i]));
        knots.extend(extra);
    }
    knots.push((ages[ages.len() - 1], ranks[ranks.len() - 1]));

    let mut pieces = Vec::with_capacity(knots.len());
    for w in knots.windows(2) {
        let (a0, r0) = w[0];
        let (a1, r1) = w[1];
        pieces.push(Piece {
            start: a0,
            end: a1,
            value: r0,
            slope: (r1 - r0) / (a1 - a0),
        });
    }
    let (last_age, last_rank) = *knots.last().expect("non-empty");
    let last_slope = pieces.last().map_or(0.0, |p| p.slope);
    let limit = d.residual_limit();
    let mut asymptote = None;
    let tail_piece = if d.x_max().is_finite() {
        Piece {
            start: last_age,
            end: d.x_max(),
            value: last_rank,
            slope: last_slope,
        }
    } else {
        match limit.approach {
            ResidualApproach::Below => {
                asymptote = Some(limit.value);
                Piece {
                    start: last_age,
                    end: f64::INFINITY,
                    value: limit.value,
                    slope: 0.0,
                }
            }
            ResidualApproach::Unbounded => Piece {
                start: last_age,
                end: f64::INFINITY,
                value: last_rank,
                slope: last_slope.max(0.0),
            },
            _ => Piece {
                start: last_age,
                end: f64::INFINITY,
                value: last_rank,
                slope: 0.0,
            },
        }
    };
    pieces.push(tail_piece);
    let pieces = merge_collinear(pieces, asymptote.is_none());
    RankFunction::with_asymptote(pieces, vec![], "gittins", d.x_max(), asymptote)
}

fn refine(
    d: &JobSizeDistribution,
    (a0, r0): (f64, f64),
    (a1, r1): (f64, f64),
    depth: u32,
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    if depth == 0 || a1 - a0 <= 1e-9 * a1.max(1.0) {
        return Ok(vec![]);
    }
    let mid = 0.5 * (a0 + a1);
    let rm = gittins_rank(d, mid, tol)?;
    let interp = 0.5 * (r0 + r1);
    if (rm - interp).abs() <= 1e-7 * rm.abs().max(1.0) {
        return Ok(vec![]);
    }
    let mut out = refine(d, (a0, r0), (mid, rm), depth - 1, tol)?;
    out.push((mid, rm));
    out.extend(refine(d, (mid, rm), (a1, r1), depth - 1, tol)?);
    Ok(out)
}

fn merge_collinear(pieces: Vec<Piece>, merge_tail: bool) -> Vec<Piece> {
    let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
    for p in pieces {
        if let Some(last) = out.last_mut() {
            let continuous = (last.at(last.end) - p.value).abs() <= 1e-12 * p.value.abs().max(1.0);
            let same_slope = (last.slope - p.slope).abs() <= 1e-10 * p.slope.abs().max(1e-3);
            if continuous && same_slope && (p.end.is_finite() || merge_tail) {
                last.end = p.end;
                if p.end.is_infinite() {
                    // The tail piece fixes the end behavior.
                    last.slope = p.slope;
                }
                continue;
            }
        }
        out.push(p);
    }
    out
}

/// Gittins rank with one age raised to `(1+ε)` times its rank so that the raised
/// point becomes a global maximum, moving the worst age inside the support.
pub fn approx_gittins(
    d: &JobSizeDistribution,
    eps: f64,
    grid: &GridSpec,
) -> Result<RankFunction> {
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::param("eps", "must be non-negative"));
    }
    if d.residual_limit().approach == ResidualApproach::Unbounded {
        return Err(Error::UnboundedResidual);
    }
    let g = build_gittins(d, grid)?;
    let (sup, attained) = g.sup();
    if !sup.is_finite() {
        return Err(Error::UnboundedResidual);
    }
    let ages = grid.ages(d);
    let chosen = ages.iter().copied().find(|&a| {
        let r = g.eval(a);
        if eps == 0.0 {
            attained && r >= sup * (1.0 - 1e-12)
        } else {
            (1.0 + eps) * r >= sup
        }
    });
    let Some(a_eps) = chosen else {
        return Err(Error::NoValidAge { eps });
    };
    let bumped = (1.0 + eps) * g.eval(a_eps);
    RankFunction::with_asymptote(
        g.pieces().to_vec(),
        vec![Spike {
            age: a_eps,
            rank: bumped,
        }],
        format!("approx-gittins:{eps}"),
        g.x_max(),
        g.asymptote(),
    )
}

/// `E[(min{X, c} − b)⁺^{p+1}] = ∫_b^c (p+1)(t − b)^p F̄(t) dt`.
pub fn segment_moment(d: &JobSizeDistribution, b: f64, c: f64, p: f64) -> Result<f64> {
    if !(b < c) || b < 0.0 {
        return Err(Error::Domain(format!(
            "segment moment needs 0 <= b < c, got b={b}, c={c}"
        )));
    }
    if !(p >= 0.0) {
        return Err(Error::param("p", "must be non-negative"));
    }
    let c = c.min(d.x_max());
    if c.is_infinite() {
        if let TailClass::NicelyHeavy { alpha, .. } = d.tail_class() {
            if p + 1.0 >= alpha {
                return Ok(f64::INFINITY);
            }
        }
    }
    let breaks: Vec<f64> = d.atoms().iter().map(|x| x.at).collect();
    let f = |t: f64| {
        let tail = d.tail(t);
        if tail == 0.0 {
            0.0
        } else if p == 0.0 {
            tail
        } else {
            (p + 1.0) * (t - b).powf(p) * tail
        }
    };
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-10,
        max_panels: 20_000,
    };
    Ok(integrate_with_breaks(f, b, c, &breaks, opts).value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::dist::{make_distribution, DistSpec};
    use crate::rank::worst_age;

    #[test]
    fn bounded_pareto_rank_vanishes_at_upper_bound() {
        let d = catalog::get("bounded_pareto");
        let g = build_gittins(&d, &GridSpec::default()).unwrap();
        for gap in [1.0, 0.1, 0.01] {
            let a = 1000.0 - gap;
            assert!((g.eval(a) / (gap / 2.0) - 1.0).abs() < 1e-3, "{gap}: {}", g.eval(a));
        }
        assert!(g.pieces().iter().all(|p| p.value >= 0.0 && p.at(p.end) >= -1e-12));
    }

    #[test]
    fn phi_examples() {
        let e = catalog::get("exp");
        let closed = phi(&e, 0.3, 2.0).unwrap();
        let oracle = e.tail_integral_quad(0.3, 2.0) / (e.tail(0.3) - e.tail(2.0));
        assert!((closed - 1.0).abs() < 1e-12 && (oracle - 1.0).abs() < 1e-9);
        let det = make_distribution(&DistSpec::Deterministic { value: 2.0 }).unwrap();
        assert!((phi(&det, 0.5, 2.0).unwrap() - 1.5).abs() < 1e-15);
        let u = catalog::get("uniform");
        assert!((phi(&u, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(phi(&u, 0.5, 0.5), Err(Error::Domain(_))));
        assert_eq!(phi(&det, 0.0, 1.0).unwrap(), f64::INFINITY);
    }

    #[test]
    fn gittins_rank_examples() {
        let e2 = make_distribution(&DistSpec::Exponential { rate: 2.0 }).unwrap();
        // oracle: brute-force grid minimization over c
        let brute = (1..20_000)
            .map(|j| phi(&e2, 1.0, 1.0 + j as f64 * 1e-3).unwrap())
            .fold(f64::INFINITY, f64::min);
        let r = gittins_rank(&e2, 1.0, 1e-9).unwrap();
        assert!((r - 0.5).abs() < 1e-9 && (brute - 0.5).abs() < 1e-9);
        let u = catalog::get("uniform");
        assert!((gittins_rank(&u, 0.0, 1e-9).unwrap() - 0.5).abs() < 1e-12);
        let det = make_distribution(&DistSpec::Deterministic { value: 2.0 }).unwrap();
        assert!((gittins_rank(&det, 0.5, 1e-9).unwrap() - 1.5).abs() < 1e-12);
        assert!(matches!(
            gittins_rank(&det, 2.0, 1e-9),
            Err(Error::PastSupport { .. })
        ));
    }

    #[test]
    fn exponential_gittins_is_constant_with_worst_age_zero() {
        let g = build_gittins(&catalog::get("exp"), &GridSpec::default()).unwrap();
        assert_eq!(g.pieces().len(), 1);
        assert!((g.eval(3.7) - 1.0).abs() < 1e-12);
        assert_eq!(worst_age(&g), 0.0);
    }

    #[test]
    fn hyperexponential_gittins_is_increasing_and_pessimal() {
        let d = catalog::get("hyperexp");
        let g = build_gittins(&d, &GridSpec::default()).unwrap();
        let ages = GridSpec::default().ages(&d);
        for w in ages.windows(2) {
            let (r0, r1) = (gittins_rank(&d, w[0], 1e-9).unwrap(), gittins_rank(&d, w[1], 1e-9).unwrap());
            assert!(r1 >= r0 - 1e-10, "not monotone at {}", w[0]);
        }
        assert!((g.eval(0.0) - 0.8).abs() < 1e-9);
        assert_eq!(g.asymptote(), Some(2.0));
        assert_eq!(worst_age(&g), f64::INFINITY);
    }

    #[test]
    fn pareto_gittins_grows_linearly() {
        let d = catalog::get("pareto");
        let g = build_gittins(&d, &GridSpec::default()).unwrap();
        for a in [1.0, 3.0, 10.0, 100.0, 1e4] {
            assert!((g.eval(a) - a / 2.5).abs() <= 1e-6 * a, "a={a}: {}", g.eval(a));
        }
        // Below age 1 the best lookahead is finite; oracle: brute-force φ minimization.
        let brute = (1..200_000)
            .map(|j| phi(&d, 0.0, 1.0 + j as f64 * 1e-4).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!((g.eval(0.0) - brute).abs() < 1e-6, "{} vs {brute}", g.eval(0.0));
        assert!(brute < 5.0 / 3.0);
        assert_eq!(worst_age(&g), f64::INFINITY);
    }

    #[test]
    fn approx_gittins_examples() {
        let e = catalog::get("exp");
        let grid = GridSpec::default();
        let r = approx_gittins(&e, 0.1, &grid).unwrap();
        assert_eq!(r.spikes()[0].age, 0.0);
        assert!((r.eval(0.0) - 1.1).abs() < 1e-12);
        assert_eq!(worst_age(&r), 0.0);

        let h = catalog::get("hyperexp");
        let r = approx_gittins(&h, 0.1, &grid).unwrap();
        let a_eps = r.spikes()[0].age;
        let g = build_gittins(&h, &grid).unwrap();
        let oracle = grid
            .ages(&h)
            .into_iter()
            .find(|&a| g.eval(a) >= 2.0 / 1.1)
            .unwrap();
        assert_eq!(a_eps, oracle);
        assert!(worst_age(&r) < f64::INFINITY);

        assert!(matches!(
            approx_gittins(&h, 0.0, &grid),
            Err(Error::NoValidAge { .. })
        ));
        assert!(approx_gittins(&e, 0.0, &grid).is_ok());
        assert!(matches!(
            approx_gittins(&catalog::get("pareto"), 0.1, &grid),
            Err(Error::UnboundedResidual)
        ));
        assert!(matches!(
            approx_gittins(&e, -0.1, &grid),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn segment_moment_examples() {
        let e = catalog::get("exp");
        assert!((segment_moment(&e, 0.0, f64::INFINITY, 0.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((segment_moment(&e, 0.0, f64::INFINITY, 1.0).unwrap() - 2.0).abs() < 1e-9);
        // Uniform(0,1), b=0.25, c=0.75: ∫ (1−t) dt over [0.25, 0.75] = 0.25
        let u = catalog::get("uniform");
        assert!((segment_moment(&u, 0.25, 0.75, 0.0).unwrap() - 0.25).abs() < 1e-12);
        let p = catalog::get("pareto");
        assert_eq!(segment_moment(&p, 1.0, f64::INFINITY, 2.0).unwrap(), f64::INFINITY);
    }
}
