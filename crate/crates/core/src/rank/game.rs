//! The Gittins game: serve a job of known age `b` until it completes or its
//! age reaches a chosen stop age `c`, paying the service time plus a penalty
//! `w` if the job is abandoned unfinished.
//!
//! Everything here goes through quadrature of `F̄` and a lookahead table that
//! is independent of the closed forms used by [`super::gittins_rank`], so
//! [`rank_via_game`] serves as a cross-check of the main rank computation.

use super::gittins::lookahead_grid;
use crate::dist::JobSizeDistribution;
use crate::error::{Error, Result};

fn check_age(d: &JobSizeDistribution, b: f64) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(Error::Domain(format!("age must be non-negative, got {b}")));
    }
    let tail = d.tail(b);
    if !(tail > 0.0) {
        return Err(Error::PastSupport { age: b });
    }
    Ok(tail)
}

/// Expected game cost `service(b, c) + w·(1 − done(b, c))`.
pub fn game_cost(d: &JobSizeDistribution, w: f64, b: f64, c: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::Domain(format!("penalty must be non-negative, got {w}")));
    }
    if !(c >= b) {
        return Err(Error::Domain(format!("stop age {c} precedes start age {b}")));
    }
    let tail_b = check_age(d, b)?;
    if c == b {
        return Ok(w);
    }
    let service = d.tail_integral_quad(b, c) / tail_b;
    let done = (tail_b - d.tail(c.min(d.x_max()))) / tail_b;
    Ok(service + w * (1.0 - done))
}

/// Service and completion probability for stop ages past a fixed start age.
#[derive(Debug, Clone)]
pub struct GameTable {
    b: f64,
    tail_b: f64,
    stops: Vec<f64>,
    service: Vec<f64>,
    done: Vec<f64>,
    atoms: Vec<f64>,
}

impl GameTable {
    pub fn new(d: &JobSizeDistribution, b: f64) -> Result<Self> {
        let tail_b = check_age(d, b)?;
        let residual = d.tail_integral_quad(b, f64::INFINITY) / tail_b;
        let mut stops = lookahead_grid(d, b, residual, 400);
        let atoms: Vec<f64> = d.atoms().iter().map(|x| x.at).filter(|&x| x > b).collect();
        stops.extend(atoms.iter().copied());
        stops.push(d.x_max());
        stops.sort_by(f64::total_cmp);
        stops.dedup();
        let mut service = Vec::with_capacity(stops.len());
        let mut done = Vec::with_capacity(stops.len());
        let mut acc = 0.0;
        let mut prev = b;
        for &c in &stops {
            acc += d.tail_integral_quad(prev, c) / tail_b;
            prev = c;
            service.push(acc);
            done.push((tail_b - d.tail(c)) / tail_b);
        }
        Ok(GameTable {
            b,
            tail_b,
            stops,
            service,
            done,
            atoms,
        })
    }

    /// `min_c (service − w·done)`, which is `game*(w; b) − w` when negative.
    fn best_gain(&self, d: &JobSizeDistribution, w: f64) -> f64 {
        let (j, v) = self
            .service
            .iter()
            .zip(&self.done)
            .map(|(s, p)| s - w * p)
            .enumerate()
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty table");
        let mut best = v.min(0.0);
        let left = if j == 0 { self.b } else { self.stops[j - 1] };
        let right = if j + 1 < self.stops.len() {
            self.stops[j + 1]
        } else {
            return best;
        };
        if right.is_infinite() || self.atoms.iter().any(|&x| x > left && x < right) {
            return best;
        }
        let base = if j == 0 { 0.0 } else { self.service[j - 1] };
        let f = |c: f64| {
            let s = base + d.tail_integral_quad(left, c) / self.tail_b;
            let p = (self.tail_b - d.tail(c)) / self.tail_b;
            s - w * p
        };
        let (_, fv) = super::gittins::golden_min(f, left, right, 1e-12 * right.max(1.0));
        best = best.min(fv);
        best
    }

    /// Optimal game cost `game*(w; b)`.
    pub fn opt(&self, d: &JobSizeDistribution, w: f64) -> f64 {
        w + self.best_gain(d, w)
    }
}

/// Optimal cost of the Gittins game, minimized over stop ages including
/// giving up immediately and never giving up.
pub fn game_opt(d: &JobSizeDistribution, w: f64, b: f64) -> Result<f64> {
    if !(w >= 0.0) {
        return Err(Error::Domain(format!("penalty must be non-negative, got {w}")));
    }
    Ok(GameTable::new(d, b)?.opt(d, w))
}

/// Rank as the largest penalty at which giving up immediately is optimal:
/// `max{w : game*(w; a) = w}`, found by bisection.
pub fn rank_via_game(d: &JobSizeDistribution, a: f64) -> Result<f64> {
    let table = GameTable::new(d, a)?;
    let fixed = |w: f64| table.best_gain(d, w) >= -1e-13 * w.max(1e-300);
    let mut lo = 0.0;
    let mut hi = *table.service.last().expect("non-empty table") * (1.0 + 1e-9) + 1e-300;
    if fixed(hi) {
        return Ok(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fixed(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
