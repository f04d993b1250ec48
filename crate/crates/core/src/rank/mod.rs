//! Rank functions: piecewise-linear age → rank maps with optional point spikes.
//!
//! A [`RankFunction`] is the policy object consumed by the simulator and the
//! analyzers. Pieces are right-continuous: piece `i` covers `[start, end)`
//! and takes the value `value + slope·(a − start)` there. A spike overrides
//! the rank at exactly one age.

mod game;
mod gittins;

pub use game::{game_cost, game_opt, rank_via_game, GameTable};
pub use gittins::{approx_gittins, build_gittins, gittins_rank, phi, segment_moment};

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Tolerance used when comparing a rank against a level.
fn level_slack(w: f64) -> f64 {
    1e-12 * w.abs().max(1.0)
}

/// Relative nudge defining the left-limit level `w−`.
pub const LEFT_LIMIT_NUDGE: f64 = 1e-9;

/// The level `w−` used for strict-inequality hill ages.
pub fn left_limit_level(w: f64) -> f64 {
    w - LEFT_LIMIT_NUDGE * w.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub start: f64,
    pub end: f64,
    /// Rank at `start`.
    pub value: f64,
    pub slope: f64,
}

impl Piece {
    pub fn at(&self, a: f64) -> f64 {
        if self.slope == 0.0 {
            self.value
        } else {
            self.value + self.slope * (a - self.start)
        }
    }

    /// Limit of the rank as the age approaches `end` from below.
    pub fn left_limit(&self) -> f64 {
        if self.end.is_infinite() {
            if self.slope > 0.0 {
                f64::INFINITY
            } else if self.slope < 0.0 {
                f64::NEG_INFINITY
            } else {
                self.value
            }
        } else {
            self.at(self.end)
        }
    }

    /// Supremum over the piece (possibly an unattained left limit).
    fn sup(&self) -> f64 {
        self.value.max(self.left_limit())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    pub age: f64,
    pub rank: f64,
}

/// Max segment tree over piece suprema.
#[derive(Debug, Clone, PartialEq)]
struct MaxTree {
    size: usize,
    data: Vec<f64>,
}

impl MaxTree {
    fn new(values: &[f64]) -> Self {
        let size = values.len().next_power_of_two().max(1);
        let mut data = vec![f64::NEG_INFINITY; 2 * size];
        data[size..size + values.len()].copy_from_slice(values);
        for i in (1..size).rev() {
            data[i] = data[2 * i].max(data[2 * i + 1]);
        }
        MaxTree { size, data }
    }

    /// Max over indices `[lo, hi)`.
    fn range_max(&self, lo: usize, hi: usize) -> f64 {
        let mut out = f64::NEG_INFINITY;
        let (mut l, mut r) = (lo + self.size, hi + self.size);
        while l < r {
            if l & 1 == 1 {
                out = out.max(self.data[l]);
                l += 1;
            }
            if r & 1 == 1 {
                r -= 1;
                out = out.max(self.data[r]);
            }
            l >>= 1;
            r >>= 1;
        }
        out
    }

    /// First index `>= from` whose value exceeds `w`.
    fn first_above(&self, from: usize, w: f64) -> Option<usize> {
        self.descend(1, 0, self.size, from, w)
    }

    fn descend(&self, node: usize, lo: usize, hi: usize, from: usize, w: f64) -> Option<usize> {
        if hi <= from || self.data[node] <= w {
            return None;
        }
        if hi - lo == 1 {
            return Some(lo);
        }
        let mid = (lo + hi) / 2;
        self.descend(2 * node, lo, mid, from, w)
            .or_else(|| self.descend(2 * node + 1, mid, hi, from, w))
    }
}

/// A SOAP rank function.
#[derive(Debug, Clone, PartialEq)]
pub struct RankFunction {
    pieces: Vec<Piece>,
    spikes: Vec<Spike>,
    label: String,
    x_max: f64,
    /// The rank climbs toward this value beyond the last knot without attaining it.
    asymptote: Option<f64>,
    tree: MaxTree,
}

impl RankFunction {
    /// Builds a rank function from contiguous pieces starting at age 0.
    pub fn from_pieces(
        pieces: Vec<Piece>,
        spikes: Vec<Spike>,
        label: impl Into<String>,
        x_max: f64,
    ) -> Result<Self> {
        Self::with_asymptote(pieces, spikes, label, x_max, None)
    }

    pub(crate) fn with_asymptote(
        mut pieces: Vec<Piece>,
        mut spikes: Vec<Spike>,
        label: impl Into<String>,
        x_max: f64,
        asymptote: Option<f64>,
    ) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::param("pieces", "at least one piece is required"));
        }
        if pieces[0].start != 0.0 {
            return Err(Error::param("pieces", "the first piece must start at age 0"));
        }
        for w in pieces.windows(2) {
            if w[0].end != w[1].start {
                return Err(Error::param(
                    "pieces",
                    format!("gap or overlap at age {}", w[0].end),
                ));
            }
        }
        for p in &pieces {
            if !(p.end > p.start) || !p.value.is_finite() || !p.slope.is_finite() {
                return Err(Error::param("pieces", format!("malformed piece {p:?}")));
            }
        }
        if !(x_max > 0.0) {
            return Err(Error::param("x_max", "must be positive"));
        }
        let last = pieces.len() - 1;
        if pieces[last].end < x_max {
            return Err(Error::param("pieces", "pieces must cover [0, x_max)"));
        }
        // Trim pieces past the support.
        pieces.retain(|p| p.start < x_max);
        let last = pieces.len() - 1;
        pieces[last].end = x_max;
        spikes.retain(|s| s.age >= 0.0 && s.age < x_max);
        spikes.sort_by(|a, b| a.age.total_cmp(&b.age));
        let sups: Vec<f64> = pieces.iter().map(Piece::sup).collect();
        Ok(RankFunction {
            tree: MaxTree::new(&sups),
            pieces,
            spikes,
            label: label.into(),
            x_max,
            asymptote,
        })
    }

    /// First-come first-served: constant rank 0.
    pub fn fcfs() -> Self {
        Self::from_pieces(
            vec![Piece {
                start: 0.0,
                end: f64::INFINITY,
                value: 0.0,
                slope: 0.0,
            }],
            vec![],
            "fcfs",
            f64::INFINITY,
        )
        .expect("static pieces")
    }

    /// Foreground-background: rank equals age.
    pub fn fb() -> Self {
        Self::from_pieces(
            vec![Piece {
                start: 0.0,
                end: f64::INFINITY,
                value: 0.0,
                slope: 1.0,
            }],
            vec![],
            "fb",
            f64::INFINITY,
        )
        .expect("static pieces")
    }

    /// `r(a) = min{a, a*}`.
    pub fn step(a_star: f64) -> Result<Self> {
        if !(a_star > 0.0) || !a_star.is_finite() {
            return Err(Error::param("a_star", "must be positive and finite"));
        }
        Self::from_pieces(
            vec![
                Piece {
                    start: 0.0,
                    end: a_star,
                    value: 0.0,
                    slope: 1.0,
                },
                Piece {
                    start: a_star,
                    end: f64::INFINITY,
                    value: a_star,
                    slope: 0.0,
                },
            ],
            vec![],
            format!("step:{a_star}"),
            f64::INFINITY,
        )
    }

    /// `r(a) = 1{a = a*}`.
    pub fn spike(a_star: f64) -> Result<Self> {
        if !(a_star > 0.0) || !a_star.is_finite() {
            return Err(Error::param("a_star", "must be positive and finite"));
        }
        Self::from_pieces(
            vec![Piece {
                start: 0.0,
                end: f64::INFINITY,
                value: 0.0,
                slope: 0.0,
            }],
            vec![Spike {
                age: a_star,
                rank: 1.0,
            }],
            format!("spike:{a_star}"),
            f64::INFINITY,
        )
    }

    /// Restricts the rank function to the support `[0, x_max)`.
    pub fn restrict(&self, x_max: f64) -> Result<Self> {
        if x_max >= self.x_max {
            return Ok(self.clone());
        }
        Self::with_asymptote(
            self.pieces.clone(),
            self.spikes.clone(),
            self.label.clone(),
            x_max,
            None,
        )
    }

    pub fn relabel(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    pub fn spikes(&self) -> &[Spike] {
        &self.spikes
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn asymptote(&self) -> Option<f64> {
        self.asymptote
    }

    /// Index of the piece containing age `a` (clamped to the domain).
    pub fn piece_index(&self, a: f64) -> usize {
        let i = self.pieces.partition_point(|p| p.start <= a);
        i.saturating_sub(1)
    }

    pub fn spike_at(&self, a: f64) -> Option<f64> {
        self.spikes
            .binary_search_by(|s| s.age.total_cmp(&a))
            .ok()
            .map(|i| self.spikes[i].rank)
    }

    /// First spike at an age `>= a`.
    pub fn next_spike(&self, a: f64) -> Option<Spike> {
        let i = self.spikes.partition_point(|s| s.age < a);
        self.spikes.get(i).copied()
    }

    /// Rank at age `a`.
    pub fn eval(&self, a: f64) -> f64 {
        if let Some(r) = self.spike_at(a) {
            return r;
        }
        self.pieces[self.piece_index(a)].at(a)
    }

    /// Rank at age `a` ignoring spikes.
    pub fn eval_smooth(&self, a: f64) -> f64 {
        self.pieces[self.piece_index(a)].at(a)
    }

    /// `sup { r(t) : lo <= t < hi }`, computed from piece extrema.
    pub fn sup_on(&self, lo: f64, hi: f64) -> f64 {
        let hi = hi.min(self.x_max);
        if !(hi > lo) {
            return f64::NEG_INFINITY;
        }
        let i = self.piece_index(lo);
        let j = self.piece_index(hi);
        let mut out = f64::NEG_INFINITY;
        let edge = |p: &Piece, a: f64, b: f64| {
            // sup over [a, b) inside one piece
            p.at(a).max(if b.is_infinite() { p.left_limit() } else { p.at(b) })
        };
        if i == j {
            out = out.max(edge(&self.pieces[i], lo, hi));
        } else {
            out = out.max(edge(&self.pieces[i], lo, self.pieces[i].end));
            if j > i + 1 {
                out = out.max(self.tree.range_max(i + 1, j));
            }
            if hi > self.pieces[j].start {
                out = out.max(edge(&self.pieces[j], self.pieces[j].start, hi));
            }
        }
        let k = self.spikes.partition_point(|s| s.age < lo);
        for s in &self.spikes[k..] {
            if s.age >= hi {
                break;
            }
            out = out.max(s.rank);
        }
        out
    }

    /// `inf { t >= from : r(t) > w }` restricted to smooth pieces.
    fn first_above_smooth(&self, from: f64, w: f64) -> Option<f64> {
        let w_eff = w + level_slack(w);
        let mut i = self.piece_index(from);
        loop {
            let p = &self.pieces[i];
            let a = from.max(p.start);
            if a < p.end {
                let v = p.at(a);
                if v > w_eff {
                    return Some(a);
                }
                if p.slope > 0.0 {
                    let cross = p.start + (w - p.value) / p.slope;
                    let cross = cross.max(a);
                    if cross < p.end {
                        return Some(cross);
                    }
                }
            }
            i = self.tree.first_above(i + 1, w_eff)?;
        }
    }

    /// `inf { t >= from : r(t) > w }`, or `None` if the rank never exceeds `w`.
    pub fn first_above(&self, from: f64, w: f64) -> Option<f64> {
        self.first_above_inner(from, w, false)
    }

    /// As [`RankFunction::first_above`], but a spike at exactly `from` is
    /// treated as already passed.
    pub fn first_above_past(&self, from: f64, w: f64) -> Option<f64> {
        self.first_above_inner(from, w, true)
    }

    fn first_above_inner(&self, from: f64, w: f64, skip_here: bool) -> Option<f64> {
        let smooth = self.first_above_smooth(from, w);
        let w_eff = w + level_slack(w);
        let k = if skip_here {
            self.spikes.partition_point(|s| s.age <= from)
        } else {
            self.spikes.partition_point(|s| s.age < from)
        };
        let spike = self.spikes[k..]
            .iter()
            .find(|s| s.rank > w_eff)
            .map(|s| s.age);
        match (smooth, spike) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// `inf { t > from : r(t) <= w }` (spikes ignored: they have measure zero).
    pub fn first_at_most_after(&self, from: f64, w: f64) -> Option<f64> {
        let w_eff = w + level_slack(w);
        let mut i = self.piece_index(from);
        while i < self.pieces.len() {
            let p = &self.pieces[i];
            let a = from.max(p.start);
            if a < p.end {
                let v = p.at(a);
                if v <= w_eff {
                    return Some(a);
                }
                if p.slope < 0.0 {
                    let cross = (p.start + (w - p.value) / p.slope).max(a);
                    if cross < p.end {
                        return Some(cross);
                    }
                }
            }
            i += 1;
        }
        None
    }

    /// Supremum of the rank over the whole domain and whether it is attained.
    pub fn sup(&self) -> (f64, bool) {
        let mut cands: Vec<(f64, bool)> = Vec::with_capacity(2 * self.pieces.len());
        let n = self.pieces.len();
        for (i, p) in self.pieces.iter().enumerate() {
            let unattained_tail = i == n - 1 && self.asymptote.is_some();
            cands.push((p.value, !unattained_tail));
            if p.slope > 0.0 {
                cands.push((p.left_limit(), false));
            }
        }
        cands.extend(self.spikes.iter().map(|s| (s.rank, true)));
        let best = cands.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-9 * best.abs().max(1e-300);
        if let Some(l) = self.asymptote {
            // Values that match the limit sit on the approach, strictly below it.
            if l >= best - tol {
                return (best.max(l), false);
            }
        }
        let attained = cands.iter().any(|&(v, hit)| hit && v >= best - tol);
        (best, attained)
    }

    /// Sub-level w-intervals of the rank up to `horizon`.
    pub fn w_intervals(&self, w: f64, horizon: f64) -> WIntervalSet {
        let horizon = horizon.min(self.x_max);
        let mut intervals = Vec::new();
        let mut open_ended = false;
        let mut b = 0.0;
        let guard = 4 * (self.pieces.len() + self.spikes.len()) + 16;
        for k in 0..guard {
            let c = match self.first_above(b, w) {
                Some(c) if c < horizon => c,
                Some(c) if horizon >= self.x_max => c.min(self.x_max),
                Some(_) => {
                    open_ended = true;
                    horizon
                }
                None => {
                    if self.x_max.is_infinite() && horizon.is_finite() && !self.bounded_by(w) {
                        open_ended = true;
                        horizon
                    } else {
                        self.x_max
                    }
                }
            };
            let c_open = open_ended;
            if k == 0 || c > b {
                intervals.push(WInterval {
                    b,
                    c,
                    open: c_open,
                });
            }
            if c_open || c >= self.x_max {
                break;
            }
            match self.first_at_most_after(c, w) {
                Some(next) if next < horizon => {
                    // A jump straight back below w can leave next == c; step past it.
                    b = if next > c { next } else { self.next_boundary(c) };
                    if b >= horizon {
                        open_ended = b < self.x_max;
                        break;
                    }
                }
                Some(next) => {
                    open_ended = next < self.x_max;
                    break;
                }
                None => break,
            }
        }
        WIntervalSet {
            level: w,
            intervals,
            open_ended,
        }
    }

    fn next_boundary(&self, a: f64) -> f64 {
        let i = self.piece_index(a);
        self.pieces[i].end
    }

    /// True when the rank provably never exceeds `w` beyond the last knot.
    fn bounded_by(&self, w: f64) -> bool {
        let last = self.pieces.last().expect("non-empty");
        let w_eff = w + level_slack(w);
        match self.asymptote {
            Some(l) => l <= w_eff,
            None => last.slope <= 0.0 && last.value <= w_eff,
        }
    }

    /// Worst-ever rank, hill ages, and the worst-future-rank function for a job of size `x`.
    pub fn job_profile(&self, x: f64) -> Result<JobProfile> {
        if !(x > 0.0) || !(x < self.x_max) {
            return Err(Error::param("x", "must lie in (0, x_max)"));
        }
        let w_x = self.sup_on(0.0, x);
        let y_x = self.c0(left_limit_level(w_x));
        let z_x = self.c0(w_x);
        Ok(JobProfile {
            x,
            w_x,
            y_x,
            z_x,
            rank: self.clone(),
        })
    }

    /// `c₀[w] = inf{a : r(a) > w}` (`x_max` when the rank never exceeds `w`).
    pub fn c0(&self, w: f64) -> f64 {
        self.first_above(0.0, w).unwrap_or(self.x_max)
    }

    /// Serializes as the line-oriented policy text read by [`RankFunction::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "label {}", self.label);
        let _ = writeln!(out, "x_max {}", fmt_f64(self.x_max));
        if let Some(l) = self.asymptote {
            let _ = writeln!(out, "asymptote {}", fmt_f64(l));
        }
        for p in &self.pieces {
            let _ = writeln!(
                out,
                "piece {} {} {} {}",
                fmt_f64(p.start),
                fmt_f64(p.end),
                fmt_f64(p.value),
                fmt_f64(p.slope)
            );
        }
        for s in &self.spikes {
            let _ = writeln!(out, "spike {} {}", fmt_f64(s.age), fmt_f64(s.rank));
        }
        out
    }

    /// Parses the policy text format: `label NAME`, `x_max X`, `asymptote L`,
    /// `piece START END VALUE SLOPE` and `spike AGE RANK` lines. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pieces = Vec::new();
        let mut spikes = Vec::new();
        let mut label = String::from("custom");
        let mut x_max = None;
        let mut asymptote = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Config(format!("policy line {}: cannot parse `{line}`", n + 1));
            let mut words = line.split_whitespace();
            let key = words.next().ok_or_else(bad)?;
            let nums = |words: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
                words
                    .map(|w| w.parse::<f64>().map_err(|_| bad()))
                    .collect()
            };
            match key {
                "label" => label = words.collect::<Vec<_>>().join(" "),
                "x_max" => x_max = Some(*nums(words)?.first().ok_or_else(bad)?),
                "asymptote" => asymptote = Some(*nums(words)?.first().ok_or_else(bad)?),
                "piece" => {
                    let v = nums(words)?;
                    if v.len() != 4 {
                        return Err(bad());
                    }
                    pieces.push(Piece {
                        start: v[0],
                        end: v[1],
                        value: v[2],
                        slope: v[3],
                    });
                }
                "spike" => {
                    let v = nums(words)?;
                    if v.len() != 2 {
                        return Err(bad());
                    }
                    spikes.push(Spike {
                        age: v[0],
                        rank: v[1],
                    });
                }
                _ => return Err(bad()),
            }
        }
        let x_max = x_max.unwrap_or_else(|| pieces.last().map_or(f64::INFINITY, |p| p.end));
        Self::with_asymptote(pieces, spikes, label, x_max, asymptote)
    }
}

/// Shortest round-trip decimal representation (`inf`/`-inf` for infinities).
pub fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

/// Age of the first global maximum of the rank, or `x_max` when the
/// supremum is approached but never attained.
pub fn worst_age(r: &RankFunction) -> f64 {
    let (sup, attained) = r.sup();
    if !attained || sup.is_infinite() {
        return r.x_max;
    }
    let tol = 1e-9 * sup.abs().max(1e-300);
    let near = |v: f64| v >= sup - tol;
    let mut best = r.x_max;
    let n = r.pieces.len();
    for (i, p) in r.pieces.iter().enumerate() {
        if i == n - 1 && r.asymptote.is_some() {
            continue;
        }
        if near(p.value) {
            best = best.min(p.start);
            break;
        }
    }
    for s in &r.spikes {
        if near(s.rank) {
            best = best.min(s.age);
            break;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WInterval {
    pub b: f64,
    pub c: f64,
    /// `c` was cut at the scan horizon.
    pub open: bool,
}

/// Maximal w-intervals `(b_k, c_k)` of a rank function, in age order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WIntervalSet {
    pub level: f64,
    pub intervals: Vec<WInterval>,
    /// More intervals may exist past the scan horizon.
    pub open_ended: bool,
}

impl WIntervalSet {
    pub fn count(&self) -> usize {
        self.intervals.len()
    }
}

/// Per-size view of a rank function.
#[derive(Debug, Clone, PartialEq)]
pub struct JobProfile {
    pub x: f64,
    /// `sup_{a < x} r(a)`.
    pub w_x: f64,
    /// `c₀[w_x−]`.
    pub y_x: f64,
    /// `c₀[w_x]`.
    pub z_x: f64,
    rank: RankFunction,
}

impl JobProfile {
    /// `w_x(a) = sup_{a <= t < x} r(t)`.
    pub fn worst_future_rank(&self, a: f64) -> f64 {
        self.rank.sup_on(a, self.x)
    }
}

/// Evaluates each rank function on `ages` and renders `age,<label>...` CSV rows.
pub fn rank_table_csv(ranks: &[RankFunction], ages: &[f64]) -> String {
    let mut out = String::from("age");
    for r in ranks {
        out.push(',');
        out.push_str(r.label());
    }
    out.push('\n');
    for &a in ages {
        out.push_str(&fmt_f64(a));
        for r in ranks {
            out.push(',');
            out.push_str(&fmt_f64(r.eval(a)));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sawtooth(period: f64, until: f64) -> RankFunction {
        let mut pieces = Vec::new();
        let mut s = 0.0;
        while s < until {
            pieces.push(Piece {
                start: s,
                end: s + period,
                value: 0.0,
                slope: 1.0,
            });
            s += period;
        }
        RankFunction::from_pieces(pieces, vec![], "sawtooth", s).unwrap()
    }

    #[test]
    fn policy_examples() {
        assert_eq!(RankFunction::fcfs().eval(7.0), 0.0);
        assert_eq!(RankFunction::step(2.0).unwrap().eval(5.0), 2.0);
        let spike = RankFunction::spike(2.0).unwrap();
        assert_eq!(spike.eval(2.0), 1.0);
        assert_eq!(spike.eval(1.999), 0.0);
        assert_eq!(RankFunction::fb().eval(3.5), 3.5);
    }

    #[test]
    fn worst_age_examples() {
        assert_eq!(worst_age(&RankFunction::fcfs()), 0.0);
        assert_eq!(worst_age(&RankFunction::fb()), f64::INFINITY);
        assert_eq!(worst_age(&RankFunction::fb().restrict(4.0).unwrap()), 4.0);
        assert_eq!(worst_age(&RankFunction::step(3.0).unwrap()), 3.0);
        assert_eq!(worst_age(&RankFunction::spike(1.5).unwrap()), 1.5);
    }

    #[test]
    fn w_interval_examples() {
        let fb = RankFunction::fb().w_intervals(5.0, 100.0);
        assert_eq!(fb.count(), 1);
        assert_eq!((fb.intervals[0].b, fb.intervals[0].c), (0.0, 5.0));
        let step = RankFunction::step(2.0).unwrap().w_intervals(1.0, 100.0);
        assert_eq!(step.count(), 1);
        assert_eq!(step.intervals[0].c, 1.0);
    }

    #[test]
    fn sawtooth_intervals_match_dense_scan() {
        let r = sawtooth(2.0, 6.0);
        let set = r.w_intervals(1.5, 6.0);
        let got: Vec<(f64, f64)> = set.intervals.iter().map(|i| (i.b, i.c)).collect();
        // oracle: scan at step 1e-4 for maximal runs with r <= 1.5
        let mut runs = Vec::new();
        let mut start: Option<f64> = None;
        let n = 60_000;
        for i in 0..=n {
            let a = i as f64 * 1e-4;
            let inside = a < 6.0 && r.eval(a) <= 1.5;
            match (inside, start) {
                (true, None) => start = Some(a),
                (false, Some(s)) => {
                    runs.push((s, a));
                    start = None;
                }
                _ => {}
            }
        }
        assert_eq!(got.len(), runs.len());
        for ((b, c), (sb, sc)) in got.iter().zip(&runs) {
            assert!((b - sb).abs() <= 2e-4 && (c - sc).abs() <= 2e-4, "{got:?} vs {runs:?}");
        }
        assert_eq!(got, vec![(0.0, 1.5), (2.0, 3.5), (4.0, 5.5)]);
    }

    #[test]
    fn job_profile_examples() {
        let p = RankFunction::fb().job_profile(3.0).unwrap();
        assert_eq!(p.w_x, 3.0);
        assert!((p.y_x - 3.0).abs() < 1e-8);
        assert_eq!(p.z_x, 3.0);
        let p = RankFunction::step(2.0).unwrap().job_profile(5.0).unwrap();
        assert_eq!(p.w_x, 2.0);
        assert!((p.y_x - 2.0).abs() < 1e-8);
        assert_eq!(p.z_x, f64::INFINITY);
        assert_eq!(p.worst_future_rank(3.0), 2.0);
        assert_eq!(p.worst_future_rank(1.0), 2.0);
    }

    #[test]
    fn policy_text_round_trips() {
        let r = RankFunction::spike(2.5).unwrap();
        let back = RankFunction::parse(&r.to_text()).unwrap();
        assert_eq!(back, r);
        let saw = sawtooth(1.0, 4.0);
        assert_eq!(RankFunction::parse(&saw.to_text()).unwrap(), saw);
        assert!(matches!(
            RankFunction::parse("piece 0 1 0"),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn sup_on_matches_sampling(lo in 0.0f64..8.0, len in 0.01f64..8.0) {
            let r = sawtooth(1.3, 20.0);
            let hi = lo + len;
            let exact = r.sup_on(lo, hi);
            let sampled = (0..2000)
                .map(|i| r.eval(lo + len * i as f64 / 2000.0))
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(exact >= sampled - 1e-12);
            prop_assert!(exact <= sampled + len / 1000.0 + 1e-12);
        }

        #[test]
        fn worst_future_rank_is_non_increasing(x in 0.5f64..15.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let r = sawtooth(1.7, 20.0);
            let p = r.job_profile(x).unwrap();
            let (a, b) = (a.min(b) * x, a.max(b) * x);
            prop_assert!(p.worst_future_rank(a) >= p.worst_future_rank(b));
            prop_assert!(p.y_x <= p.z_x);
        }

        #[test]
        fn w_intervals_are_ordered_and_sublevel(w in 0.05f64..2.0) {
            let r = sawtooth(1.7, 20.0);
            let set = r.w_intervals(w, 20.0);
            for pair in set.intervals.windows(2) {
                prop_assert!(pair[0].c <= pair[1].b);
            }
            for iv in &set.intervals {
                for i in 1..50 {
                    let a = iv.b + (iv.c - iv.b) * i as f64 / 50.0;
                    prop_assert!(r.eval(a) <= w + 1e-9);
                }
                if iv.c < r.x_max() && !iv.open {
                    prop_assert!(r.eval(iv.c + 1e-7) > w || r.eval(iv.c) > w);
                }
            }
        }
    }
}
