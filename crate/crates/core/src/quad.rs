//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Semi-infinite ranges `[a, ∞)` are mapped onto `[0, 1)` with
//! `t = a + u / (1 - u)`. Known discontinuities (atoms of a distribution)
//! should be passed as breakpoints so no panel straddles them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_94,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_panels: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub abs_error: f64,
}

struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, cuts: &[f64], opts: QuadOptions) -> Estimate {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in cuts.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let (value, error) = kronrod(f, w[0], w[1]);
        total += value;
        total_err += error;
        heap.push(Panel {
            lo: w[0],
            hi: w[1],
            value,
            error,
        });
    }
    while total_err > opts.abs_tol.max(opts.rel_tol * total.abs()) && heap.len() < opts.max_panels
    {
        let Some(worst) = heap.pop() else { break };
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            heap.push(worst);
            break;
        }
        let (lv, le) = kronrod(f, worst.lo, mid);
        let (rv, re) = kronrod(f, mid, worst.hi);
        total += lv + rv - worst.value;
        total_err += le + re - worst.error;
        heap.push(Panel {
            lo: worst.lo,
            hi: mid,
            value: lv,
            error: le,
        });
        heap.push(Panel {
            lo: mid,
            hi: worst.hi,
            value: rv,
            error: re,
        });
    }
    // Re-sum to shed the drift of incremental updates.
    let (value, abs_error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), p| (v + p.value, e + p.error));
    Estimate { value, abs_error }
}

/// Integrates `f` over `[lo, hi]`; `hi` may be `+∞`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, opts: QuadOptions) -> Estimate {
    integrate_with_breaks(f, lo, hi, &[], opts)
}

/// Integrates `f` over `[lo, hi]` with extra panel boundaries at `breaks`
/// (points outside the range are ignored).
pub fn integrate_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Estimate {
    if !(hi > lo) {
        return Estimate {
            value: 0.0,
            abs_error: 0.0,
        };
    }
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi && b.is_finite())
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();

    if hi.is_finite() {
        let mut cuts = Vec::with_capacity(inner.len() + 2);
        cuts.push(lo);
        cuts.extend(inner);
        cuts.push(hi);
        return adaptive(&f, &cuts, opts);
    }

    // Finite part up to the last breakpoint, then the mapped tail.
    let tail_start = inner.last().copied().unwrap_or(lo);
    let mut finite = Estimate {
        value: 0.0,
        abs_error: 0.0,
    };
    if tail_start > lo {
        let mut cuts = vec![lo];
        cuts.extend(inner);
        finite = adaptive(&f, &cuts, opts);
    }
    let mapped = |u: f64| {
        let one_minus = 1.0 - u;
        let t = tail_start + u / one_minus;
        let v = f(t);
        if v == 0.0 {
            0.0
        } else {
            v / (one_minus * one_minus)
        }
    };
    // Split the unit interval so the map's stretched end gets its own panels.
    let tail = adaptive(&mapped, &[0.0, 0.5, 0.9, 0.99, 1.0], opts);
    Estimate {
        value: finite.value + tail.value,
        abs_error: finite.abs_error + tail.abs_error,
    }
}
