// Interval-geometry exponents for heavy-tailed job sizes. The Pareto
// Gittins rank is increasing past age 1, so no w_x-interval starts after x
// and the fit is vacuous; a hand-made ladder policy whose low stretches grow
// with their start age gives ζ ≈ 1 and fails the sufficient condition.

use soap_tails::heavy::{diagnostic_curves, fit_exponents, geometric_grid, sufficient_condition};
use soap_tails::rank::{build_gittins, Piece};
use soap_tails::{catalog, GridSpec, RankFunction, Result, SystemParams};

/// Rank 0 on `[2^k, 1.5·2^k)` and `2^{k+2}` on `[1.5·2^k, 2^{k+1})` for
/// `k < levels`, then 0 for good: low stretches grow like their start age and
/// the last one never closes.
pub fn ladder(levels: i32) -> Result<RankFunction> {
    let mut pieces = vec![Piece {
        start: 0.0,
        end: 1.0,
        value: 0.0,
        slope: 0.0,
    }];
    for k in 0..levels {
        let s = 2f64.powi(k);
        pieces.push(Piece {
            start: s,
            end: 1.5 * s,
            value: 0.0,
            slope: 0.0,
        });
        pieces.push(Piece {
            start: 1.5 * s,
            end: 2.0 * s,
            value: 4.0 * s,
            slope: 0.0,
        });
    }
    pieces.push(Piece {
        start: 2f64.powi(levels),
        end: f64::INFINITY,
        value: 0.0,
        slope: 0.0,
    });
    RankFunction::from_pieces(pieces, vec![], "ladder", f64::INFINITY)
}

pub struct Summary {
    pub gittins_vacuous: bool,
    pub gittins_sufficient: bool,
    pub ladder_zeta: f64,
    pub ladder_theta: f64,
    pub ladder_sufficient: bool,
    pub gittins_margin: f64,
}

pub fn run_example() -> Result<Summary> {
    let d = catalog::get("pareto");
    let p = SystemParams::from_rho(&d, 0.5)?;
    let sizes = geometric_grid(1, 8);
    let horizon = d.horizon();

    let (_, gittins_margin) = sufficient_condition(0.0, 1.0, f64::INFINITY, 2.5, 2.5)?;
    println!("exponents (0, 1, inf) with alpha = beta = 2.5: margin {gittins_margin:.3}");

    let g = build_gittins(&d, &GridSpec::default())?;
    let fit = fit_exponents(&g, &d, &sizes, horizon)?;
    println!(
        "gittins: vacuous = {}, (zeta, theta, eta) = ({}, {}, {}), sufficient = {}",
        fit.vacuous, fit.zeta, fit.theta, fit.eta, fit.sufficient
    );
    for row in diagnostic_curves(&g, &d, &p, &sizes, &[1.0], horizon)? {
        println!(
            "  x = {:>5}: sum/x = {:.4}, integral ratio = {:.4}",
            row.x, row.moment_ratio, row.integral_ratio
        );
    }

    // Round-trip through the policy text format, as the CLI would read it.
    let lad = RankFunction::parse(&ladder(30)?.to_text())?;
    let lf = fit_exponents(&lad, &d, &sizes, 1e12)?;
    println!(
        "ladder: (zeta, theta, eta) = ({:.3}, {:.3}, {}), margin {:.3}, sufficient = {}",
        lf.zeta, lf.theta, lf.eta, lf.margin, lf.sufficient
    );
    Ok(Summary {
        gittins_vacuous: fit.vacuous,
        gittins_sufficient: fit.sufficient,
        ladder_zeta: lf.zeta,
        ladder_theta: lf.theta,
        ladder_sufficient: lf.sufficient,
        gittins_margin,
    })
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
