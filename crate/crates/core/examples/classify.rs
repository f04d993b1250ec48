// Tail class, residual-life class and Gittins light-tail verdict for every
// catalog distribution.

use soap_tails::light::{classify_gittins, GittinsClassification};
use soap_tails::{catalog, classify_nbue, GridSpec, Result, TailClass};

pub fn run_example() -> Result<Vec<(String, TailClass, Option<GittinsClassification>)>> {
    let grid = GridSpec::default();
    let mut out = Vec::new();
    for d in catalog::all() {
        let class = d.tail_class();
        let gittins = match class {
            TailClass::NicelyLight => Some(classify_gittins(&d, &grid)?),
            _ => None,
        };
        match &gittins {
            Some(g) => println!(
                "{:<28} light  {:?} -> {:?} (worst age {}, consistent {})",
                d.name(),
                g.nbue,
                g.verdict,
                g.worst_age,
                g.consistent()
            ),
            None => println!(
                "{:<28} {:?} residual class {:?}",
                d.name(),
                class,
                classify_nbue(&d, &grid).ok()
            ),
        }
        out.push((d.name().to_string(), class, gittins));
    }
    Ok(out)
}

fn main() -> Result<()> {
    run_example().map(|_| ())
}
