//! Named distributions used throughout the examples and tests.

use crate::dist::{make_distribution, DistSpec, JobSizeDistribution};

pub fn spec(name: &str) -> Option<DistSpec> {
    use DistSpec as S;
    Some(match name {
        "exp" => S::Exponential { rate: 1.0 },
        "hyperexp" => S::Hyperexponential {
            probs: vec![0.5, 0.5],
            rates: vec![2.0, 0.5],
        },
        "uniform" => S::Uniform { upper: 1.0 },
        "det" => S::Deterministic { value: 1.0 },
        "erlang2" => S::Erlang {
            shape: 2,
            rate: 2.0,
        },
        "pareto" => S::Pareto {
            alpha: 2.5,
            scale: 1.0,
        },
        "bounded_pareto" => S::BoundedPareto {
            alpha: 1.5,
            lower: 1.0,
            upper: 1000.0,
        },
        "weibull" => S::Weibull {
            shape: 0.5,
            scale: 1.0,
        },
        _ => return None,
    })
}

pub const NAMES: [&str; 8] = [
    "exp",
    "hyperexp",
    "uniform",
    "det",
    "erlang2",
    "pareto",
    "bounded_pareto",
    "weibull",
];

pub const LIGHT: [&str; 6] = ["exp", "hyperexp", "uniform", "det", "erlang2", "bounded_pareto"];

pub const HEAVY: [&str; 2] = ["pareto", "weibull"];

pub fn get(name: &str) -> JobSizeDistribution {
    make_distribution(&spec(name).unwrap_or_else(|| panic!("unknown catalog entry {name}")))
        .expect("catalog parameters are valid")
}

/// Every catalog member.
pub fn all() -> Vec<JobSizeDistribution> {
    NAMES.iter().map(|n| get(n)).collect()
}
