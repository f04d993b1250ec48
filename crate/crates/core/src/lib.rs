//! Scheduling analysis for the M/G/1 queue with unknown job sizes.
//!
//! The crate computes SOAP rank functions (Gittins, FCFS, FB, step, spike,
//! approximate Gittins), classifies their response-time tail behavior
//! analytically, and checks the predictions against a preemptive
//! event-driven simulator.
//!
//! * [`dist`]: job-size distributions, transforms, residual life.
//! * [`rank`]: rank functions, Gittins machinery, w-intervals, Gittins game.
//! * [`light`]: decay rates for light-tailed job sizes.
//! * [`heavy`]: exponent diagnostics for heavy-tailed job sizes.
//! * [`sim`]: the simulator and tail statistics.
//! * [`experiment`]: config parsing and report writers behind the CLI.

pub mod catalog;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod heavy;
pub mod light;
pub mod quad;
pub mod rank;
pub mod sim;

pub use dist::{
    classify_nbue, make_distribution, DistSpec, GridSpec, JobSizeDistribution, Lst, NbueClass,
    SystemParams, TailClass,
};
pub use error::{Error, Result};
pub use rank::RankFunction;
