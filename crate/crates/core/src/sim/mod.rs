//! Reflected-path simulation, stationary sampling and the N-player
//! ε-Nash experiment.

pub mod exec;
pub mod nash;
pub mod path;
pub mod payoff;
pub mod sampling;
pub mod stats;

pub use exec::Execution;
pub use nash::{
    nash_gap_experiment, nash_gap_experiment_with, Deviation, GapEstimate, NashGapConfig,
    NashGapReport, NashGapRow, RateCheck,
};
pub use path::{
    simulate_ensemble, simulate_indexed_path, simulate_reflected_path, InitialLaw, PathResult,
    PathSummary, PayoffComponents, SimConfig,
};
pub use payoff::{estimate_payoff, PayoffEstimate};
pub use sampling::{sample_stationary, PriceSampler};
pub use stats::ks_distance;
