//! Irreversible-to-reversible capacity investment with proportional costs,
//! single-agent and mean-field equilibrium solvers, and a Monte Carlo
//! simulator for the N-player game.

// `!(x > 0.0)` style guards are deliberate: NaN has to fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod check;
pub mod cli;
pub mod config;
pub mod equilibrium;
pub mod error;
pub mod params;
pub mod sensitivity;
pub mod sim;
pub mod single_agent;

pub use equilibrium::{solve_equilibrium, EquilibriumSolution, StationaryLaw};
pub use error::{Error, Result};
pub use params::{
    compute_exponents, validate, CharacteristicExponents, ModelParams, ValidityReport,
};
pub use single_agent::{solve_single_agent, ThresholdPolicy, ValueFunction};
