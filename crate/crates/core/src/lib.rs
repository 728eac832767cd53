//! Deciding when a smart-grid appliance should pay to inquire the real-time
//! power price.
//!
//! The power price at a bus is a step function of system load (an LMP curve).
//! Between inquiries the load drifts as a truncated Gaussian whose variance
//! grows linearly with elapsed time, so the price the appliance last saw goes
//! stale. Each slot the appliance either consumes at the optimum for the stale
//! price or pays a communication cost `c` to learn the current one.
//!
//! The crate models this as a Markov decision process over states
//! `(price level, information age)`:
//!
//! - [`lmp_curve`] ingests LMP-vs-load tables and maps loads to price levels,
//! - [`load_model`] is the truncated-Gaussian load law,
//! - [`kernel`] computes the level-to-level transition matrices by quadrature,
//! - [`mdp`] solves the inquiry MDP by value iteration and evaluates fixed
//!   policies exactly,
//! - [`policies`] builds the myopic rule and baseline inquiry strategies,
//! - [`simulator`] runs Monte Carlo episodes and the cost-ratio sweeps.

pub mod error;
pub mod kernel;
pub mod lmp_curve;
pub mod load_model;
pub mod mdp;
pub mod policies;
mod quad;
pub mod simulator;

pub use error::Error;
pub use kernel::TransitionKernel;
pub use lmp_curve::{LmpCurve, LmpTable};
pub use load_model::LoadLaw;
pub use mdp::{Action, ModelConfig, MdpState, PolicyTable, ValueFunction};
pub use policies::PolicyKind;
pub use simulator::{SimConfig, SimMode, Simulator};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
