//! Battery state-of-health estimation from reference voltage trajectories.
//!
//! The crate simulates a lithium-ion cell under piecewise-constant current
//! excitations, designs information-optimal excitations with particle swarm
//! optimization, and jointly estimates four degradation parameters
//! (active material fractions and 0%-SOC stoichiometries of both electrodes)
//! with or without a beginning-of-life reference trajectory that cancels
//! model and measurement bias.
//!
//! Modules map onto the workflow:
//!
//! * [`params`]: parameter sets, OCP curves, degradation scenarios.
//! * [`sim`]: OCP model, SPMe, shell-resolved plant, uncertainty injection.
//! * [`fisher`]: output sensitivities, Fisher information, optimality metrics,
//!   predicted estimation-error statistics.
//! * [`design`]: PSO excitation design and the constant-current baseline.
//! * [`estimation`]: conventional and reference-voltage least squares.
//! * [`harness`]: experiment plans, Monte Carlo studies and reports.

pub mod design;
pub mod error;
pub mod estimation;
pub mod fisher;
pub mod harness;
pub mod params;
pub mod sim;

pub use error::{Error, Result};
