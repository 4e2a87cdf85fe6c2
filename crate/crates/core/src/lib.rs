//! Nonextensive quantum kinetic theory of boson and fermion gases.
//!
//! The crate evolves mean occupation numbers under the two-body collision
//! master equation, measures the q-deformed quantum entropy and its
//! production rate, and constructs the q-generalized Fermi-Dirac and
//! Bose-Einstein stationary distributions.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the command-line tool
//! and the acceptance suite use.

pub mod cli;
pub mod dynamics;
pub mod entropy;
pub mod equilibrium;
pub mod error;
pub mod gas;
pub mod kernel;
pub mod qmath;
pub mod rng;
pub mod scalar;
pub mod selfcheck;
pub mod sum;

pub use error::{Error, Result};
pub use gas::Statistics;
pub use kernel::{ChannelId, Direction};
pub use scalar::Scalar;

pub type QIndex = qmath::QIndex<f64>;
pub type LevelGroup = gas::LevelGroup<f64>;
pub type LevelGrid = gas::LevelGrid<f64>;
pub type GasState = gas::GasState<f64>;
pub type CollisionChannel = kernel::CollisionChannel<f64>;
pub type CollisionKernel = kernel::CollisionKernel<f64>;
pub type RateSpec = kernel::RateSpec<f64>;
pub type EntropyDiagnostics = entropy::EntropyDiagnostics<f64>;
pub type IntegratorConfig = dynamics::IntegratorConfig<f64>;
pub type TimeSeriesRecord = dynamics::TimeSeriesRecord<f64>;
pub type Trajectory = dynamics::Trajectory<f64>;
pub type EquilibriumParams = equilibrium::EquilibriumParams<f64>;
