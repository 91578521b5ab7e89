//! Quantum-jump simulation of a single damped cavity mode.
//!
//! The cavity field stays in a coherent state `|α⟩` along every quantum
//! trajectory, so a trajectory is a stochastic process on one complex
//! amplitude. Two drive configurations are supported:
//!
//! * continuous resonant laser driving, where photon emissions leave the
//!   field unchanged and the ensemble relaxes to a unique coherent state;
//! * instantaneous feedback, where every detected photon displaces the
//!   field by `β`. Above `η|β|² = 1` the vacuum becomes a repulsive fixed
//!   point and the dynamics split into vacuum-bound and diverging families.
//!
//! Modules:
//!
//! * [`params`], [`picture`], [`rng`]: domain types and the per-trajectory
//!   random-stream contract.
//! * [`analytic`]: closed-form amplitudes, rates and thresholds.
//! * [`trajectory`]: the jump engine with fixed-step and exact waiting-time
//!   samplers.
//! * [`ensemble`]: parallel ensemble statistics, χ maps and ergodicity.
//! * [`fock`]: an independent truncated-Fock-space master-equation oracle.
//! * [`output`]: CSV writers for every file schema.

pub mod analytic;
pub mod ensemble;
mod error;
pub mod exec;
pub mod fock;
pub mod output;
pub mod params;
pub mod picture;
pub mod rng;
pub mod stats;
pub mod trajectory;

pub use error::{Error, Result};
pub use exec::Execution;
pub use num_complex::Complex64 as C64;
pub use params::{CavityParams, DriveMode, FieldViolation};
pub use picture::{CoherentAmplitude, Picture};
pub use rng::{RandomStream, TrajectoryRng};
