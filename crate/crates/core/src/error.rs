use thiserror::Error;

use crate::params::FieldViolation;
use crate::picture::Picture;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid cavity parameters: {}", join_violations(.0))]
    InvalidParams(Vec<FieldViolation>),

    #[error("expected an amplitude in the {expected:?} picture, got {found:?}")]
    WrongPicture { expected: Picture, found: Picture },

    #[error("operation requires {expected} mode")]
    ModeMismatch { expected: &'static str },

    #[error(
        "step too large for the single-jump regime: κΔt·max(1,|α|²) = {product:.3e} > {limit} at |α|² = {photon_number:.6e}"
    )]
    StepTooLarge {
        photon_number: f64,
        product: f64,
        limit: f64,
    },

    #[error("non-finite value for {what}")]
    NonFinite { what: &'static str },

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Fock truncation N = {dim_minus_one} too small: tail mass {tail_mass:.3e} exceeds {limit:.0e}; try N ≥ {suggested}")]
    TruncationTooSmall {
        dim_minus_one: usize,
        tail_mass: f64,
        limit: f64,
        suggested: usize,
    },

    #[error(
        "Fock truncation breached at t = {time:.4}: population {population:.3e} in level {level} exceeds {limit:.0e}; suggested N ≥ {suggested}"
    )]
    TruncationBreach {
        time: f64,
        level: usize,
        population: f64,
        limit: f64,
        suggested: usize,
    },
}

fn join_violations(v: &[FieldViolation]) -> String {
    v.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ")
}
