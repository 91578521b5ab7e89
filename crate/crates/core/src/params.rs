//! Physical parameters of a run.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveMode {
    /// Continuous resonant driving with Rabi frequency `omega`; `beta` is ignored.
    LaserDriven,
    /// Detection-triggered displacement by `beta`; `omega` is ignored.
    Feedback,
}

/// Parameters shared read-only by every worker of a run.
///
/// Rates are inverse times. The laser phase is absorbed into `α`, so `omega`
/// is real and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    pub kappa: f64,
    pub omega: f64,
    pub eta: f64,
    pub beta: C64,
    /// Only used to rotate into the Schrödinger picture for display.
    pub omega_cav: f64,
    pub mode: DriveMode,
}

/// One violated parameter invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldViolation {
    pub field: &'static str,
    pub reason: String,
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl CavityParams {
    pub fn laser(kappa: f64, omega: f64) -> Self {
        Self {
            kappa,
            omega,
            eta: 0.0,
            beta: C64::new(0.0, 0.0),
            omega_cav: 0.0,
            mode: DriveMode::LaserDriven,
        }
    }

    pub fn feedback(kappa: f64, eta: f64, beta: C64) -> Self {
        Self {
            kappa,
            omega: 0.0,
            eta,
            beta,
            omega_cav: 0.0,
            mode: DriveMode::Feedback,
        }
    }

    pub fn with_omega_cav(mut self, omega_cav: f64) -> Self {
        self.omega_cav = omega_cav;
        self
    }

    pub fn is_laser(&self) -> bool {
        self.mode == DriveMode::LaserDriven
    }

    pub fn is_feedback(&self) -> bool {
        self.mode == DriveMode::Feedback
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        let mut push = |field, reason: String| bad.push(FieldViolation { field, reason });

        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            push("kappa", format!("must be finite and > 0, got {}", self.kappa));
        }
        if !(self.omega.is_finite() && self.omega >= 0.0) {
            push("omega", format!("must be finite and ≥ 0, got {}", self.omega));
        }
        if !(self.eta.is_finite() && (0.0..=1.0).contains(&self.eta)) {
            push("eta", format!("must lie in [0, 1], got {}", self.eta));
        }
        if !(self.beta.re.is_finite() && self.beta.im.is_finite()) {
            push("beta", format!("must be finite, got {}", self.beta));
        }
        if !self.omega_cav.is_finite() {
            push("omega_cav", format!("must be finite, got {}", self.omega_cav));
        }

        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(bad))
        }
    }

    pub(crate) fn require_feedback(&self) -> Result<()> {
        if self.is_feedback() {
            Ok(())
        } else {
            Err(Error::ModeMismatch { expected: "feedback" })
        }
    }
}
