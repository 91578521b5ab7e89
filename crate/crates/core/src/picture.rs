use serde::{Deserialize, Serialize};

use crate::{CavityParams, Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Picture {
    Interaction,
    Schrodinger,
}

/// A coherent-state label `α`, which is the full state of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherentAmplitude {
    pub value: C64,
    pub picture: Picture,
}

impl CoherentAmplitude {
    pub fn interaction(value: C64) -> Self {
        Self {
            value,
            picture: Picture::Interaction,
        }
    }

    pub fn schrodinger(value: C64) -> Self {
        Self {
            value,
            picture: Picture::Schrodinger,
        }
    }

    pub fn photon_number(&self) -> f64 {
        self.value.norm_sqr()
    }
}

/// `α_S(t) = α_I(t) e^{-iω_cav t}`.
pub fn to_schrodinger(
    alpha: CoherentAmplitude,
    t: f64,
    params: &CavityParams,
) -> Result<CoherentAmplitude> {
    if alpha.picture != Picture::Interaction {
        return Err(Error::WrongPicture {
            expected: Picture::Interaction,
            found: alpha.picture,
        });
    }
    Ok(CoherentAmplitude::schrodinger(
        alpha.value * C64::from_polar(1.0, -params.omega_cav * t),
    ))
}

/// Inverse rotation of [`to_schrodinger`].
pub fn to_interaction(
    alpha: CoherentAmplitude,
    t: f64,
    params: &CavityParams,
) -> Result<CoherentAmplitude> {
    if alpha.picture != Picture::Schrodinger {
        return Err(Error::WrongPicture {
            expected: Picture::Schrodinger,
            found: alpha.picture,
        });
    }
    Ok(CoherentAmplitude::interaction(
        alpha.value * C64::from_polar(1.0, params.omega_cav * t),
    ))
}
