use thiserror::Error;

use crate::normal_modes::Mode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("capacitance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("non-positive Josephson energy {value} GHz for mode {mode:?}; effective model invalid at this flux")]
    InvalidEffectiveModel { mode: Mode, value: f64 },

    #[error("cutoff {cutoff} too small for mode {mode:?} (need at least 2 levels)")]
    CutoffTooSmall { mode: Mode, cutoff: usize },

    #[error("charge basis n_max = {n_max} too small: ground-state charge variance {variance:.3} on island {island} exceeds {limit:.3}")]
    BasisTooSmall {
        n_max: usize,
        island: usize,
        variance: f64,
        limit: f64,
    },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("label {label} claimed by states {first} and {second} with overlaps {overlap_first:.3} and {overlap_second:.3}")]
    LabelConflict {
        label: String,
        first: usize,
        second: usize,
        overlap_first: f64,
        overlap_second: f64,
    },

    #[error("no eigenstate carries label {0}")]
    MissingLabel(String),

    #[error("branch {label} is hybridized at flux {flux}")]
    Hybridized { label: String, flux: f64 },

    #[error("exact resonance between levels {from} -> {to} and the resonator")]
    Resonance { from: usize, to: usize },

    #[error("pole in dispersive shift: detuning {0} GHz plus Kerr term vanishes")]
    DispersivePole(f64),

    #[error("cannot assign dressed state {0} in coupled spectrum; hybridization too strong for a dispersive reading")]
    AmbiguousDressedState(String),

    #[error("at flux {flux}: {source}")]
    AtFlux {
        flux: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("observation {index}: {source}")]
    AtObservation {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("both relaxation and dephasing rates are zero")]
    ZeroRates,

    #[error("dispersive shift must be non-zero")]
    ZeroDispersiveShift,

    #[error("{failed} of {total} bootstrap refits failed")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("invalid observation set: {0}")]
    InvalidObservations(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn at_flux(self, flux: f64) -> Self {
        Error::AtFlux {
            flux,
            source: Box::new(self),
        }
    }

    pub fn at_observation(self, index: usize) -> Self {
        Error::AtObservation {
            index,
            source: Box::new(self),
        }
    }
}
