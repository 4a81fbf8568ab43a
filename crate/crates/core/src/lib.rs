//! Three-island transmon circuit with a protected qubit mode: circuit model,
//! normal-mode effective model, exact charge-basis diagonalization, resonator
//! dispersive shifts, coherence limits and parameter fitting.

pub mod charge_basis;
pub mod circuit;
pub mod decoherence;
pub mod eigen;
pub mod error;
pub mod fitting;
pub mod normal_modes;
pub mod resonator;
pub mod units;

pub use circuit::{CircuitParams, FluxBias};
pub use error::{Error, Result};
pub use normal_modes::{EffectiveParams, Mode, Occupation};
