//! Physical constants and the unit conventions used throughout the crate.
//!
//! Energies and frequencies are linear frequencies (h = 1): GHz for circuit
//! spectra, MHz for couplings, dispersive shifts and linewidths. Capacitances
//! are in fF, flux in units of the flux quantum, times in µs.

use std::f64::consts::PI;

/// Elementary charge (C).
pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
/// Planck constant (J s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);

const FEMTO: f64 = 1e-15;

/// Charging energy e²/(2C) of a 1 fF capacitor, in GHz.
///
/// Every `E_C = e²/2 · (C⁻¹)` conversion goes through this constant, so an
/// inverse capacitance in 1/fF multiplies it directly.
pub const EC_GHZ_PER_INV_FF: f64 =
    ELECTRON_CHARGE * ELECTRON_CHARGE / (2.0 * FEMTO * PLANCK) / 1e9;

/// GHz to MHz.
pub const MHZ_PER_GHZ: f64 = 1e3;

/// Zero-point charge fluctuation sqrt(ħ / 2Z) of a resonator with impedance `z_ohm`, in C.
pub fn resonator_charge_zpf(z_ohm: f64) -> f64 {
    (HBAR / (2.0 * z_ohm)).sqrt()
}

/// Coupling energy in MHz per Cooper pair of island charge, per 1/fF of
/// inverse capacitance to the resonator node.
///
/// `g = sqrt(ħ/2Z) · (C⁻¹)_kr · 2e · ⟨i|n_k|j⟩ / h`.
pub fn coupling_mhz_per_cooper_pair(z_ohm: f64) -> f64 {
    resonator_charge_zpf(z_ohm) * (1.0 / FEMTO) * 2.0 * ELECTRON_CHARGE / PLANCK / 1e6
}

/// Converts a linear rate in MHz (x/2π) to an angular rate in 1/µs.
pub fn angular_per_us(mhz: f64) -> f64 {
    2.0 * PI * mhz
}
