//! Closed-form coherence limits: flux-noise and photon-shot-noise dephasing,
//! Purcell decay, combined T2, and photon numbers inferred from Stark shifts.
//!
//! Public inputs are linear frequencies (GHz, MHz); rates are angular and
//! returned in 1/µs, times in µs.

use std::fmt;

use num_complex::Complex64;

use crate::charge_basis::{solve_labeled, ChargeBasisConfig, SpectrumSweep};
use crate::circuit::{CircuitParams, FluxBias};
use crate::error::{Error, Result};
use crate::normal_modes::Occupation;
use crate::units::{angular_per_us, MHZ_PER_GHZ};

/// Default residual thermal photon number of the resonator.
pub const DEFAULT_N_INITIAL: f64 = 0.005;
/// Finite-difference step for flux derivatives (φ0).
pub const FLUX_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseEnvironment {
    /// Flux-noise amplitude in µφ0, the factor multiplying |∂ω/∂φ|.
    pub a_phi: f64,
    /// Residual thermal resonator population.
    pub n_initial: f64,
    /// Energy relaxation rate (1/µs), if known.
    pub gamma1: Option<f64>,
}

impl Default for NoiseEnvironment {
    fn default() -> Self {
        NoiseEnvironment {
            a_phi: 1.69,
            n_initial: DEFAULT_N_INITIAL,
            gamma1: None,
        }
    }
}

impl NoiseEnvironment {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_phi >= 0.0 && self.a_phi.is_finite()) {
            return Err(Error::invalid("a_phi", "must be non-negative"));
        }
        if !(self.n_initial >= 0.0 && self.n_initial.is_finite()) {
            return Err(Error::invalid("n_initial", "must be non-negative"));
        }
        if let Some(g) = self.gamma1 {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(Error::invalid("gamma1", "must be non-negative"));
            }
        }
        Ok(())
    }

    /// Total photon number n_initial + ⟨n⟩.
    pub fn thermal_photons(&self, mean_photons: f64) -> f64 {
        self.n_initial + mean_photons
    }
}

/// Central-difference derivative with its step-halving check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxDerivative {
    /// dω/dφ (GHz per φ0).
    pub value: f64,
    /// |D(h) − D(h/2)|, a bound on the truncation error (GHz per φ0).
    pub halving_change: f64,
}

impl FluxDerivative {
    /// True when halving the step moves the result by less than 0.1 % or by
    /// less than `abs_floor`.
    pub fn is_converged(&self, abs_floor: f64) -> bool {
        self.halving_change <= 1e-3 * self.value.abs() || self.halving_change <= abs_floor
    }
}

/// dω/dφ of a frequency model by central differences with step 1e−4 φ0; the
/// returned value is the Richardson combination of steps h and h/2.
pub fn frequency_flux_derivative<F>(omega: F, flux: FluxBias) -> Result<FluxDerivative>
where
    F: Fn(FluxBias) -> Result<f64>,
{
    let phi = flux.value();
    let central = |h: f64| -> Result<f64> {
        Ok((omega(FluxBias(phi + h))? - omega(FluxBias(phi - h))?) / (2.0 * h))
    };
    let d1 = central(FLUX_STEP)?;
    let d2 = central(FLUX_STEP / 2.0)?;
    Ok(FluxDerivative {
        value: (4.0 * d2 - d1) / 3.0,
        halving_change: (d2 - d1).abs(),
    })
}

/// Frequency model of a labeled branch from exact diagonalization; errors
/// where the branch is hybridized.
pub fn exact_branch_frequency(
    params: &CircuitParams,
    branch: Occupation,
    cfg: &ChargeBasisConfig,
) -> impl Fn(FluxBias) -> Result<f64> {
    let (params, cfg) = (*params, *cfg);
    move |flux: FluxBias| {
        let sol = solve_labeled(&params, flux, &cfg)?;
        match sol.find(branch) {
            Some(s) => Ok(sol.energies[s]),
            None => Err(Error::Hybridized {
                label: branch.to_string(),
                flux: flux.value(),
            }),
        }
    }
}

/// dω/dφ at grid index `k` of a sweep: central difference inside the grid,
/// one-sided at its ends.
pub fn sweep_flux_derivative(sweep: &SpectrumSweep, branch: Occupation, k: usize) -> Result<f64> {
    let b = sweep
        .branch(branch)
        .ok_or_else(|| Error::MissingLabel(branch.to_string()))?;
    let n = sweep.grid.len();
    if n < 2 || k >= n {
        return Err(Error::invalid("grid", "need at least two points and a valid index"));
    }
    if b.hybridized[k] {
        return Err(Error::Hybridized {
            label: branch.to_string(),
            flux: sweep.grid[k],
        });
    }
    let (lo, hi) = (k.saturating_sub(1), (k + 1).min(n - 1));
    Ok((b.frequencies[hi] - b.frequencies[lo]) / (sweep.grid[hi] - sweep.grid[lo]))
}

/// Γ_φ = a_φ · |∂ω/∂φ| with ω angular: `dw_dphi` in GHz/φ0, a_φ in µφ0, result in 1/µs.
pub fn flux_dephasing_rate(dw_dphi: f64, env: &NoiseEnvironment) -> f64 {
    env.a_phi * 1e-6 * angular_per_us(dw_dphi.abs() * MHZ_PER_GHZ)
}

/// Photon shot-noise dephasing
/// Γ_φ = (κ/2) Re[√((1 + 2iχ/κ)² + 8iχ n_th/κ) − 1], χ and κ angular.
/// `chi` and `kappa` in MHz, result in 1/µs.
pub fn photon_dephasing_rate(chi: f64, kappa: f64, n_th: f64) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", "must be positive"));
    }
    if !(n_th >= 0.0) {
        return Err(Error::invalid("n_th", "must be non-negative"));
    }
    let (x, k) = (angular_per_us(chi), angular_per_us(kappa));
    let i = Complex64::i();
    let a = Complex64::new(1.0, 0.0) + 2.0 * i * x / k;
    let root = (a * a + 8.0 * i * x * n_th / k).sqrt();
    Ok((0.5 * k * (root.re - 1.0)).max(0.0))
}

/// Purcell-limited T1, or no limit for a mode with zero coupling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PurcellLimit {
    Finite(f64),
    Unbounded,
}

impl PurcellLimit {
    pub fn micros(self) -> Option<f64> {
        match self {
            PurcellLimit::Finite(t) => Some(t),
            PurcellLimit::Unbounded => None,
        }
    }

    /// Decay rate (1/µs); zero when unbounded.
    pub fn rate(self) -> f64 {
        match self {
            PurcellLimit::Finite(t) => 1.0 / t,
            PurcellLimit::Unbounded => 0.0,
        }
    }
}

impl fmt::Display for PurcellLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PurcellLimit::Finite(t) => write!(f, "{t}"),
            PurcellLimit::Unbounded => f.write_str("unbounded"),
        }
    }
}

/// T1 = (Δ/g)² / κ with κ angular: `kappa` in MHz, `delta` in GHz, `g` in MHz, result in µs.
pub fn purcell_limit(kappa: f64, delta: f64, g: f64) -> Result<PurcellLimit> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa", "must be positive"));
    }
    if g == 0.0 {
        return Ok(PurcellLimit::Unbounded);
    }
    let ratio = delta * MHZ_PER_GHZ / g;
    Ok(PurcellLimit::Finite(ratio * ratio / angular_per_us(kappa)))
}

/// T2 = (Γ1/2 + Γφ)⁻¹ in µs from rates in 1/µs.
pub fn t2_limit(gamma1: f64, gamma_phi: f64) -> Result<f64> {
    if gamma1 < 0.0 || gamma_phi < 0.0 {
        return Err(Error::invalid("rate", "rates must be non-negative"));
    }
    let total = 0.5 * gamma1 + gamma_phi;
    if total == 0.0 {
        return Err(Error::ZeroRates);
    }
    Ok(1.0 / total)
}

/// ⟨n⟩ = Δω / (2χ) with Δω = ω_observed − ω_0 the signed Stark shift; a red
/// shift with negative χ gives a positive photon number.
pub fn noise_photons_from_stark(delta_omega: f64, chi: f64) -> Result<f64> {
    if chi == 0.0 {
        return Err(Error::ZeroDispersiveShift);
    }
    Ok(delta_omega / (2.0 * chi))
}

/// Stark shift 2χ⟨n⟩ (MHz) produced by a mean photon number.
pub fn stark_shift(mean_photons: f64, chi: f64) -> f64 {
    2.0 * chi * mean_photons
}

/// One row of a decoherence budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub flux: f64,
    pub branch: Occupation,
    /// GHz per φ0.
    pub dw_dphi: f64,
    /// 1/µs.
    pub gamma_phi_flux: f64,
    /// Photon dephasing (1/µs) for each entry of the ⟨n⟩ grid, with the
    /// residual population added.
    pub gamma_phi_photon: Vec<f64>,
    pub t1_purcell: PurcellLimit,
    /// T2 limit (µs) at the first ⟨n⟩ grid entry, from Γ1 (measured if
    /// supplied, else Purcell) and both dephasing channels.
    pub t2_limit: Option<f64>,
}

/// Inputs describing one branch at one flux point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub flux: f64,
    pub branch: Occupation,
    pub dw_dphi: f64,
    /// Dispersive shift χ (MHz).
    pub chi: f64,
    /// Detuning from the resonator (GHz).
    pub delta: f64,
    /// Linear coupling to the resonator (MHz).
    pub g: f64,
}

pub fn budget_row(point: &BranchPoint, env: &NoiseEnvironment, kappa: f64, mean_photons: &[f64]) -> Result<BudgetRow> {
    env.validate()?;
    let gamma_phi_flux = flux_dephasing_rate(point.dw_dphi, env);
    let gamma_phi_photon = mean_photons
        .iter()
        .map(|&n| photon_dephasing_rate(point.chi, kappa, env.thermal_photons(n)))
        .collect::<Result<Vec<_>>>()?;
    let t1_purcell = purcell_limit(kappa, point.delta, point.g)?;
    let gamma1 = env.gamma1.unwrap_or(t1_purcell.rate());
    let dephasing = gamma_phi_flux + gamma_phi_photon.first().copied().unwrap_or(0.0);
    let t2 = t2_limit(gamma1, dephasing).ok();
    Ok(BudgetRow {
        flux: point.flux,
        branch: point.branch,
        dw_dphi: point.dw_dphi,
        gamma_phi_flux,
        gamma_phi_photon,
        t1_purcell,
        t2_limit: t2,
    })
}
