//! Capacitive coupling of the circuit to a readout resonator: charge matrix
//! elements, linear couplings, and dispersive shifts from the multi-level
//! formula, the normal-mode formula, and direct diagonalization of the
//! coupled circuit–resonator Hamiltonian.

use nalgebra::{DMatrix, Matrix4};
use rayon::prelude::*;

use crate::charge_basis::{solve_labeled, ChargeBasisConfig, EigenSolution};
use crate::circuit::{build_capacitance_matrix, CircuitParams, FluxBias};
use crate::eigen::dense_eigenpairs;
use crate::error::{Error, Result};
use crate::normal_modes::{effective_model, mode_transformation, EffectiveParams, Mode, Occupation};
use crate::units::{coupling_mhz_per_cooper_pair, MHZ_PER_GHZ};

/// Default resonator impedance (Ω).
pub const DEFAULT_IMPEDANCE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorParams {
    /// Resonator frequency (GHz).
    pub omega_r: f64,
    /// Impedance (Ω).
    pub z_r: f64,
    /// Linewidth κ/2π (MHz).
    pub kappa: f64,
    /// (C⁻¹)_kr between each island and the resonator node (1/fF).
    pub coupling_row: [f64; 3],
}

impl ResonatorParams {
    pub fn new(omega_r: f64, kappa: f64, coupling_row: [f64; 3]) -> Self {
        ResonatorParams {
            omega_r,
            z_r: DEFAULT_IMPEDANCE,
            kappa,
            coupling_row,
        }
    }

    /// Coupling row from direct island–resonator capacitances `c_kr` and the
    /// resonator's own capacitance to ground `c_r` (fF), by inverting the
    /// 4×4 network of islands plus resonator node.
    pub fn from_coupling_capacitances(
        circuit: &CircuitParams,
        omega_r: f64,
        z_r: f64,
        kappa: f64,
        c_kr: [f64; 3],
        c_r: f64,
    ) -> Result<Self> {
        if c_kr.iter().any(|c| *c < 0.0 || !c.is_finite()) {
            return Err(Error::invalid("c_kr", "coupling capacitances must be non-negative"));
        }
        if !(c_r > 0.0) {
            return Err(Error::invalid("c_r", "resonator capacitance must be positive"));
        }
        let c = build_capacitance_matrix(circuit)?;
        let mut full = Matrix4::zeros();
        for i in 0..3 {
            for j in 0..3 {
                full[(i, j)] = c.matrix()[(i, j)];
            }
            full[(i, i)] += c_kr[i];
            full[(i, 3)] = -c_kr[i];
            full[(3, i)] = -c_kr[i];
        }
        full[(3, 3)] = c_r + c_kr.iter().sum::<f64>();
        let inv = full.try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let res = ResonatorParams {
            omega_r,
            z_r,
            kappa,
            coupling_row: [inv[(0, 3)], inv[(1, 3)], inv[(2, 3)]],
        };
        res.validate()?;
        Ok(res)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("omega_r", self.omega_r), ("z_r", self.z_r), ("kappa", self.kappa)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.coupling_row.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("coupling_row", "entries must be finite"));
        }
        Ok(())
    }
}

/// ⟨i|n_k|j⟩ for island `k` (0-based) in Cooper pairs. With real eigenvectors
/// the matrix is real symmetric; the charge operator is diagonal in the basis.
pub fn charge_matrix_elements(sol: &EigenSolution, island: usize) -> DMatrix<f64> {
    let v = &sol.states;
    let mut weighted = v.clone();
    for (r, mut row) in weighted.row_iter_mut().enumerate() {
        row *= sol.grid.charges(r)[island] as f64;
    }
    v.transpose() * weighted
}

/// Linear couplings between circuit eigenstates through the resonator charge.
#[derive(Debug, Clone, PartialEq)]
pub struct Couplings {
    /// g_{i,j} (MHz), real symmetric; the global factor i of the resonator
    /// charge is absorbed into the resonator phase convention.
    pub matrix: DMatrix<f64>,
    /// g_m = g_{0,1_m} for each mode where the single-excitation state is labeled.
    pub mode: [Option<f64>; 3],
}

impl Couplings {
    pub fn between(&self, sol: &EigenSolution, from: Occupation, to: Occupation) -> Option<f64> {
        Some(self.matrix[(state_of(sol, from)?, state_of(sol, to)?)])
    }
}

fn state_of(sol: &EigenSolution, occ: Occupation) -> Option<usize> {
    if occ == Occupation::GROUND {
        return Some(0);
    }
    sol.find_any(occ)
}

pub fn linear_couplings(sol: &EigenSolution, res: &ResonatorParams) -> Couplings {
    let n = sol.energies.len();
    let scale = coupling_mhz_per_cooper_pair(res.z_r);
    let mut matrix = DMatrix::zeros(n, n);
    for (k, &row) in res.coupling_row.iter().enumerate() {
        if row != 0.0 {
            matrix += charge_matrix_elements(sol, k) * (scale * row);
        }
    }
    let mode = Mode::ALL.map(|m| state_of(sol, m.single()).map(|s| matrix[(0, s)]));
    Couplings { matrix, mode }
}

/// Dispersive shifts from the multi-level formula
/// χ_ij = |g_ij|² / (ω_j − ω_i − ω_r), Λ_j = Σ_i χ_ij, χ_j = Σ_i (χ_ij − χ_ji).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralShifts {
    /// Lamb shift per eigenstate (MHz).
    pub lambda: Vec<f64>,
    /// Resonator pull per eigenstate (MHz).
    pub chi_state: Vec<f64>,
    /// Mode shifts (χ_{1_m} − χ_0)/2 (MHz), so that 2χ_m is the resonator
    /// frequency difference between the ground and single-excitation states.
    pub chi_mode: [Option<f64>; 3],
    /// |ω_j − ω_i − ω_r| > 5|g_ij| for every pair touching the ground or a
    /// single-excitation state.
    pub dispersive_valid: bool,
}

pub fn dispersive_shifts_general(
    sol: &EigenSolution,
    couplings: &Couplings,
    res: &ResonatorParams,
) -> Result<GeneralShifts> {
    general_shifts_from_levels(
        &sol.energies,
        &couplings.matrix,
        res.omega_r,
        Mode::ALL.map(|m| state_of(sol, m.single())),
    )
}

/// Multi-level shifts for arbitrary levels (GHz) and couplings (MHz);
/// `single[m]` is the state index of mode m's single excitation.
pub fn general_shifts_from_levels(
    energies: &[f64],
    g: &DMatrix<f64>,
    omega_r: f64,
    single: [Option<usize>; 3],
) -> Result<GeneralShifts> {
    let n = energies.len();
    let mut chi = DMatrix::zeros(n, n);
    let mut dispersive_valid = true;
    let watched = |s: usize| s == 0 || single.contains(&Some(s));
    for i in 0..n {
        for j in 0..n {
            let gij = g[(i, j)];
            if gij == 0.0 {
                continue;
            }
            let detuning = (energies[j] - energies[i] - omega_r) * MHZ_PER_GHZ;
            if detuning.abs() < 1e-9 {
                return Err(Error::Resonance { from: i, to: j });
            }
            if (watched(i) || watched(j)) && detuning.abs() <= 5.0 * gij.abs() {
                dispersive_valid = false;
            }
            chi[(i, j)] = gij * gij / detuning;
        }
    }
    let lambda: Vec<f64> = (0..n).map(|j| chi.column(j).sum()).collect();
    let chi_state: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| chi[(i, j)] - chi[(j, i)]).sum())
        .collect();
    let chi_mode = single.map(|s| s.map(|s| 0.5 * (chi_state[s] - chi_state[0])));
    Ok(GeneralShifts {
        lambda,
        chi_state,
        chi_mode,
        dispersive_valid,
    })
}

/// Mode frequencies and Kerr coefficients (GHz) entering the normal-mode
/// dispersive formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeSpectrum {
    pub omega: [f64; 3],
    pub alpha: [f64; 3],
    /// Symmetric, zero diagonal.
    pub alpha_cross: [[f64; 3]; 3],
}

impl From<&EffectiveParams> for ModeSpectrum {
    fn from(ep: &EffectiveParams) -> Self {
        ModeSpectrum {
            omega: ep.modes.map(|p| p.omega),
            alpha: ep.modes.map(|p| p.alpha),
            alpha_cross: ep.alpha_cross,
        }
    }
}

impl ModeSpectrum {
    /// Read ω_m = E(1_m), α_m = E(2_m) − 2E(1_m) and α_mn = E(1_m 1_n) − E(1_m) − E(1_n)
    /// off a labeled exact spectrum; entries whose levels lie outside the
    /// computed set are taken from `fallback`.
    pub fn from_solution(sol: &EigenSolution, fallback: &EffectiveParams) -> Self {
        let mut out = ModeSpectrum::from(fallback);
        let e = |occ: Occupation| sol.find_any(occ).map(|s| sol.energies[s]);
        for m in Mode::ALL {
            let i = m.index();
            let Some(w) = e(m.single()) else { continue };
            out.omega[i] = w;
            let mut two = [0u8; 3];
            two[i] = 2;
            if let Some(w2) = e(Occupation(two)) {
                out.alpha[i] = w2 - 2.0 * w;
            }
            for n in Mode::ALL {
                let j = n.index();
                if j <= i {
                    continue;
                }
                let mut both = [0u8; 3];
                both[i] = 1;
                both[j] = 1;
                if let (Some(wmn), Some(wn)) = (e(Occupation(both)), e(n.single())) {
                    let a = wmn - w - wn;
                    out.alpha_cross[i][j] = a;
                    out.alpha_cross[j][i] = a;
                }
            }
        }
        out
    }
}

/// Couplings entering the normal-mode dispersive formula (MHz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeCouplings {
    /// g_{0,m}.
    pub g: [f64; 3],
    /// g_{1_m, 2_m}; transmon value √2·g_m.
    pub g_double: Option<[f64; 3]>,
    /// `g_cross[m][n]` = g_{1_m, 1_m 1_n}; transmon value g_n.
    pub g_cross: Option<[[f64; 3]; 3]>,
}

impl ModeCouplings {
    pub fn transmon(g: [f64; 3]) -> Self {
        ModeCouplings {
            g,
            g_double: None,
            g_cross: None,
        }
    }

    /// All couplings read off the exact eigenbasis. A mode whose single
    /// excitation lies outside the computed levels takes `fallback`; missing
    /// two-excitation couplings follow the transmon relations.
    pub fn from_solution(sol: &EigenSolution, couplings: &Couplings, fallback: [f64; 3]) -> Self {
        let g: [f64; 3] = std::array::from_fn(|m| couplings.mode[m].unwrap_or(fallback[m]));
        let mut g_double = g.map(|x| 2f64.sqrt() * x);
        let mut g_cross = [[0.0; 3]; 3];
        for m in Mode::ALL {
            let i = m.index();
            let mut two = [0u8; 3];
            two[i] = 2;
            if let Some(v) = couplings.between(sol, m.single(), Occupation(two)) {
                g_double[i] = v;
            }
            for n in Mode::ALL {
                let j = n.index();
                if i == j {
                    continue;
                }
                let mut both = [0u8; 3];
                both[i] = 1;
                both[j] = 1;
                g_cross[i][j] = couplings
                    .between(sol, m.single(), Occupation(both))
                    .unwrap_or(g[j]);
            }
        }
        ModeCouplings {
            g,
            g_double: Some(g_double),
            g_cross: Some(g_cross),
        }
    }

    fn double(&self, m: usize, transmon_exact: bool) -> Result<f64> {
        match (transmon_exact, self.g_double) {
            (true, _) => Ok(2f64.sqrt() * self.g[m]),
            (false, Some(d)) => Ok(d[m]),
            (false, None) => Err(Error::invalid("g_double", "required unless transmon relations are used")),
        }
    }

    fn cross(&self, m: usize, n: usize, transmon_exact: bool) -> Result<f64> {
        match (transmon_exact, self.g_cross) {
            (true, _) => Ok(self.g[n]),
            (false, Some(c)) => Ok(c[m][n]),
            (false, None) => Err(Error::invalid("g_cross", "required unless transmon relations are used")),
        }
    }
}

/// Couplings g_m (MHz) of the harmonic normal modes: the island charge is
/// n_k = Σ_m T_mk n_m with ⟨0|n_m|1_m⟩ = (E'_J,m / 32 E_C,m)^(1/4).
pub fn harmonic_mode_couplings(ep: &EffectiveParams, res: &ResonatorParams) -> [f64; 3] {
    let t = mode_transformation();
    let scale = coupling_mhz_per_cooper_pair(res.z_r);
    std::array::from_fn(|m| {
        let p = &ep.modes[m];
        let n_zpf = (p.ej_prime / (32.0 * p.ec)).powf(0.25);
        scale * n_zpf * (0..3).map(|k| res.coupling_row[k] * t[(m, k)]).sum::<f64>()
    })
}

/// Dispersive shift of one mode split into its direct part (own linear
/// coupling) and indirect part (cross-Kerr with the other modes).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeShift {
    pub total: f64,
    pub direct: f64,
    pub indirect: f64,
    /// Indirect contribution mediated by each other mode.
    pub indirect_by_mode: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersiveReport {
    pub flux: Option<f64>,
    /// Normal-mode route, MHz.
    pub modes: [ModeShift; 3],
    /// Δ_m = ω_m − ω_r (GHz).
    pub detunings: [f64; 3],
    /// g_m (MHz).
    pub g_mode: [f64; 3],
    /// Multi-level route and the full coupling matrix, when computed from an
    /// exact spectrum.
    pub general: Option<GeneralShifts>,
    pub g_matrix: Option<DMatrix<f64>>,
}

impl DispersiveReport {
    pub fn mode(&self, m: Mode) -> &ModeShift {
        &self.modes[m.index()]
    }
}

fn pole_checked(detuning_ghz: f64) -> Result<f64> {
    if detuning_ghz.abs() < 1e-12 {
        return Err(Error::DispersivePole(detuning_ghz));
    }
    Ok(detuning_ghz * MHZ_PER_GHZ)
}

/// χ_m = g_m²/Δ_m − g_{m,2m}²/(2(Δ_m + α_m))
///       + Σ_{n≠m} [g_n²/(2Δ_n) − g_{n,mn}²/(2(Δ_n + α_mn))].
/// With `transmon_exact` the relations g_{m,2m} = √2 g_m and g_{n,mn} = g_n
/// are used, which turns the direct term into g_m²(1/Δ_m − 1/(Δ_m + α_m)).
pub fn dispersive_shift_effective(
    spectrum: &ModeSpectrum,
    couplings: &ModeCouplings,
    res: &ResonatorParams,
    transmon_exact: bool,
) -> Result<DispersiveReport> {
    let detunings = spectrum.omega.map(|w| w - res.omega_r);
    let mut modes = [ModeShift::default(); 3];
    for m in 0..3 {
        let g = couplings.g[m];
        let g2 = couplings.double(m, transmon_exact)?;
        let direct = g * g / pole_checked(detunings[m])?
            - g2 * g2 / (2.0 * pole_checked(detunings[m] + spectrum.alpha[m])?);
        let mut by_mode = [0.0; 3];
        for n in (0..3).filter(|&n| n != m) {
            let gn = couplings.g[n];
            let gmn = couplings.cross(m, n, transmon_exact)?;
            by_mode[n] = gn * gn / (2.0 * pole_checked(detunings[n])?)
                - gmn * gmn / (2.0 * pole_checked(detunings[n] + spectrum.alpha_cross[m][n])?);
        }
        let indirect: f64 = by_mode.iter().sum();
        modes[m] = ModeShift {
            total: direct + indirect,
            direct,
            indirect,
            indirect_by_mode: by_mode,
        };
    }
    Ok(DispersiveReport {
        flux: None,
        modes,
        detunings,
        g_mode: couplings.g,
        general: None,
        g_matrix: None,
    })
}

/// Full dispersive analysis at one flux point from the exact spectrum: the
/// multi-level route plus the normal-mode route fed with exact frequencies,
/// Kerr shifts and couplings.
pub fn dispersive_report(
    params: &CircuitParams,
    flux: FluxBias,
    res: &ResonatorParams,
    cfg: &ChargeBasisConfig,
) -> Result<DispersiveReport> {
    res.validate()?;
    let sol = solve_labeled(params, flux, cfg)?;
    let ep = effective_model(params, flux)?;
    let couplings = linear_couplings(&sol, res);
    let general = dispersive_shifts_general(&sol, &couplings, res)?;
    let spectrum = ModeSpectrum::from_solution(&sol, &ep);
    let mode_couplings = ModeCouplings::from_solution(&sol, &couplings, harmonic_mode_couplings(&ep, res));
    let mut report = dispersive_shift_effective(&spectrum, &mode_couplings, res, false)?;
    report.flux = Some(flux.value());
    report.general = Some(general);
    report.g_matrix = Some(couplings.matrix);
    Ok(report)
}

/// Dispersive report at each grid point.
pub fn chi_flux_profile(
    params: &CircuitParams,
    res: &ResonatorParams,
    grid: &[f64],
    cfg: &ChargeBasisConfig,
) -> Result<Vec<DispersiveReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "empty flux grid"));
    }
    grid.par_iter()
        .map(|&phi| dispersive_report(params, FluxBias(phi), res, cfg).map_err(|e| e.at_flux(phi)))
        .collect()
}

/// Minimum resonator Fock levels for the coupled diagonalization.
pub const MIN_FOCK_CUTOFF: usize = 3;

/// χ_m from the coupled circuit–resonator Hamiltonian
/// Σ_i ω_i|i⟩⟨i| + ω_r a†a + Σ_ij g_ij |i⟩⟨j|(a + a†), counter-rotating terms
/// kept, via 2χ_m = E(1_m,1) − E(1_m,0) − E(0,1) + E(0,0).
pub fn chi_brute_force(
    params: &CircuitParams,
    flux: FluxBias,
    res: &ResonatorParams,
    fock_cutoff: usize,
    cfg: &ChargeBasisConfig,
) -> Result<[Option<f64>; 3]> {
    res.validate()?;
    let sol = solve_labeled(params, flux, cfg)?;
    let couplings = linear_couplings(&sol, res);
    chi_coupled_levels(
        &sol.energies,
        &couplings.matrix,
        res.omega_r,
        fock_cutoff,
        Mode::ALL.map(|m| state_of(&sol, m.single())),
    )
}

/// Coupled diagonalization for arbitrary levels (GHz) and couplings (MHz).
pub fn chi_coupled_levels(
    energies: &[f64],
    g: &DMatrix<f64>,
    omega_r: f64,
    fock_cutoff: usize,
    single: [Option<usize>; 3],
) -> Result<[Option<f64>; 3]> {
    if fock_cutoff < MIN_FOCK_CUTOFF {
        return Err(Error::invalid(
            "fock_cutoff",
            format!("must be at least {MIN_FOCK_CUTOFF}, got {fock_cutoff}"),
        ));
    }
    let levels = energies.len();
    let f = fock_cutoff;
    let dim = levels * f;
    let idx = |i: usize, n: usize| i * f + n;
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..levels {
        for n in 0..f {
            h[(idx(i, n), idx(i, n))] = energies[i] + omega_r * n as f64;
        }
    }
    // i(a† − a) becomes a + a† under |n⟩ → iⁿ|n⟩
    for i in 0..levels {
        for j in 0..levels {
            let gij = g[(i, j)] / MHZ_PER_GHZ;
            if gij == 0.0 {
                continue;
            }
            for n in 0..f - 1 {
                let amp = gij * ((n + 1) as f64).sqrt();
                h[(idx(i, n + 1), idx(j, n))] += amp;
                h[(idx(j, n), idx(i, n + 1))] += amp;
            }
        }
    }
    let pairs = dense_eigenpairs(&h, dim);
    let dressed = |bare: usize| -> Result<f64> {
        let (best, weight) = (0..dim)
            .map(|c| (c, pairs.vectors[(bare, c)].powi(2)))
            .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
        if weight < 0.5 {
            return Err(Error::AmbiguousDressedState(format!(
                "level {} with {} photons (overlap {weight:.3})",
                bare / f,
                bare % f
            )));
        }
        Ok(pairs.values[best])
    };
    let e00 = dressed(idx(0, 0))?;
    let e01 = dressed(idx(0, 1))?;
    let mut out = [None; 3];
    for (m, s) in single.iter().enumerate() {
        if let Some(s) = *s {
            let shift = dressed(idx(s, 1))? - dressed(idx(s, 0))? - e01 + e00;
            out[m] = Some(0.5 * shift * MHZ_PER_GHZ);
        }
    }
    Ok(out)
}
