//! Normal-mode description of the circuit: the fixed orthonormal mode
//! transformation, transformed capacitance and Josephson matrices, the
//! closed-form parameters of the bosonic effective model, and its
//! number-conserving Hamiltonian.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Matrix3};
use serde::{Deserialize, Serialize};

use crate::circuit::{build_capacitance_matrix, CapacitanceMatrix, CircuitParams, FluxBias};
use crate::eigen::dense_eigenpairs;
use crate::error::{Error, Result};
use crate::units::EC_GHZ_PER_INV_FF;

/// Circuit modes, in the row order of the mode transformation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Antisymmetric charge oscillation between islands 1 and 2 (qubit).
    A,
    /// Islands 1, 2 against island 3 (flux-tunable mediator).
    B,
    /// All outer islands against the center island.
    C,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::A, Mode::B, Mode::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Mode {
        Mode::ALL[i]
    }

    /// Single-excitation state of this mode.
    pub fn single(self) -> Occupation {
        let mut n = [0u8; 3];
        n[self.index()] = 1;
        Occupation(n)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::A => "A",
            Mode::B => "B",
            Mode::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "a" => Ok(Mode::A),
            "B" | "b" => Ok(Mode::B),
            "C" | "c" => Ok(Mode::C),
            other => Err(Error::invalid("mode", format!("unknown mode `{other}`"))),
        }
    }
}

/// Occupation numbers (n_A, n_B, n_C) of a product state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Occupation(pub [u8; 3]);

impl Occupation {
    pub const GROUND: Occupation = Occupation([0, 0, 0]);

    pub fn new(a: u8, b: u8, c: u8) -> Self {
        Occupation([a, b, c])
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    pub fn get(&self, mode: Mode) -> u8 {
        self.0[mode.index()]
    }

    /// Compact form such as `100`.
    pub fn code(&self) -> String {
        self.0.iter().map(|n| n.to_string()).collect()
    }
}

impl fmt::Display for Occupation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

impl FromStr for Occupation {
    type Err = Error;

    /// Accepts `A`/`B`/`C` for single excitations, `100`, or `(1,0,0)`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if let Ok(mode) = t.parse::<Mode>() {
            return Ok(mode.single());
        }
        let inner = t.trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = if inner.contains(',') {
            inner.split(',').map(str::trim).collect()
        } else {
            inner.split("").filter(|p| !p.is_empty()).collect()
        };
        let bad = || Error::invalid("label", format!("cannot parse occupation `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let mut n = [0u8; 3];
        for (slot, p) in n.iter_mut().zip(parts) {
            *slot = p.parse().map_err(|_| bad())?;
        }
        Ok(Occupation(n))
    }
}

/// The fixed orthonormal transformation θ = T·φ from node to mode coordinates.
pub fn mode_transformation() -> Matrix3<f64> {
    let s2 = 2f64.sqrt();
    let s3 = 3f64.sqrt();
    let s6 = 6f64.sqrt();
    #[rustfmt::skip]
    let t = Matrix3::new(
        -1.0 / s2, 1.0 / s2, 0.0,
        -1.0 / s6, -1.0 / s6, 2.0 / s6,
        1.0 / s3, 1.0 / s3, 1.0 / s3,
    );
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedMatrices {
    /// T·C·Tᵀ in fF.
    pub c_tilde: Matrix3<f64>,
    /// T·J·Tᵀ in GHz, J the quadratic Josephson matrix diag(E_J1, E_J2, E_J3(φ)).
    pub j_tilde: Matrix3<f64>,
    pub t: Matrix3<f64>,
    /// Junction energies (E_J1, E_J2, E_J3(φ)) used for J.
    pub josephson: [f64; 3],
}

pub fn transform_matrices(
    c: &CapacitanceMatrix,
    params: &CircuitParams,
    flux: FluxBias,
) -> TransformedMatrices {
    let t = mode_transformation();
    let josephson = params.josephson_energies(flux);
    let j = Matrix3::from_diagonal(&josephson.into());
    TransformedMatrices {
        c_tilde: t * c.matrix() * t.transpose(),
        j_tilde: t * j * t.transpose(),
        t,
        josephson,
    }
}

/// Per-mode quantities of the effective model (GHz).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ModeParams {
    /// Dressed frequency ω_m = ω_m0 + α_m + Σ_n α_mn / 2.
    pub omega: f64,
    /// Harmonic frequency sqrt(8 E_C E'_J).
    pub omega0: f64,
    pub ec: f64,
    pub ej_prime: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl ModeParams {
    /// E'_J / E_C; large values mean transmon-regime operation.
    pub fn ej_ec_ratio(&self) -> f64 {
        self.ej_prime / self.ec
    }
}

/// Effective bosonic model parameters. Pair quantities are symmetric 3×3
/// arrays indexed by [`Mode::index`] with zero diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub modes: [ModeParams; 3],
    /// Exchange couplings g_mn (GHz), one per unordered pair.
    pub g: [[f64; 3]; 3],
    /// Cross-Kerr α_mn (GHz), one per unordered pair.
    pub alpha_cross: [[f64; 3]; 3],
    pub gamma: [[f64; 3]; 3],
}

/// E'_J/E_C below which a mode is not considered transmon-like.
pub const TRANSMON_RATIO: f64 = 20.0;

impl EffectiveParams {
    pub fn mode(&self, m: Mode) -> &ModeParams {
        &self.modes[m.index()]
    }

    pub fn g(&self, m: Mode, n: Mode) -> f64 {
        self.g[m.index()][n.index()]
    }

    pub fn alpha_cross(&self, m: Mode, n: Mode) -> f64 {
        self.alpha_cross[m.index()][n.index()]
    }

    pub fn is_transmon(&self, m: Mode) -> bool {
        self.mode(m).ej_ec_ratio() >= TRANSMON_RATIO
    }

    /// The same model with the qubit mode's exchange couplings g_AB, g_AC removed.
    pub fn without_qubit_couplings(&self) -> Self {
        let mut bare = *self;
        for n in [Mode::B, Mode::C] {
            bare.g[0][n.index()] = 0.0;
            bare.g[n.index()][0] = 0.0;
        }
        bare
    }

    /// The same model with every mode frequency set to its harmonic value
    /// ω_m0, dropping the Kerr dressing.
    pub fn with_harmonic_frequencies(&self) -> Self {
        let mut bare = *self;
        for m in bare.modes.iter_mut() {
            m.omega = m.omega0;
        }
        bare
    }

    /// Flat `(name, value)` record for export, in a fixed column order.
    pub fn flat_record(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for m in Mode::ALL {
            let p = self.mode(m);
            out.push((format!("omega_{m}"), p.omega));
            out.push((format!("omega0_{m}"), p.omega0));
            out.push((format!("ec_{m}"), p.ec));
            out.push((format!("ej_prime_{m}"), p.ej_prime));
            out.push((format!("alpha_{m}"), p.alpha));
            out.push((format!("beta_{m}"), p.beta));
        }
        for (m, n) in [(Mode::A, Mode::B), (Mode::A, Mode::C), (Mode::B, Mode::C)] {
            out.push((format!("g_{m}{n}"), self.g(m, n)));
            out.push((format!("alpha_{m}{n}"), self.alpha_cross(m, n)));
            out.push((format!("gamma_{m}{n}"), self.gamma[m.index()][n.index()]));
        }
        out
    }
}

pub fn effective_parameters(tm: &TransformedMatrices) -> Result<EffectiveParams> {
    let c_inv = tm
        .c_tilde
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite)?;
    let t = &tm.t;
    let ej = &tm.josephson;

    let mut modes = [ModeParams::default(); 3];
    for m in 0..3 {
        let ec = EC_GHZ_PER_INV_FF * c_inv[(m, m)];
        let ej_prime = tm.j_tilde[(m, m)];
        if m < 2 && ej_prime <= 0.0 {
            return Err(Error::InvalidEffectiveModel {
                mode: Mode::from_index(m),
                value: ej_prime,
            });
        }
        let beta: f64 = (0..3).map(|i| ej[i] * t[(m, i)].powi(4)).sum();
        modes[m] = ModeParams {
            omega: 0.0,
            omega0: (8.0 * ec * ej_prime).sqrt(),
            ec,
            ej_prime,
            alpha: -beta / ej_prime * ec,
            beta,
        };
    }

    let mut g = [[0.0; 3]; 3];
    let mut alpha_cross = [[0.0; 3]; 3];
    let mut gamma = [[0.0; 3]; 3];
    for m in 0..3 {
        for n in 0..3 {
            if m == n {
                continue;
            }
            let (pm, pn) = (&modes[m], &modes[n]);
            let ratio = (pm.ej_prime * pn.ej_prime) / (4.0 * pm.ec * pn.ec);
            g[m][n] = 2.0 * EC_GHZ_PER_INV_FF * c_inv[(m, n)] * ratio.powf(0.25)
                + tm.j_tilde[(m, n)] * ratio.powf(-0.25);
            gamma[m][n] = (0..3).map(|i| ej[i] * t[(m, i)].powi(2) * t[(n, i)].powi(2)).sum();
            alpha_cross[m][n] =
                -2.0 * gamma[m][n] / (pm.ej_prime * pn.ej_prime).sqrt() * (pm.ec * pn.ec).sqrt();
        }
    }
    for m in 0..3 {
        let cross: f64 = (0..3).filter(|&n| n != m).map(|n| alpha_cross[m][n] / 2.0).sum();
        modes[m].omega = modes[m].omega0 + modes[m].alpha + cross;
    }
    Ok(EffectiveParams {
        modes,
        g,
        alpha_cross,
        gamma,
    })
}

/// Effective parameters straight from circuit parameters at a flux point.
pub fn effective_model(params: &CircuitParams, flux: FluxBias) -> Result<EffectiveParams> {
    params.validate()?;
    let c = build_capacitance_matrix(params)?;
    effective_parameters(&transform_matrices(&c, params, flux))
}

/// Product Fock basis with per-mode level counts; mode C varies fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockBasis {
    pub cutoffs: [usize; 3],
}

impl FockBasis {
    pub fn new(cutoffs: [usize; 3]) -> Result<Self> {
        for (m, &c) in Mode::ALL.iter().zip(&cutoffs) {
            if c < 2 {
                return Err(Error::CutoffTooSmall { mode: *m, cutoff: c });
            }
        }
        Ok(FockBasis { cutoffs })
    }

    pub fn dim(&self) -> usize {
        self.cutoffs.iter().product()
    }

    pub fn index(&self, occ: Occupation) -> Option<usize> {
        let [a, b, c] = occ.0.map(usize::from);
        let [ka, kb, kc] = self.cutoffs;
        (a < ka && b < kb && c < kc).then(|| (a * kb + b) * kc + c)
    }

    pub fn occupation(&self, index: usize) -> Occupation {
        let [_, kb, kc] = self.cutoffs;
        Occupation([(index / (kb * kc)) as u8, ((index / kc) % kb) as u8, (index % kc) as u8])
    }
}

/// Default levels per mode for effective-model diagonalization (5 quanta).
pub const DEFAULT_CUTOFFS: [usize; 3] = [6, 6, 6];

/// Matrix of the effective Hamiltonian (rotating-wave form) in the product
/// Fock basis. Number terms use the dressed ω_m.
pub fn build_effective_hamiltonian(ep: &EffectiveParams, cutoffs: [usize; 3]) -> Result<DMatrix<f64>> {
    let basis = FockBasis::new(cutoffs)?;
    let dim = basis.dim();
    let mut h = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let occ = basis.occupation(i);
        let n = occ.0.map(f64::from);
        let mut e = 0.0;
        for m in 0..3 {
            let p = &ep.modes[m];
            e += p.omega * n[m] + 0.5 * p.alpha * n[m] * (n[m] - 1.0);
            for k in (m + 1)..3 {
                e += ep.alpha_cross[m][k] * n[m] * n[k];
            }
        }
        h[(i, i)] = e;
        // a_m† a_k for m < k; the hermitian partner fills the mirrored entry
        for m in 0..3 {
            for k in (m + 1)..3 {
                let g = ep.g[m][k];
                if g == 0.0 || occ.0[k] == 0 {
                    continue;
                }
                let mut target = occ;
                target.0[k] -= 1;
                target.0[m] += 1;
                if let Some(j) = basis.index(target) {
                    let amp = g * (n[k] * (n[m] + 1.0)).sqrt();
                    h[(j, i)] += amp;
                    h[(i, j)] += amp;
                }
            }
        }
    }
    Ok(h)
}

/// One level of the effective spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveLevel {
    /// Energy above the ground state (GHz).
    pub energy: f64,
    /// Dominant product-state occupation.
    pub label: Occupation,
    /// Probability of the dominant product state.
    pub weight: f64,
    pub hybridized: bool,
}

/// Effective-model spectrum relative to the ground state, ascending.
pub fn effective_spectrum(ep: &EffectiveParams, cutoffs: [usize; 3]) -> Result<Vec<EffectiveLevel>> {
    let basis = FockBasis::new(cutoffs)?;
    let h = build_effective_hamiltonian(ep, cutoffs)?;
    let pairs = dense_eigenpairs(&h, basis.dim());
    let e0 = pairs.values[0];
    Ok(pairs
        .values
        .iter()
        .enumerate()
        .map(|(c, &e)| {
            let (idx, weight) = pairs
                .vectors
                .column(c)
                .iter()
                .map(|x| x * x)
                .enumerate()
                .fold((0, 0.0), |best, (i, w)| if w > best.1 { (i, w) } else { best });
            EffectiveLevel {
                energy: e - e0,
                label: basis.occupation(idx),
                weight,
                hybridized: weight < 0.5,
            }
        })
        .collect())
}

/// Energy of the level carrying `label`, if present and unique.
pub fn level_energy(levels: &[EffectiveLevel], label: Occupation) -> Option<f64> {
    levels
        .iter()
        .filter(|l| l.label == label)
        .max_by(|a, b| a.weight.total_cmp(&b.weight))
        .map(|l| l.energy)
}
