//! Exact diagonalization of the full circuit Hamiltonian in the product charge
//! basis of the three islands, with eigenstate labeling by normal-mode
//! occupation and tracking of labeled branches across flux.

use nalgebra::{DMatrix, DVector, Matrix3};
use rayon::prelude::*;

use crate::circuit::{build_capacitance_matrix, CircuitParams, FluxBias};
use crate::eigen::{lowest_eigenpairs_in_sectors, lowest_eigenpairs_warm, SectorBasis, SolverOptions, SparseSymmetric, WarmStart};
use crate::error::{Error, Result};
use crate::normal_modes::{effective_model, mode_transformation, EffectiveParams, Occupation};
use crate::units::EC_GHZ_PER_INV_FF;

/// Default per-island charge cutoff.
pub const DEFAULT_N_MAX: usize = 7;
/// Default number of eigenpairs.
pub const DEFAULT_N_LEVELS: usize = 20;
/// Overlap probability below which a state counts as hybridized.
pub const HYBRIDIZATION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeBasisConfig {
    /// Per-island cutoff; charges run over −n_max..=n_max.
    pub n_max: usize,
    pub n_levels: usize,
    pub solver: SolverOptions,
}

impl Default for ChargeBasisConfig {
    fn default() -> Self {
        ChargeBasisConfig {
            n_max: DEFAULT_N_MAX,
            n_levels: DEFAULT_N_LEVELS,
            solver: SolverOptions::default(),
        }
    }
}

impl ChargeBasisConfig {
    pub fn new(n_max: usize, n_levels: usize) -> Result<Self> {
        let cfg = ChargeBasisConfig {
            n_max,
            n_levels,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_max < 3 {
            return Err(Error::invalid("n_max", format!("must be at least 3, got {}", self.n_max)));
        }
        let dim = ChargeGrid::new(self.n_max, [0.0; 3]).dim();
        if self.n_levels == 0 || self.n_levels > dim {
            return Err(Error::invalid(
                "n_levels",
                format!("must be in 1..={dim}, got {}", self.n_levels),
            ));
        }
        Ok(())
    }
}

/// Product charge basis; island 3 varies fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeGrid {
    pub n_max: usize,
    /// Gate charges in units of 2e.
    pub offsets: [f64; 3],
}

impl ChargeGrid {
    pub fn new(n_max: usize, offsets: [f64; 3]) -> Self {
        ChargeGrid { n_max, offsets }
    }

    pub fn side(&self) -> usize {
        2 * self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.side().pow(3)
    }

    pub fn index(&self, k: [usize; 3]) -> usize {
        let d = self.side();
        (k[0] * d + k[1]) * d + k[2]
    }

    /// Integer island charges of basis state `index`.
    pub fn charges(&self, index: usize) -> [i64; 3] {
        let d = self.side();
        let n = self.n_max as i64;
        [
            (index / (d * d)) as i64 - n,
            ((index / d) % d) as i64 - n,
            (index % d) as i64 - n,
        ]
    }
}

/// Charge-basis Hamiltonian with the grid it is expressed on.
#[derive(Debug, Clone)]
pub struct ChargeHamiltonian {
    pub matrix: SparseSymmetric,
    pub grid: ChargeGrid,
    /// Even and odd sectors under exchange of islands 1 and 2, present when
    /// the circuit is exactly mirror symmetric.
    pub mirror_sectors: Option<[SectorBasis; 2]>,
}

/// True when exchanging islands 1 and 2 leaves the Hamiltonian invariant.
pub fn is_mirror_symmetric(params: &CircuitParams) -> bool {
    params.c13 == params.c23
        && params.c01 == params.c02
        && params.ej1 == params.ej2
        && params.offset_charges[0] == params.offset_charges[1]
}

impl ChargeGrid {
    /// Basis index with the charges of islands 1 and 2 exchanged.
    pub fn mirror(&self, index: usize) -> usize {
        let d = self.side();
        let (k1, k2, k3) = (index / (d * d), (index / d) % d, index % d);
        self.index([k2, k1, k3])
    }

    /// Even and odd combinations (|n1,n2,n3⟩ ± |n2,n1,n3⟩)/√2.
    pub fn mirror_sectors(&self) -> [SectorBasis; 2] {
        let r = 0.5f64.sqrt();
        let mut even = Vec::new();
        let mut odd = Vec::new();
        for i in 0..self.dim() {
            let j = self.mirror(i);
            if j == i {
                even.push(vec![(i, 1.0)]);
            } else if i < j {
                even.push(vec![(i, r), (j, r)]);
                odd.push(vec![(i, r), (j, -r)]);
            }
        }
        [even, odd]
    }
}

/// H = 4 E_C0 (n − n_g)ᵀ C⁻¹ (n − n_g) − Σ_i (E_Ji / 2)(|n_i⟩⟨n_i + 1| + h.c.),
/// with C in fF and E_C0 the single-fF charging energy.
pub fn build_charge_hamiltonian(
    params: &CircuitParams,
    flux: FluxBias,
    cfg: &ChargeBasisConfig,
) -> Result<ChargeHamiltonian> {
    params.validate()?;
    cfg.validate()?;
    let c_inv = build_capacitance_matrix(params)?.inverse();
    let ej = params.josephson_energies(flux);
    let grid = ChargeGrid::new(cfg.n_max, params.offset_charges);
    let d = grid.side();
    let kinetic = 4.0 * EC_GHZ_PER_INV_FF * c_inv;

    let mut triplets = Vec::with_capacity(grid.dim() * 4);
    for i in 0..grid.dim() {
        let n = grid.charges(i);
        let q: [f64; 3] = std::array::from_fn(|k| n[k] as f64 - grid.offsets[k]);
        let mut e = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                e += q[a] * kinetic[(a, b)] * q[b];
            }
        }
        triplets.push((i, i, e));
        let stride = [d * d, d, 1];
        for k in 0..3 {
            if n[k] < cfg.n_max as i64 && ej[k] != 0.0 {
                triplets.push((i, i + stride[k], -0.5 * ej[k]));
            }
        }
    }
    Ok(ChargeHamiltonian {
        matrix: SparseSymmetric::from_upper_triplets(grid.dim(), &triplets),
        grid,
        mirror_sectors: is_mirror_symmetric(params).then(|| grid.mirror_sectors()),
    })
}

/// Label of one eigenstate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateLabel {
    pub occupation: Occupation,
    /// Probability of the best-matching normal-mode product state.
    pub overlap: f64,
    pub hybridized: bool,
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    /// Transition energies from the ground state, ascending (GHz).
    pub energies: Vec<f64>,
    /// Absolute ground energy (GHz).
    pub ground_energy: f64,
    /// Orthonormal eigenvectors as columns.
    pub states: DMatrix<f64>,
    /// Empty until [`label_states`] has run.
    pub labels: Vec<StateLabel>,
    pub grid: ChargeGrid,
}

impl EigenSolution {
    /// Index of the non-hybridized state carrying `occ`.
    pub fn find(&self, occ: Occupation) -> Option<usize> {
        self.labels
            .iter()
            .position(|l| l.occupation == occ && !l.hybridized)
    }

    /// Index of the state carrying `occ`, hybridized or not, with largest overlap.
    pub fn find_any(&self, occ: Occupation) -> Option<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.occupation == occ)
            .max_by(|a, b| a.1.overlap.total_cmp(&b.1.overlap))
            .map(|(i, _)| i)
    }

    /// Ground-state charge variance per island.
    pub fn charge_variance(&self) -> [f64; 3] {
        let ground = self.states.column(0);
        let mut mean = [0.0; 3];
        let mut square = [0.0; 3];
        for (i, amp) in ground.iter().enumerate() {
            let p = amp * amp;
            let n = self.grid.charges(i);
            for k in 0..3 {
                mean[k] += p * n[k] as f64;
                square[k] += p * (n[k] * n[k]) as f64;
            }
        }
        std::array::from_fn(|k| square[k] - mean[k] * mean[k])
    }
}

/// Lowest `n_levels` eigenpairs; fails if the ground-state charge variance of
/// any island exceeds (n_max/3)². Mirror-symmetric Hamiltonians are solved
/// per sector so that every eigenvector has exact 1↔2 parity.
pub fn diagonalize(h: &ChargeHamiltonian, n_levels: usize, solver: SolverOptions) -> Result<EigenSolution> {
    diagonalize_from(h, n_levels, solver, None)
}

/// As [`diagonalize`], seeding the iterative solver with a solution of a
/// nearby Hamiltonian on the same grid (used by repeated fits).
pub fn diagonalize_from(
    h: &ChargeHamiltonian,
    n_levels: usize,
    solver: SolverOptions,
    guess: Option<&EigenSolution>,
) -> Result<EigenSolution> {
    let absolute: Option<Vec<f64>> = guess
        .filter(|g| g.grid.n_max == h.grid.n_max)
        .map(|g| g.energies.iter().map(|e| e + g.ground_energy).collect());
    let pairs = match &h.mirror_sectors {
        Some(sectors) => lowest_eigenpairs_in_sectors(&h.matrix, sectors, n_levels, solver)?,
        None => {
            let warm = absolute.as_deref().zip(guess).map(|(values, g)| WarmStart {
                values,
                vectors: &g.states,
            });
            lowest_eigenpairs_warm(&h.matrix, n_levels, solver, warm)?
        }
    };
    let ground_energy = pairs.values[0];
    let sol = EigenSolution {
        energies: pairs.values.iter().map(|e| e - ground_energy).collect(),
        ground_energy,
        states: pairs.vectors,
        labels: Vec::new(),
        grid: h.grid,
    };
    let limit = (h.grid.n_max as f64 / 3.0).powi(2);
    for (island, &variance) in sol.charge_variance().iter().enumerate() {
        if variance > limit {
            return Err(Error::BasisTooSmall {
                n_max: h.grid.n_max,
                island: island + 1,
                variance,
                limit,
            });
        }
    }
    Ok(sol)
}

/// Build and diagonalize at one flux point.
pub fn solve(params: &CircuitParams, flux: FluxBias, cfg: &ChargeBasisConfig) -> Result<EigenSolution> {
    let h = build_charge_hamiltonian(params, flux, cfg)?;
    diagonalize(&h, cfg.n_levels, cfg.solver)
}

/// Largest occupation per mode considered when labeling.
const LABEL_MAX_OCC: [u8; 3] = [4, 4, 2];
const LABEL_MAX_TOTAL: u32 = 4;

fn label_candidates() -> Vec<Occupation> {
    let mut out = Vec::new();
    for a in 0..=LABEL_MAX_OCC[0] {
        for b in 0..=LABEL_MAX_OCC[1] {
            for c in 0..=LABEL_MAX_OCC[2] {
                let occ = Occupation::new(a, b, c);
                if occ.total() <= LABEL_MAX_TOTAL {
                    out.push(occ);
                }
            }
        }
    }
    out
}

/// Normalized Hermite functions ψ_0..=ψ_kmax at x.
fn hermite_functions(x: f64, kmax: usize, out: &mut [f64]) {
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if kmax >= 1 {
        out[1] = 2f64.sqrt() * x * out[0];
    }
    for k in 1..kmax {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// Harmonic product states of the decoupled normal modes sampled on the
/// charge grid, one normalized column per candidate. Mode charges are
/// T·(n − n_g); each mode has charge-space width² sqrt(E'_J / 8E_C).
fn product_state_matrix(grid: &ChargeGrid, ep: &EffectiveParams, candidates: &[Occupation]) -> DMatrix<f64> {
    let t: Matrix3<f64> = mode_transformation();
    let widths: [f64; 3] = std::array::from_fn(|m| {
        let p = &ep.modes[m];
        (p.ej_prime.abs() / (8.0 * p.ec)).sqrt().sqrt()
    });
    let kmax = *LABEL_MAX_OCC.iter().max().unwrap() as usize;
    let mut columns = DMatrix::zeros(grid.dim(), candidates.len());
    let mut psi = [[0.0; 8]; 3];
    for i in 0..grid.dim() {
        let n = grid.charges(i);
        let q = nalgebra::Vector3::from_fn(|k, _| n[k] as f64 - grid.offsets[k]);
        let x = t * q;
        for m in 0..3 {
            hermite_functions(x[m] / widths[m], kmax, &mut psi[m]);
        }
        for (c, occ) in candidates.iter().enumerate() {
            let [a, b, cc] = occ.0.map(usize::from);
            columns[(i, c)] = psi[0][a] * psi[1][b] * psi[2][cc];
        }
    }
    for mut col in columns.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    columns
}

/// Label each eigenstate by the normal-mode product state of largest overlap
/// probability. States below the hybridization threshold keep their best
/// label but are flagged.
pub fn label_states(sol: &EigenSolution, ep: &EffectiveParams) -> Result<EigenSolution> {
    let candidates = label_candidates();
    let basis = product_state_matrix(&sol.grid, ep, &candidates);
    let overlaps = basis.transpose() * &sol.states;
    let mut labels = Vec::with_capacity(sol.energies.len());
    for s in 0..sol.energies.len() {
        let (best, amp) = overlaps
            .column(s)
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (c, &v)| if v * v > acc.1 { (c, v * v) } else { acc });
        labels.push(StateLabel {
            occupation: candidates[best],
            overlap: amp,
            hybridized: amp < HYBRIDIZATION_THRESHOLD,
        });
    }
    for i in 0..labels.len() {
        for j in (i + 1)..labels.len() {
            let (a, b) = (&labels[i], &labels[j]);
            if !a.hybridized && !b.hybridized && a.occupation == b.occupation {
                return Err(Error::LabelConflict {
                    label: a.occupation.to_string(),
                    first: i,
                    second: j,
                    overlap_first: a.overlap,
                    overlap_second: b.overlap,
                });
            }
        }
    }
    Ok(EigenSolution {
        labels,
        ..sol.clone()
    })
}

/// Solve and label at one flux point.
pub fn solve_labeled(params: &CircuitParams, flux: FluxBias, cfg: &ChargeBasisConfig) -> Result<EigenSolution> {
    solve_labeled_from(params, flux, cfg, None)
}

/// [`solve_labeled`] warm-started from a nearby solution.
pub fn solve_labeled_from(
    params: &CircuitParams,
    flux: FluxBias,
    cfg: &ChargeBasisConfig,
    guess: Option<&EigenSolution>,
) -> Result<EigenSolution> {
    let h = build_charge_hamiltonian(params, flux, cfg)?;
    let sol = diagonalize_from(&h, cfg.n_levels, cfg.solver, guess)?;
    let ep = effective_model(params, flux)?;
    label_states(&sol, &ep)
}

/// Branches tracked by default: single and double excitations of modes A and B.
pub const DEFAULT_BRANCHES: [Occupation; 5] = [
    Occupation([1, 0, 0]),
    Occupation([0, 1, 0]),
    Occupation([2, 0, 0]),
    Occupation([0, 2, 0]),
    Occupation([1, 1, 0]),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub label: Occupation,
    /// Transition frequency from the ground state at each grid point (GHz).
    pub frequencies: Vec<f64>,
    pub hybridized: Vec<bool>,
    /// Eigenstate index the branch occupies at each grid point.
    pub state_index: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub flux: f64,
    pub energies: Vec<f64>,
    pub labels: Vec<StateLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSweep {
    pub grid: Vec<f64>,
    pub points: Vec<SweepPoint>,
    pub branches: Vec<Branch>,
}

impl SpectrumSweep {
    pub fn branch(&self, label: Occupation) -> Option<&Branch> {
        self.branches.iter().find(|b| b.label == label)
    }

    /// Rows of (flux, branch label, frequency, hybridized) in grid-major order.
    pub fn rows(&self) -> Vec<(f64, Occupation, f64, bool)> {
        let mut out = Vec::new();
        for (k, &flux) in self.grid.iter().enumerate() {
            for b in &self.branches {
                out.push((flux, b.label, b.frequencies[k], b.hybridized[k]));
            }
        }
        out
    }
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "empty flux grid"));
    }
    if grid.iter().any(|f| !(0.0..=1.0).contains(f) || !f.is_finite()) {
        return Err(Error::invalid("grid", "flux values must lie in [0, 1]"));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid", "flux grid must be strictly increasing"));
    }
    Ok(())
}

/// Sweep with the default branch set.
pub fn flux_sweep(params: &CircuitParams, grid: &[f64], cfg: &ChargeBasisConfig) -> Result<SpectrumSweep> {
    flux_sweep_branches(params, grid, cfg, &DEFAULT_BRANCHES)
}

/// Per-point labeled diagonalization followed by a sequential tracking pass.
/// A branch sits on the non-hybridized state carrying its label; where no
/// such state exists it continues onto the free state of maximal overlap with
/// its state at the previous grid point.
pub fn flux_sweep_branches(
    params: &CircuitParams,
    grid: &[f64],
    cfg: &ChargeBasisConfig,
    tracked: &[Occupation],
) -> Result<SpectrumSweep> {
    validate_grid(grid)?;
    let solutions: Vec<EigenSolution> = grid
        .par_iter()
        .map(|&phi| solve_labeled(params, FluxBias(phi), cfg).map_err(|e| e.at_flux(phi)))
        .collect::<Result<_>>()?;

    let mut branches: Vec<Branch> = tracked
        .iter()
        .map(|&label| Branch {
            label,
            frequencies: Vec::with_capacity(grid.len()),
            hybridized: Vec::with_capacity(grid.len()),
            state_index: Vec::with_capacity(grid.len()),
        })
        .collect();

    let mut previous: Option<&EigenSolution> = None;
    for (k, sol) in solutions.iter().enumerate() {
        let assigned = assign_branches(sol, previous, &branches, tracked)
            .map_err(|e| e.at_flux(grid[k]))?;
        for (b, &s) in branches.iter_mut().zip(&assigned) {
            b.frequencies.push(sol.energies[s]);
            b.hybridized.push(sol.labels[s].hybridized || sol.labels[s].occupation != b.label);
            b.state_index.push(s);
        }
        previous = Some(sol);
    }

    let points = grid
        .iter()
        .zip(&solutions)
        .map(|(&flux, s)| SweepPoint {
            flux,
            energies: s.energies.clone(),
            labels: s.labels.clone(),
        })
        .collect();
    Ok(SpectrumSweep {
        grid: grid.to_vec(),
        points,
        branches,
    })
}

fn assign_branches(
    sol: &EigenSolution,
    previous: Option<&EigenSolution>,
    branches: &[Branch],
    tracked: &[Occupation],
) -> Result<Vec<usize>> {
    let n = sol.energies.len();
    let mut taken = vec![false; n];
    let mut assigned: Vec<Option<usize>> = vec![None; tracked.len()];
    for (b, &label) in tracked.iter().enumerate() {
        if let Some(s) = sol.find(label) {
            assigned[b] = Some(s);
            taken[s] = true;
        }
    }
    // unresolved branches: score every free state, then assign greedily
    let mut scored: Vec<(f64, usize, usize)> = Vec::new();
    for (b, &label) in tracked.iter().enumerate() {
        if assigned[b].is_some() {
            continue;
        }
        let reference: Option<DVector<f64>> =
            previous.map(|p| p.states.column(*branches[b].state_index.last().unwrap()).into_owned());
        for s in (0..n).filter(|&s| !taken[s]) {
            let score = match &reference {
                Some(r) => sol.states.column(s).dot(r).powi(2),
                None if sol.labels[s].occupation == label => sol.labels[s].overlap,
                None => continue,
            };
            scored.push((score, b, s));
        }
    }
    // ties resolve to the lower-energy state
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.2.cmp(&y.2)));
    for (_, b, s) in scored {
        if assigned[b].is_none() && !taken[s] {
            assigned[b] = Some(s);
            taken[s] = true;
        }
    }
    tracked
        .iter()
        .zip(assigned)
        .map(|(label, s)| s.ok_or_else(|| Error::MissingLabel(label.to_string())))
        .collect()
}

/// Level whose transition frequency is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LevelSelector {
    Label(Occupation),
    /// Excited-state index in energy order (1 = first excited state).
    Index(usize),
}

/// Default per-island offset-charge grid: sweet spot and half a Cooper pair.
pub const DEFAULT_OFFSET_GRID: [f64; 2] = [0.0, 0.5];

/// Spread max − min of the selected transition frequency over all
/// combinations of per-island offset charges drawn from `offsets`.
pub fn charge_dispersion(
    params: &CircuitParams,
    flux: FluxBias,
    level: LevelSelector,
    cfg: &ChargeBasisConfig,
    offsets: &[f64],
) -> Result<f64> {
    if offsets.is_empty() {
        return Err(Error::invalid("offsets", "empty offset-charge grid"));
    }
    let mut combos = Vec::new();
    for &a in offsets {
        for &b in offsets {
            for &c in offsets {
                combos.push([a, b, c]);
            }
        }
    }
    let ep = match level {
        LevelSelector::Label(_) => Some(effective_model(params, flux)?),
        LevelSelector::Index(_) => None,
    };
    let freqs: Vec<f64> = combos
        .par_iter()
        .map(|&ng| -> Result<f64> {
            let p = CircuitParams {
                offset_charges: ng,
                ..*params
            };
            let sol = solve(&p, flux, cfg)?;
            match level {
                LevelSelector::Index(i) => sol
                    .energies
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::MissingLabel(format!("level index {i}"))),
                LevelSelector::Label(occ) => {
                    let labeled = label_states(&sol, ep.as_ref().unwrap())?;
                    labeled
                        .find_any(occ)
                        .map(|s| labeled.energies[s])
                        .ok_or_else(|| Error::MissingLabel(occ.to_string()))
                }
            }
        })
        .collect::<Result<_>>()?;
    let max = freqs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}
