//! Least-squares inversion of measured transition frequencies and dispersive
//! shifts to circuit parameters, with residual-bootstrap uncertainties.
//!
//! The forward model is exact diagonalization, so the optimizer is a
//! derivative-free Nelder–Mead simplex in scaled coordinates with clamping
//! to box bounds.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::charge_basis::{solve_labeled_from, ChargeBasisConfig, EigenSolution};
use crate::circuit::{CircuitParams, FluxBias};
use crate::error::{Error, Result};
use crate::normal_modes::Occupation;
use crate::resonator::{dispersive_shifts_general, linear_couplings, ResonatorParams};

/// Default weight of a frequency residual: 1/(10 MHz)² with values in GHz.
pub const FREQUENCY_WEIGHT: f64 = 1.0 / (0.010 * 0.010);
/// Default weight of a shift residual: 1/(20 kHz)² with values in MHz.
pub const SHIFT_WEIGHT: f64 = 1.0 / (0.020 * 0.020);
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 100;
/// Charge cutoff used inside the optimizer.
pub const COARSE_N_MAX: usize = 5;
/// Charge cutoff of the verification pass.
pub const VERIFY_N_MAX: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ObservationKind {
    /// E_label − E_ground (GHz).
    TransitionFrequency,
    /// χ of a single-excitation label (MHz).
    DispersiveShift,
}

impl ObservationKind {
    pub fn default_weight(self) -> f64 {
        match self {
            ObservationKind::TransitionFrequency => FREQUENCY_WEIGHT,
            ObservationKind::DispersiveShift => SHIFT_WEIGHT,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ObservationKind::TransitionFrequency => "frequency",
            ObservationKind::DispersiveShift => "chi",
        }
    }
}

impl fmt::Display for ObservationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObservationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "frequency" | "transition" | "transition-frequency" => Ok(ObservationKind::TransitionFrequency),
            "chi" | "shift" | "dispersive-shift" => Ok(ObservationKind::DispersiveShift),
            other => Err(Error::InvalidObservations(format!("unknown observation kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub kind: ObservationKind,
    pub flux: f64,
    pub label: Occupation,
    pub value: f64,
    pub weight: f64,
}

impl Observation {
    pub fn new(kind: ObservationKind, flux: f64, label: Occupation, value: f64) -> Self {
        Observation {
            kind,
            flux,
            label,
            value,
            weight: kind.default_weight(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub records: Vec<Observation>,
}

impl ObservationSet {
    pub fn new(records: Vec<Observation>) -> Self {
        ObservationSet { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Values finite, weights positive, shifts on single excitations, and at
    /// least `n_free` records.
    pub fn validate(&self, n_free: usize) -> Result<()> {
        if self.records.len() < n_free.max(1) {
            return Err(Error::InvalidObservations(format!(
                "{} observations for {n_free} free parameters",
                self.records.len()
            )));
        }
        for (i, o) in self.records.iter().enumerate() {
            let bad = |why: &str| Err(Error::InvalidObservations(format!("record {i}: {why}")));
            if !o.value.is_finite() || !o.flux.is_finite() {
                return bad("value and flux must be finite");
            }
            if !(o.weight > 0.0 && o.weight.is_finite()) {
                return bad("weight must be positive");
            }
            if o.label == Occupation::GROUND {
                return bad("label must be an excited state");
            }
            if o.kind == ObservationKind::DispersiveShift && o.label.total() != 1 {
                return bad("dispersive shifts need a single-excitation label");
            }
        }
        Ok(())
    }

    /// Copy with every value replaced.
    pub fn with_values(&self, values: &[f64]) -> Self {
        ObservationSet {
            records: self
                .records
                .iter()
                .zip(values)
                .map(|(o, &v)| Observation { value: v, ..*o })
                .collect(),
        }
    }
}

/// Circuit plus resonator, the full state seen by the forward model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceModel {
    pub circuit: CircuitParams,
    pub resonator: ResonatorParams,
}

/// Last solution per flux point, used to warm-start the next evaluation.
type SolutionCache = Mutex<HashMap<u64, EigenSolution>>;

/// Predicted value for every record, in record order. Each distinct flux is
/// diagonalized once.
pub fn simulate_observables(
    params: &CircuitParams,
    res: &ResonatorParams,
    obs: &ObservationSet,
    cfg: &ChargeBasisConfig,
) -> Result<Vec<f64>> {
    simulate_with_cache(params, res, obs, cfg, None)
}

fn simulate_with_cache(
    params: &CircuitParams,
    res: &ResonatorParams,
    obs: &ObservationSet,
    cfg: &ChargeBasisConfig,
    cache: Option<&SolutionCache>,
) -> Result<Vec<f64>> {
    let mut by_flux: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, o) in obs.records.iter().enumerate() {
        by_flux.entry(o.flux.to_bits()).or_default().push(i);
    }
    let groups: Vec<Vec<usize>> = by_flux.into_values().collect();
    let per_group: Vec<Result<Vec<(usize, f64)>>> = groups
        .par_iter()
        .map(|idx| predict_at_flux(params, res, obs, idx, cfg, cache))
        .collect();
    let mut out = vec![0.0; obs.len()];
    for group in per_group {
        for (i, v) in group? {
            out[i] = v;
        }
    }
    Ok(out)
}

fn predict_at_flux(
    params: &CircuitParams,
    res: &ResonatorParams,
    obs: &ObservationSet,
    idx: &[usize],
    cfg: &ChargeBasisConfig,
    cache: Option<&SolutionCache>,
) -> Result<Vec<(usize, f64)>> {
    let first = idx[0];
    let flux = obs.records[first].flux;
    let key = flux.to_bits();
    let guess = cache.and_then(|c| c.lock().expect("cache lock").get(&key).cloned());
    let sol = solve_labeled_from(params, FluxBias(flux), cfg, guess.as_ref()).map_err(|e| e.at_observation(first))?;
    if let Some(c) = cache {
        c.lock().expect("cache lock").insert(key, sol.clone());
    }
    let needs_shift = idx
        .iter()
        .any(|&i| obs.records[i].kind == ObservationKind::DispersiveShift);
    let shifts = if needs_shift {
        let couplings = linear_couplings(&sol, res);
        Some(dispersive_shifts_general(&sol, &couplings, res).map_err(|e| e.at_observation(first))?)
    } else {
        None
    };
    idx.iter()
        .map(|&i| {
            let o = &obs.records[i];
            let value = match (o.kind, &shifts) {
                (ObservationKind::TransitionFrequency, _) => sol
                    .find(o.label)
                    .map(|s| sol.energies[s])
                    .ok_or_else(|| Error::Hybridized {
                        label: o.label.to_string(),
                        flux,
                    }),
                (ObservationKind::DispersiveShift, Some(sh)) => {
                    let m = (0..3).find(|&m| o.label.0[m] == 1).unwrap_or(0);
                    sh.chi_mode[m].ok_or_else(|| Error::MissingLabel(o.label.to_string()))
                }
                (ObservationKind::DispersiveShift, None) => unreachable!("shifts computed when requested"),
            };
            value.map(|v| (i, v)).map_err(|e| e.at_observation(i))
        })
        .collect()
}

/// A parameter the optimizer may vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FreeParam {
    C12,
    C13,
    C23,
    /// All three ground capacitances moved together.
    C0,
    C01,
    C02,
    C03,
    Ej1,
    Ej2,
    Ej3Sum,
    SquidAsym,
    /// (C⁻¹)_kr of island k (0-based) to the resonator.
    Coupling(usize),
}

pub const DEFAULT_FREE_PARAMS: [FreeParam; 8] = [
    FreeParam::C12,
    FreeParam::C13,
    FreeParam::C23,
    FreeParam::C0,
    FreeParam::Ej1,
    FreeParam::Ej2,
    FreeParam::Ej3Sum,
    FreeParam::SquidAsym,
];

impl FreeParam {
    pub fn get(self, m: &DeviceModel) -> f64 {
        let c = &m.circuit;
        match self {
            FreeParam::C12 => c.c12,
            FreeParam::C13 => c.c13,
            FreeParam::C23 => c.c23,
            FreeParam::C0 => (c.c01 + c.c02 + c.c03) / 3.0,
            FreeParam::C01 => c.c01,
            FreeParam::C02 => c.c02,
            FreeParam::C03 => c.c03,
            FreeParam::Ej1 => c.ej1,
            FreeParam::Ej2 => c.ej2,
            FreeParam::Ej3Sum => c.ej3_sum,
            FreeParam::SquidAsym => c.squid_asym,
            FreeParam::Coupling(k) => m.resonator.coupling_row[k],
        }
    }

    pub fn set(self, m: &mut DeviceModel, v: f64) {
        let c = &mut m.circuit;
        match self {
            FreeParam::C12 => c.c12 = v,
            FreeParam::C13 => c.c13 = v,
            FreeParam::C23 => c.c23 = v,
            FreeParam::C0 => {
                c.c01 = v;
                c.c02 = v;
                c.c03 = v;
            }
            FreeParam::C01 => c.c01 = v,
            FreeParam::C02 => c.c02 = v,
            FreeParam::C03 => c.c03 = v,
            FreeParam::Ej1 => c.ej1 = v,
            FreeParam::Ej2 => c.ej2 = v,
            FreeParam::Ej3Sum => c.ej3_sum = v,
            FreeParam::SquidAsym => c.squid_asym = v,
            FreeParam::Coupling(k) => m.resonator.coupling_row[k] = v,
        }
    }

    pub fn name(self) -> String {
        match self {
            FreeParam::C12 => "c12".into(),
            FreeParam::C13 => "c13".into(),
            FreeParam::C23 => "c23".into(),
            FreeParam::C0 => "c0".into(),
            FreeParam::C01 => "c01".into(),
            FreeParam::C02 => "c02".into(),
            FreeParam::C03 => "c03".into(),
            FreeParam::Ej1 => "ej1".into(),
            FreeParam::Ej2 => "ej2".into(),
            FreeParam::Ej3Sum => "ej3_sum".into(),
            FreeParam::SquidAsym => "squid_asym".into(),
            FreeParam::Coupling(k) => format!("coupling_{}", k + 1),
        }
    }

    /// Default box: half to double the initial value for positive physical
    /// parameters, [0, 1) for the SQUID asymmetry, ±4× for couplings.
    fn default_bound(self, v: f64) -> (f64, f64) {
        match self {
            FreeParam::SquidAsym => (0.0, 0.999),
            FreeParam::Coupling(_) => {
                let r = 4.0 * v.abs().max(COUPLING_FLOOR);
                (-r, r)
            }
            _ => (0.5 * v, 2.0 * v),
        }
    }

    /// Natural scale used to normalize optimizer coordinates.
    fn scale(self, v: f64) -> f64 {
        match self {
            FreeParam::SquidAsym => v.abs().max(0.05),
            FreeParam::Coupling(_) => v.abs().max(COUPLING_FLOOR),
            _ => v.abs().max(1e-3),
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for FreeParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "c12" => FreeParam::C12,
            "c13" => FreeParam::C13,
            "c23" => FreeParam::C23,
            "c0" => FreeParam::C0,
            "c01" => FreeParam::C01,
            "c02" => FreeParam::C02,
            "c03" => FreeParam::C03,
            "ej1" => FreeParam::Ej1,
            "ej2" => FreeParam::Ej2,
            "ej3_sum" => FreeParam::Ej3Sum,
            "squid_asym" => FreeParam::SquidAsym,
            "coupling_1" => FreeParam::Coupling(0),
            "coupling_2" => FreeParam::Coupling(1),
            "coupling_3" => FreeParam::Coupling(2),
            other => return Err(Error::invalid("free", format!("unknown parameter `{other}`"))),
        })
    }
}

/// Smallest coupling-row magnitude (1/fF) used for bounds and step sizes, so
/// that an entry starting at zero can still move.
pub const COUPLING_FLOOR: f64 = 2.5e-5;

/// Box constraints on the free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn around(free: &[FreeParam], initial: &DeviceModel) -> Self {
        let (lower, upper) = free.iter().map(|p| p.default_bound(p.get(initial))).unzip();
        Bounds { lower, upper }
    }

    fn clamp(&self, values: &mut [f64]) {
        for ((v, lo), hi) in values.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Cutoff used inside the optimizer.
    pub cfg: ChargeBasisConfig,
    /// Cutoff of the residual pass after convergence, if any.
    pub verify_cfg: Option<ChargeBasisConfig>,
    pub max_iterations: usize,
    /// Relative improvement of the mean simplex cost that counts as stagnation.
    pub tolerance: f64,
    /// Iterations over which the improvement is measured.
    pub window: usize,
    /// Initial simplex step as a fraction of each parameter's scale.
    pub initial_step: f64,
}

/// Residual bound used inside fits; eigenvalue errors scale with its square,
/// so 1e−6 GHz leaves them below 1e−11 GHz.
pub const FIT_RESIDUAL_TOL: f64 = 1e-6;

impl Default for FitOptions {
    fn default() -> Self {
        let mut cfg = ChargeBasisConfig::new(COARSE_N_MAX, 12).expect("valid coarse cutoff");
        cfg.solver.residual_tol = FIT_RESIDUAL_TOL;
        FitOptions {
            cfg,
            verify_cfg: Some(ChargeBasisConfig::new(VERIFY_N_MAX, 12).expect("valid verify cutoff")),
            max_iterations: 3000,
            tolerance: 1e-10,
            window: 20,
            initial_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub seed: u64,
    /// Refit parameter vectors of the successful samples, in sample order.
    pub samples: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub failed: usize,
    pub requested: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: DeviceModel,
    pub free: Vec<FreeParam>,
    pub values: Vec<f64>,
    /// predicted − observed per record, at the optimizer cutoff.
    pub residuals: Vec<f64>,
    /// Σ wᵢ rᵢ².
    pub cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when the iteration cap was reached first.
    pub converged: bool,
    /// Best cost after every iteration.
    pub cost_history: Vec<f64>,
    /// Residuals at the verification cutoff.
    pub verification: Option<Vec<f64>>,
    pub bootstrap: Option<BootstrapSummary>,
}

fn weighted_cost(obs: &ObservationSet, residuals: &[f64]) -> f64 {
    obs.records.iter().zip(residuals).map(|(o, r)| o.weight * r * r).sum()
}

fn residuals_of(
    model: &DeviceModel,
    obs: &ObservationSet,
    cfg: &ChargeBasisConfig,
    cache: Option<&SolutionCache>,
) -> Result<Vec<f64>> {
    let pred = simulate_with_cache(&model.circuit, &model.resonator, obs, cfg, cache)?;
    Ok(pred.iter().zip(&obs.records).map(|(p, o)| p - o.value).collect())
}

struct Problem<'a> {
    obs: &'a ObservationSet,
    free: &'a [FreeParam],
    base: DeviceModel,
    bounds: &'a Bounds,
    origin: Vec<f64>,
    scales: Vec<f64>,
    cfg: ChargeBasisConfig,
    cache: SolutionCache,
}

impl Problem<'_> {
    fn values(&self, x: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = x
            .iter()
            .zip(&self.origin)
            .zip(&self.scales)
            .map(|((x, o), s)| o + x * s)
            .collect();
        self.bounds.clamp(&mut v);
        v
    }

    fn model(&self, values: &[f64]) -> DeviceModel {
        let mut m = self.base;
        for (p, v) in self.free.iter().zip(values) {
            p.set(&mut m, *v);
        }
        m
    }

    /// Cost at scaled coordinates; infeasible points (invalid circuit,
    /// hybridized label, basis failure) cost +∞.
    fn cost(&self, x: &[f64]) -> f64 {
        let m = self.model(&self.values(x));
        match residuals_of(&m, self.obs, &self.cfg, Some(&self.cache)) {
            Ok(r) => weighted_cost(self.obs, &r),
            Err(_) => f64::INFINITY,
        }
    }
}

struct SimplexOutcome {
    best: Vec<f64>,
    cost: f64,
    iterations: usize,
    evaluations: usize,
    converged: bool,
    history: Vec<f64>,
}

/// Simplex diameter in scaled coordinates below which the search stops; a
/// relative size of 1e−7 is far below any physical parameter uncertainty.
const SIMPLEX_TOLERANCE: f64 = 1e-7;

/// Nelder–Mead with dimension-adaptive coefficients (expansion 1 + 2/n,
/// contraction 3/4 − 1/(2n), shrink 1 − 1/n), which reduce to the classic
/// values for n = 2 and hold up better in higher dimensions. Stops when the
/// mean vertex cost improves by less than `tolerance` (relative) over `window`
/// iterations, when the simplex has collapsed, at zero cost, or at
/// `max_iterations`. The mean rather than the best cost is watched because in
/// many dimensions the best vertex routinely survives dozens of productive
/// iterations.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    step: f64,
    max_iterations: usize,
    tolerance: f64,
    window: usize,
) -> SimplexOutcome {
    let n = start.len();
    let mut evaluations = 0;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        f(x)
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let c0 = eval(start);
    simplex.push((start.to_vec(), c0));
    for i in 0..n {
        let mut x = start.to_vec();
        x[i] += step;
        let c = eval(&x);
        simplex.push((x, c));
    }
    let mut history = Vec::new();
    let mut means = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let dim = n.max(2) as f64;
    let (expand, contract, shrink) = (1.0 + 2.0 / dim, 0.75 - 0.5 / dim, 1.0 - 1.0 / dim);
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    while iterations < max_iterations {
        iterations += 1;
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|(x, _)| x[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let reflected = along(-1.0);
        let cr = eval(&reflected);
        if cr < simplex[0].1 {
            let expanded = along(-expand);
            let ce = eval(&expanded);
            simplex[n] = if ce < cr { (expanded, ce) } else { (reflected, cr) };
        } else if cr < simplex[n - 1].1 {
            simplex[n] = (reflected, cr);
        } else {
            let (contracted, cc) = if cr < simplex[n].1 {
                let x = along(-contract);
                let c = eval(&x);
                (x, c)
            } else {
                let x = along(contract);
                let c = eval(&x);
                (x, c)
            };
            if cc < simplex[n].1.min(cr) {
                simplex[n] = (contracted, cc);
            } else {
                let best = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&v.0).map(|(b, x)| b + shrink * (x - b)).collect();
                    let c = eval(&x);
                    *v = (x, c);
                }
            }
        }
        order(&mut simplex);
        history.push(simplex[0].1);
        means.push(simplex.iter().map(|v| v.1).sum::<f64>() / (n + 1) as f64);
        let best = simplex[0].1;
        if best == 0.0 {
            converged = true;
            break;
        }
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0f64, f64::max);
        if diameter < SIMPLEX_TOLERANCE {
            converged = true;
            break;
        }
        if means.len() > window {
            let (before, now) = (means[means.len() - 1 - window], means[means.len() - 1]);
            if before.is_finite() && before - now <= tolerance * before.abs() {
                converged = true;
                break;
            }
        }
    }
    SimplexOutcome {
        best: simplex[0].0.clone(),
        cost: simplex[0].1,
        iterations,
        evaluations,
        converged,
        history,
    }
}

/// Weighted least-squares fit of the free parameters, starting from
/// `initial`. One restart is made from the best vertex. A result that hit
/// the iteration cap is returned with `converged = false`.
pub fn fit_parameters(
    obs: &ObservationSet,
    initial: &DeviceModel,
    free: &[FreeParam],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult> {
    obs.validate(free.len())?;
    initial.circuit.validate()?;
    initial.resonator.validate()?;
    if bounds.lower.len() != free.len() || bounds.upper.len() != free.len() {
        return Err(Error::invalid("bounds", "one bound pair per free parameter"));
    }
    let origin: Vec<f64> = free.iter().map(|p| p.get(initial)).collect();
    for (i, v) in origin.iter().enumerate() {
        if !(bounds.lower[i] <= *v && *v <= bounds.upper[i]) {
            return Err(Error::invalid("bounds", format!("initial {} outside its bounds", free[i])));
        }
    }
    let problem = Problem {
        obs,
        free,
        base: *initial,
        bounds,
        scales: free.iter().zip(&origin).map(|(p, v)| p.scale(*v)).collect(),
        origin,
        cfg: opts.cfg,
        cache: Mutex::new(HashMap::new()),
    };
    // the initial cost must be finite so that failures are reported, not hidden
    let initial_residuals = residuals_of(initial, obs, &opts.cfg, Some(&problem.cache))?;
    let cost_fn = |x: &[f64]| problem.cost(x);
    let zero = vec![0.0; free.len()];
    let (best, cost, iterations, evaluations, converged, history) = if free.is_empty() {
        (zero, weighted_cost(obs, &initial_residuals), 0, 1, true, Vec::new())
    } else {
        let first = nelder_mead(&cost_fn, &zero, opts.initial_step, opts.max_iterations, opts.tolerance, opts.window);
        let remaining = opts.max_iterations.saturating_sub(first.iterations);
        let second = nelder_mead(
            &cost_fn,
            &first.best,
            opts.initial_step * 0.2,
            remaining.max(1),
            opts.tolerance,
            opts.window,
        );
        let mut history = first.history;
        history.extend(second.history.iter().map(|c| c.min(first.cost)));
        let (best, cost) = if second.cost < first.cost {
            (second.best, second.cost)
        } else {
            (first.best, first.cost)
        };
        let converged = second.converged && first.iterations + second.iterations <= opts.max_iterations;
        (
            best,
            cost,
            first.iterations + second.iterations,
            first.evaluations + second.evaluations + 1,
            converged,
            history,
        )
    };
    let values = problem.values(&best);
    let model = problem.model(&values);
    let residuals = residuals_of(&model, obs, &opts.cfg, None)?;
    let verification = match opts.verify_cfg {
        Some(cfg) => Some(residuals_of(&model, obs, &cfg, None)?),
        None => None,
    };
    Ok(FitResult {
        model,
        free: free.to_vec(),
        values,
        cost: if free.is_empty() { cost } else { weighted_cost(obs, &residuals) },
        residuals,
        iterations,
        evaluations,
        converged,
        cost_history: history,
        verification,
        bootstrap: None,
    })
}

/// Synthetic data set for bootstrap sample `index`: each prediction of the
/// optimum plus a residual drawn with replacement from the pool of its own
/// observation kind. The draw depends only on (seed, index).
pub fn resample_observations(fit: &FitResult, obs: &ObservationSet, seed: u64, index: u64) -> ObservationSet {
    let mut pools: BTreeMap<ObservationKind, Vec<f64>> = BTreeMap::new();
    for (o, r) in obs.records.iter().zip(&fit.residuals) {
        pools.entry(o.kind).or_default().push(*r);
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let values: Vec<f64> = obs
        .records
        .iter()
        .zip(&fit.residuals)
        .map(|(o, r)| {
            let predicted = o.value + r;
            let pool = &pools[&o.kind];
            predicted + pool[rng.random_range(0..pool.len())]
        })
        .collect();
    obs.with_values(&values)
}

/// Residual bootstrap: `n_samples` refits from the optimum, run concurrently
/// and deterministic for a given seed. Failed refits are excluded and
/// counted; more than 20 % failures is an error.
pub fn bootstrap_uncertainty(
    fit: &FitResult,
    obs: &ObservationSet,
    n_samples: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<FitResult> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be positive"));
    }
    let bounds_for = |f: &FitResult| {
        let mut b = Bounds::around(&f.free, &f.model);
        for (i, v) in f.values.iter().enumerate() {
            b.lower[i] = b.lower[i].min(*v);
            b.upper[i] = b.upper[i].max(*v);
        }
        b
    };
    let bounds = bounds_for(fit);
    let refit_opts = FitOptions {
        verify_cfg: None,
        ..*opts
    };
    let outcomes: Vec<Option<Vec<f64>>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|s| {
            let sample = resample_observations(fit, obs, seed, s);
            fit_parameters(&sample, &fit.model, &fit.free, &bounds, &refit_opts)
                .ok()
                .filter(|r| r.cost.is_finite())
                .map(|r| r.values)
        })
        .collect();
    let failed = outcomes.iter().filter(|o| o.is_none()).count();
    if failed * 5 > n_samples {
        return Err(Error::BootstrapFailures {
            failed,
            total: n_samples,
        });
    }
    let samples: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    let n = samples.len() as f64;
    let k = fit.free.len();
    let mean: Vec<f64> = (0..k).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let std_dev: Vec<f64> = (0..k)
        .map(|j| {
            if samples.len() < 2 {
                return 0.0;
            }
            let ss: f64 = samples.iter().map(|s| (s[j] - mean[j]).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    Ok(FitResult {
        bootstrap: Some(BootstrapSummary {
            seed,
            samples,
            mean,
            std_dev,
            failed,
            requested: n_samples,
        }),
        ..fit.clone()
    })
}
