//! Subcommand implementations. Each command reads a resolved [`RunConfig`],
//! writes its tables into the output directory and returns the paths written.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use trimode_core::charge_basis::{flux_sweep, solve, ChargeBasisConfig, DEFAULT_BRANCHES};
use trimode_core::decoherence::{
    budget_row, photon_dephasing_rate, purcell_limit, sweep_flux_derivative, BranchPoint, PurcellLimit,
};
use trimode_core::fitting::{
    bootstrap_uncertainty, fit_parameters, Bounds, FitOptions, FitResult, ObservationSet, COARSE_N_MAX,
    FIT_RESIDUAL_TOL,
};
use trimode_core::normal_modes::{effective_model, effective_spectrum, DEFAULT_CUTOFFS};
use trimode_core::resonator::chi_flux_profile;
use trimode_core::units::angular_per_us;
use trimode_core::{CircuitParams, Error, FluxBias, Mode};

use crate::config::{hex, RunConfig};
use crate::observations::read_observations;
use crate::output::{num, opt, write_atomic, write_csv, Metadata};
use crate::CliError;

pub const DEFAULT_OUT: &str = "out";

fn out_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn metadata(command: &str, cfg: &RunConfig) -> Metadata {
    Metadata::new(command, &cfg.hash())
}

/// Exact, effective (coupled) and effective-bare branches over the flux grid.
/// The bare family drops g_AB and g_AC; its harmonic variant also drops the
/// Kerr dressing of the mode frequencies.
pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let params = cfg.circuit();
    let grid = cfg.flux_grid()?;
    let sweep = flux_sweep(&params, &grid, &cfg.basis()?)?;
    let mut rows = Vec::new();
    for (k, &flux) in grid.iter().enumerate() {
        for b in &sweep.branches {
            rows.push(vec![num(flux), "exact".into(), b.label.code(), num(b.frequencies[k]), b.hybridized[k].to_string()]);
        }
        let ep = effective_model(&params, FluxBias(flux)).map_err(|e| e.at_flux(flux))?;
        let bare = ep.without_qubit_couplings();
        let variants = [
            ("effective", ep),
            ("effective_bare", bare),
            ("effective_bare_harmonic", bare.with_harmonic_frequencies()),
        ];
        for (model, model_ep) in variants {
            let levels = effective_spectrum(&model_ep, DEFAULT_CUTOFFS)?;
            for label in DEFAULT_BRANCHES {
                let level = levels
                    .iter()
                    .filter(|l| l.label == label)
                    .max_by(|a, b| a.weight.total_cmp(&b.weight));
                let (freq, hyb) = match level {
                    Some(l) => (l.energy, l.hybridized),
                    None => (f64::NAN, true),
                };
                rows.push(vec![num(flux), model.into(), label.code(), num(freq), hyb.to_string()]);
            }
        }
    }
    let meta = metadata("spectrum", cfg).with("n_max", cfg.n_max);
    let path = write_csv(
        &out_dir(cfg),
        "spectrum.csv",
        &meta,
        &["flux", "model", "branch", "frequency_ghz", "hybridized"],
        &rows,
    )?;
    Ok(vec![path])
}

pub const CHI_HEADER: [&str; 17] = [
    "flux",
    "chi_A_total",
    "chi_A_direct",
    "chi_A_indirect",
    "chi_B_total",
    "chi_B_direct",
    "chi_B_indirect",
    "g_A",
    "g_B",
    "g_C",
    "delta_A",
    "delta_B",
    "delta_C",
    "chi_A_general",
    "chi_B_general",
    "chi_C_general",
    "dispersive_valid",
];

/// Dispersive shifts per flux point: normal-mode route split into direct and
/// indirect parts, and the multi-level route. Shifts and couplings in MHz,
/// detunings in GHz.
pub fn cmd_chi(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let grid = cfg.flux_grid()?;
    let reports = chi_flux_profile(&cfg.circuit(), &cfg.resonator(), &grid, &cfg.basis()?)?;
    let rows: Vec<Vec<String>> = reports
        .iter()
        .zip(&grid)
        .map(|(r, &flux)| {
            let (a, b) = (r.mode(Mode::A), r.mode(Mode::B));
            let general = r.general.as_ref();
            let mut row = vec![
                num(flux),
                num(a.total),
                num(a.direct),
                num(a.indirect),
                num(b.total),
                num(b.direct),
                num(b.indirect),
            ];
            row.extend(r.g_mode.iter().map(|&g| num(g)));
            row.extend(r.detunings.iter().map(|&d| num(d)));
            for m in 0..3 {
                row.push(opt(general.and_then(|g| g.chi_mode[m])));
            }
            row.push(general.map(|g| g.dispersive_valid.to_string()).unwrap_or_default());
            row
        })
        .collect();
    let meta = metadata("chi", cfg).with("n_max", cfg.n_max);
    Ok(vec![write_csv(&out_dir(cfg), "chi.csv", &meta, &CHI_HEADER, &rows)?])
}

/// Decoherence budget for modes A and B at every flux point: flux-noise and
/// photon dephasing, Purcell T1 and the combined T2 limit.
pub fn cmd_decoherence(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let grid = cfg.flux_grid()?;
    let params = cfg.circuit();
    let res = cfg.resonator();
    let basis = cfg.basis()?;
    let env = cfg.noise();
    let sweep = flux_sweep(&params, &grid, &basis)?;
    let reports = chi_flux_profile(&params, &res, &grid, &basis)?;

    let mut header: Vec<String> = ["flux", "branch", "dw_dphi_ghz", "chi_mhz", "g_mhz", "delta_ghz", "gamma_phi_flux_per_us"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(cfg.photon_grid.iter().map(|n| format!("gamma_phi_photon_n{n}_per_us")));
    header.extend(["t1_purcell_us", "t2_limit_us"].map(String::from));

    let mut rows = Vec::new();
    for (k, &flux) in grid.iter().enumerate() {
        for m in [Mode::A, Mode::B] {
            // no derivative is reported where the branch is hybridized
            let dw_dphi = match sweep_flux_derivative(&sweep, m.single(), k) {
                Ok(d) => d,
                Err(Error::Hybridized { .. }) => f64::NAN,
                Err(e) => return Err(e.at_flux(flux).into()),
            };
            let r = &reports[k];
            let point = BranchPoint {
                flux,
                branch: m.single(),
                dw_dphi,
                chi: r.mode(m).total,
                delta: r.detunings[m.index()],
                g: r.g_mode[m.index()],
            };
            let budget = budget_row(&point, &env, res.kappa, &cfg.photon_grid).map_err(|e| e.at_flux(flux))?;
            let mut row = vec![
                num(flux),
                m.single().code(),
                num(dw_dphi),
                num(point.chi),
                num(point.g),
                num(point.delta),
                num(budget.gamma_phi_flux),
            ];
            row.extend(budget.gamma_phi_photon.iter().map(|&g| num(g)));
            row.push(budget.t1_purcell.to_string());
            row.push(opt(budget.t2_limit.filter(|t| t.is_finite())));
            rows.push(row);
        }
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let meta = metadata("decoherence", cfg)
        .with("a_phi_micro_phi0", cfg.a_phi)
        .with("kappa_mhz", cfg.kappa);
    Ok(vec![write_csv(&out_dir(cfg), "decoherence.csv", &meta, &header, &rows)?])
}

/// Optimizer settings for a run: coarse cutoff inside the optimizer, the
/// configured cutoff for the verification pass.
pub fn fit_options(cfg: &RunConfig) -> Result<FitOptions, CliError> {
    let mut coarse = ChargeBasisConfig::new(COARSE_N_MAX.min(cfg.n_max), cfg.n_levels)?;
    coarse.solver.residual_tol = FIT_RESIDUAL_TOL;
    let verify = (cfg.n_max > coarse.n_max)
        .then(|| ChargeBasisConfig::new(cfg.n_max, cfg.n_levels))
        .transpose()?;
    Ok(FitOptions {
        cfg: coarse,
        verify_cfg: verify,
        ..FitOptions::default()
    })
}

/// Fits the free parameters to the observation file and, when requested,
/// runs the residual bootstrap.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let path = cfg
        .observations
        .as_ref()
        .ok_or_else(|| CliError::Input("fit needs an observation file (config key `observations` or --observations)".into()))?;
    let (obs, text) = read_observations(path)?;
    let free = cfg.free_params()?;
    let initial = cfg.device();
    let bounds = Bounds::around(&free, &initial);
    let opts = fit_options(cfg)?;
    let mut fit = fit_parameters(&obs, &initial, &free, &bounds, &opts)?;
    if cfg.bootstrap > 0 {
        fit = bootstrap_uncertainty(&fit, &obs, cfg.bootstrap, cfg.seed, &opts)?;
    }

    let dir = out_dir(cfg);
    let meta = metadata("fit", cfg)
        .with("observations_sha256", hex(&Sha256::digest(text.as_bytes())))
        .with("seed", cfg.seed)
        .with("bootstrap", cfg.bootstrap);
    let mut written = Vec::new();
    written.push(write_atomic(&dir, "fit_report.txt", fit_report(&meta, &fit, &obs).as_bytes())?);
    written.push(write_residuals(&dir, &meta, &fit, &obs)?);
    if let Some(boot) = &fit.bootstrap {
        let mut header = vec!["sample".to_string()];
        header.extend(fit.free.iter().map(|p| p.name()));
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = boot
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| std::iter::once(i.to_string()).chain(s.iter().map(|&v| num(v))).collect())
            .collect();
        written.push(write_csv(&dir, "bootstrap_samples.csv", &meta, &header, &rows)?);
    }
    let fitted = cfg.with_device(&fit.model);
    let mut fitted_toml = String::new();
    for (k, v) in &meta.entries {
        fitted_toml.push_str(&format!("# {k}: {v}\n"));
    }
    let mut fitted = fitted;
    fitted.out = None;
    fitted_toml.push_str(&fitted.to_toml());
    written.push(write_atomic(&dir, "fitted_config.toml", fitted_toml.as_bytes())?);
    Ok(written)
}

fn write_residuals(dir: &Path, meta: &Metadata, fit: &FitResult, obs: &ObservationSet) -> Result<PathBuf, CliError> {
    let rows: Vec<Vec<String>> = obs
        .records
        .iter()
        .enumerate()
        .map(|(i, o)| {
            vec![
                o.kind.to_string(),
                num(o.flux),
                o.label.code(),
                num(o.value),
                num(o.value + fit.residuals[i]),
                num(fit.residuals[i]),
                opt(fit.verification.as_ref().map(|v| v[i])),
            ]
        })
        .collect();
    write_csv(
        dir,
        "fit_residuals.csv",
        meta,
        &["kind", "flux", "label", "observed", "predicted", "residual", "residual_verify"],
        &rows,
    )
}

fn fit_report(meta: &Metadata, fit: &FitResult, obs: &ObservationSet) -> String {
    let mut s = String::new();
    for (k, v) in &meta.entries {
        s.push_str(&format!("# {k}: {v}\n"));
    }
    s.push_str(&format!(
        "observations: {}\ncost: {}\niterations: {}\nevaluations: {}\nconverged: {}\n",
        obs.len(),
        fit.cost,
        fit.iterations,
        fit.evaluations,
        fit.converged
    ));
    for (kind, unit) in [("frequency", "GHz"), ("chi", "MHz")] {
        let r: Vec<f64> = obs
            .records
            .iter()
            .zip(&fit.residuals)
            .filter(|(o, _)| o.kind.as_str() == kind)
            .map(|(_, r)| *r)
            .collect();
        if !r.is_empty() {
            let rms = (r.iter().map(|x| x * x).sum::<f64>() / r.len() as f64).sqrt();
            s.push_str(&format!("rms_residual_{kind}_{unit}: {rms}\n"));
        }
    }
    s.push_str("\nparameter,value,bootstrap_mean,bootstrap_std\n");
    for (i, p) in fit.free.iter().enumerate() {
        let (mean, sd) = match &fit.bootstrap {
            Some(b) => (num(b.mean[i]), num(b.std_dev[i])),
            None => (String::new(), String::new()),
        };
        s.push_str(&format!("{},{},{mean},{sd}\n", p.name(), num(fit.values[i])));
    }
    if let Some(b) = &fit.bootstrap {
        s.push_str(&format!("\nbootstrap: {} of {} samples succeeded\n", b.samples.len(), b.requested));
    }
    s
}

/// Outcome of one validation property.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name,
            passed,
            detail: detail.into(),
        }
    }

    fn from_result(name: &'static str, r: Result<(bool, String), Error>) -> Self {
        match r {
            Ok((passed, detail)) => Check::new(name, passed, detail),
            Err(e) => Check::new(name, false, e.to_string()),
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

/// Energy change tolerated between cutoffs n_max and n_max + 2 (GHz).
pub const CUTOFF_TOLERANCE: f64 = 1e-6;
/// Levels compared by the convergence check, in energy order; labels are
/// not used since degenerate pairs make them arbitrary.
pub const CONVERGENCE_LEVELS: usize = 6;

/// Invariant suite on the configured device and on a symmetrized copy.
pub fn run_checks(cfg: &RunConfig) -> Result<Vec<Check>, CliError> {
    let params = cfg.circuit();
    let basis = cfg.basis()?;
    let mut checks = Vec::new();

    // symmetrized copy: C13 = C23 and all three junctions equal at zero flux
    let c = 0.5 * (params.c13 + params.c23);
    let ej = (params.ej1 + params.ej2 + params.ej3_sum) / 3.0;
    let sym = CircuitParams {
        c13: c,
        c23: c,
        ej1: ej,
        ej2: ej,
        ej3_sum: ej,
        squid_asym: 0.0,
        ..params
    };
    checks.push(Check::from_result(
        "symmetry decoupling",
        effective_model(&sym, FluxBias(0.0)).map(|ep| {
            let (ab, ac) = (ep.g(Mode::A, Mode::B).abs(), ep.g(Mode::A, Mode::C).abs());
            (ab < 1e-10 && ac < 1e-10, format!("|g_AB| = {ab:e} GHz, |g_AC| = {ac:e} GHz"))
        }),
    ));
    checks.push(Check::from_result(
        "symmetric Kerr identities",
        effective_model(&sym, FluxBias(0.0)).map(|ep| {
            let (a, b) = (ep.mode(Mode::A), ep.mode(Mode::B));
            let self_err = (a.alpha + a.ec / 2.0).abs();
            let cross = -(a.ec * b.ec).sqrt() / 3.0;
            let cross_err = (ep.alpha_cross(Mode::A, Mode::B) - cross).abs();
            (
                self_err < 1e-12 && cross_err < 1e-12,
                format!("alpha_A + E_C,A/2 = {self_err:e}, alpha_AB deviation = {cross_err:e} GHz"),
            )
        }),
    ));

    for &flux in &[0.0, 0.5] {
        let name = if flux == 0.0 { "truncation at flux 0" } else { "truncation at flux 0.5" };
        checks.push(Check::from_result(
            name,
            solve(&params, FluxBias(flux), &basis).map(|s| {
                let v = s.charge_variance();
                (true, format!("charge variance {:.3} {:.3} {:.3} at n_max {}", v[0], v[1], v[2], basis.n_max))
            }),
        ));
    }
    let wider = ChargeBasisConfig {
        n_max: basis.n_max + 2,
        ..basis
    };
    checks.push(Check::from_result(
        "cutoff convergence",
        (|| {
            let mut worst: f64 = 0.0;
            for &flux in &[0.0, 0.5] {
                let lo = solve(&params, FluxBias(flux), &basis)?;
                let hi = solve(&params, FluxBias(flux), &wider)?;
                for (a, b) in lo.energies.iter().zip(&hi.energies).take(CONVERGENCE_LEVELS) {
                    worst = worst.max((a - b).abs());
                }
            }
            Ok((
                worst < CUTOFF_TOLERANCE,
                format!(
                    "largest change of the lowest {CONVERGENCE_LEVELS} levels {:.3e} GHz from n_max {} to {}",
                    worst, basis.n_max, wider.n_max
                ),
            ))
        })(),
    ));
    checks.push(Check::from_result(
        "flux parity",
        (|| {
            let a = solve(&params, FluxBias(0.2), &basis)?;
            let b = solve(&params, FluxBias(0.8), &basis)?;
            let worst = a
                .energies
                .iter()
                .zip(&b.energies)
                .take(6)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            Ok((worst < 1e-6, format!("largest level difference between 0.2 and 0.8: {worst:.3e} GHz")))
        })(),
    ));
    checks.push(Check::from_result(
        "purcell zero coupling",
        purcell_limit(cfg.kappa, 1.0, 0.0).map(|p| {
            (p == PurcellLimit::Unbounded && p.to_string() == "unbounded", format!("T1 renders as `{p}`"))
        }),
    ));
    checks.push(Check::from_result(
        "photon dephasing small-chi series",
        (|| {
            let (chi, n) = (-0.019, cfg.n_initial);
            let exact = photon_dephasing_rate(chi, cfg.kappa, n)?;
            let series = 4.0 * angular_per_us(chi).powi(2) * n / angular_per_us(cfg.kappa);
            let rel = (exact - series).abs() / series;
            Ok((rel < 0.02, format!("relative deviation {rel:.2e}")))
        })(),
    ));
    Ok(checks)
}

/// Runs the invariant suite, writes the report and fails with the number of
/// failed checks.
pub fn cmd_validate(cfg: &RunConfig) -> Result<(Vec<PathBuf>, Vec<Check>), CliError> {
    let checks = run_checks(cfg)?;
    let mut text = String::new();
    for (k, v) in &metadata("validate", cfg).entries {
        text.push_str(&format!("# {k}: {v}\n"));
    }
    for c in &checks {
        text.push_str(&c.line());
        text.push('\n');
    }
    let path = write_atomic(&out_dir(cfg), "validate.txt", text.as_bytes())?;
    Ok((vec![path], checks))
}
