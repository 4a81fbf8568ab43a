//! Run configuration: a flat TOML key set mirroring the circuit, resonator and
//! noise parameters plus run settings, with command-line overrides applied on
//! top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use trimode_core::charge_basis::ChargeBasisConfig;
use trimode_core::decoherence::NoiseEnvironment;
use trimode_core::fitting::{DeviceModel, FreeParam, DEFAULT_FREE_PARAMS};
use trimode_core::resonator::ResonatorParams;
use trimode_core::CircuitParams;

use crate::CliError;

fn default_omega_r() -> f64 {
    6.990
}
fn default_z_r() -> f64 {
    50.0
}
fn default_kappa() -> f64 {
    1.32
}
fn default_a_phi() -> f64 {
    1.69
}
fn default_n_initial() -> f64 {
    trimode_core::decoherence::DEFAULT_N_INITIAL
}
fn default_grid() -> String {
    "0:0.5:51".into()
}
fn default_n_max() -> usize {
    trimode_core::charge_basis::DEFAULT_N_MAX
}
fn default_n_levels() -> usize {
    trimode_core::charge_basis::DEFAULT_N_LEVELS
}
fn default_photon_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.1, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub c12: f64,
    pub c13: f64,
    pub c23: f64,
    pub c01: f64,
    pub c02: f64,
    pub c03: f64,
    pub ej1: f64,
    pub ej2: f64,
    pub ej3_sum: f64,
    #[serde(default)]
    pub squid_asym: f64,
    #[serde(default)]
    pub offset_charges: [f64; 3],

    #[serde(default = "default_omega_r")]
    pub omega_r: f64,
    #[serde(default = "default_z_r")]
    pub z_r: f64,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default)]
    pub coupling_row: [f64; 3],

    #[serde(default = "default_a_phi")]
    pub a_phi: f64,
    #[serde(default = "default_n_initial")]
    pub n_initial: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default = "default_photon_grid")]
    pub photon_grid: Vec<f64>,

    /// START:STOP:COUNT in units of φ0.
    #[serde(default = "default_grid")]
    pub grid: String,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default = "default_n_levels")]
    pub n_levels: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub bootstrap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub free: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// Command-line values that replace configuration keys.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid: Option<String>,
    pub n_max: Option<usize>,
    pub bootstrap: Option<usize>,
    pub observations: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))?;
        // relative observation paths are taken relative to the config file
        if let (Some(obs), Some(dir)) = (cfg.observations.as_mut(), path.parent()) {
            if obs.is_relative() {
                *obs = dir.join(&*obs);
            }
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out {
            self.out = Some(v.clone());
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.grid {
            self.grid = v.clone();
        }
        if let Some(v) = o.n_max {
            self.n_max = v;
        }
        if let Some(v) = o.bootstrap {
            self.bootstrap = v;
        }
        if let Some(v) = &o.observations {
            self.observations = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.circuit().validate()?;
        self.resonator().validate()?;
        self.noise().validate()?;
        self.basis()?;
        self.flux_grid()?;
        self.free_params()?;
        if self.photon_grid.iter().any(|n| !(*n >= 0.0)) {
            return Err(CliError::Input("photon_grid entries must be non-negative".into()));
        }
        Ok(())
    }

    pub fn circuit(&self) -> CircuitParams {
        CircuitParams {
            c12: self.c12,
            c13: self.c13,
            c23: self.c23,
            c01: self.c01,
            c02: self.c02,
            c03: self.c03,
            ej1: self.ej1,
            ej2: self.ej2,
            ej3_sum: self.ej3_sum,
            squid_asym: self.squid_asym,
            offset_charges: self.offset_charges,
        }
    }

    pub fn resonator(&self) -> ResonatorParams {
        ResonatorParams {
            omega_r: self.omega_r,
            z_r: self.z_r,
            kappa: self.kappa,
            coupling_row: self.coupling_row,
        }
    }

    pub fn device(&self) -> DeviceModel {
        DeviceModel {
            circuit: self.circuit(),
            resonator: self.resonator(),
        }
    }

    /// Copy with circuit and resonator replaced by a fitted device.
    pub fn with_device(&self, m: &DeviceModel) -> Self {
        let c = &m.circuit;
        RunConfig {
            c12: c.c12,
            c13: c.c13,
            c23: c.c23,
            c01: c.c01,
            c02: c.c02,
            c03: c.c03,
            ej1: c.ej1,
            ej2: c.ej2,
            ej3_sum: c.ej3_sum,
            squid_asym: c.squid_asym,
            offset_charges: c.offset_charges,
            coupling_row: m.resonator.coupling_row,
            ..self.clone()
        }
    }

    pub fn noise(&self) -> NoiseEnvironment {
        NoiseEnvironment {
            a_phi: self.a_phi,
            n_initial: self.n_initial,
            gamma1: self.gamma1,
        }
    }

    pub fn basis(&self) -> Result<ChargeBasisConfig, CliError> {
        Ok(ChargeBasisConfig::new(self.n_max, self.n_levels)?)
    }

    pub fn flux_grid(&self) -> Result<Vec<f64>, CliError> {
        parse_grid(&self.grid)
    }

    pub fn free_params(&self) -> Result<Vec<FreeParam>, CliError> {
        match &self.free {
            None => Ok(DEFAULT_FREE_PARAMS.to_vec()),
            Some(names) => names
                .iter()
                .map(|n| n.parse::<FreeParam>().map_err(CliError::from))
                .collect(),
        }
    }

    /// SHA-256 of the resolved configuration, excluding the output directory
    /// so that reruns into different directories carry the same stamp.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out = None;
        let text = toml::to_string(&canonical).expect("configuration serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses START:STOP:COUNT into an evenly spaced grid with COUNT ≥ 2 points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Input(format!("grid `{spec}` must be START:STOP:COUNT with COUNT >= 2"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count < 2 || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| if i + 1 == count { stop } else { start + step * i as f64 })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "c12 = 60.0\nc13 = 50.0\nc23 = 50.0\nc01 = 5.0\nc02 = 5.0\nc03 = 5.0\nej1 = 15.0\nej2 = 15.0\nej3_sum = 15.0\n";

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:0.5:3").unwrap(), vec![0.0, 0.25, 0.5]);
        assert!(parse_grid("0:0.5:1").is_err());
        assert!(parse_grid("0:0.5").is_err());
        assert!(parse_grid("a:0.5:3").is_err());
    }

    #[test]
    fn defaults_and_overrides() {
        let mut cfg: RunConfig = toml::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.n_max, 7);
        assert_eq!(cfg.omega_r, 6.990);
        let h = cfg.hash();
        cfg.apply(&Overrides {
            out: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(cfg.hash(), h);
        cfg.apply(&Overrides {
            seed: Some(3),
            ..Default::default()
        });
        assert_ne!(cfg.hash(), h);
        let round: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(round, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}bogus = 1\n");
        assert!(toml::from_str::<RunConfig>(&text).is_err());
    }
}
