//! Observation CSV: columns `kind,flux,label,value,weight`; `#` lines are
//! comments and an empty weight selects the default for the kind.

use std::path::Path;

use serde::Deserialize;
use trimode_core::fitting::{Observation, ObservationKind, ObservationSet};
use trimode_core::Occupation;

use crate::CliError;

#[derive(Debug, Deserialize)]
struct Row {
    kind: String,
    flux: f64,
    label: String,
    value: f64,
    #[serde(default)]
    weight: Option<f64>,
}

pub fn parse_observations(text: &str) -> Result<ObservationSet, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let line = |e: &dyn std::fmt::Display| CliError::Input(format!("observation row {}: {e}", i + 1));
        let row = row.map_err(|e| line(&e))?;
        let kind: ObservationKind = row.kind.parse().map_err(|e: trimode_core::Error| line(&e))?;
        let label: Occupation = row.label.parse().map_err(|e: trimode_core::Error| line(&e))?;
        let mut obs = Observation::new(kind, row.flux, label, row.value);
        if let Some(w) = row.weight {
            obs.weight = w;
        }
        if !(obs.weight > 0.0 && obs.weight.is_finite()) || !obs.value.is_finite() || !obs.flux.is_finite() {
            return Err(line(&"value and flux must be finite and weight positive"));
        }
        records.push(obs);
    }
    if records.is_empty() {
        return Err(CliError::Input("observation file has no rows".into()));
    }
    Ok(ObservationSet::new(records))
}

pub fn read_observations(path: &Path) -> Result<(ObservationSet, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read observations {}: {e}", path.display())))?;
    Ok((parse_observations(&text)?, text))
}

pub fn render_observations(set: &ObservationSet) -> String {
    let mut out = String::from("kind,flux,label,value,weight\n");
    for o in &set.records {
        out.push_str(&format!("{},{},{},{},{}\n", o.kind, o.flux, o.label.code(), o.value, o.weight));
    }
    out
}
