//! CSV and text outputs: a `#`-prefixed metadata block, one header line, and
//! an atomic write-then-rename so readers never see partial files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Metadata lines written above every table.
#[derive(Debug, Clone)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new(command: &str, config_hash: &str) -> Self {
        Metadata {
            entries: vec![
                ("generator".into(), format!("trimode {VERSION}")),
                ("command".into(), command.into()),
                ("config_sha256".into(), config_hash.into()),
            ],
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }
}

/// Renders a float with Rust's shortest round-trip representation; `NaN`
/// becomes an empty field.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn render_csv(meta: &Metadata, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut out = meta.render().into_bytes();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    out.extend(w.into_inner().map_err(|e| CliError::Io(e.to_string()))?);
    Ok(out)
}

fn io_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// Writes `bytes` to `dir/name` through a temporary file in the same
/// directory followed by a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &target)
    };
    write().map_err(|e| CliError::Io(format!("cannot write {}: {e}", target.display())))?;
    Ok(target)
}

pub fn write_csv(
    dir: &Path,
    name: &str,
    meta: &Metadata,
    header: &[&str],
    rows: &[Vec<String>],
) -> Result<PathBuf, CliError> {
    write_atomic(dir, name, &render_csv(meta, header, rows)?)
}
