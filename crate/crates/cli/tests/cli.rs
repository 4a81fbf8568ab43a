//! End-to-end runs of the `trimode` binary on small synthetic devices.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SYMMETRIC: &str = "\
c12 = 60.0
c13 = 50.0
c23 = 50.0
c01 = 5.0
c02 = 5.0
c03 = 5.0
ej1 = 15.0
ej2 = 15.0
ej3_sum = 15.0
squid_asym = 0.2
coupling_row = [0.0, 0.0, 1e-4]
grid = \"0:0.5:3\"
n_max = 7
n_levels = 10
";

fn trimode(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_trimode"))
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

#[test]
fn symmetric_harmonic_bare_a_branch_is_flat() {
    let dir = tempfile::tempdir().unwrap();
    let out = trimode(dir.path(), SYMMETRIC, &["spectrum"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&dir.path().join("out/spectrum.csv"));
    let (model, branch, freq) = (column(&h, "model"), column(&h, "branch"), column(&h, "frequency_ghz"));
    let a: Vec<f64> = rows
        .iter()
        .filter(|r| r[model] == "effective_bare_harmonic" && r[branch] == "100")
        .map(|r| r[freq].parse().unwrap())
        .collect();
    assert_eq!(a.len(), 3);
    assert!(a.iter().all(|f| (f - a[0]).abs() < 1e-9), "{a:?}");
    // the Kerr-dressed frequency follows the tunable mode's zero-point motion
    let dressed: Vec<f64> = rows
        .iter()
        .filter(|r| r[model] == "effective_bare" && r[branch] == "100")
        .map(|r| r[freq].parse().unwrap())
        .collect();
    assert!((dressed[0] - dressed[2]).abs() > 1e-3, "{dressed:?}");
    assert!(rows.iter().any(|r| r[model] == "exact"));
}

#[test]
fn island_three_coupling_has_no_direct_a_shift() {
    let dir = tempfile::tempdir().unwrap();
    let out = trimode(dir.path(), SYMMETRIC, &["chi"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&dir.path().join("out/chi.csv"));
    let direct = column(&h, "chi_A_direct");
    let g = column(&h, "g_A");
    for r in &rows {
        assert!(r[direct].parse::<f64>().unwrap().abs() < 1e-12, "{r:?}");
        assert!(r[g].parse::<f64>().unwrap().abs() < 1e-10, "{r:?}");
    }
}

#[test]
fn uncoupled_device_renders_unbounded_purcell_limit() {
    let dir = tempfile::tempdir().unwrap();
    let config = SYMMETRIC.replace("coupling_row = [0.0, 0.0, 1e-4]", "coupling_row = [0.0, 0.0, 0.0]");
    let out = trimode(dir.path(), &config, &["decoherence"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (h, rows) = table(&dir.path().join("out/decoherence.csv"));
    let t1 = column(&h, "t1_purcell_us");
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r[t1] == "unbounded"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = trimode(dir.path(), SYMMETRIC, &["decoherence"]);
    assert!(a.status.success());
    let first = fs::read(dir.path().join("out/decoherence.csv")).unwrap();
    let b = trimode(dir.path(), SYMMETRIC, &["decoherence"]);
    assert!(b.status.success());
    assert_eq!(first, fs::read(dir.path().join("out/decoherence.csv")).unwrap());
}

#[test]
fn validate_passes_on_symmetric_device() {
    let dir = tempfile::tempdir().unwrap();
    // n_max 7 leaves a 7 kHz truncation error on this device
    let out = trimode(dir.path(), SYMMETRIC, &["validate", "--nmax", "8"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 8, "{stdout}");
}

#[test]
fn tiny_cutoff_fails_truncation_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = trimode(dir.path(), SYMMETRIC, &["validate", "--nmax", "3"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(2), "{stdout}");
    assert!(stdout.contains("FAIL truncation"), "{stdout}");
}

#[test]
fn malformed_observation_row_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    fs::write(&obs, "kind,flux,label,value,weight\nfrequency,0,100,5.0,\nfrequency,0.5,1x0,5.0,\n").unwrap();
    let out = trimode(dir.path(), SYMMETRIC, &["fit", "--observations", obs.to_str().unwrap()]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(1), "{stderr}");
    assert!(stderr.contains("observation row 2"), "{stderr}");
}

#[test]
fn missing_or_invalid_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_trimode"))
        .args(["--config", "/nonexistent/run.toml", "spectrum"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = trimode(dir.path(), &SYMMETRIC.replace("c12 = 60.0", "c12 = -60.0"), &["spectrum"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let out = trimode(dir.path(), SYMMETRIC, &["spectrum", "--grid", "0:0.5:1"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_without_observations_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = trimode(dir.path(), SYMMETRIC, &["fit"]);
    assert_eq!(out.status.code(), Some(1));
}
