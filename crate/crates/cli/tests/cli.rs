use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sideband-sim"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).arg("--out").arg(dir).env_remove("SIDEBAND_SIM_THREADS").output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let o = run_in(dir, args);
    assert!(o.status.success(), "{args:?} exited {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    o
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

fn csv_rows(path: PathBuf) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let hash = lines.next().unwrap();
    assert!(hash.starts_with("# config_sha256: "), "{hash}");
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    (header, rows)
}

// coarser grid keeps the PLE runs short
const PLE_FAST: [&str; 2] = ["--ple.grid_points", "49"];

#[test]
fn ple_default_resolves_three_peaks_at_nu_m() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["ple", PLE_FAST[0], PLE_FAST[1]]);
    let r = json(d.path().join("peaks.json"));
    let peaks = r["spectra"][0]["fit"]["peaks"].as_array().unwrap();
    assert_eq!(peaks.len(), 3, "{peaks:?}");
    let step = 2.0 * 1.6 * 900.0 / 48.0;
    let split = f(&r["spectra"][0]["splitting_mhz"]);
    assert!((split - 900.0).abs() <= step, "splitting {split}");
    let (header, rows) = csv_rows(d.path().join("spectrum.csv"));
    assert_eq!(header[0], "detuning_mhz");
    assert_eq!(rows.len(), 49);
}

#[test]
fn ple_without_phonon_has_one_peak() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["ple", "--no-phonon", PLE_FAST[0], PLE_FAST[1]]);
    let r = json(d.path().join("peaks.json"));
    assert_eq!(r["spectra"][0]["fit"]["peaks"].as_array().unwrap().len(), 1);
}

#[test]
fn ple_power_list_writes_one_spectrum_each() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["ple", "--p-o", "0.1,1.0,2.0", PLE_FAST[0], PLE_FAST[1], "--ple.grid_half_span", "1.2"]);
    for k in 1..=3 {
        assert!(d.path().join(format!("spectrum_{k}.csv")).exists());
    }
    assert_eq!(json(d.path().join("peaks.json"))["spectra"].as_array().unwrap().len(), 3);
}

#[test]
fn rabi_default_frequency() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["rabi"]);
    let r = json(d.path().join("fit.json"));
    let nu = f(&r["runs"][0]["fit"]["frequency"]);
    assert!((nu - 66.0).abs() <= 3.3, "nu = {nu}");
    assert_eq!(r["runs"][0]["fit"]["ambiguous"], Value::Bool(false));
}

#[test]
fn rabi_frequency_follows_sqrt_rf_power() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["rabi", "--rf-powers", "0.2,0.1,0.05"]);
    let r = json(d.path().join("fit.json"));
    let nu: Vec<f64> = r["runs"].as_array().unwrap().iter().map(|x| f(&x["fit"]["frequency"])).collect();
    for (k, n) in nu.iter().enumerate().skip(1) {
        let expected = 2f64.powf(-(k as f64) / 2.0);
        assert!(((n / nu[0]) / expected - 1.0).abs() < 0.03, "{nu:?}");
    }
    assert!(f(&r["sqrt_power_fit"]["r_squared"]) > 0.99);
}

#[test]
fn rabi_without_modulation_is_ambiguous_not_an_error() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["rabi", "--beta", "0"]);
    assert_eq!(json(d.path().join("fit.json"))["runs"][0]["fit"]["ambiguous"], Value::Bool(true));
}

#[test]
fn seeded_rabi_output_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(a.path(), &["rabi", "--seed", "7"]);
    ok(b.path(), &["rabi", "--seed", "7"]);
    let read = |d: &Path| std::fs::read(d.join("counts.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let (header, _) = csv_rows(a.path().join("counts.csv"));
    assert!(header.iter().any(|h| h.contains("sampled")), "{header:?}");
}

#[test]
fn interference_fringe_has_period_two_pi() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["interference", "--scan", "phase"]);
    let r = json(d.path().join("interference.json"));
    assert!((f(&r["fringe"]["period_rad"]) - std::f64::consts::TAU).abs() < 1e-12);
    assert!(f(&r["fringe"]["relative_residual"]) < 0.03);
    assert!(!d.path().join("aom_scan.csv").exists());
}

#[test]
fn single_pathway_gives_flat_fringe() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["interference", "--scan", "phase", "--interference.nu_rabi_carrier", "0"]);
    let (_, rows) = csv_rows(d.path().join("fringe.csv"));
    let y: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    assert!((hi - lo) / hi < 0.01, "{lo} .. {hi}");
}

#[test]
fn aom_scan_reports_a_width_and_plot() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["interference", "--scan", "aom", "--plot", "--interference.aom_points", "21"]);
    let r = json(d.path().join("interference.json"));
    assert!(f(&r["aom"]["fwhm_mhz"]) > 0.0);
    let svg = std::fs::read_to_string(d.path().join("aom_scan.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn saw_report_and_zero_drive() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["saw"]);
    let r = json(d.path().join("report.json"));
    assert!((0.665..=0.735).contains(&f(&r["a_saw_pm"])));
    assert!((1.5..=2.4).contains(&f(&r["g_mhz"])));
    assert_eq!(r["resolved_sideband"], Value::Bool(true));

    let z = tempfile::tempdir().unwrap();
    ok(z.path(), &["saw", "--saw.nu_rabi_sideband", "0"]);
    assert_eq!(f(&json(z.path().join("report.json"))["a_saw_pm"]), 0.0);
}

#[test]
fn config_file_sets_nu_m() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("run.json");
    std::fs::write(&cfg, r#"{"phonon.nu_m": 940}"#).unwrap();
    let o = run_in(d.path(), &["saw", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(f(&json(d.path().join("report.json"))["nu_m_mhz"]), 940.0);
}

#[test]
fn oracle_writes_all_checks() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["oracle"]);
    let c = &json(d.path().join("correspondence.json"))["checks"];
    for key in ["max_deviation", "vacuum_max_deviation", "fock_ratio", "fock_expected_n1_mhz"] {
        assert!(c[key].is_number(), "{key}");
    }
    assert_eq!(c["vacuum_pass"], Value::Bool(true));
    assert_eq!(c["fock"].as_array().unwrap().len(), 2);
    let (header, rows) = csv_rows(d.path().join("correspondence.csv"));
    assert_eq!(header, ["t_ns", "p_excited_quantum", "rho_ee_classical"]);
    assert!(!rows.is_empty());
}

#[test]
fn config_hash_changes_with_config() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(a.path(), &["oracle"]);
    ok(b.path(), &["oracle", "--oracle.flops", "3"]);
    let first = |d: &Path| std::fs::read_to_string(d.join("correspondence.csv")).unwrap().lines().next().unwrap().to_string();
    assert_ne!(first(a.path()), first(b.path()));
}

#[test]
fn unknown_key_is_rejected() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), &["saw", "--saw.bogus", "1"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("saw.bogus"));
}

#[test]
fn invalid_values_are_all_listed() {
    let d = tempfile::tempdir().unwrap();
    let o = run_in(d.path(), &["rabi", "--rabi.bin_ns", "500", "--rabi.collection_eta", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("rabi.bin_ns") && err.contains("rabi.collection_eta"), "{err}");
}

#[test]
fn malformed_config_reports_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = d.path().join("bad.json");
    std::fs::write(&cfg, "{\n  \"ple.p_o\": 0.4,\n  oops\n}\n").unwrap();
    let o = run_in(d.path(), &["saw", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn thread_count_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = bin().args(["saw", "--out"]).arg(d.path()).env("SIDEBAND_SIM_THREADS", "1").output().unwrap();
    assert!(o.status.success());
    let o = bin().args(["saw", "--out"]).arg(d.path()).env("SIDEBAND_SIM_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
