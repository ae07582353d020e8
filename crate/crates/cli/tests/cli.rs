use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn patsnake(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_patsnake")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = patsnake(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path, json: &str) -> String {
    let path = dir.join("config.in.json");
    fs::write(&path, json).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap_or(f64::NAN)).collect()).collect();
    (header, rows)
}

#[test]
fn disp_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["disp", "--out", out]);
    let s = read_json(&dir.path().join("summary.json"));
    let lc = s["lambda_c"].as_f64().unwrap();
    let kc = s["k_c"].as_f64().unwrap();
    assert!((lc - 60f64.sqrt() * (3.0 - 8f64.sqrt()).sqrt()).abs() < 1e-12);
    assert!((kc - (2f64.sqrt() - 1.0).sqrt()).abs() < 1e-12);
    // default λ is λ_c: the peak growth rate sits at zero
    assert!(s["max_mu_plus"].as_f64().unwrap().abs() < 1e-4);
    let (header, rows) = csv_rows(&dir.path().join("dispersion.csv"));
    assert_eq!(header, ["k", "mu_plus", "mu_minus", "is_complex"]);
    assert_eq!(rows.len(), 401);
}

#[test]
fn empty_wavenumber_range_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"disp": {"k_min": 1.0, "k_max": 1.0}}"#);
    let out = patsnake(&["disp", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty wavenumber range"));
}

#[test]
fn unknown_config_key_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"modle": {"d": 60}}"#);
    let out = patsnake(&["disp", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    assert_eq!(patsnake(&["nonsense"]).status.code(), Some(1));
    assert_eq!(patsnake(&["--help"]).status.code(), Some(0));
    assert_eq!(patsnake(&["disp", "--threads", "0"]).status.code(), Some(1));
}

#[test]
fn maxwell_anchors_at_zero_sigma() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["maxwell", "--out", dir.path().to_str().unwrap()]);
    let (header, rows) = csv_rows(&dir.path().join("maxwell.csv"));
    let col = |name: &str| rows[0][header.iter().position(|h| h == name).unwrap()];
    assert_eq!(rows.len(), 1);
    assert!((col("hot") - 2.62).abs() < 0.02);
    assert!((col("cold") - 3.11).abs() < 0.02);
    assert!((col("homogeneous") - 3.219).abs() < 0.003);
    assert!((col("mixed_hot") - 2.67).abs() < 0.03);
    assert!(col("window_lo") < col("hot") && col("hot") < col("window_hi"));
}

#[test]
fn glfront_writes_profile_with_drift_column() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["glfront", "--out", dir.path().to_str().unwrap()]);
    let (header, rows) = csv_rows(&dir.path().join("front.csv"));
    assert_eq!(header, ["x", "A1", "A2", "E_total", "rel_drift"]);
    assert_eq!(rows.len(), 2001);
    assert!(rows.iter().all(|r| r[4] <= 1e-6));
    let s = read_json(&dir.path().join("summary.json"));
    assert!(s["residual"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn config_is_written_back_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"lambda0": 2.9, "sigma": -0.1}, "landau": {"points": 3}}"#);
    let out_dir = dir.path().join("run");
    run_ok(&["landau", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    let written = out_dir.join("config.json");
    let v = read_json(&written);
    assert_eq!(v["experiment"], "landau");
    assert_eq!(v["model"]["lambda0"], 2.9);
    assert_eq!(v["model"]["sigma"], -0.1);
    let again = dir.path().join("again");
    run_ok(&["landau", "--config", written.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    let mut w = read_json(&again.join("config.json"));
    let mut v = v;
    w["output_dir"] = serde_json::Value::Null;
    v["output_dir"] = serde_json::Value::Null;
    assert_eq!(v, w);
}

#[test]
fn landau_sigma_sweep_finds_c3_sign_change() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"landau": {"sweep": "sigma", "from": -0.5, "to": 0.0, "points": 51}}"#);
    run_ok(&["landau", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    let v = read_json(&dir.path().join("o/sign_changes.json"));
    let c3 = v.as_array().unwrap().iter().find(|x| x["quantity"] == "c3").expect("c3 crossing");
    assert!((c3["at"].as_f64().unwrap() + 0.3058).abs() < 0.01);
    let q = v.as_array().unwrap().iter().find(|x| x["quantity"] == "c3+2c4").expect("c3+2c4 crossing");
    assert!((q["at"].as_f64().unwrap() + 0.3692).abs() < 0.01);
}

#[test]
fn invalid_switch_event_lists_bifurcations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"lambda0": 3.25}, "domain": {"nx": 17, "ny": 13},
            "branch": {"max_points": 6, "lambda_min": 3.2, "switches": [{"event": 99}]}}"#,
    );
    let out = patsnake(&["cont", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("available bifurcations"));
    assert!(dir.path().join("o/branch.csv").exists());
}

#[test]
fn cont_writes_branch_events_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"lambda0": 3.0}, "domain": {"l1": 2, "nx": 65, "quasi1d": true, "ny": 2},
            "branch": {"start": "stripes", "both_directions": true, "max_points": 8},
            "snapshot_every": 2}"#,
    );
    let o = dir.path().join("o");
    run_ok(&["cont", "--config", &cfg, "--out", o.to_str().unwrap(), "--threads", "2"]);
    for label in ["branch_up", "branch_down"] {
        let (header, rows) = csv_rows(&o.join(format!("{label}.csv")));
        assert_eq!(header[..3], ["s", "lambda", "L2_u"]);
        assert!(rows.len() >= 2);
        assert!(o.join(format!("{label}_events.csv")).exists());
        assert!(o.join(format!("snapshots/{label}_00000.txt")).exists());
    }
    let up = csv_rows(&o.join("branch_up.csv")).1;
    assert!(up.last().unwrap()[1] > 3.0);
}

#[test]
fn render_homogeneous_snapshot_is_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"tint": {"a": 0.0, "b": 0.0, "polish": false}, "domain": {"nx": 9, "ny": 7}, "timestep": {"max_steps": 2}}"#,
    );
    let o = dir.path().join("o");
    run_ok(&["tint", "--config", &cfg, "--out", o.to_str().unwrap()]);
    run_ok(&["render", o.join("final.txt").to_str().unwrap(), "--out", o.to_str().unwrap()]);
    let img = fs::read(o.join("final.ppm")).unwrap();
    let header_end = img.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(2).unwrap().0 + 1;
    let pixels = &img[header_end..];
    assert_eq!(pixels.len(), 9 * 7 * 3);
    assert!(pixels.chunks(3).all(|p| p == &pixels[..3]));
}

#[test]
fn tint_trace_and_polish_from_localized_guess() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"model": {"lambda0": 2.7}, "domain": {"l1": 8, "l2": 2, "nx": 129, "ny": 33},
            "timestep": {"max_steps": 400, "residual_target": 1e-3}, "snapshot_every": 100}"#,
    );
    let o = dir.path().join("o");
    run_ok(&["tint", "--config", &cfg, "--out", o.to_str().unwrap()]);
    let (header, rows) = csv_rows(&o.join("trace.csv"));
    assert_eq!(header[..3], ["step", "t", "residual"]);
    assert_eq!(header.len(), 3 + 129);
    assert!(!rows.is_empty());
    assert!(o.join("snapshots/tint_000100.txt").exists());
    let s = read_json(&o.join("summary.json"));
    assert!(s["residual"].as_f64().unwrap() < rows[0][2]);
    assert!(s["polished"].is_boolean());
}
