use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn imc_wbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_imc-wbc")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn summary_value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}: ")))
        .unwrap_or_else(|| panic!("no {key} in\n{text}"))
        .trim()
        .parse()
        .unwrap()
}

fn out_arg(dir: &TempDir) -> String {
    dir.path().join("out").display().to_string()
}

/// CSV body without the last (wall-clock) column.
fn trajectory(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(|l| l.rsplit_once(',').unwrap().0.to_string()).collect()
}

#[test]
fn simulate_stand_smoke() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["simulate", "--scenario", "stand", "--ground-k", "6e5", "--output", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(summary_value(&text, "rms_com_error_m") < 1e-3);
    for key in ["max_pitch_deg", "force_tracking_rms_n", "qp_time_mean_us", "qp_time_p95_us"] {
        assert!(summary_value(&text, key).is_finite());
    }
    let base = dir.path().join("out");
    for f in ["stand_imc.csv", "stand_imc_summary.txt", "stand_imc_config.toml"] {
        assert!(base.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(base.join("stand_imc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1200);
}

#[test]
fn simulate_plank_keeps_pitch() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["simulate", "--scenario", "plank", "--controller", "imc", "--output", &out]);
    assert!(o.status.success());
    assert!(summary_value(&stdout(&o), "max_pitch_deg") < 2.0);
}

#[test]
fn missing_model_file_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let missing = dir.path().join("robot.toml").display().to_string();
    let o = imc_wbc(&["simulate", "--model", &missing, "--output", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn bad_config_values_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "scenario = \"stand\"\nwarp_speed = 9\n").unwrap();
    let o = imc_wbc(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warp_speed"));
    let out = out_arg(&dir);
    for args in [
        vec!["simulate", "--scenario", "moonwalk", "--output", &out],
        vec!["simulate", "--controller", "pid", "--output", &out],
        vec!["simulate", "--ground-k", "-1", "--output", &out],
    ] {
        assert_eq!(imc_wbc(&args).status.code(), Some(2), "{args:?}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn model_file_is_used() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("robot.toml");
    fs::write(&model, "base_mass = 70.0\n").unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["simulate", "--model", model.to_str().unwrap(), "--output", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    fs::write(&model, "base_mass = -1.0\n").unwrap();
    assert_eq!(imc_wbc(&["simulate", "--model", model.to_str().unwrap(), "--output", &out]).status.code(), Some(2));
}

#[test]
fn effective_config_reproduces_the_run() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a").display().to_string();
    let o = imc_wbc(&[
        "simulate",
        "--scenario",
        "stand+force-step",
        "--ground-k",
        "1e4",
        "--noise-std",
        "3",
        "--seed",
        "11",
        "--output",
        &first,
    ]);
    assert!(o.status.success());
    let cfg = dir.path().join("a/stand+force-step_imc_config.toml");
    let second = dir.path().join("b").display().to_string();
    let o = imc_wbc(&["simulate", "--config", cfg.to_str().unwrap(), "--output", &second]);
    assert!(o.status.success());
    let a = trajectory(&dir.path().join("a/stand+force-step_imc.csv"));
    let b = trajectory(&dir.path().join("b/stand+force-step_imc.csv"));
    assert_eq!(a, b);
    let mut c1 = fs::read_to_string(&cfg).unwrap();
    let c2 = fs::read_to_string(dir.path().join("b/stand+force-step_imc_config.toml")).unwrap();
    c1 = c1.replace(&first, &second);
    assert_eq!(c1, c2);
}

#[test]
fn analyze_reports_each_filter() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["analyze", "--eta-f", "0.01,0.3", "--output", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(summary_value(&text, "lbar(0)") - 0.4 < 1e-6);
    let line = |ef: &str| text.lines().find(|l| l.starts_with(&format!("eta_f {ef}:"))).unwrap().to_string();
    assert!(line("0.01").contains("performance uncertified"));
    assert!(line("0.3").contains("stability certified"));
    // with a weight of half the gain the slow filter passes the full test
    let o = imc_wbc(&["analyze", "--eta-f", "0.01,0.3", "--weight-gain", "0.5", "--output", &out]);
    let text = stdout(&o);
    let line = |ef: &str| text.lines().find(|l| l.starts_with(&format!("eta_f {ef}:"))).unwrap().to_string();
    assert!(line("0.01").contains("performance uncertified"));
    assert!(line("0.3").contains("performance certified"));

    let csv = fs::read_to_string(dir.path().join("out/analyze_eta_f_0.3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "omega,lbar,stability,performance,total");
    let omega: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(omega.len(), 400);
    assert!(omega.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn analyze_without_uncertainty_is_stable_everywhere() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["analyze", "--dk", "0", "--d-eta", "0", "--eta-f", "0.001,0.01,0.3", "--output", &out]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).matches("stability certified").count(), 3);
}

#[test]
fn analyze_rejects_too_much_gain_uncertainty() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["analyze", "--dk", "1.0", "--output", &out]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn tune_writes_a_config_fragment() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["tune", "--weight-gain", "0.5", "--output", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ef = summary_value(&stdout(&o), "eta_f");
    assert!(ef > 0.01 && ef < 0.3, "{ef}");
    let fragment = fs::read_to_string(dir.path().join("out/tuned.toml")).unwrap();
    let v: toml::Value = toml::from_str(&fragment).unwrap();
    assert_eq!(v["imc"]["eta_f_dist"].as_float(), Some(ef));
    // the fragment drops into a run config
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, &fragment).unwrap();
    let o = imc_wbc(&["simulate", "--config", cfg.to_str().unwrap(), "--output", &out]);
    assert!(o.status.success());
}

#[test]
fn tune_without_a_bracket_fails_certification() {
    let dir = TempDir::new().unwrap();
    let out = out_arg(&dir);
    let o = imc_wbc(&["tune", "--weight-gain", "2.0", "--output", &out]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn compare_is_paired_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a").display().to_string();
    let b = dir.path().join("b").display().to_string();
    let o = imc_wbc(&["compare", "--scenario", "stand+force-step", "--output", &a]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = stdout(&o);
    let ratio = |ground: &str| -> f64 {
        table.lines().find(|l| l.starts_with(ground)).unwrap().split_whitespace().last().unwrap().parse().unwrap()
    };
    assert!(ratio("soft") <= 0.7, "{table}");
    assert!(imc_wbc(&["compare", "--scenario", "stand+force-step", "--output", &b]).status.success());
    let x = fs::read_to_string(dir.path().join("a/compare.csv")).unwrap();
    let y = fs::read_to_string(dir.path().join("b/compare.csv")).unwrap();
    assert_eq!(x, y);
    let header = x.lines().next().unwrap();
    for col in ["stiff_imc_com_x", "stiff_baseline_com_error", "soft_imc_com_z_ref", "soft_baseline_com_x"] {
        assert!(header.split(',').any(|c| c == col), "{col}");
    }
}
