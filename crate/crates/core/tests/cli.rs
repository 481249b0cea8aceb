use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mvsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvsde")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn print_config_shows_every_default() {
    let o = mvsde(&["simulate", "--print-config", "--seed", "17"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scheme"]["seed"], 17);
    assert_eq!(v["scheme"]["scheme"], "em");
    assert_eq!(v["model"]["name"], "opinion");
    assert_eq!(v["simulate"]["per_path"], true);
    let o = mvsde(&["control", "--print-config"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["model"]["name"], "feedback");
    assert_eq!(v["control"]["variants"][2], serde_json::json!([12.0, 10.0]));
}

#[test]
fn zero_model_gives_a_flat_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"model": {"name": "zero"}, "scheme": {"n": 20, "paths": 3, "steps": 50}}"#);
    let out = tmp.path().join("out");
    let o = mvsde(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.starts_with("# mvsde simulate seed=0 config={"));
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r[2] == rows[0][2] && r[7] == "false"));
    for f in ["series.svg", "series_paths.csv", "series_paths.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn divergence_is_a_result_not_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"name": "feedback"}, "scheme": {"n": 200, "paths": 4, "seed": 3}, "horizon": 8}"#,
    );
    let out = tmp.path().join("out");
    let o = mvsde(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("series.csv")).unwrap();
    assert!(csv.contains("# diverged=true"));
    assert_eq!(data_rows(&csv).last().unwrap()[7], "true");
}

#[test]
fn header_replays_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"name": "linear"}, "scheme": {"n": 50, "paths": 4, "dt": 0.02}, "horizon": 1}"#,
    );
    let first = tmp.path().join("a");
    let o = mvsde(&["simulate", "--config", &cfg, "--seed", "99", "--out", first.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let replay = tmp.path().join("b");
    let series = first.join("series.csv");
    let o = mvsde(&["simulate", "--config", series.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["series.csv", "series_paths.csv", "series.svg"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(replay.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn config_errors_exit_with_one_and_name_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"scheme\": {\n    \"dt\": \"fast\"\n  }\n}");
    let o = mvsde(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("scheme.dt") && e.contains("line 3"), "{e}");

    let cfg = write_config(tmp.path(), r#"{"scheme": {"dt": 1.5}}"#);
    assert_eq!(mvsde(&["simulate", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(tmp.path(), r#"{"model": {"name": "pendulum"}}"#);
    assert_eq!(mvsde(&["simulate", "--config", &cfg]).status.code(), Some(1));
    let cfg = write_config(tmp.path(), r#"{"rate": {}}"#);
    let o = mvsde(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("rate"));
}

#[test]
fn implicit_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"name": "cubic"}, "scheme": {"scheme": "bem", "dt": 0.5, "n": 10, "steps": 3, "implicit_max_iter": 1}}"#,
    );
    let o = mvsde(&["simulate", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("implicit solve failed"));
}

#[test]
fn check_reports_and_flags_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(tmp.path(), r#"{"check": {"assumptions": ["A2.1", "A2.2"], "samples": 2000}}"#);
    let o = mvsde(&["check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(out.join("check.csv")).unwrap());
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1] == "pass"));

    // The declared (b1, b2) of the opinion preset do not bound its drift growth.
    let cfg = write_config(tmp.path(), r#"{"check": {"assumptions": ["A5.1", "A6.1"], "samples": 2000}}"#);
    let o = mvsde(&["check", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(out.join("check.csv")).unwrap());
    assert_eq!(rows[0][1], "fail");
    assert_eq!(rows[1][1], "missing");
}

#[test]
fn rate_of_deterministic_decay_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"name": "exponential", "rate": 2.0}, "scheme": {"n": 10, "paths": 2}, "horizon": 3, "rate": {"dts": [0.01, 0.1]}}"#,
    );
    let o = mvsde(&["rate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(out.join("rates.csv")).unwrap());
    for r in rows {
        let dt: f64 = r[0].parse().unwrap();
        let slope: f64 = r[2].parse().unwrap();
        let exact = 2.0 * (1.0 - 2.0 * dt).ln() / dt;
        assert!((slope - exact).abs() < 1e-9, "{dt}: {slope} vs {exact}");
        assert!(r[4].is_empty(), "no declared constants");
    }
    assert!(out.join("rates.svg").exists());
}

#[test]
fn rate_beyond_the_stepsize_bound_leaves_theory_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(
        tmp.path(),
        r#"{"scheme": {"n": 50, "paths": 4}, "horizon": 9, "rate": {"dts": [0.01, 0.45]}}"#,
    );
    let o = mvsde(&["rate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning: dt = 0.45: theta*"));
    let rows = data_rows(&fs::read_to_string(out.join("rates.csv")).unwrap());
    assert!(!rows[0][4].is_empty() && rows[1][4].is_empty());
    assert!(!rows[1][2].is_empty(), "empirical rate is still computed");
}

#[test]
fn chaos_self_coupling_is_exact_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"name": "linear"}, "scheme": {"paths": 3},
            "chaos": {"n_list": [16], "sweep_n": 16, "t_sweep": [0.5, 1.0], "reference": {"kind": "proxy", "n_ref": 16}}}"#,
    );
    let o = mvsde(&["chaos", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = data_rows(&fs::read_to_string(out.join("chaos.csv")).unwrap());
    assert_eq!(rows, vec![vec!["16".to_string(), "0".into(), "0".into(), String::new()]]);
    assert!(out.join("chaos_time.csv").exists() && out.join("chaos.svg").exists());
}

#[test]
fn control_writes_one_series_per_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(
        tmp.path(),
        r#"{"model": {"name": "feedback"}, "scheme": {"n": 100, "paths": 2}, "horizon": 3}"#,
    );
    let o = mvsde(&["control", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["control_k0_0.csv", "control_k7_8.csv", "control_k12_10.csv", "control.csv", "control.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let rows = data_rows(&fs::read_to_string(out.join("control.csv")).unwrap());
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2][2], "false");
}

#[test]
fn figures_subset_and_unknown_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let cfg = write_config(tmp.path(), r#"{"figures": {"only": ["fig12"], "path_scale": 0.1}}"#);
    let o = mvsde(&["figures", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("figures/fig12_cubic_paths.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 2 + 3);
    let cfg = write_config(tmp.path(), r#"{"figures": {"only": ["fig13"]}}"#);
    assert_eq!(mvsde(&["figures", "--config", &cfg]).status.code(), Some(1));
}
