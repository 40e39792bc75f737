use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ctmc-lab"))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = bin();
    cmd.args(args);
    if let Some(t) = threads {
        cmd.env("CTMC_LAB_THREADS", t);
    }
    cmd.output().unwrap()
}

fn base_config() -> Value {
    json!({
        "space": {"S": 3, "d": 2},
        "q0": {"kind": "point-mass", "index": 4},
        "sampler": {"kind": "truncated"},
        "schedule": "cted",
        "T": 3.0,
        "delta": 0.01,
        "kappa": 0.2,
        "mode": {"kind": "exact"},
        "master_seed": 11
    })
}

fn read_record(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text.lines().count(), 1);
    serde_json::from_str(text.trim_end()).unwrap()
}

#[test]
fn uniform_q0_gives_zero_kl_for_every_sampler() {
    let dir = TempDir::new().unwrap();
    for kind in ["tau-leaping", "euler", "tweedie", "truncated", "kolmogorov-ref"] {
        let mut config = base_config();
        config["space"] = json!({"S": 2, "d": 2});
        config["q0"] = json!({"kind": "uniform"});
        config["sampler"] = json!({"kind": kind});
        config["output"] = json!(dir.path().join("out.jsonl"));
        if !matches!(kind, "tau-leaping" | "truncated") {
            config["bound"] = json!({"enabled": false});
        }
        let path = write_json(dir.path(), "run.json", &config);
        let out = run(&["run", path.to_str().unwrap()], None);
        assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let record = read_record(&dir.path().join("out.jsonl"));
        assert!(record["kl"].as_f64().unwrap() <= 1e-10, "{kind}: {record}");
    }
}

#[test]
fn exact_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let mut config = base_config();
    config["steps_csv"] = json!(dir.path().join("steps.csv"));
    let path = write_json(dir.path(), "run.json", &config);
    let first = run(&["run", path.to_str().unwrap()], None);
    let second = run(&["run", path.to_str().unwrap()], Some("1"));
    assert!(first.status.success());
    assert!(!first.stdout.is_empty());
    assert_eq!(first.stdout, second.stdout);
    assert!(String::from_utf8_lossy(&first.stderr).contains("wall-clock"));

    let record: Value = serde_json::from_slice(&first.stdout).unwrap();
    for field in ["lhs_kl", "init_err", "est_err", "disc_err", "rhs_total", "quad_est"] {
        assert!(record["bound"][field].is_number(), "{field}");
    }
    assert_eq!(record["bound"].as_object().unwrap().len(), 6);
    assert_eq!(record["seed"], json!(11));
    assert_eq!(record["config_hash"].as_str().unwrap().len(), 16);

    let steps = std::fs::read_to_string(dir.path().join("steps.csv")).unwrap();
    let n_steps = record["n_steps"].as_u64().unwrap() as usize;
    assert!(steps.starts_with("k,t,kl,tv\n"));
    assert_eq!(steps.lines().count(), n_steps + 2);
}

#[test]
fn monte_carlo_runs_do_not_depend_on_thread_count() {
    let dir = TempDir::new().unwrap();
    let mut config = base_config();
    config["sampler"] = json!({"kind": "tau-leaping", "out_of_range_policy": "freeze"});
    config["mode"] = json!({"kind": "monte-carlo", "n": 3000});
    config["bound"] = json!({"enabled": false});
    let path = write_json(dir.path(), "run.json", &config);
    let one = run(&["run", path.to_str().unwrap()], Some("1"));
    let four = run(&["run", path.to_str().unwrap()], Some("4"));
    assert!(one.status.success(), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn missing_schedule_exits_with_code_2() {
    let dir = TempDir::new().unwrap();
    let mut config = base_config();
    config.as_object_mut().unwrap().remove("schedule");
    let path = write_json(dir.path(), "run.json", &config);
    for cmd in ["run", "validate"] {
        let out = run(&[cmd, path.to_str().unwrap()], None);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("schedule"));
    }
}

#[test]
fn nested_schema_errors_name_the_field_path() {
    let dir = TempDir::new().unwrap();
    let mut config = base_config();
    config["sampler"] = json!({"kind": "leapfrog"});
    let path = write_json(dir.path(), "run.json", &config);
    let out = run(&["validate", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sampler.kind"));
}

#[test]
fn sampler_failure_exits_with_code_3_and_context() {
    let dir = TempDir::new().unwrap();
    let mut config = base_config();
    config["space"] = json!({"S": 2, "d": 1});
    config["q0"] = json!({"kind": "uniform"});
    config["sampler"] = json!({"kind": "euler"});
    config["schedule"] = json!("uniform");
    config["T"] = json!(5.0);
    config["N"] = json!(1);
    config.as_object_mut().unwrap().remove("kappa");
    let path = write_json(dir.path(), "run.json", &config);
    let out = run(&["run", path.to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("step 0") && stderr.contains("step too large"), "{stderr}");
}

#[test]
fn validate_reports_the_config_hash() {
    let dir = TempDir::new().unwrap();
    let path = write_json(dir.path(), "run.json", &base_config());
    let out = run(&["validate", path.to_str().unwrap()], None);
    assert!(out.status.success());
    let line = String::from_utf8(out.stdout).unwrap();
    assert!(line.starts_with("ok ") && line.trim_end().len() == 19);
}

fn sweep_rows(dir: &Path, axes: Value, base: Value) -> (Vec<String>, Vec<Vec<String>>) {
    let csv_path = dir.join("sweep.csv");
    let spec = json!({"base": base, "axes": axes, "output": csv_path});
    let path = write_json(dir, "sweep.json", &spec);
    let out = run(&["sweep", path.to_str().unwrap()], Some("3"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    let headers = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

fn col(headers: &[String], rows: &[Vec<String>], name: &str) -> Vec<f64> {
    let i = headers.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn kappa_sweep_kl_decreases() {
    let dir = TempDir::new().unwrap();
    let mut base = base_config();
    base["q0"] = json!({"kind": "point-mass", "index": 0});
    base["sampler"] = json!({"kind": "tau-leaping"});
    base["T"] = json!(4.0);
    base["delta"] = json!(1e-3);
    let (headers, rows) = sweep_rows(dir.path(), json!({"kappa": [0.4, 0.2, 0.1, 0.05]}), base);
    assert_eq!(headers[0], "config_hash");
    let mut rest = headers[1..].to_vec();
    rest.sort_by_key(|h| h.to_lowercase());
    assert_eq!(rest, headers[1..]);
    assert_eq!(col(&headers, &rows, "kappa"), vec![0.4, 0.2, 0.1, 0.05]);
    let kl = col(&headers, &rows, "kl");
    assert!(kl.windows(2).all(|w| w[1] < w[0]), "{kl:?}");
    assert!(col(&headers, &rows, "est_err").iter().all(|&e| e == 0.0));
}

#[test]
fn delta_sweep_halves_early_stop_tv() {
    let dir = TempDir::new().unwrap();
    let (headers, rows) = sweep_rows(dir.path(), json!({"delta": [0.02, 0.01, 0.005]}), base_config());
    let tv = col(&headers, &rows, "early_stop_tv");
    for w in tv.windows(2) {
        let r = w[0] / w[1];
        assert!((1.8..=2.2).contains(&r), "{tv:?}");
    }
}

#[test]
fn c_sweep_eps_score_is_zero_only_for_exact_scores() {
    let dir = TempDir::new().unwrap();
    let (headers, rows) = sweep_rows(dir.path(), json!({"c": [1.0, 2.0]}), base_config());
    let eps = col(&headers, &rows, "eps_score");
    assert_eq!(eps[0], 0.0);
    assert!(eps[1] > 0.0);
    assert_eq!(col(&headers, &rows, "c"), vec![1.0, 2.0]);
}

#[test]
fn failing_sweep_points_are_recorded_in_row() {
    let dir = TempDir::new().unwrap();
    let mut base = base_config();
    base["sampler"] = json!({"kind": "euler"});
    base["bound"] = json!({"enabled": false});
    let (headers, rows) = sweep_rows(dir.path(), json!({"kappa": [0.1, 2.5]}), base);
    let err = headers.iter().position(|h| h == "error").unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0][err].is_empty());
    assert!(!rows[1][err].is_empty());
    let hash = headers.iter().position(|h| h == "config_hash").unwrap();
    assert_ne!(rows[0][hash], rows[1][hash]);
}

#[test]
fn fit_recovers_power_laws() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("data.csv");
    std::fs::write(&path, "x,y,z\n1,1,1\n2,2,4\n4,4,16\n8,8,64\n3,0,9\n").unwrap();
    let out = run(&["fit", path.to_str().unwrap(), "--x", "x", "--y", "y"], None);
    assert!(out.status.success());
    let fit: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["slope"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((fit["r2"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(fit["dropped"], json!(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dropped 1"));

    let out = run(&["fit", path.to_str().unwrap(), "--x", "x", "--y", "z"], None);
    let fit: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((fit["slope"].as_f64().unwrap() - 2.0).abs() < 1e-12);

    let out = run(&["fit", path.to_str().unwrap(), "--x", "x", "--y", "w"], None);
    assert_eq!(out.status.code(), Some(2));
}
