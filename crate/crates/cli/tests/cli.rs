use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_chain-lqg");

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("CHAIN_LQG_SEED")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn short_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("in.json");
    write(
        &path,
        &format!(
            r#"{{"schema_version": 1,
                "scenario": {{"duration": 60, "events": [{{"time": 20, "road_speed_kmh": 60}}]}}{extra}}}"#
        ),
    );
    path
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn synth_centralized_writes_controller_and_cost() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["synth", "--mode", "centralized", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Tr(X W) = "), "{stdout}");
    assert!(out.join("controller_centralized.json").exists());
    assert!(out.join("config.json").exists());
}

#[test]
fn synth_three_reports_three_positive_terms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = run(&["synth", "--mode", "three", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let terms: Vec<f64> = stdout
        .lines()
        .filter(|l| l.starts_with("Tr("))
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(terms.len(), 3, "{stdout}");
    assert!(terms.iter().all(|&t| t > 0.0));
}

#[test]
fn mode_two_on_three_vehicles_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--mode", "two", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dimension"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    write(&cfg, r#"{"schema_version": 1, "weights": {"lead_speed": 1, "typo": 2}}"#);
    let o = run(&["synth", "--mode", "three", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("typo"));
}

#[test]
fn missing_config_is_an_io_error() {
    let o = run(&["synth", "--mode", "three", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(code(&o), 5);
}

#[test]
fn undetectable_weights_name_the_assumption() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(
        &cfg,
        r#"{"schema_version": 1, "vehicles": [{"mass": 30000}, {"mass": 40000}],
            "weights": {"lead_speed": 0, "followers": [{"time_gap": 0, "relative_speed": 0, "spacing": 0, "speed": 0, "input": 3}]}}"#,
    );
    let o = run(&["synth", "--mode", "two", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("assumption (iii)"));
}

#[test]
fn controller_files_round_trip_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "");
    let synth = dir.path().join("ctrl");
    for mode in ["centralized", "three", "suboptimal"] {
        let o = run(&["synth", "--mode", mode, "--config", cfg.to_str().unwrap(), "--out", synth.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let from_files = dir.path().join("a");
    let o = run(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--replications", "3", "--out", from_files.to_str().unwrap(),
        "--controller", synth.join("controller_centralized.json").to_str().unwrap(),
        "--controller", synth.join("controller_three.json").to_str().unwrap(),
        "--controller", synth.join("controller_suboptimal.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let inline = dir.path().join("b");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--replications", "3", "--out", inline.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["metrics.csv", "trace_centralized.csv", "trace_decentralized.csv", "trace_suboptimal.csv"] {
        assert_eq!(read(&from_files.join(f)), read(&inline.join(f)), "{f}");
    }
}

#[test]
fn mismatched_controller_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let two = dir.path().join("two.json");
    write(&two, r#"{"schema_version": 1, "vehicles": [{"mass": 30000}, {"mass": 40000}]}"#);
    let synth = dir.path().join("ctrl");
    assert_eq!(code(&run(&["synth", "--mode", "two", "--config", two.to_str().unwrap(), "--out", synth.to_str().unwrap()])), 0);
    let o = run(&[
        "simulate", "--replications", "1", "--out", dir.path().join("s").to_str().unwrap(),
        "--controller", synth.join("controller_two.json").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn same_seed_gives_identical_bytes_and_other_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "");
    let outs: Vec<_> = ["7", "7", "8"]
        .iter()
        .enumerate()
        .map(|(k, seed)| {
            let out = dir.path().join(format!("r{k}"));
            let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--replications", "4", "--out", out.to_str().unwrap()]);
            assert_eq!(code(&o), 0);
            out
        })
        .collect();
    for f in ["metrics.csv", "trace_decentralized.csv"] {
        assert_eq!(read(&outs[0].join(f)), read(&outs[1].join(f)));
        assert_ne!(read(&outs[0].join(f)), read(&outs[2].join(f)));
    }
}

#[test]
fn seed_from_environment_when_flag_absent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = Command::new(BIN)
        .args(["simulate", "--config", cfg.to_str().unwrap(), "--replications", "1", "--out", a.to_str().unwrap()])
        .env("CHAIN_LQG_SEED", "11")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "11", "--replications", "1", "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(read(&a.join("metrics.csv")), read(&b.join("metrics.csv")));
    let echoed = String::from_utf8(read(&a.join("config.json"))).unwrap();
    assert!(echoed.contains("\"noise_seed\": 11"));
}

#[test]
fn zero_noise_without_events_keeps_inputs_at_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"schema_version": 1, "noise": {"std": 0}, "scenario": {"duration": 30, "events": []}}"#);
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--replications", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for label in ["centralized", "decentralized", "suboptimal"] {
        let mut r = csv::Reader::from_path(out.join(format!("trace_{label}.csv"))).unwrap();
        let headers = r.headers().unwrap().clone();
        let cols: Vec<usize> = ["u1", "u2", "u3"]
            .iter()
            .map(|h| headers.iter().position(|x| x == *h).unwrap())
            .collect();
        let mut rows = 0;
        for rec in r.records() {
            let rec = rec.unwrap();
            for &c in &cols {
                assert_eq!(rec[c].parse::<f64>().unwrap(), 0.0);
            }
            rows += 1;
        }
        assert_eq!(rows, 300);
    }
}

#[test]
fn echoed_config_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short_config(dir.path(), r#", "noise": {"std": 0.004}"#);
    let first = dir.path().join("first");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "3", "--replications", "2", "--out", first.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let echo = first.join("config.json");
    let second = dir.path().join("second");
    let o = run(&["simulate", "--config", echo.to_str().unwrap(), "--replications", "2", "--out", second.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    for f in ["config.json", "metrics.csv", "trace_centralized.csv", "trace_decentralized.csv", "trace_suboptimal.csv"] {
        assert_eq!(read(&first.join(f)), read(&second.join(f)), "{f}");
    }
}

#[test]
fn verify_reports_machine_readable_lines() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = run(&["verify", "--suite", "riccati", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("riccati PASS ")));
    let summary: serde_json::Value = serde_json::from_slice(&read(&out.join("verify.json"))).unwrap();
    assert_eq!(summary["passed"], true);
    assert!(!summary["checks"].as_array().unwrap().is_empty());
}

#[test]
fn starved_solver_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    write(&cfg, r#"{"schema_version": 1, "solver": {"tol": 1e-12, "max_iter": 5}}"#);
    let o = run(&["verify", "--suite", "riccati", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("did not converge"));
}

#[test]
fn unknown_suite_is_a_usage_error() {
    assert_eq!(code(&run(&["verify", "--suite", "everything"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}
