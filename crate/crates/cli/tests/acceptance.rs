//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use chain_lqg::platoon::{build_platoon, PlatoonModel, PlatoonSpec};
use chain_lqg::simulate::{compare_controllers, Plant};
use chain_lqg::verify::{
    estimator_checks, identity_checks, information_checks, optimality_checks, riccati_checks,
    run_suite, Check, Suite, VerifyOptions,
};
use chain_lqg_cli::commands::synthesize;
use chain_lqg_cli::config::Config;
use chain_lqg_cli::controller_file::Mode;

struct Outcome {
    passed: bool,
    detail: String,
}

fn from_checks(checks: &[Check]) -> Outcome {
    Outcome {
        passed: checks.iter().all(|c| c.passed),
        detail: checks
            .iter()
            .map(|c| format!("{}={:.3e}/{:.1e}", c.name, c.measured, c.threshold))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn model(spec: PlatoonSpec) -> PlatoonModel {
    build_platoon(&spec).expect("default model builds")
}

fn criterion<F>(id: u32, title: &str, limit: Option<Duration>, f: F) -> bool
where
    F: FnOnce() -> Result<Outcome, String>,
{
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let (mut passed, mut detail) = match outcome {
        Ok(o) => (o.passed, o.detail),
        Err(e) => (false, format!("error: {e}")),
    };
    if let Some(limit) = limit {
        if elapsed > limit {
            passed = false;
            detail.push_str(&format!("; runtime over {:.0?}", limit));
        }
    }
    println!(
        "criterion {id} {} {title} [{:.2?}] {detail}",
        if passed { "PASS" } else { "FAIL" },
        elapsed
    );
    passed
}

fn dare() -> Result<Outcome, String> {
    let checks = riccati_checks(&model(PlatoonSpec::three_trucks()), &VerifyOptions::default())
        .map_err(|e| e.to_string())?;
    if checks.len() != 6 {
        return Err(format!("expected three solutions, got {} checks", checks.len()));
    }
    Ok(from_checks(&checks))
}

fn identity() -> Result<Outcome, String> {
    let opts = VerifyOptions::default();
    assert_eq!(opts.identity_systems, 100);
    Ok(from_checks(&identity_checks(&opts).map_err(|e| e.to_string())?))
}

fn optimality() -> Result<Outcome, String> {
    let opts = VerifyOptions::default();
    assert_eq!((opts.optimality_systems, opts.optimality_horizon), (25, 3));
    Ok(from_checks(&optimality_checks(&opts).map_err(|e| e.to_string())?))
}

fn analytical_vs_empirical() -> Result<Outcome, String> {
    let opts = VerifyOptions::default();
    assert_eq!((opts.cost_replications, opts.cost_steps), (200, 10_000));
    let mut checks = Vec::new();
    for (label, spec) in [("M=2", PlatoonSpec::two_trucks()), ("M=3", PlatoonSpec::three_trucks())] {
        let report = run_suite(Suite::Cost, &model(spec), &opts).map_err(|e| e.to_string())?;
        checks.extend(
            report
                .checks
                .into_iter()
                .filter(|c| c.name.starts_with("|empirical - analytical|"))
                .map(|c| Check { name: format!("{label} {}", c.name), ..c }),
        );
    }
    if checks.len() != 4 {
        return Err("missing Monte Carlo checks".into());
    }
    Ok(from_checks(&checks))
}

fn information() -> Result<Outcome, String> {
    let opts = VerifyOptions::default();
    assert_eq!(opts.information_steps, 10_000);
    Ok(from_checks(
        &information_checks(&model(PlatoonSpec::three_trucks()), &opts).map_err(|e| e.to_string())?,
    ))
}

fn orthogonality() -> Result<Outcome, String> {
    let opts = VerifyOptions::default();
    assert_eq!(opts.orthogonality_steps, 100_000);
    Ok(from_checks(&estimator_checks(&opts).map_err(|e| e.to_string())?))
}

fn ordering() -> Result<Outcome, String> {
    let cfg = Config::default().materialized();
    let model = chain_lqg_cli::commands::model(&cfg).map_err(|e| e.to_string())?;
    let plant = Plant::from_platoon(&model).map_err(|e| e.to_string())?;
    let mut arms = Vec::new();
    for mode in [Mode::Centralized, Mode::Three, Mode::Suboptimal] {
        let (c, _) = synthesize(&cfg, &model, mode).map_err(|e| e.to_string())?;
        arms.push((mode.label().to_string(), c));
    }
    let report = compare_controllers(&plant, &cfg.scenario(), &arms, 20, 2).map_err(|e| e.to_string())?;
    let reduction: Vec<f64> = report.energy_difference(1).iter().map(|d| -d).collect();
    let (cen, dec, sub) = (&report.controllers[0], &report.controllers[1], &report.controllers[2]);
    let cost_gap = 100.0 * (dec.mean_stage_cost - cen.mean_stage_cost).abs() / cen.mean_stage_cost;
    let saturations: Vec<usize> = report.controllers.iter().map(|c| c.saturations).collect();
    let passed = dec.energy.iter().zip(&sub.energy).all(|(d, s)| s > d)
        && reduction.iter().all(|r| (5.0..=25.0).contains(r))
        && cost_gap < 5.0
        && saturations.iter().all(|&s| s == 0);
    Ok(Outcome {
        passed,
        detail: format!(
            "energy reduction vs local {:.1?} % (band 5-25); decentralized vs centralized cost {cost_gap:.2} % (< 5); saturations {saturations:?}",
            reduction
        ),
    })
}

fn simulate_into(dir: &Path) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_chain-lqg"))
        .args(["simulate", "--seed", "2024", "--replications", "10", "--out"])
        .arg(dir)
        .env_remove("CHAIN_LQG_SEED")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&o.stderr).into_owned())
    }
}

fn determinism() -> Result<Outcome, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    simulate_into(&a)?;
    simulate_into(&b)?;
    let mut files: Vec<_> = std::fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name())
        .filter(|n| n.to_string_lossy().ends_with(".csv"))
        .collect();
    files.sort();
    let differing: Vec<String> = files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).ok() != std::fs::read(b.join(f)).ok())
        .map(|f| f.to_string_lossy().into_owned())
        .collect();
    Ok(Outcome {
        passed: files.len() == 4 && differing.is_empty(),
        detail: format!("{} CSV files compared, differing {differing:?}", files.len()),
    })
}

fn main() -> ExitCode {
    let results = [
        criterion(1, "DARE residual and stability", Some(Duration::from_secs(1)), dare),
        criterion(2, "completed-square identity", None, identity),
        criterion(3, "finite-horizon optimality vs policy search", Some(Duration::from_secs(10)), optimality),
        criterion(4, "analytical vs Monte Carlo cost", Some(Duration::from_secs(120)), analytical_vs_empirical),
        criterion(5, "information-structure invariance", None, information),
        criterion(6, "orthogonality and estimator recursions", None, orthogonality),
        criterion(7, "energy and cost ordering", None, ordering),
        criterion(8, "byte-identical CSVs", None, determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
