//! Subcommand implementations. Each returns the exit code on success paths
//! and a [`CliError`] otherwise.

use std::path::{Path, PathBuf};

use chain_lqg::platoon::{build_platoon, PlatoonModel};
use chain_lqg::simulate::{compare_controllers, run_replication, Plant};
use chain_lqg::synthesis::{
    synth_centralized, synth_suboptimal_local, synth_three_vehicle, synth_two_vehicle, AnyController,
    OptimalCostReport,
};
use chain_lqg::verify::{run_suite, Suite, SuiteReport, VerifyOptions};

use crate::config::Config;
use crate::controller_file::{ControllerFile, Mode};
use crate::error::{exit, CliError};
use crate::output::{metrics_table, verify_json, write_file, write_metrics, write_trace};

pub const EFFECTIVE_CONFIG: &str = "config.json";
pub const METRICS: &str = "metrics.csv";

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Config, CliError> {
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::default().materialized(),
    };
    Ok(cfg.with_seed(seed))
}

pub fn model(cfg: &Config) -> Result<PlatoonModel, CliError> {
    Ok(build_platoon(&cfg.platoon_spec())?)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn echo_config(cfg: &Config, dir: &Path) -> Result<(), CliError> {
    write_file(&dir.join(EFFECTIVE_CONFIG), cfg.to_json().as_bytes())
}

pub fn synthesize(
    cfg: &Config,
    model: &PlatoonModel,
    mode: Mode,
) -> Result<(AnyController, Option<OptimalCostReport>), CliError> {
    let sys = &model.system;
    let opts = cfg.solver_options();
    Ok(match mode {
        Mode::Two => {
            let (c, r) = synth_two_vehicle(sys, &opts)?;
            (AnyController::Distributed(c), Some(r))
        }
        Mode::Three => {
            let (c, r) = synth_three_vehicle(sys, &opts, cfg.flags.theorem2_literal)?;
            (AnyController::Distributed(c), Some(r))
        }
        Mode::Centralized => {
            let (c, r) = synth_centralized(sys, &opts)?;
            (AnyController::Static(c), Some(r))
        }
        Mode::Suboptimal => (
            AnyController::Static(synth_suboptimal_local(sys, &model.local_costs, &opts)?),
            None,
        ),
    })
}

/// Decentralized mode matching the platoon length.
pub fn decentralized_mode(vehicles: usize) -> Mode {
    if vehicles == 2 {
        Mode::Two
    } else {
        Mode::Three
    }
}

pub fn controller_path(dir: &Path, mode: Mode) -> PathBuf {
    dir.join(format!("controller_{}.json", mode.name()))
}

pub fn cmd_synth(cfg: &Config, mode: Mode, out: &Path) -> Result<u8, CliError> {
    let model = model(cfg)?;
    let (ctrl, report) = synthesize(cfg, &model, mode)?;
    create_dir(out)?;
    let path = controller_path(out, mode);
    write_file(&path, ControllerFile::new(mode, &ctrl, report.as_ref()).to_json().as_bytes())?;
    echo_config(cfg, out)?;
    match &report {
        Some(r) => {
            for (name, v) in &r.trace_terms {
                println!("{name} = {v:.9e}");
            }
            println!("cost = {:.9e}", r.analytical_cost);
            for s in &r.riccati {
                println!(
                    "riccati {} residual={:.3e} iterations={} radius={:.6}",
                    s.label, s.residual, s.iterations, s.closed_loop_radius
                );
            }
        }
        None => println!("no closed-form cost for mode {}", mode.name()),
    }
    println!("wrote {}", path.display());
    Ok(exit::OK)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub controllers: Vec<PathBuf>,
    pub replications: usize,
    /// Label of the baseline controller; defaults to the suboptimal one when
    /// present, else the first.
    pub baseline: Option<String>,
}

fn unique_label(labels: &[String], base: &str) -> String {
    if !labels.iter().any(|l| l == base) {
        return base.into();
    }
    (2..).map(|k| format!("{base}{k}")).find(|l| !labels.contains(l)).expect("unbounded")
}

pub fn cmd_simulate(cfg: &Config, args: &SimulateArgs, out: &Path) -> Result<u8, CliError> {
    if args.replications == 0 {
        return Err(CliError::Config("replications must be positive".into()));
    }
    let model = model(cfg)?;
    let plant = Plant::from_platoon(&model)?;
    let frame = plant.platoon.clone().expect("platoon plant");
    let scenario = cfg.scenario();
    scenario.validate(model.system.subsystems())?;

    let mut labels: Vec<String> = Vec::new();
    let mut ctrls: Vec<(String, AnyController)> = Vec::new();
    if args.controllers.is_empty() {
        let vehicles = model.layout.vehicles();
        for mode in [Mode::Centralized, decentralized_mode(vehicles), Mode::Suboptimal] {
            let (c, _) = synthesize(cfg, &model, mode)?;
            let label = unique_label(&labels, mode.label());
            labels.push(label.clone());
            ctrls.push((label, c));
        }
    } else {
        for path in &args.controllers {
            let file = ControllerFile::load(path)?;
            let c = file.controller_for(&model.system)?;
            let label = unique_label(&labels, file.mode.label());
            labels.push(label.clone());
            ctrls.push((label, c));
        }
    }
    let baseline = match &args.baseline {
        Some(b) => labels
            .iter()
            .position(|l| l == b)
            .ok_or_else(|| CliError::Config(format!("baseline {b} is not among {labels:?}")))?,
        None => labels.iter().position(|l| l == "suboptimal").unwrap_or(0),
    };

    create_dir(out)?;
    echo_config(cfg, out)?;
    for (label, ctrl) in &ctrls {
        let mut c = ctrl.clone();
        let trace = run_replication(&plant, &mut c, &scenario, 0).map_err(|e| named(label, e.into()))?;
        let path = out.join(format!("trace_{label}.csv"));
        let mut bytes = Vec::new();
        write_trace(&mut bytes, &trace, &frame).map_err(|e| CliError::io(&path, e))?;
        write_file(&path, &bytes)?;
    }
    let report = compare_controllers(&plant, &scenario, &ctrls, args.replications, baseline).map_err(|e| {
        let e: CliError = e.into();
        e
    })?;
    let path = out.join(METRICS);
    let mut bytes = Vec::new();
    write_metrics(&mut bytes, &report).map_err(|e| CliError::io(&path, e))?;
    write_file(&path, &bytes)?;
    print!("{}", metrics_table(&report));
    Ok(exit::OK)
}

fn named(label: &str, e: CliError) -> CliError {
    match e {
        CliError::Numerical(m) => CliError::Numerical(format!("controller {label}: {m}")),
        other => other,
    }
}

pub fn verify_options(cfg: &Config) -> VerifyOptions {
    VerifyOptions {
        seed: cfg.scenario.noise_seed,
        solver: cfg.solver_options(),
        theorem2_literal: cfg.flags.theorem2_literal,
        ..VerifyOptions::default()
    }
}

pub fn run_verify(cfg: &Config, suites: &[Suite]) -> Result<Vec<SuiteReport>, CliError> {
    let model = model(cfg)?;
    let opts = verify_options(cfg);
    suites
        .iter()
        .map(|&s| run_suite(s, &model, &opts).map_err(CliError::from))
        .collect()
}

pub fn cmd_verify(cfg: &Config, suites: &[Suite], out: Option<&Path>) -> Result<u8, CliError> {
    let reports = run_verify(cfg, suites)?;
    report_verify(cfg, &reports, out)
}

/// Prints one line per check, writes the JSON summary and maps failures to
/// [`CliError::Verification`].
pub fn report_verify(cfg: &Config, reports: &[SuiteReport], out: Option<&Path>) -> Result<u8, CliError> {
    for r in reports {
        for c in &r.checks {
            println!("{} {c}", r.suite.name());
        }
    }
    if let Some(dir) = out {
        create_dir(dir)?;
        echo_config(cfg, dir)?;
        write_file(&dir.join("verify.json"), verify_json(reports).as_bytes())?;
    }
    let failures: Vec<String> = reports
        .iter()
        .flat_map(|r| r.failures().map(move |c| format!("{}/{} measured={:.6e}", r.suite.name(), c.name, c.measured)))
        .collect();
    if failures.is_empty() {
        println!("all {} suites passed", reports.len());
        Ok(exit::OK)
    } else {
        Err(CliError::Verification(failures.join("; ")))
    }
}

pub fn parse_suites(s: &str) -> Result<Vec<Suite>, CliError> {
    if s == "all" {
        return Ok(Suite::ALL.to_vec());
    }
    s.split(',')
        .map(|name| {
            Suite::parse(name.trim()).ok_or_else(|| CliError::Config(format!("unknown suite {name}")))
        })
        .collect()
}
