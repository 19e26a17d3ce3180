//! CSV traces, metrics tables and verification summaries.

use std::io::Write;

use chain_lqg::simulate::{MetricsReport, PlatoonFrame, SimulationTrace};
use chain_lqg::verify::SuiteReport;
use serde::Serialize;

use crate::error::CliError;

/// `t,ref_speed,v1,d12,v2,...,u1,...,stage_cost`.
pub fn trace_header(vehicles: usize) -> Vec<String> {
    let mut h = vec!["t".to_string(), "ref_speed".into(), "v1".into()];
    for i in 2..=vehicles {
        h.push(format!("d{}{}", i - 1, i));
        h.push(format!("v{i}"));
    }
    h.extend((1..=vehicles).map(|i| format!("u{i}")));
    h.push("stage_cost".into());
    h
}

/// Absolute speeds (m/s), gaps (m) and torques (N·m) per sample.
pub fn write_trace<W: Write>(out: W, trace: &SimulationTrace, frame: &PlatoonFrame) -> Result<(), csv::Error> {
    let m = frame.layout.vehicles();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(m))?;
    let mut row: Vec<f64> = Vec::with_capacity(2 * m + 3);
    for t in 0..trace.steps() {
        let x = &trace.x[t];
        row.clear();
        row.push(t as f64 * trace.sample_time);
        row.push(trace.reference[t]);
        row.push(frame.speed + x[frame.layout.speed[0]]);
        for i in 1..m {
            row.push(frame.gap + x[frame.layout.gap[i - 1]]);
            row.push(frame.speed + x[frame.layout.speed[i]]);
        }
        row.extend(trace.u[t].iter().map(|u| u * trace.input_scale));
        row.push(trace.stage_cost[t]);
        row.iter_mut().for_each(|v| *v += 0.0);
        w.serialize(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    controller: &'a str,
    vehicle: usize,
    energy: f64,
    energy_change_pct: f64,
    u_max: f64,
    u_min: f64,
    mean_speed: f64,
    mean_stage_cost: f64,
    cost_change_pct: f64,
    saturations: usize,
}

/// One row per controller and vehicle; changes are relative to the baseline.
pub fn write_metrics<W: Write>(out: W, report: &MetricsReport) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for (k, c) in report.controllers.iter().enumerate() {
        let de = report.energy_difference(k);
        for (i, change) in de.iter().enumerate() {
            w.serialize(MetricsRow {
                controller: &c.label,
                vehicle: i + 1,
                energy: c.energy[i],
                energy_change_pct: *change,
                u_max: c.u_max[i],
                u_min: c.u_min[i],
                mean_speed: c.mean_speed.get(i).copied().unwrap_or(f64::NAN),
                mean_stage_cost: c.mean_stage_cost,
                cost_change_pct: report.cost_difference(k),
                saturations: c.saturations,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn metrics_table(report: &MetricsReport) -> String {
    use std::fmt::Write as _;
    let base = &report.controllers[report.baseline].label;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} replications, changes relative to {base}",
        report.replications
    );
    let _ = writeln!(
        s,
        "{:<14} {:>7} {:>14} {:>9} {:>12} {:>12} {:>12} {:>9} {:>5}",
        "controller", "vehicle", "||u||2 [N·m]", "change %", "u_max [N·m]", "u_min [N·m]", "stage cost", "change %", "sat"
    );
    for (k, c) in report.controllers.iter().enumerate() {
        let de = report.energy_difference(k);
        for (i, change) in de.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<14} {:>7} {:>14.1} {:>9.2} {:>12.1} {:>12.1} {:>12.4} {:>9.2} {:>5}",
                c.label,
                i + 1,
                c.energy[i],
                change,
                c.u_max[i],
                c.u_min[i],
                c.mean_stage_cost,
                report.cost_difference(k),
                c.saturations
            );
        }
    }
    s
}

#[derive(Debug, Serialize)]
pub struct CheckJson {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

pub fn verify_json(reports: &[SuiteReport]) -> String {
    let checks: Vec<CheckJson> = reports
        .iter()
        .flat_map(|r| {
            r.checks.iter().map(|c| CheckJson {
                suite: r.suite.name(),
                name: c.name.clone(),
                measured: c.measured,
                threshold: c.threshold,
                passed: c.passed,
            })
        })
        .collect();
    let all = checks.iter().all(|c| c.passed);
    let mut s = serde_json::to_string_pretty(&serde_json::json!({ "passed": all, "checks": checks }))
        .expect("summary serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &std::path::Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}
