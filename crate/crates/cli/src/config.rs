//! JSON run configuration.
//!
//! Every field is optional on input; loading materializes defaults so the
//! effective configuration written next to the outputs reproduces the run.

use serde::{Deserialize, Serialize};

use chain_lqg::platoon::{
    AeroModel, CostWeights, FollowerWeights, ModelOptions, OperatingPoint, PlatoonSpec,
    VehicleParams, DEFAULT_FOLLOWER, DEFAULT_INPUT, DEFAULT_LEAD_SPEED, DEFAULT_NOISE_STD,
};
use chain_lqg::riccati::SolverOptions;
use chain_lqg::simulate::Scenario;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
/// Overrides the scenario seed when `--seed` is absent.
pub const SEED_ENV: &str = "CHAIN_LQG_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default = "default_vehicles")]
    pub vehicles: Vec<VehicleConfig>,
    #[serde(default)]
    pub aero: AeroConfig,
    #[serde(default)]
    pub operating_point: OperatingPointConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub flags: Flags,
    /// N·m per model input unit; weights on inputs are per unit squared.
    #[serde(default = "default_input_scale")]
    pub input_scale: f64,
}

fn default_vehicles() -> Vec<VehicleConfig> {
    [30000.0, 40000.0, 30000.0]
        .into_iter()
        .map(VehicleConfig::from_mass)
        .collect()
}

fn default_input_scale() -> f64 {
    1000.0
}

impl Default for Config {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            vehicles: default_vehicles(),
            aero: AeroConfig::default(),
            operating_point: OperatingPointConfig::default(),
            weights: WeightsConfig::default(),
            noise: NoiseConfig::default(),
            scenario: ScenarioConfig::default(),
            solver: SolverConfig::default(),
            flags: Flags::default(),
            input_scale: default_input_scale(),
        }
    }
}

/// Only `mass` is required; the rest derive from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleConfig {
    pub mass: f64,
    pub engine_gain: Option<f64>,
    pub drag: Option<f64>,
    pub brake_gain: Option<f64>,
    pub rolling: Option<f64>,
    pub gravity: Option<f64>,
    pub max_engine_torque: Option<f64>,
    pub max_brake_torque: Option<f64>,
}

impl VehicleConfig {
    pub fn from_mass(mass: f64) -> Self {
        Self::from_params(&VehicleParams::from_mass(mass))
    }

    fn from_params(p: &VehicleParams) -> Self {
        Self {
            mass: p.mass,
            engine_gain: Some(p.engine_gain),
            drag: Some(p.drag),
            brake_gain: Some(p.brake_gain),
            rolling: Some(p.rolling),
            gravity: Some(p.gravity),
            max_engine_torque: Some(p.max_engine_torque),
            max_brake_torque: Some(p.max_brake_torque),
        }
    }

    pub fn resolve(&self) -> VehicleParams {
        let d = VehicleParams::from_mass(self.mass);
        VehicleParams {
            mass: self.mass,
            engine_gain: self.engine_gain.unwrap_or(d.engine_gain),
            drag: self.drag.unwrap_or(d.drag),
            brake_gain: self.brake_gain.unwrap_or(d.brake_gain),
            rolling: self.rolling.unwrap_or(d.rolling),
            gravity: self.gravity.unwrap_or(d.gravity),
            max_engine_torque: self.max_engine_torque.unwrap_or(d.max_engine_torque),
            max_brake_torque: self.max_brake_torque.unwrap_or(d.max_brake_torque),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeroConfig {
    pub kappa1: f64,
    pub kappa2: f64,
    pub max_gap: f64,
}

impl Default for AeroConfig {
    fn default() -> Self {
        let a = AeroModel::default();
        Self { kappa1: a.kappa1, kappa2: a.kappa2, max_gap: a.max_gap }
    }
}

/// `gap` defaults to `time_gap * speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingPointConfig {
    pub speed: f64,
    pub gap: Option<f64>,
    pub sample_time: f64,
    pub time_gap: f64,
}

impl Default for OperatingPointConfig {
    fn default() -> Self {
        let op = OperatingPoint::default();
        Self {
            speed: op.speed,
            gap: None,
            sample_time: op.sample_time,
            time_gap: op.time_gap,
        }
    }
}

impl OperatingPointConfig {
    fn resolve(&self) -> OperatingPoint {
        OperatingPoint {
            speed: self.speed,
            gap: self.gap.unwrap_or(self.time_gap * self.speed),
            sample_time: self.sample_time,
            time_gap: self.time_gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FollowerWeightsConfig {
    pub time_gap: f64,
    pub relative_speed: f64,
    pub spacing: f64,
    pub speed: f64,
    pub input: f64,
}

impl Default for FollowerWeightsConfig {
    fn default() -> Self {
        DEFAULT_FOLLOWER.into()
    }
}

impl From<FollowerWeights> for FollowerWeightsConfig {
    fn from(f: FollowerWeights) -> Self {
        Self {
            time_gap: f.time_gap,
            relative_speed: f.relative_speed,
            spacing: f.spacing,
            speed: f.speed,
            input: f.input,
        }
    }
}

impl From<FollowerWeightsConfig> for FollowerWeights {
    fn from(f: FollowerWeightsConfig) -> Self {
        Self {
            time_gap: f.time_gap,
            relative_speed: f.relative_speed,
            spacing: f.spacing,
            speed: f.speed,
            input: f.input,
        }
    }
}

/// `followers` defaults to one default entry per follower vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightsConfig {
    pub lead_speed: f64,
    pub lead_input: f64,
    pub followers: Option<Vec<FollowerWeightsConfig>>,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            lead_speed: DEFAULT_LEAD_SPEED,
            lead_input: DEFAULT_INPUT,
            followers: None,
        }
    }
}

/// Process noise `W_i = std^2 I` on every block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub std: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { std: DEFAULT_NOISE_STD }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedEvent {
    /// Seconds from the start.
    pub time: f64,
    /// km/h.
    pub road_speed_kmh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub duration: f64,
    pub events: Vec<SpeedEvent>,
    pub noise_seed: u64,
    pub noise_scale: Vec<f64>,
    /// Initial deviation state; zero when absent.
    pub initial_state: Option<Vec<f64>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = Scenario::default();
        Self {
            duration: s.duration,
            events: s
                .events
                .iter()
                .map(|&(time, v)| SpeedEvent { time, road_speed_kmh: round_kmh(v * 3.6) })
                .collect(),
            noise_seed: s.noise_seed,
            noise_scale: s.noise_scale,
            initial_state: None,
        }
    }
}

fn round_kmh(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self { tol: s.tol, max_iter: s.max_iter }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Flags {
    /// Feed `x2 - eta2` into the `eta3` update.
    pub theorem2_literal: bool,
    /// Velocity diagonals without the unit Euler term.
    pub theta_literal: bool,
    /// Follower drag `k_d * Phi(d0)` instead of `k_d (1 - Phi(d0)/100)`.
    pub phi_literal: bool,
    pub integral_action: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            theorem2_literal: false,
            theta_literal: false,
            phi_literal: false,
            integral_action: true,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg.materialized())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fills every optional field with the value actually used.
    pub fn materialized(mut self) -> Self {
        for v in &mut self.vehicles {
            *v = VehicleConfig::from_params(&v.resolve());
        }
        if self.operating_point.gap.is_none() {
            self.operating_point.gap = Some(self.operating_point.resolve().gap);
        }
        if self.weights.followers.is_none() {
            let n = self.vehicles.len().saturating_sub(1);
            self.weights.followers = Some(vec![FollowerWeightsConfig::default(); n]);
        }
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        if let Some(seed) = seed {
            self.scenario.noise_seed = seed;
        }
        self
    }

    pub fn platoon_spec(&self) -> PlatoonSpec {
        let followers = self
            .weights
            .followers
            .clone()
            .unwrap_or_else(|| vec![FollowerWeightsConfig::default(); self.vehicles.len().saturating_sub(1)]);
        PlatoonSpec {
            vehicles: self.vehicles.iter().map(VehicleConfig::resolve).collect(),
            aero: AeroModel {
                kappa1: self.aero.kappa1,
                kappa2: self.aero.kappa2,
                max_gap: self.aero.max_gap,
            },
            operating_point: self.operating_point.resolve(),
            weights: CostWeights {
                lead_speed: self.weights.lead_speed,
                lead_input: self.weights.lead_input,
                followers: followers.into_iter().map(Into::into).collect(),
            },
            noise_std: self.noise.std,
            input_scale: self.input_scale,
            options: ModelOptions {
                integral_action: self.flags.integral_action,
                theta_literal: self.flags.theta_literal,
                phi_literal: self.flags.phi_literal,
            },
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { tol: self.solver.tol, max_iter: self.solver.max_iter }
    }

    pub fn scenario(&self) -> Scenario {
        Scenario {
            duration: self.scenario.duration,
            events: self
                .scenario
                .events
                .iter()
                .map(|e| (e.time, e.road_speed_kmh / 3.6))
                .collect(),
            noise_seed: self.scenario.noise_seed,
            noise_scale: self.scenario.noise_scale.clone(),
            initial_state: self
                .scenario
                .initial_state
                .as_ref()
                .map(|v| nalgebra::DVector::from_column_slice(v)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_materializes_defaults() {
        let cfg = Config::from_json(r#"{"schema_version": 1}"#).unwrap();
        assert_eq!(cfg.vehicles.len(), 3);
        assert_eq!(cfg.weights.followers.as_ref().unwrap().len(), 2);
        assert_eq!(cfg.operating_point.gap, Some(19.44));
        assert_eq!(cfg.platoon_spec(), PlatoonSpec::three_trucks());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = Config::from_json(r#"{"schema_version": 1, "vehicles": [{"mass": 20000}, {"mass": 25000}]}"#).unwrap();
        let again = Config::from_json(&cfg.to_json()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(again.weights.followers.unwrap().len(), 1);
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        assert!(matches!(
            Config::from_json(r#"{"schema_version": 1, "bogus": 3}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            Config::from_json(r#"{"schema_version": 1, "flags": {"theorem2": true}}"#),
            Err(CliError::Config(_))
        ));
        assert!(matches!(Config::from_json(r#"{"schema_version": 2}"#), Err(CliError::Config(_))));
        assert!(matches!(Config::from_json(r#"{}"#), Err(CliError::Config(_))));
    }

    #[test]
    fn default_scenario_in_kmh() {
        let cfg = Config::default();
        let speeds: Vec<f64> = cfg.scenario.events.iter().map(|e| e.road_speed_kmh).collect();
        assert_eq!(speeds, vec![60.0, 70.0, 80.0]);
        let s = cfg.scenario();
        assert!((s.events[0].1 - 60.0 / 3.6).abs() < 1e-12);
    }

    #[test]
    fn seed_override() {
        let cfg = Config::default().with_seed(Some(42));
        assert_eq!(cfg.scenario().noise_seed, 42);
        assert_eq!(Config::default().with_seed(None).scenario.noise_seed, 0);
    }
}
