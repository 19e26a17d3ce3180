//! Linearized, forward-Euler platoon model and its quadratic weights.
//!
//! State ordering is `[v1, d12, v2, d23, v3, ...]`, grouped per vehicle as
//! `x1 = v1` and `xi = [d(i-1)i, vi]`. With integral action the lead block is
//! `x1 = [q, v1]`. Inputs are engine torque deviations expressed in
//! [`PlatoonModel::input_scale`] N·m per model unit (kN·m by default), so the
//! input weights are per (kN·m)^2.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::blocks::Partition;
use crate::chain::ChainSystem;
use crate::error::ModelError;
use crate::synthesis::LocalCosts;
use crate::linalg::{block_diagonal, min_symmetric_eigenvalue};

const AIR_DENSITY: f64 = 1.29;
const DRAG_COEFFICIENT: f64 = 0.6;
const FRONTAL_AREA: f64 = 10.0;
const WHEEL_RADIUS: f64 = 0.5;
const ROLLING_RESISTANCE: f64 = 0.007;
const GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// Accelerated mass, kg.
    pub mass: f64,
    /// Acceleration per unit engine torque, m/s^2 per N·m.
    pub engine_gain: f64,
    /// Mass-normalized air-drag coefficient, 1/m.
    pub drag: f64,
    /// Brake, rolling-resistance and gravity coefficients, m/s^2 scale.
    pub brake_gain: f64,
    pub rolling: f64,
    pub gravity: f64,
    /// N·m.
    pub max_engine_torque: f64,
    /// N·m.
    pub max_brake_torque: f64,
}

impl VehicleParams {
    /// Coefficients derived from the mass: engine torque through a 0.5 m wheel,
    /// drag from `rho = 1.29`, `c_D = 0.6`, `A_f = 10 m^2`.
    pub fn from_mass(mass: f64) -> Self {
        Self {
            mass,
            engine_gain: 1.0 / (mass * WHEEL_RADIUS),
            drag: 0.5 * AIR_DENSITY * DRAG_COEFFICIENT * FRONTAL_AREA / mass,
            brake_gain: 1.0 / (mass * WHEEL_RADIUS),
            rolling: ROLLING_RESISTANCE * GRAVITY,
            gravity: GRAVITY,
            max_engine_torque: 2500.0,
            max_brake_torque: 60000.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool); 5] = [
            ("mass", self.mass, self.mass > 0.0),
            ("engine_gain", self.engine_gain, self.engine_gain > 0.0),
            ("drag", self.drag, self.drag >= 0.0),
            ("max_engine_torque", self.max_engine_torque, self.max_engine_torque > 0.0),
            ("max_brake_torque", self.max_brake_torque, self.max_brake_torque > 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

/// Affine air-drag reduction `Phi(d) = kappa1 d + kappa2` in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroModel {
    /// %/m.
    pub kappa1: f64,
    /// %.
    pub kappa2: f64,
    /// Upper end of the valid spacing range, m (lower end is 0).
    pub max_gap: f64,
}

impl Default for AeroModel {
    fn default() -> Self {
        Self {
            kappa1: -0.47,
            kappa2: 45.0,
            max_gap: 65.0,
        }
    }
}

/// A drag-reduction value and whether the spacing had to be clamped into range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DragReduction {
    pub percent: f64,
    pub out_of_range: bool,
}

impl AeroModel {
    pub fn phi(&self, gap: f64) -> DragReduction {
        let d = gap.clamp(0.0, self.max_gap);
        let percent = (self.kappa1 * d + self.kappa2).clamp(0.0, 100.0);
        DragReduction {
            percent,
            out_of_range: d != gap,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Reference speed, m/s.
    pub speed: f64,
    /// Reference spacing, m.
    pub gap: f64,
    /// Sample time, s.
    pub sample_time: f64,
    /// Time gap of the spacing policy, s.
    pub time_gap: f64,
}

impl OperatingPoint {
    /// Spacing set by the time-gap policy `d0 = tau v0`.
    pub fn with_time_gap(speed: f64, time_gap: f64, sample_time: f64) -> Self {
        Self {
            speed,
            gap: time_gap * speed,
            sample_time,
            time_gap,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let checks: [(&'static str, f64, bool); 4] = [
            ("speed", self.speed, self.speed > 0.0),
            ("gap", self.gap, self.gap >= 0.0),
            ("sample_time", self.sample_time, self.sample_time > 0.0),
            ("time_gap", self.time_gap, self.time_gap >= 0.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }
}

impl Default for OperatingPoint {
    fn default() -> Self {
        Self::with_time_gap(19.44, 1.0, 0.1)
    }
}

/// Weights of one follower's terms in the platoon cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerWeights {
    pub time_gap: f64,
    pub relative_speed: f64,
    pub spacing: f64,
    pub speed: f64,
    pub input: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub lead_speed: f64,
    pub lead_input: f64,
    /// One entry per follower, vehicles 2..=M.
    pub followers: Vec<FollowerWeights>,
}

impl CostWeights {
    pub fn uniform(vehicles: usize, lead_speed: f64, lead_input: f64, follower: FollowerWeights) -> Self {
        Self {
            lead_speed,
            lead_input,
            followers: vec![follower; vehicles.saturating_sub(1)],
        }
    }

    pub fn vehicles(&self) -> usize {
        self.followers.len() + 1
    }

    fn validate(&self) -> Result<(), ModelError> {
        let mut all = vec![("lead_speed", self.lead_speed), ("lead_input", self.lead_input)];
        for f in &self.followers {
            all.extend([
                ("time_gap", f.time_gap),
                ("relative_speed", f.relative_speed),
                ("spacing", f.spacing),
                ("speed", f.speed),
                ("input", f.input),
            ]);
        }
        for (name, value) in all {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ModelError::InvalidParameter { name, value });
            }
        }
        Ok(())
    }

    /// The 3x3 weight on `(v(i-1), d(i-1)i, vi)` for follower `i` (2-based).
    pub fn follower_block(&self, vehicle: usize, time_gap: f64) -> DMatrix<f64> {
        let f = &self.followers[vehicle - 2];
        let tau = time_gap;
        DMatrix::from_row_slice(
            3,
            3,
            &[
                f.relative_speed,
                0.0,
                -f.relative_speed,
                0.0,
                f.spacing + f.time_gap,
                -tau * f.time_gap,
                -f.relative_speed,
                -tau * f.time_gap,
                tau * tau * f.time_gap + f.relative_speed + f.speed,
            ],
        )
    }
}

/// Switches between readings of the printed discretization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ModelOptions {
    /// Adds the lead-vehicle integral state `x1 = [q, v1]`.
    pub integral_action: bool,
    /// Use the velocity diagonals without the unit Euler term.
    pub theta_literal: bool,
    /// Multiply `k_d` by `Phi(d0)` in the follower diagonal instead of using
    /// the reduced drag `k_d (1 - Phi(d0)/100)`.
    pub phi_literal: bool,
}

/// Positions of the physical quantities in the state vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlatoonLayout {
    /// Index of `vi` for each vehicle.
    pub speed: Vec<usize>,
    /// Index of `d(i-1)i` for each follower (vehicles 2..=M).
    pub gap: Vec<usize>,
    pub integral: Option<usize>,
}

impl PlatoonLayout {
    fn new(vehicles: usize, integral_action: bool) -> Self {
        let lead = usize::from(integral_action);
        let speed = (0..vehicles)
            .map(|i| if i == 0 { lead } else { lead + 2 * i })
            .collect();
        let gap = (1..vehicles).map(|i| lead + 2 * i - 1).collect();
        Self {
            speed,
            gap,
            integral: integral_action.then_some(0),
        }
    }

    pub fn vehicles(&self) -> usize {
        self.speed.len()
    }

    pub fn partition(&self) -> Partition {
        let mut sizes = vec![if self.integral.is_some() { 2 } else { 1 }];
        sizes.extend(core::iter::repeat_n(2, self.vehicles() - 1));
        Partition::new(sizes).expect("nonzero blocks")
    }

    pub fn states(&self) -> usize {
        self.partition().total()
    }
}

/// Everything needed to assemble a platoon model.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonSpec {
    pub vehicles: Vec<VehicleParams>,
    pub aero: AeroModel,
    pub operating_point: OperatingPoint,
    pub weights: CostWeights,
    /// Per-state noise standard deviation; `W_i = sigma^2 I`.
    pub noise_std: f64,
    /// N·m per model input unit.
    pub input_scale: f64,
    pub options: ModelOptions,
}

impl PlatoonSpec {
    /// Defaults for a platoon with the given masses.
    pub fn from_masses(masses: &[f64]) -> Self {
        let m = masses.len();
        Self {
            vehicles: masses.iter().map(|&mass| VehicleParams::from_mass(mass)).collect(),
            aero: AeroModel::default(),
            operating_point: OperatingPoint::default(),
            weights: CostWeights::uniform(m, DEFAULT_LEAD_SPEED, DEFAULT_INPUT, DEFAULT_FOLLOWER),
            noise_std: DEFAULT_NOISE_STD,
            input_scale: 1000.0,
            options: ModelOptions {
                integral_action: true,
                ..ModelOptions::default()
            },
        }
    }

    /// The three-truck configuration with masses 30, 40 and 30 t.
    pub fn three_trucks() -> Self {
        Self::from_masses(&[30000.0, 40000.0, 30000.0])
    }

    pub fn two_trucks() -> Self {
        Self::from_masses(&[30000.0, 40000.0])
    }
}

pub const DEFAULT_LEAD_SPEED: f64 = 1.0;
/// Per (kN·m)², since inputs are scaled by `input_scale = 1000`.
pub const DEFAULT_INPUT: f64 = 3.0;
pub const DEFAULT_FOLLOWER: FollowerWeights = FollowerWeights {
    time_gap: 2.0,
    relative_speed: 1.0,
    spacing: 0.01,
    speed: 0.01,
    input: DEFAULT_INPUT,
};
pub const DEFAULT_NOISE_STD: f64 = 0.005;

/// Linearized platoon with its cost, layout and physical scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonModel {
    pub system: ChainSystem,
    pub layout: PlatoonLayout,
    pub operating_point: OperatingPoint,
    pub input_scale: f64,
    /// `(min, max)` torque deviation per vehicle, N·m.
    pub torque_limits: Vec<(f64, f64)>,
    /// Each vehicle's own share of the stage cost.
    pub local_costs: LocalCosts,
}

/// Diagonal coefficients of one vehicle's velocity row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityRow {
    /// Coefficient of the vehicle's own speed.
    pub theta: f64,
    /// Coefficient of the spacing to the preceding vehicle (followers only).
    pub delta: f64,
}

/// Velocity-row coefficients for vehicle `index` (0-based).
pub fn velocity_row(
    vehicle: &VehicleParams,
    index: usize,
    aero: &AeroModel,
    op: &OperatingPoint,
    opts: &ModelOptions,
) -> VelocityRow {
    let ts = op.sample_time;
    let v0 = op.speed;
    let unit = if opts.theta_literal { 0.0 } else { 1.0 };
    if index == 0 {
        let theta = if opts.theta_literal {
            ts * (1.0 - 2.0 * vehicle.drag * v0)
        } else {
            1.0 - ts * 2.0 * vehicle.drag * v0
        };
        return VelocityRow { theta, delta: 0.0 };
    }
    let phi = aero.phi(op.gap).percent;
    let effective_drag = if opts.phi_literal {
        vehicle.drag * phi
    } else {
        vehicle.drag * (1.0 - phi / 100.0)
    };
    VelocityRow {
        theta: unit - ts * 2.0 * effective_drag * v0,
        delta: -ts * aero.kappa1 * vehicle.drag * v0 * v0,
    }
}

/// Dynamics `(A, B)` and state layout of the platoon.
pub fn build_dynamics(
    vehicles: &[VehicleParams],
    aero: &AeroModel,
    op: &OperatingPoint,
    opts: &ModelOptions,
    input_scale: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>, PlatoonLayout), ModelError> {
    let m = vehicles.len();
    if m < 2 {
        return Err(ModelError::TooFewSubsystems(m));
    }
    op.validate()?;
    for v in vehicles {
        v.validate()?;
    }
    if !(input_scale > 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "input_scale",
            value: input_scale,
        });
    }
    let layout = PlatoonLayout::new(m, opts.integral_action);
    let n = layout.states();
    let ts = op.sample_time;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for (i, vehicle) in vehicles.iter().enumerate() {
        let row = velocity_row(vehicle, i, aero, op, opts);
        let v = layout.speed[i];
        b[(v, i)] = ts * vehicle.engine_gain * input_scale;
        if i == 0 {
            a[(v, v)] = row.theta;
            if let Some(q) = layout.integral {
                // Lead block [[0, -1], [0, 1]] as used for the reference scenario.
                a[(q, v)] = -1.0;
                a[(v, v)] = 1.0;
            }
            continue;
        }
        let d = layout.gap[i - 1];
        let prev = layout.speed[i - 1];
        a[(d, d)] = 1.0;
        a[(d, prev)] = ts;
        a[(d, v)] = -ts;
        a[(v, d)] = row.delta;
        a[(v, v)] = row.theta;
    }
    Ok((a, b, layout))
}

/// Assembles `Q` (summing overlapping follower blocks) and `R`.
pub fn build_cost(
    weights: &CostWeights,
    op: &OperatingPoint,
    layout: &PlatoonLayout,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
    weights.validate()?;
    let m = layout.vehicles();
    if weights.vehicles() != m {
        return Err(ModelError::Structure(alloc::format!(
            "weights for {} vehicles, model has {m}",
            weights.vehicles()
        )));
    }
    let n = layout.states();
    let mut q = DMatrix::zeros(n, n);
    q[(layout.speed[0], layout.speed[0])] += weights.lead_speed;
    for i in 2..=m {
        let block = weights.follower_block(i, op.time_gap);
        let idx = [layout.speed[i - 2], layout.gap[i - 2], layout.speed[i - 1]];
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                q[(gr, gc)] += block[(r, c)];
            }
        }
    }
    let mut inputs = vec![weights.lead_input];
    inputs.extend(weights.followers.iter().map(|f| f.input));
    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(inputs));

    let qmin = min_symmetric_eigenvalue(&q);
    if qmin < -1e-10 {
        return Err(ModelError::IndefiniteWeights { matrix: "Q", eigenvalue: qmin });
    }
    let rmin = min_symmetric_eigenvalue(&r);
    if rmin <= 0.0 {
        return Err(ModelError::IndefiniteWeights { matrix: "R", eigenvalue: rmin });
    }
    Ok((q, r))
}

/// Splits the stage cost by vehicle: the lead's weight on `x1` and each
/// follower's weight on `[x(i-1); xi]`.
pub fn build_local_costs(
    weights: &CostWeights,
    op: &OperatingPoint,
    layout: &PlatoonLayout,
) -> Result<LocalCosts, ModelError> {
    let part = layout.partition();
    let n1 = part.size(1)?;
    let mut lead = DMatrix::zeros(n1, n1);
    lead[(layout.speed[0], layout.speed[0])] = weights.lead_speed;
    let mut followers = Vec::new();
    for i in 2..=layout.vehicles() {
        let base = part.offset(i - 1)?;
        let n = part.size(i - 1)? + part.size(i)?;
        let block = weights.follower_block(i, op.time_gap);
        let idx = [layout.speed[i - 2], layout.gap[i - 2], layout.speed[i - 1]];
        let mut q = DMatrix::zeros(n, n);
        for (r, &gr) in idx.iter().enumerate() {
            for (c, &gc) in idx.iter().enumerate() {
                q[(gr - base, gc - base)] = block[(r, c)];
            }
        }
        followers.push(q);
    }
    Ok(LocalCosts { lead, followers })
}

pub fn build_platoon(spec: &PlatoonSpec) -> Result<PlatoonModel, ModelError> {
    let (a, b, layout) = build_dynamics(
        &spec.vehicles,
        &spec.aero,
        &spec.operating_point,
        &spec.options,
        spec.input_scale,
    )?;
    let (q, r) = build_cost(&spec.weights, &spec.operating_point, &layout)?;
    if !(spec.noise_std >= 0.0) {
        return Err(ModelError::InvalidParameter {
            name: "noise_std",
            value: spec.noise_std,
        });
    }
    let partition = layout.partition();
    let var = spec.noise_std * spec.noise_std;
    let w_blocks: Vec<DMatrix<f64>> = partition
        .sizes()
        .iter()
        .map(|&s| DMatrix::identity(s, s) * var)
        .collect();
    let w = block_diagonal(&w_blocks);
    let m = spec.vehicles.len();
    let system = ChainSystem::new(a, b, q, r, w, partition, Partition::scalar(m)?)?;
    let local_costs = build_local_costs(&spec.weights, &spec.operating_point, &layout)?;
    Ok(PlatoonModel {
        system,
        layout,
        operating_point: spec.operating_point,
        input_scale: spec.input_scale,
        torque_limits: spec
            .vehicles
            .iter()
            .map(|v| (-v.max_brake_torque, v.max_engine_torque))
            .collect(),
        local_costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn spec(masses: &[f64], integral: bool) -> PlatoonSpec {
        let mut s = PlatoonSpec::from_masses(masses);
        s.options.integral_action = integral;
        s
    }

    #[test]
    fn phi_values() {
        let aero = AeroModel::default();
        assert_eq!(aero.phi(0.0).percent, 45.0);
        assert_relative_eq!(aero.phi(20.0).percent, 35.6, epsilon = 1e-12);
        assert_relative_eq!(aero.phi(65.0).percent, 14.45, epsilon = 1e-12);
        let out = aero.phi(80.0);
        assert!(out.out_of_range);
        assert_relative_eq!(out.percent, 14.45, epsilon = 1e-12);
        assert!(aero.phi(-1.0).out_of_range);
        assert_eq!(aero.phi(-1.0).percent, 45.0);
        let steep = AeroModel { kappa1: -2.0, kappa2: 45.0, max_gap: 65.0 };
        assert_eq!(steep.phi(60.0).percent, 0.0);
    }

    #[test]
    fn coupling_coefficient_by_substitution() {
        // delta = -Ts kappa1 kd v0^2 = 0.1 * 0.47 * 2.5e-4 * 19.44^2
        let mut v = VehicleParams::from_mass(30000.0);
        v.drag = 2.5e-4;
        let op = OperatingPoint::default();
        let row = velocity_row(&v, 1, &AeroModel::default(), &op, &ModelOptions::default());
        assert_relative_eq!(row.delta, 4.440484800e-3, epsilon = 1e-12);
    }

    #[test]
    fn zero_drag_has_no_aero_coupling() {
        let mut s = spec(&[30000.0, 40000.0], false);
        for v in &mut s.vehicles {
            v.drag = 0.0;
        }
        let model = build_platoon(&s).unwrap();
        let a = model.system.a();
        assert_eq!(a.block(2, 2).unwrap()[(1, 0)], 0.0);
        // the spacing integrator row is the only coupling
        let a21 = a.block(2, 1).unwrap();
        assert_eq!(a21, DMatrix::from_column_slice(2, 1, &[0.1, 0.0]));
        assert_eq!(a.block(1, 1).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn reference_gap() {
        let s = PlatoonSpec::three_trucks();
        assert_relative_eq!(s.operating_point.gap, 19.44, epsilon = 1e-12);
    }

    #[test]
    fn integral_variant_blocks() {
        let model = build_platoon(&PlatoonSpec::three_trucks()).unwrap();
        let a = model.system.a();
        assert_eq!(model.system.state_partition().sizes(), &[2, 2, 2]);
        assert_eq!(a.block(1, 1).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.0, 1.0]));
        let ts = model.operating_point.sample_time;
        assert_eq!(a.block(3, 2).unwrap(), DMatrix::from_row_slice(2, 2, &[0.0, ts, 0.0, 0.0]));
        let a22 = a.block(2, 2).unwrap();
        assert_eq!((a22[(0, 0)], a22[(0, 1)]), (1.0, -ts));
        assert!(a22[(1, 0)] > 0.0 && a22[(1, 1)] < 1.0);
        let b1 = model.system.b().block(1, 1).unwrap();
        assert_eq!(b1[(0, 0)], 0.0);
        assert!(b1[(1, 0)] > 0.0);
    }

    #[test]
    fn sparsity() {
        for integral in [false, true] {
            for m in [2usize, 3, 5] {
                let masses: Vec<f64> = (0..m).map(|i| 30000.0 + 5000.0 * i as f64).collect();
                let model = build_platoon(&spec(&masses, integral)).unwrap();
                assert!(model.system.a().is_block_lower_bidiagonal());
                assert!(model.system.b().is_block_diagonal());
                assert!(model.system.w().is_block_diagonal());
            }
        }
    }

    #[test]
    fn theta_readings() {
        let v = VehicleParams::from_mass(30000.0);
        let op = OperatingPoint::default();
        let aero = AeroModel::default();
        let restored = velocity_row(&v, 0, &aero, &op, &ModelOptions::default());
        let literal = velocity_row(
            &v,
            0,
            &aero,
            &op,
            &ModelOptions { theta_literal: true, ..ModelOptions::default() },
        );
        assert_relative_eq!(restored.theta, 1.0 - 0.2 * v.drag * 19.44, epsilon = 1e-15);
        assert_relative_eq!(literal.theta, 0.1 * (1.0 - 2.0 * v.drag * 19.44), epsilon = 1e-15);
        let reduced = velocity_row(&v, 1, &aero, &op, &ModelOptions::default());
        let phi = aero.phi(op.gap).percent;
        assert_relative_eq!(
            reduced.theta,
            1.0 - 0.2 * v.drag * (1.0 - phi / 100.0) * 19.44,
            epsilon = 1e-15
        );
        let lit = velocity_row(&v, 1, &aero, &op, &ModelOptions { phi_literal: true, ..ModelOptions::default() });
        assert_relative_eq!(lit.theta, 1.0 - 0.2 * v.drag * phi * 19.44, epsilon = 1e-15);
    }

    #[test]
    fn follower_block_by_substitution() {
        let w = CostWeights::uniform(
            2,
            0.0,
            1.0,
            FollowerWeights { time_gap: 1.0, relative_speed: 1.0, spacing: 0.0, speed: 0.0, input: 1.0 },
        );
        let q2 = w.follower_block(2, 1.0);
        let expect = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, -1.0, 0.0, 1.0, -1.0, -1.0, -1.0, 2.0]);
        assert_eq!(q2, expect);
        // outer products of (v1 - v2) and (d - tau v2)
        let dv = DVector::from_vec(vec![1.0, 0.0, -1.0]);
        let gap = DVector::from_vec(vec![0.0, 1.0, -1.0]);
        assert_eq!(&dv * dv.transpose() + &gap * gap.transpose(), expect);
    }

    #[test]
    fn degenerate_and_identity_weights() {
        let layout = PlatoonLayout::new(3, false);
        let zero = FollowerWeights { time_gap: 0.0, relative_speed: 0.0, spacing: 0.0, speed: 0.0, input: 1.0 };
        let w = CostWeights::uniform(3, 1.0, 1.0, zero);
        let (q, r) = build_cost(&w, &OperatingPoint::default(), &layout).unwrap();
        assert_eq!(q.iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(q[(0, 0)], 1.0);
        assert_eq!(r, DMatrix::identity(3, 3));
    }

    #[test]
    fn negative_weight_rejected() {
        let layout = PlatoonLayout::new(2, false);
        let mut w = CostWeights::uniform(2, 1.0, 1.0, DEFAULT_FOLLOWER);
        w.followers[0].spacing = -1.0;
        assert!(matches!(
            build_cost(&w, &OperatingPoint::default(), &layout),
            Err(ModelError::InvalidParameter { name: "spacing", .. })
        ));
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(
            build_platoon(&spec(&[30000.0], false)),
            Err(ModelError::TooFewSubsystems(1))
        ));
        let mut s = spec(&[30000.0, 40000.0], false);
        s.operating_point.sample_time = 0.0;
        assert!(matches!(
            build_platoon(&s),
            Err(ModelError::InvalidParameter { name: "sample_time", .. })
        ));
    }

    /// Direct evaluation of the scalar platoon cost.
    fn scalar_cost(w: &CostWeights, tau: f64, layout: &PlatoonLayout, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let m = layout.vehicles();
        let v = |i: usize| x[layout.speed[i - 1]];
        let mut j = w.lead_speed * v(1) * v(1) + w.lead_input * u[0] * u[0];
        for i in 2..=m {
            let f = &w.followers[i - 2];
            let d = x[layout.gap[i - 2]];
            j += f.time_gap * (d - tau * v(i)).powi(2)
                + f.relative_speed * (v(i - 1) - v(i)).powi(2)
                + f.spacing * d * d
                + f.speed * v(i) * v(i)
                + f.input * u[i - 1] * u[i - 1];
        }
        j
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn follower() -> impl Strategy<Value = FollowerWeights> {
            (0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64, 0.01..5.0f64).prop_map(
                |(time_gap, relative_speed, spacing, speed, input)| FollowerWeights {
                    time_gap,
                    relative_speed,
                    spacing,
                    speed,
                    input,
                },
            )
        }

        proptest! {
            #[test]
            fn assembled_cost_matches_scalar_sum(
                m in 2usize..5,
                integral in any::<bool>(),
                lead in (0.0..5.0f64, 0.01..5.0f64),
                fs in proptest::collection::vec(follower(), 4),
                tau in 0.0..3.0f64,
                xs in proptest::collection::vec(-3.0..3.0f64, 9),
                us in proptest::collection::vec(-3.0..3.0f64, 4),
            ) {
                let layout = PlatoonLayout::new(m, integral);
                let w = CostWeights { lead_speed: lead.0, lead_input: lead.1, followers: fs[..m - 1].to_vec() };
                let op = OperatingPoint { time_gap: tau, ..OperatingPoint::default() };
                let (q, r) = build_cost(&w, &op, &layout).unwrap();
                prop_assert!(min_symmetric_eigenvalue(&q) >= -1e-10);
                prop_assert!((&q - q.transpose()).abs().max() == 0.0);
                let x = DVector::from_column_slice(&xs[..layout.states()]);
                let u = DVector::from_column_slice(&us[..m]);
                let quad = x.dot(&(&q * &x)) + u.dot(&(&r * &u));
                let direct = scalar_cost(&w, tau, &layout, &x, &u);
                prop_assert!((quad - direct).abs() < 1e-12 * direct.abs().max(1.0));
            }

            #[test]
            fn local_costs_sum_to_stage_cost(
                m in 2usize..5,
                integral in any::<bool>(),
                fs in proptest::collection::vec(follower(), 4),
                tau in 0.0..3.0f64,
            ) {
                let layout = PlatoonLayout::new(m, integral);
                let w = CostWeights { lead_speed: 1.3, lead_input: 1.0, followers: fs[..m - 1].to_vec() };
                let op = OperatingPoint { time_gap: tau, ..OperatingPoint::default() };
                let (q, _) = build_cost(&w, &op, &layout).unwrap();
                let local = build_local_costs(&w, &op, &layout).unwrap();
                let part = layout.partition();
                let mut sum = DMatrix::zeros(q.nrows(), q.ncols());
                let n1 = part.size(1).unwrap();
                {
                    let mut v = sum.view_mut((0, 0), (n1, n1));
                    v += &local.lead;
                }
                for (k, block) in local.followers.iter().enumerate() {
                    let base = part.offset(k + 1).unwrap();
                    let n = block.nrows();
                    let mut v = sum.view_mut((base, base), (n, n));
                    v += block;
                }
                prop_assert!((&sum - &q).abs().max() < 1e-12);
            }
        }
    }
}
