//! Closed-loop simulation in deviation coordinates, Monte Carlo replication
//! and the energy/cost metrics used to compare controllers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::chain::ChainSystem;
use crate::error::SimulationError;
use crate::linalg::{psd_sqrt, quad_form};
use crate::platoon::{PlatoonLayout, PlatoonModel};
use crate::synthesis::Controller;

/// State norm beyond which a run is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Fraction of each run discarded before averaging.
pub const BURN_IN: f64 = 0.1;

const KMH: f64 = 1.0 / 3.6;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Seconds.
    pub duration: f64,
    /// `(time [s], road speed [m/s])`, sorted by time.
    pub events: Vec<(f64, f64)>,
    pub noise_seed: u64,
    /// Per-block multiplier on the noise standard deviation; empty means 1.
    pub noise_scale: Vec<f64>,
    /// Initial deviation state; zero when absent.
    pub initial_state: Option<DVector<f64>>,
}

impl Default for Scenario {
    /// 70 km/h cruise, then 60, 70 and 80 km/h at 45, 120 and 180 s.
    fn default() -> Self {
        Self {
            duration: 240.0,
            events: vec![(45.0, 60.0 * KMH), (120.0, 70.0 * KMH), (180.0, 80.0 * KMH)],
            noise_seed: 0,
            noise_scale: Vec::new(),
            initial_state: None,
        }
    }
}

impl Scenario {
    /// Noise-driven run without reference changes.
    pub fn stationary(duration: f64, noise_seed: u64) -> Self {
        Self {
            duration,
            events: Vec::new(),
            noise_seed,
            noise_scale: Vec::new(),
            initial_state: None,
        }
    }

    pub fn validate(&self, blocks: usize) -> Result<(), SimulationError> {
        let bad = |msg: String| Err(SimulationError::Scenario(msg));
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return bad(format!("duration {} must be positive", self.duration));
        }
        let mut last = f64::NEG_INFINITY;
        for &(t, v) in &self.events {
            if !(t >= last) {
                return bad("events must be sorted by time".into());
            }
            if !(v > 0.0) || !v.is_finite() {
                return bad(format!("road speed {v} must be positive"));
            }
            if !(t >= 0.0) || t > self.duration {
                return bad(format!("event at {t} s lies outside [0, {}]", self.duration));
            }
            last = t;
        }
        if !self.noise_scale.is_empty() && self.noise_scale.len() != blocks {
            return bad(format!(
                "{} noise multipliers for {blocks} blocks",
                self.noise_scale.len()
            ));
        }
        if self.noise_scale.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return bad("noise multipliers must be nonnegative".into());
        }
        Ok(())
    }

    pub fn scale(&self, block: usize) -> f64 {
        self.noise_scale.get(block).copied().unwrap_or(1.0)
    }
}

/// Gaussian process noise with one ChaCha stream per `(seed, replication,
/// block)`, so streams of different blocks never interact.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    blocks: Vec<(ChaCha8Rng, DMatrix<f64>)>,
    offsets: Vec<usize>,
    dim: usize,
}

impl NoiseSource {
    pub fn new(sys: &ChainSystem, seed: u64, replication: u32, scale: &[f64]) -> Self {
        let part = sys.state_partition();
        let mut blocks = Vec::with_capacity(part.len());
        let mut offsets = Vec::with_capacity(part.len());
        for (k, w) in sys.noise_blocks().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((u64::from(replication) << 16) | k as u64);
            let s = scale.get(k).copied().unwrap_or(1.0);
            blocks.push((rng, psd_sqrt(&w) * s));
            offsets.push(part.offset(k + 1).expect("valid block"));
        }
        Self { blocks, offsets, dim: part.total() }
    }

    pub fn sample(&mut self) -> DVector<f64> {
        let mut w = DVector::zeros(self.dim);
        for ((rng, root), &off) in self.blocks.iter_mut().zip(&self.offsets) {
            let n = root.nrows();
            let xi = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
            w.rows_mut(off, n).copy_from(&(&*root * xi));
        }
        w
    }
}

/// Reference handling, unit scaling and actuator limits of the simulated plant.
#[derive(Debug, Clone, PartialEq)]
pub struct Plant {
    pub system: ChainSystem,
    pub sample_time: f64,
    /// Physical units (N·m) per model input unit.
    pub input_scale: f64,
    /// `(min, max)` per input in physical units.
    pub limits: Option<Vec<(f64, f64)>>,
    pub platoon: Option<PlatoonFrame>,
}

/// Maps road-speed changes onto deviation targets.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonFrame {
    pub layout: PlatoonLayout,
    pub speed: f64,
    pub gap: f64,
    /// Target state per unit of speed change.
    pub state_direction: DVector<f64>,
    /// Feedforward input per unit of speed change.
    pub input_direction: DVector<f64>,
}

impl Plant {
    /// Bare chain: no references, no saturation, unit input scale.
    pub fn from_chain(system: ChainSystem, sample_time: f64) -> Self {
        Self {
            system,
            sample_time,
            input_scale: 1.0,
            limits: None,
            platoon: None,
        }
    }

    pub fn from_platoon(model: &PlatoonModel) -> Result<Self, SimulationError> {
        let frame = PlatoonFrame::new(model)?;
        Ok(Self {
            system: model.system.clone(),
            sample_time: model.operating_point.sample_time,
            input_scale: model.input_scale,
            limits: Some(model.torque_limits.clone()),
            platoon: Some(frame),
        })
    }

    pub fn without_limits(mut self) -> Self {
        self.limits = None;
        self
    }

    pub fn steps(&self, duration: f64) -> usize {
        libm::round(duration / self.sample_time) as usize
    }

    /// State target and feedforward input for a road-speed deviation `dv`.
    fn targets(&self, dv: f64) -> (DVector<f64>, DVector<f64>) {
        match &self.platoon {
            Some(f) => (&f.state_direction * dv, &f.input_direction * dv),
            None => (
                DVector::zeros(self.system.states()),
                DVector::zeros(self.system.inputs()),
            ),
        }
    }

    fn base_speed(&self) -> f64 {
        self.platoon.as_ref().map_or(0.0, |f| f.speed)
    }
}

impl PlatoonFrame {
    /// Speeds shift by one, gaps by the time gap, and any remaining states and
    /// the inputs are solved from the steady-state condition
    /// `(I - A) x_ref = B u_ff`.
    pub fn new(model: &PlatoonModel) -> Result<Self, SimulationError> {
        let layout = model.layout.clone();
        let sys = &model.system;
        let n = sys.states();
        let m = sys.inputs();
        let mut fixed = vec![None; n];
        for &k in &layout.speed {
            fixed[k] = Some(1.0);
        }
        for &k in &layout.gap {
            fixed[k] = Some(model.operating_point.time_gap);
        }
        let free: Vec<usize> = (0..n).filter(|&k| fixed[k].is_none()).collect();
        let lhs = DMatrix::<f64>::identity(n, n) - sys.a().data();
        let b = sys.b().data();

        let mut rhs = DVector::zeros(n);
        for (k, v) in fixed.iter().enumerate() {
            if let Some(v) = v {
                rhs -= lhs.column(k) * *v;
            }
        }
        let mut mat = DMatrix::zeros(n, free.len() + m);
        for (c, &k) in free.iter().enumerate() {
            mat.set_column(c, &lhs.column(k));
        }
        for j in 0..m {
            mat.set_column(free.len() + j, &(-b.column(j)));
        }
        let svd = mat.clone().svd(true, true);
        let z = svd
            .solve(&rhs, 1e-12)
            .map_err(|e| SimulationError::Scenario(String::from(e)))?;
        let residual = (&mat * &z - &rhs).amax();
        if residual > 1e-9 {
            return Err(SimulationError::Scenario(format!(
                "speed change has no steady state (residual {residual:.3e})"
            )));
        }
        let mut state_direction = DVector::zeros(n);
        for (k, v) in fixed.iter().enumerate() {
            if let Some(v) = v {
                state_direction[k] = *v;
            }
        }
        for (c, &k) in free.iter().enumerate() {
            state_direction[k] = z[c];
        }
        let input_direction = z.rows(free.len(), m).into_owned();
        Ok(Self {
            layout,
            speed: model.operating_point.speed,
            gap: model.operating_point.gap,
            state_direction,
            input_direction,
        })
    }
}

/// Recorded closed-loop run. States and inputs are in model coordinates
/// (deviations; inputs in model units).
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub sample_time: f64,
    pub input_scale: f64,
    /// `steps + 1` states.
    pub x: Vec<DVector<f64>>,
    /// Applied inputs after saturation.
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    /// Active road speed, absolute m/s (deviation for bare chains).
    pub reference: Vec<f64>,
    pub stage_cost: Vec<f64>,
    pub saturations: usize,
}

impl SimulationTrace {
    pub fn steps(&self) -> usize {
        self.u.len()
    }

    /// Largest deviation between recorded states and `A x + B u + w`.
    pub fn replay_residual(&self, sys: &ChainSystem) -> f64 {
        let a = sys.a().data();
        let b = sys.b().data();
        (0..self.steps())
            .map(|t| (a * &self.x[t] + b * &self.u[t] + &self.w[t] - &self.x[t + 1]).amax())
            .fold(0.0, f64::max)
    }

    /// Input of subsystem `i` (0-based) over time, N·m.
    pub fn torque(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.u.iter().map(move |u| u[i] * self.input_scale)
    }
}

fn saturate(u: &mut DVector<f64>, limits: &[(f64, f64)], scale: f64) -> usize {
    let mut hits = 0;
    for (k, &(lo, hi)) in limits.iter().enumerate() {
        let v = u[k] * scale;
        if v < lo || v > hi {
            u[k] = v.clamp(lo, hi) / scale;
            hits += 1;
        }
    }
    hits
}

/// Per-step accumulator so long runs need not store a trace.
trait Sink {
    fn record(&mut self, t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, reference: f64, cost: f64);
}

struct Tracer(SimulationTrace);

impl Sink for Tracer {
    fn record(&mut self, _t: usize, x: &DVector<f64>, u: &DVector<f64>, w: &DVector<f64>, reference: f64, cost: f64) {
        self.0.x.push(x.clone());
        self.0.u.push(u.clone());
        self.0.w.push(w.clone());
        self.0.reference.push(reference);
        self.0.stage_cost.push(cost);
    }
}

struct Averager {
    skip: usize,
    sum: f64,
    count: usize,
}

impl Sink for Averager {
    fn record(&mut self, t: usize, _x: &DVector<f64>, _u: &DVector<f64>, _w: &DVector<f64>, _r: f64, cost: f64) {
        if t >= self.skip {
            self.sum += cost;
            self.count += 1;
        }
    }
}

/// Returns the final state and the number of saturated input samples.
fn simulate<C: Controller + ?Sized, S: Sink>(
    plant: &Plant,
    ctrl: &mut C,
    scenario: &Scenario,
    replication: u32,
    sink: &mut S,
) -> Result<(DVector<f64>, usize), SimulationError> {
    let sys = &plant.system;
    scenario.validate(sys.subsystems())?;
    if ctrl.state_dim() != sys.states() || ctrl.input_dim() != sys.inputs() {
        return Err(SimulationError::Dimension(format!(
            "controller is {}x{}, plant has {} states and {} inputs",
            ctrl.input_dim(),
            ctrl.state_dim(),
            sys.states(),
            sys.inputs()
        )));
    }
    if plant.platoon.is_none() && !scenario.events.is_empty() {
        return Err(SimulationError::Scenario(
            "speed events need a platoon plant".into(),
        ));
    }
    let steps = plant.steps(scenario.duration);
    let base = plant.base_speed();
    let switch: Vec<(usize, f64)> = scenario
        .events
        .iter()
        .map(|&(t, v)| (plant.steps(t), v - base))
        .collect();

    let a = sys.a().data();
    let b = sys.b().data();
    let q = sys.q().data();
    let r = sys.r().data();
    let mut noise = NoiseSource::new(sys, scenario.noise_seed, replication, &scenario.noise_scale);
    let mut x = match &scenario.initial_state {
        Some(x0) if x0.len() != sys.states() => {
            return Err(SimulationError::Dimension(format!(
                "initial state has {} entries, plant has {}",
                x0.len(),
                sys.states()
            )))
        }
        Some(x0) => x0.clone(),
        None => DVector::zeros(sys.states()),
    };
    ctrl.reset();

    let mut dv = 0.0;
    let mut next_event = 0;
    let (mut x_ref, mut u_ff) = plant.targets(dv);
    let mut saturations = 0;
    for t in 0..steps {
        let mut changed = false;
        while next_event < switch.len() && switch[next_event].0 <= t {
            dv = switch[next_event].1;
            next_event += 1;
            changed = true;
        }
        if changed {
            let (new_ref, new_ff) = plant.targets(dv);
            ctrl.shift(&(&x_ref - &new_ref));
            (x_ref, u_ff) = (new_ref, new_ff);
        }
        let e = &x - &x_ref;
        let mut u = ctrl.step(&e)? + &u_ff;
        if let Some(limits) = &plant.limits {
            saturations += saturate(&mut u, limits, plant.input_scale);
        }
        let du = &u - &u_ff;
        let cost = quad_form(q, &e) + quad_form(r, &du);
        let w = noise.sample();
        sink.record(t, &x, &u, &w, base + dv, cost);
        x = a * &x + b * &u + w;
        let norm = x.norm();
        if !(norm <= DIVERGENCE_NORM) {
            return Err(SimulationError::Diverged { step: t + 1, norm });
        }
    }
    Ok((x, saturations))
}

/// Simulates one run and records everything.
pub fn run_closed_loop<C: Controller + ?Sized>(
    plant: &Plant,
    ctrl: &mut C,
    scenario: &Scenario,
) -> Result<SimulationTrace, SimulationError> {
    run_replication(plant, ctrl, scenario, 0)
}

/// As [`run_closed_loop`] on the noise streams of replication `replication`.
pub fn run_replication<C: Controller + ?Sized>(
    plant: &Plant,
    ctrl: &mut C,
    scenario: &Scenario,
    replication: u32,
) -> Result<SimulationTrace, SimulationError> {
    let steps = plant.steps(scenario.duration);
    let mut tracer = Tracer(SimulationTrace {
        sample_time: plant.sample_time,
        input_scale: plant.input_scale,
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps),
        w: Vec::with_capacity(steps),
        reference: Vec::with_capacity(steps),
        stage_cost: Vec::with_capacity(steps),
        saturations: 0,
    });
    let (last, saturations) = simulate(plant, ctrl, scenario, replication, &mut tracer)?;
    let mut trace = tracer.0;
    trace.x.push(last);
    trace.saturations = saturations;
    Ok(trace)
}

/// Average stage cost of one noise-driven run after burn-in.
pub fn replication_cost<C: Controller + ?Sized>(
    plant: &Plant,
    ctrl: &mut C,
    steps: usize,
    seed: u64,
    replication: u32,
) -> Result<f64, SimulationError> {
    let scenario = Scenario::stationary(steps as f64 * plant.sample_time, seed);
    let skip = libm::ceil(steps as f64 * BURN_IN) as usize;
    let mut avg = Averager { skip, sum: 0.0, count: 0 };
    simulate(plant, ctrl, &scenario, replication, &mut avg)?;
    Ok(avg.sum / avg.count.max(1) as f64)
}

/// Runs `f(0), ..., f(n-1)`, in parallel when the `parallel` feature is on;
/// results come back in index order either way.
pub fn map_replications<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(u32) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n as u32).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n as u32).map(f).collect()
    }
}

/// Mean over replications of the per-run average stage cost and its
/// standard error.
pub fn empirical_average_cost<C>(
    plant: &Plant,
    ctrl: &C,
    steps: usize,
    replications: usize,
    seed: u64,
) -> Result<(f64, f64), SimulationError>
where
    C: Controller + Clone + Send + Sync,
{
    if steps < 1000 {
        return Err(SimulationError::Scenario(format!("{steps} steps, need at least 1000")));
    }
    if replications == 0 {
        return Err(SimulationError::Scenario("no replications".into()));
    }
    let costs = map_replications(replications, |rep| {
        let mut c = ctrl.clone();
        replication_cost(plant, &mut c, steps, seed, rep)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok(mean_and_error(&costs))
}

/// Sample mean and standard error of the mean.
pub fn mean_and_error(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}

/// Metrics of one controller, averaged over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerMetrics {
    pub label: String,
    /// `||u_i||_2` over the run, N·m.
    pub energy: Vec<f64>,
    /// Extremes over all runs, N·m.
    pub u_max: Vec<f64>,
    pub u_min: Vec<f64>,
    pub mean_stage_cost: f64,
    /// Absolute speeds, m/s (platoon plants only).
    pub mean_speed: Vec<f64>,
    pub saturations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub replications: usize,
    pub baseline: usize,
    pub controllers: Vec<ControllerMetrics>,
}

impl MetricsReport {
    /// `100 (x - baseline) / baseline` for each controller's vehicle energies.
    pub fn energy_difference(&self, controller: usize) -> Vec<f64> {
        let base = &self.controllers[self.baseline].energy;
        self.controllers[controller]
            .energy
            .iter()
            .zip(base)
            .map(|(x, b)| relative_percent(*x, *b))
            .collect()
    }

    pub fn cost_difference(&self, controller: usize) -> f64 {
        relative_percent(
            self.controllers[controller].mean_stage_cost,
            self.controllers[self.baseline].mean_stage_cost,
        )
    }
}

pub fn relative_percent(x: f64, base: f64) -> f64 {
    if x == base {
        0.0
    } else {
        100.0 * (x - base) / base
    }
}

/// Metrics of a single recorded run.
pub fn trace_metrics(label: &str, trace: &SimulationTrace, plant: &Plant) -> ControllerMetrics {
    let m = plant.system.inputs();
    let mut energy = vec![0.0; m];
    let mut u_max = vec![0.0f64; m];
    let mut u_min = vec![0.0f64; m];
    for u in &trace.u {
        for i in 0..m {
            let v = u[i] * trace.input_scale;
            energy[i] += v * v;
            u_max[i] = u_max[i].max(v);
            u_min[i] = u_min[i].min(v);
        }
    }
    let steps = trace.steps().max(1) as f64;
    let mean_speed = match &plant.platoon {
        Some(f) => f
            .layout
            .speed
            .iter()
            .map(|&k| f.speed + trace.x[..trace.steps()].iter().map(|x| x[k]).sum::<f64>() / steps)
            .collect(),
        None => Vec::new(),
    };
    ControllerMetrics {
        label: label.into(),
        energy: energy.into_iter().map(libm::sqrt).collect(),
        u_max,
        u_min,
        mean_stage_cost: trace.stage_cost.iter().sum::<f64>() / steps,
        mean_speed,
        saturations: trace.saturations,
    }
}

fn merge(runs: Vec<ControllerMetrics>) -> ControllerMetrics {
    let n = runs.len() as f64;
    let mut out = runs[0].clone();
    for (k, r) in runs.iter().enumerate().skip(1) {
        for i in 0..out.energy.len() {
            out.energy[i] += r.energy[i];
            out.u_max[i] = out.u_max[i].max(r.u_max[i]);
            out.u_min[i] = out.u_min[i].min(r.u_min[i]);
        }
        for i in 0..out.mean_speed.len() {
            out.mean_speed[i] += r.mean_speed[i];
        }
        out.mean_stage_cost += r.mean_stage_cost;
        out.saturations += r.saturations;
        debug_assert_eq!(r.label, runs[k - 1].label);
    }
    out.energy.iter_mut().for_each(|e| *e /= n);
    out.mean_speed.iter_mut().for_each(|v| *v /= n);
    out.mean_stage_cost /= n;
    out
}

/// Runs every controller on the same noise streams and averages the metrics.
pub fn compare_controllers<C>(
    plant: &Plant,
    scenario: &Scenario,
    controllers: &[(String, C)],
    replications: usize,
    baseline: usize,
) -> Result<MetricsReport, SimulationError>
where
    C: Controller + Clone + Send + Sync,
{
    if replications == 0 {
        return Err(SimulationError::Scenario("no replications".into()));
    }
    if baseline >= controllers.len() {
        return Err(SimulationError::Scenario(format!(
            "baseline {baseline} out of {} controllers",
            controllers.len()
        )));
    }
    let mut merged = Vec::with_capacity(controllers.len());
    for (label, ctrl) in controllers {
        let runs = map_replications(replications, |rep| {
            let mut c = ctrl.clone();
            run_replication(plant, &mut c, scenario, rep).map(|t| trace_metrics(label, &t, plant))
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
        merged.push(merge(runs));
    }
    Ok(MetricsReport {
        replications,
        baseline,
        controllers: merged,
    })
}
