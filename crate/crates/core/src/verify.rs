//! Property suites: Riccati accuracy, the completed-square identity, the
//! information structure, finite-horizon optimality against an exact
//! policy search, and analytical against simulated cost.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use crate::chain::{scalar_chain, ChainSystem};
use crate::error::{SimulationError, SynthesisError};
use crate::linalg::quad_form;
use crate::platoon::PlatoonModel;
use crate::riccati::{completed_square_residual, riccati_finite, SolverOptions, Trajectory};
use crate::simulate::{
    empirical_average_cost, map_replications, mean_and_error, replication_cost, run_closed_loop,
    NoiseSource, Plant, Scenario,
};
use crate::synthesis::{
    synth_centralized, synth_suboptimal_local, synth_three_vehicle, synth_two_vehicle,
    synth_two_vehicle_finite, AnyController, Controller, DistributedController,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Riccati,
    Identity,
    Information,
    Optimality,
    Cost,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Riccati,
        Suite::Identity,
        Suite::Information,
        Suite::Optimality,
        Suite::Cost,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Riccati => "riccati",
            Suite::Identity => "identity",
            Suite::Information => "information",
            Suite::Optimality => "optimality",
            Suite::Cost => "cost",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// One measured property: passes when `measured <= threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} measured={:.6e} threshold={:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.measured,
            self.threshold
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub solver: SolverOptions,
    pub theorem2_literal: bool,
    pub identity_systems: usize,
    pub optimality_systems: usize,
    pub optimality_horizon: usize,
    pub information_steps: usize,
    pub orthogonality_steps: usize,
    pub cost_steps: usize,
    pub cost_replications: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            solver: SolverOptions::default(),
            theorem2_literal: false,
            identity_systems: 100,
            optimality_systems: 25,
            optimality_horizon: 3,
            information_steps: 10_000,
            orthogonality_steps: 100_000,
            cost_steps: 10_000,
            cost_replications: 200,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
}

pub fn run_suite(
    suite: Suite,
    model: &PlatoonModel,
    opts: &VerifyOptions,
) -> Result<SuiteReport, VerifyError> {
    let checks = match suite {
        Suite::Riccati => riccati_checks(model, opts)?,
        Suite::Identity => identity_checks(opts)?,
        Suite::Information => {
            let mut c = information_checks(model, opts)?;
            c.extend(estimator_checks(opts)?);
            c
        }
        Suite::Optimality => optimality_checks(opts)?,
        Suite::Cost => cost_checks(model, opts)?,
    };
    Ok(SuiteReport { suite, checks })
}

/// Decentralized controller matching the number of subsystems.
pub fn decentralized(
    sys: &ChainSystem,
    opts: &VerifyOptions,
) -> Result<(DistributedController, crate::synthesis::OptimalCostReport), SynthesisError> {
    match sys.subsystems() {
        2 => synth_two_vehicle(sys, &opts.solver),
        _ => synth_three_vehicle(sys, &opts.solver, opts.theorem2_literal),
    }
}

/// Stationary Riccati residuals and closed-loop radii.
pub fn riccati_checks(model: &PlatoonModel, opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let (_, report) = decentralized(&model.system, opts)?;
    let mut checks = Vec::new();
    for s in &report.riccati {
        checks.push(Check::at_most(format!("{} residual", s.label), s.residual, 1e-10));
        checks.push(Check::at_most(
            format!("{} closed-loop radius", s.label),
            s.closed_loop_radius,
            1.0 - f64::EPSILON,
        ));
    }
    Ok(checks)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    Uniform::new(lo, hi).expect("valid range").sample(rng)
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| uniform(rng, -scale, scale))
}

fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DMatrix<f64> {
    let f = random_matrix(rng, n, n, 1.0);
    &f * f.transpose() + DMatrix::identity(n, n) * shift
}

/// Completed-square identity on random systems and random trajectories.
pub fn identity_checks(opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1);
    let mut worst: f64 = 0.0;
    for _ in 0..opts.identity_systems {
        let n = 1 + (uniform(&mut rng, 0.0, 4.0) as usize).min(3);
        let m = 1 + (uniform(&mut rng, 0.0, n as f64) as usize).min(n - 1);
        let horizon = 1 + (uniform(&mut rng, 0.0, 8.0) as usize).min(7);
        let a = random_matrix(&mut rng, n, n, 0.7);
        let b = random_matrix(&mut rng, n, m, 1.0);
        let q = random_psd(&mut rng, n, 0.0);
        let r = random_psd(&mut rng, m, 0.1);
        let terminal = random_psd(&mut rng, n, 0.0);
        let schedule = riccati_finite(&a, &b, &q, &r, &terminal, horizon)
            .map_err(SynthesisError::from)?;
        let mut states = vec![DVector::from_fn(n, |_, _| uniform(&mut rng, -1.0, 1.0))];
        let mut inputs = Vec::new();
        let mut noise = Vec::new();
        for t in 0..horizon {
            let u = DVector::from_fn(m, |_, _| uniform(&mut rng, -1.0, 1.0));
            let w = DVector::from_fn(n, |_, _| uniform(&mut rng, -1.0, 1.0));
            states.push(&a * &states[t] + &b * &u + &w);
            inputs.push(u);
            noise.push(w);
        }
        let traj = Trajectory { states, inputs, noise };
        let res = completed_square_residual(&a, &b, &q, &r, &schedule, &traj)
            .map_err(SynthesisError::from)?;
        worst = worst.max(res);
    }
    Ok(vec![Check::at_most(
        format!("completed-square identity over {} systems", opts.identity_systems),
        worst,
        1e-10,
    )])
}

fn input_series(trace: &crate::simulate::SimulationTrace, i: usize) -> Vec<u64> {
    trace.u.iter().map(|u| u[i].to_bits()).collect()
}

/// Counts steps at which input `i` differs bitwise between two runs.
fn mismatches(a: &crate::simulate::SimulationTrace, b: &crate::simulate::SimulationTrace, i: usize) -> usize {
    input_series(a, i)
        .iter()
        .zip(input_series(b, i))
        .filter(|(x, y)| **x != *y)
        .count()
}

/// Inputs of upstream vehicles are unaffected by downstream noise.
pub fn information_checks(model: &PlatoonModel, opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let plant = Plant::from_platoon(model)?.without_limits();
    let (ctrl, _) = decentralized(&plant.system, opts)?;
    let m = plant.system.subsystems();
    let duration = opts.information_steps as f64 * plant.sample_time;
    let base = Scenario::stationary(duration, opts.seed);
    let reference = run_closed_loop(&plant, &mut ctrl.clone(), &base)?;
    let mut checks = Vec::new();
    for perturbed in 2..=m {
        let mut scale = vec![1.0; m];
        scale[perturbed - 1] = 1.5;
        let scenario = Scenario { noise_scale: scale, ..base.clone() };
        let run = run_closed_loop(&plant, &mut ctrl.clone(), &scenario)?;
        for upstream in 1..perturbed {
            checks.push(Check::at_most(
                format!("u{upstream} steps changed by w{perturbed}"),
                mismatches(&reference, &run, upstream - 1) as f64,
                0.0,
            ));
        }
        // The perturbed vehicle itself must react, or the check is vacuous.
        let own = mismatches(&reference, &run, perturbed - 1);
        checks.push(Check::at_most(
            format!("u{perturbed} ignores w{perturbed}"),
            if own > 0 { 0.0 } else { 1.0 },
            0.0,
        ));
    }
    Ok(checks)
}

/// Fast-mixing three-subsystem chain for the estimator statistics.
pub fn estimator_test_chain() -> ChainSystem {
    let i = DMatrix::identity(3, 3);
    let a = DMatrix::from_row_slice(3, 3, &[0.2, 0.0, 0.0, 0.5, 0.2, 0.0, 0.0, 0.5, 0.2]);
    scalar_chain(a, i.clone(), i.clone(), i.clone(), i).expect("valid chain")
}

fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / libm::sqrt(sxx * syy)
}

/// Orthogonality of estimate and estimation error, and agreement of the
/// controller state with the standalone conditional-mean recursions.
pub fn estimator_checks(opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let sys = estimator_test_chain();
    let (mut ctrl, _) = synth_three_vehicle(&sys, &opts.solver, false)?;
    let steps = opts.orthogonality_steps;
    let a = sys.a().data().clone();
    let b = sys.b().data().clone();
    let (l1, l2, _) = ctrl.gains();
    let (l1, l2) = (l1.clone(), l2.clone());
    let a_mid = sys.a().submatrix(2..=3, 2..=3).map_err(SynthesisError::from)?.into_data();
    let b_mid = sys.b().submatrix(2..=3, 2..=3).map_err(SynthesisError::from)?.into_data();

    let mut noise = NoiseSource::new(&sys, opts.seed, 0, &[]);
    let mut x: DVector<f64> = DVector::zeros(3);
    // z1 = E{x | x1 history}; z2 = [x2 - eta1; E{x3 - eta2 | that history}]
    let mut z1: DVector<f64> = DVector::zeros(3);
    let mut z2: DVector<f64> = DVector::zeros(2);
    let mut eta1 = Vec::with_capacity(steps);
    let mut err2 = Vec::with_capacity(steps);
    let mut x1s = Vec::with_capacity(steps);
    let mut recursion_gap: f64 = 0.0;
    for _ in 0..steps {
        let eta = ctrl.eta().clone();
        recursion_gap = recursion_gap
            .max((z1[0] - x[0]).abs())
            .max((z1[1] - eta[0]).abs())
            .max((z1[2] - eta[1]).abs())
            .max((z2[0] - (x[1] - eta[0])).abs())
            .max((z2[1] - eta[2]).abs());
        eta1.push(eta[0]);
        err2.push(x[1] - eta[0]);
        x1s.push(x[0]);

        let u = ctrl.step(&x)?;
        let w = noise.sample();
        let u1 = -(&l1 * &z1);
        let u2 = -(&l2 * &z2);
        z1 = &a * &z1 + &b * u1 + DVector::from_vec(vec![w[0], 0.0, 0.0]);
        z2 = &a_mid * &z2 + &b_mid * u2 + DVector::from_vec(vec![w[1], 0.0]);
        x = &a * &x + &b * u + w;
    }
    let bound = 3.0 / libm::sqrt(steps as f64);
    Ok(vec![
        Check::at_most("corr(eta1, x2 - eta1)", correlation(&eta1, &err2).abs(), bound),
        Check::at_most("corr(x1, x2 - eta1)", correlation(&x1s, &err2).abs(), bound),
        Check::at_most("standalone recursions vs eta", recursion_gap, 1e-10),
    ])
}

/// Affine function of the policy parameters.
#[derive(Clone)]
struct Affine {
    coef: DVector<f64>,
    constant: f64,
}

impl Affine {
    fn zero(p: usize) -> Self {
        Self { coef: DVector::zeros(p), constant: 0.0 }
    }

    fn scaled_add(&mut self, k: f64, other: &Affine) {
        self.coef.axpy(k, &other.coef, 1.0);
        self.constant += k * other.constant;
    }
}

/// Minimum expected cost over all linear policies with `u1(t)` a function of
/// `x1(0:t)` and `u2(t)` a function of `x(0:t)`, for a scalar two-subsystem
/// chain started at zero with terminal weight `Q`.
///
/// With `x(0) = 0` such policies are exactly the causal linear maps
/// `u1(t) = sum_{s<t} K1[t,s] w1(s)`, `u2(t) = sum_{s<t} K21[t,s] w1(s) +
/// K22[t,s] w2(s)`; the expected cost is a sum over unit noise impulses of
/// deterministic quadratics in `K`, minimized by linear least squares.
pub fn brute_force_two_vehicle(sys: &ChainSystem, horizon: usize) -> f64 {
    let a = sys.a().data();
    let b = sys.b().data();
    let q = sys.q().data();
    let r = sys.r().data();
    let w = sys.w().data();
    let pairs: Vec<(usize, usize)> = (0..horizon).flat_map(|t| (0..t).map(move |s| (t, s))).collect();
    let np = 3 * pairs.len();
    let index = |kind: usize, t: usize, s: usize| kind * pairs.len() + pairs.iter().position(|&p| p == (t, s)).unwrap();
    let q_root = crate::linalg::psd_sqrt(q);
    let r_root = crate::linalg::psd_sqrt(r);

    let mut rows: Vec<Affine> = Vec::new();
    for s0 in 0..horizon {
        for j in 0..2 {
            let amp = libm::sqrt(w[(j, j)]);
            let noise = |s: usize, k: usize| if s == s0 && k == j { amp } else { 0.0 };
            let mut x = [Affine::zero(np), Affine::zero(np)];
            for t in 0..=horizon {
                // state cost
                for row in 0..2 {
                    let mut e = Affine::zero(np);
                    for c in 0..2 {
                        e.scaled_add(q_root[(row, c)], &x[c]);
                    }
                    rows.push(e);
                }
                if t == horizon {
                    break;
                }
                let mut u = [Affine::zero(np), Affine::zero(np)];
                for s in 0..t {
                    u[0].coef[index(0, t, s)] += noise(s, 0);
                    u[1].coef[index(1, t, s)] += noise(s, 0);
                    u[1].coef[index(2, t, s)] += noise(s, 1);
                }
                for row in 0..2 {
                    let mut e = Affine::zero(np);
                    for c in 0..2 {
                        e.scaled_add(r_root[(row, c)], &u[c]);
                    }
                    rows.push(e);
                }
                let mut next = [Affine::zero(np), Affine::zero(np)];
                for row in 0..2 {
                    for c in 0..2 {
                        next[row].scaled_add(a[(row, c)], &x[c]);
                        next[row].scaled_add(b[(row, c)], &u[c]);
                    }
                    next[row].constant += noise(t, row);
                }
                x = next;
            }
        }
    }
    let g = DMatrix::from_fn(rows.len(), np, |i, k| rows[i].coef[k]);
    let h = DVector::from_fn(rows.len(), |i, _| rows[i].constant);
    if np == 0 {
        return h.norm_squared();
    }
    let theta = g.clone().svd(true, true).solve(&(-&h), 1e-13).expect("svd with vectors");
    (g * theta + h).norm_squared()
}

/// Exact expected cost of a linear controller from `x(0) = 0`, by summing
/// the deterministic costs of unit noise impulses.
fn impulse_cost<C: Controller>(sys: &ChainSystem, ctrl: &mut C, horizon: usize) -> Result<f64, SynthesisError> {
    let a = sys.a().data();
    let b = sys.b().data();
    let q = sys.q().data();
    let r = sys.r().data();
    let root = crate::linalg::psd_sqrt(sys.w().data());
    let n = sys.states();
    let mut total = 0.0;
    for s0 in 0..horizon {
        for j in 0..n {
            ctrl.reset();
            let mut x = DVector::zeros(n);
            for t in 0..horizon {
                let u = ctrl.step(&x)?;
                total += quad_form(q, &x) + quad_form(r, &u);
                x = a * &x + b * &u;
                if t == s0 {
                    x += root.column(j);
                }
            }
            total += quad_form(q, &x);
        }
    }
    Ok(total)
}

fn random_scalar_pair(rng: &mut ChaCha8Rng) -> ChainSystem {
    let a = DMatrix::from_row_slice(
        2,
        2,
        &[uniform(rng, -1.5, 1.5), 0.0, uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)],
    );
    let b = DMatrix::from_diagonal(&DVector::from_fn(2, |_, _| uniform(rng, 0.3, 2.0)));
    let q = random_psd(rng, 2, 0.0);
    let r = DMatrix::from_diagonal(&DVector::from_fn(2, |_, _| uniform(rng, 0.1, 2.0)));
    let w = DMatrix::from_diagonal(&DVector::from_fn(2, |_, _| uniform(rng, 0.1, 2.0)));
    scalar_chain(a, b, q, r, w).expect("valid chain")
}

/// Finite-horizon decomposition against the exact policy search.
pub fn optimality_checks(opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(2);
    let horizon = opts.optimality_horizon;
    let (mut formula_gap, mut policy_gap): (f64, f64) = (0.0, 0.0);
    for _ in 0..opts.optimality_systems {
        let sys = random_scalar_pair(&mut rng);
        let mut ctrl = synth_two_vehicle_finite(&sys, horizon)?;
        let formula = ctrl.analytical_cost();
        let exact = brute_force_two_vehicle(&sys, horizon);
        let achieved = impulse_cost(&sys, &mut ctrl, horizon)?;
        let scale = exact.abs().max(1.0);
        formula_gap = formula_gap.max((formula - exact).abs() / scale);
        policy_gap = policy_gap.max((achieved - exact).abs() / scale);
    }
    Ok(vec![
        Check::at_most("trace formula vs exact policy search", formula_gap, 1e-6),
        Check::at_most("controller cost vs exact policy search", policy_gap, 1e-6),
    ])
}

/// Monte Carlo cost against the trace formula, and the cost ordering
/// centralized <= decentralized <= local under common noise.
pub fn cost_checks(model: &PlatoonModel, opts: &VerifyOptions) -> Result<Vec<Check>, VerifyError> {
    let plant = Plant::from_platoon(model)?.without_limits();
    let sys = &plant.system;
    let (dec, report) = decentralized(sys, opts)?;
    let (cen, _) = synth_centralized(sys, &opts.solver)?;
    let loc = synth_suboptimal_local(sys, &model.local_costs, &opts.solver)?;
    let (steps, reps) = (opts.cost_steps, opts.cost_replications);

    let arms = [
        AnyController::Static(cen),
        AnyController::Distributed(dec.clone()),
        AnyController::Static(loc),
    ];
    let per_rep = map_replications(reps, |rep| {
        arms.iter()
            .map(|c| replication_cost(&plant, &mut c.clone(), steps, opts.seed, rep))
            .collect::<Result<Vec<_>, _>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let column = |k: usize| per_rep.iter().map(|r| r[k]).collect::<Vec<_>>();
    let (mean, se) = mean_and_error(&column(1));
    let analytical = report.analytical_cost;
    let mut checks = vec![
        Check::at_most(
            "|empirical - analytical| / standard error",
            (mean - analytical).abs() / se.max(f64::MIN_POSITIVE),
            2.0,
        ),
        Check::at_most("|empirical - analytical| / analytical", (mean - analytical).abs() / analytical, 0.02),
    ];
    for (lo, hi, name) in [(0, 1, "centralized - decentralized"), (1, 2, "decentralized - local")] {
        let diff: Vec<f64> = per_rep.iter().map(|r| r[lo] - r[hi]).collect();
        let (d, d_se) = mean_and_error(&diff);
        checks.push(Check::at_most(format!("({name}) / standard error"), d / d_se.max(f64::MIN_POSITIVE), 1.0));
    }
    Ok(checks)
}

/// Shorthand used by tests and the command line.
pub fn empirical_decentralized_cost(
    model: &PlatoonModel,
    opts: &VerifyOptions,
) -> Result<(f64, f64, f64), VerifyError> {
    let plant = Plant::from_platoon(model)?.without_limits();
    let (dec, report) = decentralized(&plant.system, opts)?;
    let (mean, se) = empirical_average_cost(&plant, &dec, opts.cost_steps, opts.cost_replications, opts.seed)?;
    Ok((report.analytical_cost, mean, se))
}
