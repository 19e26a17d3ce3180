//! Controller synthesis for two- and three-subsystem chains.
//!
//! The decentralized controllers split the state into the conditional
//! estimate given the shared history `x1(0:t)` and the orthogonal estimation
//! error, solve one Riccati equation per component, and realize the estimate
//! with an internal state `eta`:
//!
//! * two subsystems: `eta = E{x2 | x1(0:t)}`;
//! * three subsystems: `eta = [eta1; eta2; eta3]` with `eta1 = E{x2 | x1(0:t)}`,
//!   `eta2 = E{x3 | x1(0:t)}` and `eta3` the estimate of the remaining part of
//!   `x3` given the second error history `x2 - eta1`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::blocks::{Partition, PartitionedMatrix};
use crate::chain::{ChainSystem, LqProblem};
use crate::error::{RiccatiError, SynthesisError};
use crate::linalg::stein;
use crate::riccati::{
    closed_loop_radius, detectability_factor, is_detectable, is_stabilizable, riccati_finite,
    riccati_infinite, RiccatiSchedule, RiccatiSolution, SolverOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerMode {
    TwoVehicle,
    ThreeVehicle,
}

/// Diagnostics for one stationary Riccati solve.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSummary {
    pub label: &'static str,
    pub residual: f64,
    pub iterations: usize,
    pub closed_loop_radius: f64,
}

/// Per-step infinite-horizon cost split into its trace terms.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalCostReport {
    pub analytical_cost: f64,
    pub trace_terms: Vec<(String, f64)>,
    pub riccati: Vec<RiccatiSummary>,
}

impl OptimalCostReport {
    fn from_terms(terms: Vec<(String, f64)>, riccati: Vec<RiccatiSummary>) -> Self {
        Self {
            analytical_cost: terms.iter().map(|(_, v)| v).sum(),
            trace_terms: terms,
            riccati,
        }
    }
}

/// Anything that maps a measured state to an input, possibly with memory.
pub trait Controller {
    fn state_dim(&self) -> usize;
    fn input_dim(&self) -> usize;
    /// Clears internal memory.
    fn reset(&mut self);
    /// Computes `u(t)` from `x(t)` and advances internal state to `t + 1`.
    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError>;
    /// The measured coordinates jump by the commonly known amount `delta`
    /// (a reference change); estimates move with them.
    fn shift(&mut self, _delta: &DVector<f64>) {}
}

fn check_len(expected: usize, x: &DVector<f64>) -> Result<(), SynthesisError> {
    if x.len() == expected {
        Ok(())
    } else {
        Err(SynthesisError::Dimension(format!(
            "state has {} entries, controller expects {expected}",
            x.len()
        )))
    }
}

fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut k = 0;
    for p in parts {
        out.rows_mut(k, p.len()).copy_from(p);
        k += p.len();
    }
    out
}

/// Dynamic controller with estimator state `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedController {
    mode: ControllerMode,
    states: Partition,
    inputs: Partition,
    /// Gain on the full state.
    l1: DMatrix<f64>,
    /// Gain on the sub-chain starting at subsystem 2.
    l2: DMatrix<f64>,
    /// Gain on subsystem 3 alone.
    l3: Option<DMatrix<f64>>,
    /// `(A - B L1)[2:M, 1:M]`, acting on `[x1; eta1; ...]`.
    estimator: DMatrix<f64>,
    /// `(A~ - B~ L2)[2, 1:2]`, acting on `[x2 - eta1; eta3]`.
    tail_estimator: Option<DMatrix<f64>>,
    /// Feed `x2 - eta2` into the `eta3` update instead of `x2 - eta1`.
    theorem2_literal: bool,
    eta: DVector<f64>,
}

impl DistributedController {
    /// Rebuilds a controller from stored gains and estimator matrices.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        mode: ControllerMode,
        states: Partition,
        inputs: Partition,
        l1: DMatrix<f64>,
        l2: DMatrix<f64>,
        l3: Option<DMatrix<f64>>,
        estimator: DMatrix<f64>,
        tail_estimator: Option<DMatrix<f64>>,
        theorem2_literal: bool,
    ) -> Result<Self, SynthesisError> {
        let blocks = match mode {
            ControllerMode::TwoVehicle => 2,
            ControllerMode::ThreeVehicle => 3,
        };
        if states.len() != blocks || inputs.len() != blocks {
            return Err(SynthesisError::Dimension(format!(
                "{mode:?} needs {blocks} blocks, got {} state and {} input blocks",
                states.len(),
                inputs.len()
            )));
        }
        let n = states.total();
        let m = inputs.total();
        let n1 = states.sizes()[0];
        let tail_n = n - n1;
        let tail_m = m - inputs.sizes()[0];
        let mut shapes = vec![
            ("L1", l1.shape(), (m, n)),
            ("L2", l2.shape(), (tail_m, tail_n)),
            ("estimator", estimator.shape(), (tail_n, n)),
        ];
        let eta_len = match mode {
            ControllerMode::TwoVehicle => {
                if l3.is_some() || tail_estimator.is_some() {
                    return Err(SynthesisError::Dimension(
                        "two-vehicle controller has no third gain".into(),
                    ));
                }
                tail_n
            }
            ControllerMode::ThreeVehicle => {
                let n2 = states.sizes()[1];
                let n3 = states.sizes()[2];
                let m3 = inputs.sizes()[2];
                let (Some(l3), Some(te)) = (&l3, &tail_estimator) else {
                    return Err(SynthesisError::Dimension(
                        "three-vehicle controller needs L3 and the tail estimator".into(),
                    ));
                };
                shapes.push(("L3", l3.shape(), (m3, n3)));
                shapes.push(("tail estimator", te.shape(), (n3, n2 + n3)));
                if theorem2_literal && n2 != n3 {
                    return Err(SynthesisError::Dimension(
                        "literal eta3 update needs dim x2 == dim x3".into(),
                    ));
                }
                n2 + 2 * n3
            }
        };
        for (name, got, want) in shapes {
            if got != want {
                return Err(SynthesisError::Dimension(format!(
                    "{name} is {got:?}, expected {want:?}"
                )));
            }
        }
        Ok(Self {
            mode,
            states,
            inputs,
            l1,
            l2,
            l3,
            estimator,
            tail_estimator,
            theorem2_literal,
            eta: DVector::zeros(eta_len),
        })
    }

    pub fn mode(&self) -> ControllerMode {
        self.mode
    }

    pub fn state_partition(&self) -> &Partition {
        &self.states
    }

    pub fn input_partition(&self) -> &Partition {
        &self.inputs
    }

    pub fn gains(&self) -> (&DMatrix<f64>, &DMatrix<f64>, Option<&DMatrix<f64>>) {
        (&self.l1, &self.l2, self.l3.as_ref())
    }

    pub fn estimator(&self) -> &DMatrix<f64> {
        &self.estimator
    }

    pub fn tail_estimator(&self) -> Option<&DMatrix<f64>> {
        self.tail_estimator.as_ref()
    }

    pub fn theorem2_literal(&self) -> bool {
        self.theorem2_literal
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    pub fn set_eta(&mut self, eta: DVector<f64>) -> Result<(), SynthesisError> {
        check_len(self.eta.len(), &eta)?;
        self.eta = eta;
        Ok(())
    }

    /// The input for state `x` without advancing `eta`.
    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        check_len(self.states.total(), x)?;
        Ok(self.evaluate(x).0)
    }

    /// Input and next estimator state.
    fn evaluate(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let s = self.states.sizes();
        let n1 = s[0];
        let x1 = x.rows(0, n1).into_owned();
        let m1 = self.inputs.sizes()[0];
        match self.mode {
            ControllerMode::TwoVehicle => {
                let n2 = s[1];
                let x2 = x.rows(n1, n2).into_owned();
                let eta = &self.eta;
                let zeta = stack(&[&x1, eta]);
                let mut u = -(&self.l1 * &zeta);
                let err = &x2 - eta;
                let corr = &self.l2 * err;
                let mut tail = u.rows_mut(m1, corr.len());
                tail -= corr;
                let next = &self.estimator * zeta;
                (u, next)
            }
            ControllerMode::ThreeVehicle => {
                let (n2, n3) = (s[1], s[2]);
                let x2 = x.rows(n1, n2).into_owned();
                let x3 = x.rows(n1 + n2, n3).into_owned();
                let eta1 = self.eta.rows(0, n2).into_owned();
                let eta2 = self.eta.rows(n2, n3).into_owned();
                let eta3 = self.eta.rows(n2 + n3, n3).into_owned();
                let zeta = stack(&[&x1, &eta1, &eta2]);
                let err2 = &x2 - &eta1;
                let mut u = -(&self.l1 * &zeta);
                let second = &self.l2 * stack(&[&err2, &eta3]);
                {
                    let mut tail = u.rows_mut(m1, second.len());
                    tail -= second;
                }
                let l3 = self.l3.as_ref().expect("checked at construction");
                let third = l3 * (&x3 - &eta2 - &eta3);
                let m3 = third.len();
                let off = u.len() - m3;
                {
                    let mut last = u.rows_mut(off, m3);
                    last -= third;
                }
                let head = &self.estimator * &zeta;
                let shared = if self.theorem2_literal { &x2 - &eta2 } else { err2 };
                let te = self.tail_estimator.as_ref().expect("checked at construction");
                let eta3_next = te * stack(&[&shared, &eta3]);
                (u, stack(&[&head, &eta3_next]))
            }
        }
    }
}

impl Controller for DistributedController {
    fn state_dim(&self) -> usize {
        self.states.total()
    }

    fn input_dim(&self) -> usize {
        self.inputs.total()
    }

    fn reset(&mut self) {
        self.eta.fill(0.0);
    }

    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        check_len(self.states.total(), x)?;
        let (u, next) = self.evaluate(x);
        self.eta = next;
        Ok(u)
    }

    /// `eta1`/`eta2` estimate states and move with them; `eta3` estimates a
    /// part orthogonal to the shared history and stays.
    fn shift(&mut self, delta: &DVector<f64>) {
        let n1 = self.states.sizes()[0];
        let tail = self.states.total() - n1;
        let mut head = self.eta.rows_mut(0, tail);
        head += delta.rows(n1, tail);
    }
}

/// Static feedback `u = -L x` where input block `i` may read only the
/// state blocks marked in `mask[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticController {
    gain: DMatrix<f64>,
    states: Partition,
    inputs: Partition,
    mask: Vec<Vec<bool>>,
}

impl StaticController {
    /// Builds the controller, zeroing every masked-out gain block.
    pub fn new(
        gain: DMatrix<f64>,
        states: Partition,
        inputs: Partition,
        mask: Vec<Vec<bool>>,
    ) -> Result<Self, SynthesisError> {
        let mut pm = PartitionedMatrix::new(gain, inputs.clone(), states.clone())?;
        if mask.len() != inputs.len() || mask.iter().any(|row| row.len() != states.len()) {
            return Err(SynthesisError::Dimension(format!(
                "mask must be {}x{} blocks",
                inputs.len(),
                states.len()
            )));
        }
        for (i, row) in mask.iter().enumerate() {
            for (j, &allowed) in row.iter().enumerate() {
                if !allowed {
                    let zero = DMatrix::zeros(inputs.sizes()[i], states.sizes()[j]);
                    pm.set_block(i + 1, j + 1, &zero)?;
                }
            }
        }
        Ok(Self {
            gain: pm.into_data(),
            states,
            inputs,
            mask,
        })
    }

    pub fn unrestricted(gain: DMatrix<f64>, states: Partition, inputs: Partition) -> Result<Self, SynthesisError> {
        let mask = vec![vec![true; states.len()]; inputs.len()];
        Self::new(gain, states, inputs, mask)
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    pub fn mask(&self) -> &[Vec<bool>] {
        &self.mask
    }

    pub fn state_partition(&self) -> &Partition {
        &self.states
    }

    pub fn input_partition(&self) -> &Partition {
        &self.inputs
    }

    pub fn output(&self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        check_len(self.states.total(), x)?;
        Ok(-(&self.gain * x))
    }
}

impl Controller for StaticController {
    fn state_dim(&self) -> usize {
        self.states.total()
    }

    fn input_dim(&self) -> usize {
        self.inputs.total()
    }

    fn reset(&mut self) {}

    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        self.output(x)
    }
}

/// Either kind of synthesized controller.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyController {
    Distributed(DistributedController),
    Static(StaticController),
}

impl Controller for AnyController {
    fn state_dim(&self) -> usize {
        match self {
            Self::Distributed(c) => c.state_dim(),
            Self::Static(c) => c.state_dim(),
        }
    }

    fn input_dim(&self) -> usize {
        match self {
            Self::Distributed(c) => c.input_dim(),
            Self::Static(c) => c.input_dim(),
        }
    }

    fn reset(&mut self) {
        match self {
            Self::Distributed(c) => c.reset(),
            Self::Static(c) => c.reset(),
        }
    }

    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        match self {
            Self::Distributed(c) => c.step(x),
            Self::Static(c) => c.step(x),
        }
    }

    fn shift(&mut self, delta: &DVector<f64>) {
        match self {
            Self::Distributed(c) => c.shift(delta),
            Self::Static(c) => c.shift(delta),
        }
    }
}

fn require(ok: bool, which: &'static str, detail: &str) -> Result<(), SynthesisError> {
    if ok {
        Ok(())
    } else {
        Err(SynthesisError::Assumption {
            which,
            detail: detail.into(),
        })
    }
}

fn solve(
    p: &LqProblem,
    label: &'static str,
    opts: &SolverOptions,
) -> Result<(RiccatiSolution, RiccatiSummary), SynthesisError> {
    let sol = riccati_infinite(&p.a, &p.b, &p.q, &p.r, opts)?;
    let radius = closed_loop_radius(&p.a, &p.b, &sol.gain);
    if radius >= 1.0 {
        return Err(SynthesisError::Riccati(RiccatiError::Divergence {
            iterations: sol.iterations,
            residual: sol.residual,
        }));
    }
    let summary = RiccatiSummary {
        label,
        residual: sol.residual,
        iterations: sol.iterations,
        closed_loop_radius: radius,
    };
    Ok((sol, summary))
}

fn trace_product(x: &DMatrix<f64>, w: &DMatrix<f64>) -> f64 {
    (x * w).trace()
}

fn require_blocks(sys: &ChainSystem, m: usize) -> Result<(), SynthesisError> {
    if sys.subsystems() == m {
        Ok(())
    } else {
        Err(SynthesisError::Dimension(format!(
            "expected a chain of {m} subsystems, got {}",
            sys.subsystems()
        )))
    }
}

/// Optimal controller when subsystem 1 sees only its own history and
/// subsystem 2 sees everything.
pub fn synth_two_vehicle(
    sys: &ChainSystem,
    opts: &SolverOptions,
) -> Result<(DistributedController, OptimalCostReport), SynthesisError> {
    require_blocks(sys, 2)?;
    let full = sys.problem();
    let tail = sys.subproblem(2..=2)?;
    require(is_stabilizable(&full.a, &full.b), "(i)", "(A, B) is not stabilizable")?;
    require(
        is_stabilizable(&tail.a, &tail.b),
        "(ii)",
        "(A22, B2) is not stabilizable",
    )?;
    require(
        is_detectable(&detectability_factor(&full.q), &full.a),
        "(iii)",
        "(Q, A) is not detectable",
    )?;
    require(
        is_detectable(&detectability_factor(&tail.q), &tail.a),
        "(iv)",
        "(Q22, A22) is not detectable",
    )?;

    let (x, sx) = solve(&full, "X", opts)?;
    let (y, sy) = solve(&tail, "Y", opts)?;

    let closed = PartitionedMatrix::square(&full.a - &full.b * &x.gain, sys.state_partition().clone())?;
    let estimator = closed.submatrix(2..=2, 1..=2)?.into_data();

    let ctrl = DistributedController::from_parts(
        ControllerMode::TwoVehicle,
        sys.state_partition().clone(),
        sys.input_partition().clone(),
        x.gain.clone(),
        y.gain,
        None,
        estimator,
        None,
        false,
    )?;

    let xp = PartitionedMatrix::square(x.value, sys.state_partition().clone())?;
    let w = sys.noise_blocks();
    let terms = vec![
        ("Tr(X11 W1)".into(), trace_product(&xp.block(1, 1)?, &w[0])),
        ("Tr(Y W2)".into(), trace_product(&y.value, &w[1])),
    ];
    Ok((ctrl, OptimalCostReport::from_terms(terms, vec![sx, sy])))
}

/// Optimal controller for nested information `x1 ⊂ (x1, x2) ⊂ (x1, x2, x3)`.
pub fn synth_three_vehicle(
    sys: &ChainSystem,
    opts: &SolverOptions,
    theorem2_literal: bool,
) -> Result<(DistributedController, OptimalCostReport), SynthesisError> {
    require_blocks(sys, 3)?;
    let full = sys.problem();
    let mid = sys.subproblem(2..=3)?;
    let last = sys.subproblem(3..=3)?;
    for (p, name) in [(&full, "(A, B)"), (&mid, "(A[2:3,2:3], B[2:3,2:3])"), (&last, "(A33, B3)")] {
        require(
            is_stabilizable(&p.a, &p.b),
            "(i)",
            &format!("{name} is not stabilizable"),
        )?;
    }
    for (p, name) in [(&full, "(Q, A)"), (&mid, "(Q[2:3,2:3], A[2:3,2:3])"), (&last, "(Q33, A33)")] {
        require(
            is_detectable(&detectability_factor(&p.q), &p.a),
            "(ii)",
            &format!("{name} is not detectable"),
        )?;
    }

    let (x1, s1) = solve(&full, "X1", opts)?;
    let (x2, s2) = solve(&mid, "X2", opts)?;
    let (x3, s3) = solve(&last, "X3", opts)?;

    let closed = PartitionedMatrix::square(&full.a - &full.b * &x1.gain, sys.state_partition().clone())?;
    let estimator = closed.submatrix(2..=3, 1..=3)?.into_data();
    let mid_part = sys.state_partition().restrict(2..=3)?;
    let mid_closed = PartitionedMatrix::square(&mid.a - &mid.b * &x2.gain, mid_part.clone())?;
    let tail_estimator = mid_closed.submatrix(2..=2, 1..=2)?.into_data();

    let ctrl = DistributedController::from_parts(
        ControllerMode::ThreeVehicle,
        sys.state_partition().clone(),
        sys.input_partition().clone(),
        x1.gain.clone(),
        x2.gain.clone(),
        Some(x3.gain.clone()),
        estimator,
        Some(tail_estimator),
        theorem2_literal,
    )?;

    let x1p = PartitionedMatrix::square(x1.value, sys.state_partition().clone())?;
    let x2p = PartitionedMatrix::square(x2.value, mid_part)?;
    let w = sys.noise_blocks();
    let terms = vec![
        ("Tr(X1_11 W1)".into(), trace_product(&x1p.block(1, 1)?, &w[0])),
        ("Tr(X2_11 W2)".into(), trace_product(&x2p.block(1, 1)?, &w[1])),
        ("Tr(X3 W3)".into(), trace_product(&x3.value, &w[2])),
    ];
    Ok((ctrl, OptimalCostReport::from_terms(terms, vec![s1, s2, s3])))
}

/// LQR with full state information.
pub fn synth_centralized(
    sys: &ChainSystem,
    opts: &SolverOptions,
) -> Result<(StaticController, OptimalCostReport), SynthesisError> {
    let full = sys.problem();
    require(is_stabilizable(&full.a, &full.b), "(i)", "(A, B) is not stabilizable")?;
    require(
        is_detectable(&detectability_factor(&full.q), &full.a),
        "(iii)",
        "(Q, A) is not detectable",
    )?;
    let (x, s) = solve(&full, "X", opts)?;
    let ctrl = StaticController::unrestricted(
        x.gain,
        sys.state_partition().clone(),
        sys.input_partition().clone(),
    )?;
    let terms = vec![("Tr(X W)".into(), trace_product(&x.value, sys.w().data()))];
    Ok((ctrl, OptimalCostReport::from_terms(terms, vec![s])))
}

/// Each vehicle's own stage-cost weight, used by the local baseline.
///
/// `lead` acts on `x1`; `followers[i-2]` acts on `[x(i-1); xi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCosts {
    pub lead: DMatrix<f64>,
    pub followers: Vec<DMatrix<f64>>,
}

impl LocalCosts {
    /// Falls back to the diagonal blocks `Q11` and `Q[i-1:i, i-1:i]`.
    pub fn from_blocks(sys: &ChainSystem) -> Result<Self, SynthesisError> {
        let q = sys.q();
        let m = sys.subsystems();
        Ok(Self {
            lead: q.block(1, 1)?,
            followers: (2..=m)
                .map(|i| q.submatrix(i - 1..=i, i - 1..=i).map(|p| p.into_data()))
                .collect::<Result<_, _>>()?,
        })
    }
}

/// Local LQR baseline: vehicle `i` reads `x(i-1)` and `xi` only and treats the
/// preceding block as a measured, noise-free signal held at its current value.
pub fn synth_suboptimal_local(
    sys: &ChainSystem,
    costs: &LocalCosts,
    opts: &SolverOptions,
) -> Result<StaticController, SynthesisError> {
    let m = sys.subsystems();
    let sp = sys.state_partition();
    let ip = sys.input_partition();
    if costs.followers.len() != m - 1 {
        return Err(SynthesisError::Dimension(format!(
            "{} follower cost blocks for {m} subsystems",
            costs.followers.len()
        )));
    }
    let a = sys.a();
    let b = sys.b();
    let r = sys.r();
    let mut gain = PartitionedMatrix::zeros(ip.clone(), sp.clone());

    let lead = LqProblem {
        a: a.block(1, 1)?,
        b: b.block(1, 1)?,
        q: costs.lead.clone(),
        r: r.block(1, 1)?,
    };
    let (sol, _) = solve(&lead, "lead", opts)?;
    gain.set_block(1, 1, &sol.gain)?;

    for i in 2..=m {
        let n_prev = sp.size(i - 1)?;
        let n_own = sp.size(i)?;
        let own = &costs.followers[i - 2];
        if own.shape() != (n_prev + n_own, n_prev + n_own) {
            return Err(SynthesisError::Dimension(format!(
                "local cost of subsystem {i} is {:?}",
                own.shape()
            )));
        }
        let q_own = own.view((n_prev, n_prev), (n_own, n_own)).into_owned();
        let cross = own.view((n_prev, 0), (n_own, n_prev)).into_owned();
        let p = LqProblem {
            a: a.block(i, i)?,
            b: b.block(i, i)?,
            q: q_own,
            r: r.block(i, i)?,
        };
        let (sol, _) = solve(&p, "follower", opts)?;
        let coupling = a.block(i, i - 1)?;
        let feedforward = held_signal_gain(&p, &sol, &coupling, &cross)?;
        gain.set_block(i, i, &sol.gain)?;
        gain.set_block(i, i - 1, &feedforward)?;
    }

    let mask = (1..=m)
        .map(|i| (1..=m).map(|j| j == i || j + 1 == i).collect())
        .collect();
    StaticController::new(gain.into_data(), sp.clone(), ip.clone(), mask)
}

/// Gain on a constant measured signal `s` entering as `x+ = Ax + Bu + E s`
/// with stage cross-weight `2 x' S s`.
fn held_signal_gain(
    p: &LqProblem,
    sol: &RiccatiSolution,
    e: &DMatrix<f64>,
    s: &DMatrix<f64>,
) -> Result<DMatrix<f64>, SynthesisError> {
    let n = p.a.nrows();
    let acl = &p.a - &p.b * &sol.gain;
    let px = &sol.value;
    let lhs = DMatrix::identity(n, n) - acl.transpose();
    let rhs = s + acl.transpose() * px * e;
    let g = lhs.lu().solve(&rhs).ok_or(RiccatiError::Singular)?;
    let denom = &p.r + p.b.transpose() * px * &p.b;
    let num = p.b.transpose() * (px * e + g);
    Ok(denom.lu().solve(&num).ok_or(RiccatiError::Singular)?)
}

/// Stationary per-step cost `Tr(P W)` of a static gain, `P` solving
/// `P = Acl' P Acl + Q + L'RL`. `None` if the loop is unstable.
pub fn static_closed_loop_cost(sys: &ChainSystem, ctrl: &StaticController) -> Option<f64> {
    let a = sys.a().data();
    let b = sys.b().data();
    let l = ctrl.gain();
    let acl = a - b * l;
    let weight = sys.q().data() + l.transpose() * sys.r().data() * l;
    let p = stein(&acl, &weight)?;
    Some((p * sys.w().data()).trace())
}

/// Time-varying two-vehicle controller over a finite horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteHorizonTwoVehicle {
    states: Partition,
    inputs: Partition,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    x_schedule: RiccatiSchedule,
    y_schedule: RiccatiSchedule,
    w: Vec<DMatrix<f64>>,
    t: usize,
    eta: DVector<f64>,
}

pub fn synth_two_vehicle_finite(
    sys: &ChainSystem,
    horizon: usize,
) -> Result<FiniteHorizonTwoVehicle, SynthesisError> {
    require_blocks(sys, 2)?;
    let full = sys.problem();
    let tail = sys.subproblem(2..=2)?;
    let xs = riccati_finite(&full.a, &full.b, &full.q, &full.r, &full.q, horizon)?;
    let ys = riccati_finite(&tail.a, &tail.b, &tail.q, &tail.r, &tail.q, horizon)?;
    Ok(FiniteHorizonTwoVehicle {
        states: sys.state_partition().clone(),
        inputs: sys.input_partition().clone(),
        a: full.a,
        b: full.b,
        x_schedule: xs,
        y_schedule: ys,
        w: sys.noise_blocks(),
        t: 0,
        eta: DVector::zeros(sys.state_partition().sizes()[1]),
    })
}

impl FiniteHorizonTwoVehicle {
    pub fn horizon(&self) -> usize {
        self.x_schedule.horizon()
    }

    pub fn x_schedule(&self) -> &RiccatiSchedule {
        &self.x_schedule
    }

    pub fn y_schedule(&self) -> &RiccatiSchedule {
        &self.y_schedule
    }

    /// `sum_t Tr(X11(t+1) W1) + Tr(Y(t+1) W2)` for `x(0) = 0`.
    pub fn analytical_cost(&self) -> f64 {
        let n1 = self.states.sizes()[0];
        (0..self.horizon())
            .map(|t| {
                let x11 = self.x_schedule.values[t + 1].view((0, 0), (n1, n1)).into_owned();
                (x11 * &self.w[0]).trace() + (&self.y_schedule.values[t + 1] * &self.w[1]).trace()
            })
            .sum()
    }
}

impl Controller for FiniteHorizonTwoVehicle {
    fn state_dim(&self) -> usize {
        self.states.total()
    }

    fn input_dim(&self) -> usize {
        self.inputs.total()
    }

    fn reset(&mut self) {
        self.t = 0;
        self.eta.fill(0.0);
    }

    fn step(&mut self, x: &DVector<f64>) -> Result<DVector<f64>, SynthesisError> {
        check_len(self.states.total(), x)?;
        if self.t >= self.horizon() {
            return Err(SynthesisError::Dimension(format!(
                "time {} is past the horizon {}",
                self.t,
                self.horizon()
            )));
        }
        let n1 = self.states.sizes()[0];
        let n2 = self.states.sizes()[1];
        let m1 = self.inputs.sizes()[0];
        let l1 = &self.x_schedule.gains[self.t];
        let l2 = &self.y_schedule.gains[self.t];
        let x1 = x.rows(0, n1).into_owned();
        let x2 = x.rows(n1, n2).into_owned();
        let zeta = stack(&[&x1, &self.eta]);
        let mut u = -(l1 * &zeta);
        let corr = l2 * (&x2 - &self.eta);
        {
            let mut tail = u.rows_mut(m1, corr.len());
            tail -= corr;
        }
        let closed = &self.a - &self.b * l1;
        self.eta = closed.rows(n1, n2) * zeta;
        self.t += 1;
        Ok(u)
    }

    fn shift(&mut self, delta: &DVector<f64>) {
        let n1 = self.states.sizes()[0];
        self.eta += delta.rows(n1, self.eta.len());
    }
}
