//! Discrete Riccati recursions, the stationary solution, and the PBH tests
//! that gate them.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::error::RiccatiError;
use crate::linalg::{eigenvalues, norm_inf, psd_factor, quad_form, spectral_radius, stein, symmetrize};

/// Eigenvalues of `Q` below this are discarded when forming a detectability factor.
pub const FACTOR_FLOOR: f64 = 1e-12;
/// Relative singular-value threshold of the PBH rank test.
pub const RANK_TOL: f64 = 1e-8;
/// Modes with modulus at or above this are treated as not asymptotically stable.
const UNSTABLE_MODULUS: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Stop once successive iterates differ by less than `tol * max(1, |X|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 1_000_000,
        }
    }
}

/// Stationary solution of the discrete algebraic Riccati equation.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub value: DMatrix<f64>,
    pub gain: DMatrix<f64>,
    /// `|X - Ricc(X)|` in the induced infinity norm.
    pub residual: f64,
    pub iterations: usize,
}

/// Backward recursion over a finite horizon. `values[t]` is `P(t)` for
/// `t = 0..=N` and `gains[t]` is `L(t)` for `t = 0..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSchedule {
    pub values: Vec<DMatrix<f64>>,
    pub gains: Vec<DMatrix<f64>>,
}

impl RiccatiSchedule {
    pub fn horizon(&self) -> usize {
        self.gains.len()
    }
}

fn check_dims(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(), RiccatiError> {
    let n = a.nrows();
    let ok = a.is_square()
        && b.nrows() == n
        && q.shape() == (n, n)
        && r.shape() == (b.ncols(), b.ncols());
    if ok {
        Ok(())
    } else {
        Err(RiccatiError::Dimension(format!(
            "A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )))
    }
}

/// `L = (R + B'PB)^{-1} B'PA`.
pub fn gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>, RiccatiError> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let rhs = pb.transpose() * a;
    s.lu().solve(&rhs).ok_or(RiccatiError::Singular)
}

/// One backward step `P -> A'PA + Q - A'PB (B'PB + R)^{-1} B'PA`, returning
/// the new value and the gain built from `P`.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), RiccatiError> {
    let l = gain(a, b, r, p)?;
    let pa = p * a;
    let mut next = a.transpose() * &pa + q - (b.transpose() * &pa).transpose() * &l;
    symmetrize(&mut next);
    Ok((next, l))
}

pub fn riccati_finite(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    terminal: &DMatrix<f64>,
    horizon: usize,
) -> Result<RiccatiSchedule, RiccatiError> {
    check_dims(a, b, q, r)?;
    if terminal.shape() != q.shape() {
        return Err(RiccatiError::Dimension(format!(
            "terminal weight {:?} vs Q {:?}",
            terminal.shape(),
            q.shape()
        )));
    }
    let mut values = alloc::vec![DMatrix::zeros(0, 0); horizon + 1];
    let mut gains = alloc::vec![DMatrix::zeros(0, 0); horizon];
    values[horizon] = terminal.clone();
    for t in (0..horizon).rev() {
        let (p, l) = riccati_step(a, b, q, r, &values[t + 1])?;
        values[t] = p;
        gains[t] = l;
    }
    Ok(RiccatiSchedule { values, gains })
}

/// Fixed-point residual `|X - Ricc(X)|`.
pub fn dare_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<f64, RiccatiError> {
    let (next, _) = riccati_step(a, b, q, r, x)?;
    Ok(norm_inf(&(x - next)))
}

/// Stabilizing solution by iterating the backward recursion from `X = Q`.
pub fn riccati_infinite(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: &SolverOptions,
) -> Result<RiccatiSolution, RiccatiError> {
    check_dims(a, b, q, r)?;
    if !is_stabilizable(a, b) {
        return Err(RiccatiError::NotStabilizable);
    }
    if !is_detectable(&detectability_factor(q), a) {
        return Err(RiccatiError::NotDetectable);
    }
    let mut x = q.clone();
    let mut step = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (next, _) = riccati_step(a, b, q, r, &x)?;
        step = norm_inf(&(&next - &x));
        let scale = norm_inf(&next).max(1.0);
        x = next;
        if !step.is_finite() {
            break;
        }
        if step <= opts.tol * scale {
            let (x, residual) = refine(a, b, q, r, x)?;
            let l = gain(a, b, r, &x)?;
            return Ok(RiccatiSolution {
                value: x,
                gain: l,
                residual,
                iterations: it,
            });
        }
    }
    Err(RiccatiError::Divergence {
        iterations: opts.max_iter,
        residual: step,
    })
}

/// Newton (Hewer) polish: `X <- stein(A - BL, Q + L'RL)` while the
/// residual keeps dropping.
fn refine(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    mut x: DMatrix<f64>,
) -> Result<(DMatrix<f64>, f64), RiccatiError> {
    let mut residual = dare_residual(a, b, q, r, &x)?;
    for _ in 0..8 {
        let l = gain(a, b, r, &x)?;
        let weight = q + l.transpose() * r * &l;
        let Some(next) = stein(&(a - b * &l), &weight) else {
            break;
        };
        let next_residual = dare_residual(a, b, q, r, &next)?;
        if !(next_residual < residual) {
            break;
        }
        x = next;
        residual = next_residual;
    }
    Ok((x, residual))
}

fn complexify(m: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    m.map(|v| Complex::new(v, 0.0))
}

fn full_row_rank(m: &DMatrix<Complex<f64>>) -> bool {
    let rows = m.nrows();
    if rows == 0 {
        return true;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let largest = sv.max();
    if largest == 0.0 {
        return false;
    }
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * largest).count();
    rank >= rows
}

/// PBH test: `[A - lambda I, B]` has full row rank at every eigenvalue of `A`
/// with `|lambda| >= 1`.
pub fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let ac = complexify(a);
    let bc = complexify(b);
    for lambda in eigenvalues(a) {
        if lambda.modulus() < UNSTABLE_MODULUS {
            continue;
        }
        let mut pencil = DMatrix::zeros(n, n + b.ncols());
        pencil.view_mut((0, 0), (n, n)).copy_from(&ac);
        for i in 0..n {
            pencil[(i, i)] -= lambda;
        }
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        if !full_row_rank(&pencil) {
            return false;
        }
    }
    true
}

/// Dual PBH test for `(C, A)`.
pub fn is_detectable(c: &DMatrix<f64>, a: &DMatrix<f64>) -> bool {
    is_stabilizable(&a.transpose(), &c.transpose())
}

/// `C` with `C'C = Q`, dropping directions with eigenvalue below [`FACTOR_FLOOR`].
pub fn detectability_factor(q: &DMatrix<f64>) -> DMatrix<f64> {
    psd_factor(q, FACTOR_FLOOR)
}

/// Closed-loop spectral radius of `A - BL`.
pub fn closed_loop_radius(a: &DMatrix<f64>, b: &DMatrix<f64>, l: &DMatrix<f64>) -> f64 {
    spectral_radius(&(a - b * l))
}

/// A recorded trajectory: `states` has one more entry than `inputs` and `noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub noise: Vec<DVector<f64>>,
}

/// Both sides of the completed-square cost identity for a recorded trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentitySides {
    /// `x(N)'P(N)x(N) + sum x'Qx + u'Ru`.
    pub cost: f64,
    /// `x(0)'P(0)x(0) + sum (u+Lx)'(B'PB+R)(u+Lx) + 2w'P(Ax+Bu) + w'Pw`.
    pub completed: f64,
}

pub fn completed_square_sides(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    schedule: &RiccatiSchedule,
    traj: &Trajectory,
) -> Result<IdentitySides, RiccatiError> {
    let n = schedule.horizon();
    if traj.inputs.len() != n || traj.noise.len() != n || traj.states.len() != n + 1 {
        return Err(RiccatiError::Dimension(format!(
            "horizon {n}, trajectory with {} states, {} inputs, {} noise samples",
            traj.states.len(),
            traj.inputs.len(),
            traj.noise.len()
        )));
    }
    for t in 0..n {
        let (x, u, w) = (&traj.states[t], &traj.inputs[t], &traj.noise[t]);
        let pred = a * x + b * u + w;
        let miss = (&traj.states[t + 1] - pred).amax();
        let scale = traj.states[t + 1].amax().max(1.0);
        if miss > 1e-10 * scale {
            return Err(RiccatiError::InconsistentTrajectory { step: t, residual: miss });
        }
    }

    let mut cost = quad_form(&schedule.values[n], &traj.states[n]);
    let mut completed = quad_form(&schedule.values[0], &traj.states[0]);
    for t in 0..n {
        let (x, u, w) = (&traj.states[t], &traj.inputs[t], &traj.noise[t]);
        let p1 = &schedule.values[t + 1];
        cost += quad_form(q, x) + quad_form(r, u);
        let v = u + &schedule.gains[t] * x;
        let s = r + b.transpose() * p1 * b;
        completed += quad_form(&s, &v);
        completed += 2.0 * w.dot(&(p1 * (a * x + b * u)));
        completed += quad_form(p1, w);
    }
    Ok(IdentitySides { cost, completed })
}

/// `|LHS - RHS|` of the completed-square identity.
pub fn completed_square_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    schedule: &RiccatiSchedule,
    traj: &Trajectory,
) -> Result<f64, RiccatiError> {
    let s = completed_square_sides(a, b, q, r, schedule, traj)?;
    Ok((s.cost - s.completed).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn s(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn zero_dynamics_schedule() {
        let sch = riccati_finite(&s(0.0), &s(1.0), &s(2.0), &s(1.0), &s(2.0), 4).unwrap();
        for p in &sch.values {
            assert_eq!(p[(0, 0)], 2.0);
        }
        for l in &sch.gains {
            assert_eq!(l[(0, 0)], 0.0);
        }
    }

    #[test]
    fn one_step_scalar() {
        let sch = riccati_finite(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &s(1.0), 1).unwrap();
        assert_relative_eq!(sch.values[0][(0, 0)], 1.5, epsilon = 1e-15);
        assert_relative_eq!(sch.gains[0][(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn uncontrolled_accumulates() {
        let sch = riccati_finite(&s(0.5), &s(0.0), &s(1.0), &s(1.0), &s(1.0), 3).unwrap();
        // P(2) = 1.25, P(1) = 1.3125, P(0) = 1.328125
        assert_relative_eq!(sch.values[0][(0, 0)], 1.328125, epsilon = 1e-15);
        assert!(sch.gains.iter().all(|l| l[(0, 0)] == 0.0));
    }

    #[test]
    fn golden_ratio() {
        let sol = riccati_infinite(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &SolverOptions::default()).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert_relative_eq!(sol.value[(0, 0)], phi, epsilon = 1e-11);
        assert_relative_eq!(sol.gain[(0, 0)], phi - 1.0, epsilon = 1e-11);
        assert!(sol.residual < 1e-12);
    }

    #[test]
    fn zero_dynamics_infinite() {
        let sol = riccati_infinite(&s(0.0), &s(1.0), &s(3.0), &s(1.0), &SolverOptions::default()).unwrap();
        assert_eq!(sol.value[(0, 0)], 3.0);
        assert_eq!(sol.gain[(0, 0)], 0.0);
    }

    #[test]
    fn stable_uncontrolled_lyapunov() {
        let sol = riccati_infinite(&s(0.5), &s(0.0), &s(1.0), &s(1.0), &SolverOptions::default()).unwrap();
        assert_relative_eq!(sol.value[(0, 0)], 4.0 / 3.0, epsilon = 1e-11);
    }

    #[test]
    fn unstable_uncontrolled_rejected() {
        let err = riccati_infinite(&s(2.0), &s(0.0), &s(1.0), &s(1.0), &SolverOptions::default()).unwrap_err();
        assert_eq!(err, RiccatiError::NotStabilizable);
        let err = riccati_infinite(&s(2.0), &s(1.0), &s(0.0), &s(1.0), &SolverOptions::default()).unwrap_err();
        assert_eq!(err, RiccatiError::NotDetectable);
    }

    #[test]
    fn iteration_budget_reported() {
        let opts = SolverOptions { tol: 1e-12, max_iter: 3 };
        let err = riccati_infinite(&s(1.0), &s(1.0), &s(1.0), &s(1.0), &opts).unwrap_err();
        assert!(matches!(err, RiccatiError::Divergence { iterations: 3, .. }));
    }

    #[test]
    fn pbh_cases() {
        assert!(is_stabilizable(&s(2.0), &s(1.0)));
        assert!(!is_stabilizable(&s(2.0), &s(0.0)));
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        assert!(is_stabilizable(&a, &DMatrix::from_column_slice(2, 1, &[0.0, 1.0])));
        assert!(!is_stabilizable(&a, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0])));
        // marginal mode on the unit circle needs to be reachable
        assert!(!is_stabilizable(&s(1.0), &s(0.0)));
        assert!(is_detectable(&s(1.0), &s(2.0)));
        assert!(!is_detectable(&DMatrix::zeros(0, 1), &s(2.0)));
        assert!(is_detectable(&DMatrix::zeros(0, 1), &s(0.5)));
        // rotation: complex unstable pair
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.2, 1.2, 0.0]);
        assert!(is_stabilizable(&rot, &DMatrix::from_column_slice(2, 1, &[1.0, 0.0])));
        assert!(!is_stabilizable(&rot, &DMatrix::zeros(2, 1)));
    }

    #[test]
    fn identity_trivial_trajectories() {
        let (a, b, q, r) = (s(0.9), s(1.0), s(1.0), s(1.0));
        let sch = riccati_finite(&a, &b, &q, &r, &q, 1).unwrap();
        let zero = DVector::zeros(1);
        let traj = Trajectory {
            states: alloc::vec![zero.clone(), zero.clone()],
            inputs: alloc::vec![zero.clone()],
            noise: alloc::vec![zero.clone()],
        };
        let sides = completed_square_sides(&a, &b, &q, &r, &sch, &traj).unwrap();
        assert_eq!((sides.cost, sides.completed), (0.0, 0.0));

        let w = DVector::from_element(1, 0.7);
        let traj = Trajectory {
            states: alloc::vec![zero.clone(), w.clone()],
            inputs: alloc::vec![zero.clone()],
            noise: alloc::vec![w.clone()],
        };
        let sides = completed_square_sides(&a, &b, &q, &r, &sch, &traj).unwrap();
        let expect = 0.49 * sch.values[1][(0, 0)];
        assert_relative_eq!(sides.cost, expect, epsilon = 1e-15);
        assert_relative_eq!(sides.completed, expect, epsilon = 1e-15);
    }

    #[test]
    fn identity_rejects_inconsistent_trajectory() {
        let (a, b, q, r) = (s(0.9), s(1.0), s(1.0), s(1.0));
        let sch = riccati_finite(&a, &b, &q, &r, &q, 1).unwrap();
        let traj = Trajectory {
            states: alloc::vec![DVector::zeros(1), DVector::from_element(1, 1.0)],
            inputs: alloc::vec![DVector::zeros(1)],
            noise: alloc::vec![DVector::zeros(1)],
        };
        assert!(matches!(
            completed_square_residual(&a, &b, &q, &r, &sch, &traj),
            Err(RiccatiError::InconsistentTrajectory { step: 0, .. })
        ));
    }
}
