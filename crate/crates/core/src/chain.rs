//! Chain-structured linear systems `x(t+1) = A x(t) + B u(t) + w(t)` with a
//! block lower-bidiagonal `A`, block-diagonal `B` and `W`, and a quadratic
//! stage cost `x'Qx + u'Ru`.

use alloc::format;
use alloc::vec::Vec;
use core::ops::RangeInclusive;

use nalgebra::DMatrix;

use crate::blocks::{Partition, PartitionedMatrix};
use crate::error::ModelError;
use crate::linalg::min_symmetric_eigenvalue;

/// Tolerance on negative eigenvalues when checking semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;

/// An unstructured LQ problem `(A, B, Q, R)`, e.g. a sub-chain.
#[derive(Debug, Clone, PartialEq)]
pub struct LqProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSystem {
    a: PartitionedMatrix,
    b: PartitionedMatrix,
    q: PartitionedMatrix,
    r: PartitionedMatrix,
    w: PartitionedMatrix,
}

impl ChainSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        w: DMatrix<f64>,
        states: Partition,
        inputs: Partition,
    ) -> Result<Self, ModelError> {
        if states.len() < 2 {
            return Err(ModelError::TooFewSubsystems(states.len()));
        }
        if states.len() != inputs.len() {
            return Err(ModelError::Structure(format!(
                "{} state blocks but {} input blocks",
                states.len(),
                inputs.len()
            )));
        }
        let a = PartitionedMatrix::square(a, states.clone())?;
        let b = PartitionedMatrix::new(b, states.clone(), inputs.clone())?;
        let q = PartitionedMatrix::square(q, states.clone())?;
        let r = PartitionedMatrix::square(r, inputs)?;
        let w = PartitionedMatrix::square(w, states)?;

        if !a.is_block_lower_bidiagonal() {
            return Err(ModelError::Structure("A must be block lower-bidiagonal".into()));
        }
        if !b.is_block_diagonal() {
            return Err(ModelError::Structure("B must be block diagonal".into()));
        }
        if !w.is_block_diagonal() {
            return Err(ModelError::Structure("W must be block diagonal".into()));
        }
        check_psd("Q", q.data())?;
        check_psd("W", w.data())?;
        let rmin = min_symmetric_eigenvalue(r.data());
        if rmin <= 0.0 {
            return Err(ModelError::IndefiniteWeights { matrix: "R", eigenvalue: rmin });
        }
        Ok(Self { a, b, q, r, w })
    }

    /// Number of subsystems `M`.
    pub fn subsystems(&self) -> usize {
        self.a.row_partition().len()
    }

    pub fn state_partition(&self) -> &Partition {
        self.a.row_partition()
    }

    pub fn input_partition(&self) -> &Partition {
        self.b.col_partition()
    }

    pub fn states(&self) -> usize {
        self.state_partition().total()
    }

    pub fn inputs(&self) -> usize {
        self.input_partition().total()
    }

    pub fn a(&self) -> &PartitionedMatrix {
        &self.a
    }

    pub fn b(&self) -> &PartitionedMatrix {
        &self.b
    }

    pub fn q(&self) -> &PartitionedMatrix {
        &self.q
    }

    pub fn r(&self) -> &PartitionedMatrix {
        &self.r
    }

    pub fn w(&self) -> &PartitionedMatrix {
        &self.w
    }

    /// Same dynamics and weights with a different noise covariance.
    pub fn with_noise(&self, w: DMatrix<f64>) -> Result<Self, ModelError> {
        Self::new(
            self.a.data().clone(),
            self.b.data().clone(),
            self.q.data().clone(),
            self.r.data().clone(),
            w,
            self.state_partition().clone(),
            self.input_partition().clone(),
        )
    }

    /// The full problem `(A, B, Q, R)`.
    pub fn problem(&self) -> LqProblem {
        LqProblem {
            a: self.a.data().clone(),
            b: self.b.data().clone(),
            q: self.q.data().clone(),
            r: self.r.data().clone(),
        }
    }

    /// `(A, B, Q, R)[k:l, k:l]`, the sub-chain of subsystems `range`.
    pub fn subproblem(&self, range: RangeInclusive<usize>) -> Result<LqProblem, ModelError> {
        Ok(LqProblem {
            a: self.a.submatrix(range.clone(), range.clone())?.into_data(),
            b: self.b.submatrix(range.clone(), range.clone())?.into_data(),
            q: self.q.submatrix(range.clone(), range.clone())?.into_data(),
            r: self.r.submatrix(range.clone(), range)?.into_data(),
        })
    }

    /// Noise covariance blocks `W_1, ..., W_M`.
    pub fn noise_blocks(&self) -> Vec<DMatrix<f64>> {
        (1..=self.subsystems())
            .map(|i| self.w.block(i, i).expect("valid block"))
            .collect()
    }
}

fn check_psd(name: &'static str, m: &DMatrix<f64>) -> Result<(), ModelError> {
    let asym = (m - m.transpose()).abs().max();
    if asym > PSD_TOL * m.abs().max().max(1.0) {
        return Err(ModelError::Structure(format!("{name} is not symmetric")));
    }
    let min = min_symmetric_eigenvalue(m);
    if min < -PSD_TOL * m.abs().max().max(1.0) {
        return Err(ModelError::IndefiniteWeights { matrix: name, eigenvalue: min });
    }
    Ok(())
}

/// Scalar-block chain helper: every subsystem has one state and one input.
pub fn scalar_chain(
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    w: DMatrix<f64>,
) -> Result<ChainSystem, ModelError> {
    let m = a.nrows();
    ChainSystem::new(a, b, q, r, w, Partition::scalar(m)?, Partition::scalar(m)?)
}
