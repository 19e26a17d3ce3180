use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("partition has no blocks")]
    EmptyPartition,
    #[error("block {index} has size zero")]
    ZeroBlock { index: usize },
    #[error("block index {index} out of range 1..={count}")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("inverted block range {start}..={end}")]
    InvertedRange { start: usize, end: usize },
    #[error("matrix is {rows}x{cols}, partitions require {expected_rows}x{expected_cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected_rows: usize,
        expected_cols: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("a chain needs at least two subsystems, got {0}")]
    TooFewSubsystems(usize),
    #[error("invalid parameter {name} = {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("weights give an indefinite {matrix}: eigenvalue {eigenvalue:e}")]
    IndefiniteWeights { matrix: &'static str, eigenvalue: f64 },
    #[error("chain structure violated: {0}")]
    Structure(String),
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiccatiError {
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("R + B'XB is singular")]
    Singular,
    #[error("(A, B) is not stabilizable")]
    NotStabilizable,
    #[error("(Q, A) is not detectable")]
    NotDetectable,
    #[error("Riccati iteration did not converge in {iterations} iterations (last step {residual:e})")]
    Divergence { iterations: usize, residual: f64 },
    #[error("trajectory violates the dynamics at step {step} by {residual:e}")]
    InconsistentTrajectory { step: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("assumption {which} fails: {detail}")]
    Assumption { which: &'static str, detail: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Riccati(#[from] RiccatiError),
    #[error(transparent)]
    Block(#[from] BlockError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("state norm {norm:e} exceeded the divergence bound at step {step}")]
    Diverged { step: usize, norm: f64 },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
}
