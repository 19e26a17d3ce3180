//! Optimal decentralized linear-quadratic control for chain-structured
//! systems with partially nested information, plus a linearized
//! heavy-duty-vehicle platoon model to evaluate it on.
//!
//! The crate is `no_std` and only needs `alloc`. The `parallel` feature runs
//! Monte Carlo replications on rayon. File formats and the command line live
//! in the `chain-lqg-cli` crate.

#![no_std]
#![cfg_attr(not(test), deny(missing_debug_implementations))]
// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod blocks;
pub mod chain;
pub mod error;
pub mod linalg;
pub mod platoon;
pub mod riccati;
pub mod simulate;
pub mod synthesis;
pub mod verify;

pub use blocks::{Partition, PartitionedMatrix};
pub use error::{BlockError, ModelError, RiccatiError, SimulationError, SynthesisError};
