//! JSON layout for synthesized controllers.
//!
//! ```json
//! {
//!   "format": "chain-lqg-controller",
//!   "version": 1,
//!   "mode": "three",
//!   "state_partition": [2, 2, 2],
//!   "input_partition": [1, 1, 1],
//!   "controller": { "kind": "distributed", "l1": {...}, ... },
//!   "report": { "analytical_cost": ..., "trace_terms": [...], "riccati": [...] }
//! }
//! ```
//!
//! Matrices are `{"rows": r, "cols": c, "data": [...]}` with `data` row-major.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use chain_lqg::chain::ChainSystem;
use chain_lqg::synthesis::{
    AnyController, ControllerMode, DistributedController, OptimalCostReport, StaticController,
};
use chain_lqg::Partition;

use crate::error::CliError;

pub const FORMAT: &str = "chain-lqg-controller";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Two,
    Three,
    Centralized,
    Suboptimal,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Two => "two",
            Mode::Three => "three",
            Mode::Centralized => "centralized",
            Mode::Suboptimal => "suboptimal",
        }
    }

    /// Column label used in metrics output.
    pub fn label(self) -> &'static str {
        match self {
            Mode::Two | Mode::Three => "decentralized",
            Mode::Centralized => "centralized",
            Mode::Suboptimal => "suboptimal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for Matrix {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }
}

impl Matrix {
    pub fn to_dmatrix(&self) -> Result<DMatrix<f64>, CliError> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Config(format!(
                "matrix declares {}x{} but holds {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Body {
    Distributed {
        l1: Matrix,
        l2: Matrix,
        l3: Option<Matrix>,
        estimator: Matrix,
        tail_estimator: Option<Matrix>,
        theorem2_literal: bool,
    },
    Static {
        gain: Matrix,
        mask: Vec<Vec<bool>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiccatiEntry {
    pub label: String,
    pub residual: f64,
    pub iterations: usize,
    pub closed_loop_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub analytical_cost: f64,
    pub trace_terms: Vec<(String, f64)>,
    pub riccati: Vec<RiccatiEntry>,
}

impl From<&OptimalCostReport> for Report {
    fn from(r: &OptimalCostReport) -> Self {
        Self {
            analytical_cost: r.analytical_cost,
            trace_terms: r.trace_terms.clone(),
            riccati: r
                .riccati
                .iter()
                .map(|s| RiccatiEntry {
                    label: s.label.into(),
                    residual: s.residual,
                    iterations: s.iterations,
                    closed_loop_radius: s.closed_loop_radius,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerFile {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub state_partition: Vec<usize>,
    pub input_partition: Vec<usize>,
    pub controller: Body,
    /// Absent when no closed-form cost applies.
    pub report: Option<Report>,
}

impl ControllerFile {
    pub fn new(mode: Mode, ctrl: &AnyController, report: Option<&OptimalCostReport>) -> Self {
        let (states, inputs, controller) = match ctrl {
            AnyController::Distributed(c) => {
                let (l1, l2, l3) = c.gains();
                (
                    c.state_partition(),
                    c.input_partition(),
                    Body::Distributed {
                        l1: l1.into(),
                        l2: l2.into(),
                        l3: l3.map(Into::into),
                        estimator: c.estimator().into(),
                        tail_estimator: c.tail_estimator().map(Into::into),
                        theorem2_literal: c.theorem2_literal(),
                    },
                )
            }
            AnyController::Static(c) => (
                c.state_partition(),
                c.input_partition(),
                Body::Static {
                    gain: c.gain().into(),
                    mask: c.mask().to_vec(),
                },
            ),
        };
        Self {
            format: FORMAT.into(),
            version: VERSION,
            mode,
            state_partition: states.sizes().to_vec(),
            input_partition: inputs.sizes().to_vec(),
            controller,
            report: report.map(Into::into),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("controller serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let file: ControllerFile = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid controller file: {e}")))?;
        if file.format != FORMAT || file.version != VERSION {
            return Err(CliError::Config(format!(
                "unsupported controller format {} v{}",
                file.format, file.version
            )));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Rebuilds the controller after checking it fits `sys`.
    pub fn controller_for(&self, sys: &ChainSystem) -> Result<AnyController, CliError> {
        if self.state_partition != sys.state_partition().sizes()
            || self.input_partition != sys.input_partition().sizes()
        {
            return Err(CliError::Config(format!(
                "controller partitions {:?}/{:?} do not match the model's {:?}/{:?}",
                self.state_partition,
                self.input_partition,
                sys.state_partition().sizes(),
                sys.input_partition().sizes()
            )));
        }
        let states = Partition::new(self.state_partition.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        let inputs = Partition::new(self.input_partition.clone()).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(match &self.controller {
            Body::Distributed { l1, l2, l3, estimator, tail_estimator, theorem2_literal } => {
                let mode = match self.mode {
                    Mode::Two => ControllerMode::TwoVehicle,
                    Mode::Three => ControllerMode::ThreeVehicle,
                    m => {
                        return Err(CliError::Config(format!(
                            "mode {} cannot carry a distributed controller",
                            m.name()
                        )))
                    }
                };
                AnyController::Distributed(DistributedController::from_parts(
                    mode,
                    states,
                    inputs,
                    l1.to_dmatrix()?,
                    l2.to_dmatrix()?,
                    l3.as_ref().map(Matrix::to_dmatrix).transpose()?,
                    estimator.to_dmatrix()?,
                    tail_estimator.as_ref().map(Matrix::to_dmatrix).transpose()?,
                    *theorem2_literal,
                )?)
            }
            Body::Static { gain, mask } => {
                AnyController::Static(StaticController::new(gain.to_dmatrix()?, states, inputs, mask.clone())?)
            }
        })
    }
}
