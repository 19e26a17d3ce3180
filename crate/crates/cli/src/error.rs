use chain_lqg::verify::VerifyError;
use chain_lqg::{ModelError, RiccatiError, SimulationError, SynthesisError};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const VERIFY_FAILED: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const ASSUMPTION: u8 = 3;
    pub const NUMERICAL: u8 = 4;
    pub const IO: u8 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Assumption(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Assumption(_) => exit::ASSUMPTION,
            CliError::Numerical(_) => exit::NUMERICAL,
            CliError::Io(_) => exit::IO,
            CliError::Verification(_) => exit::VERIFY_FAILED,
        }
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<RiccatiError> for CliError {
    fn from(e: RiccatiError) -> Self {
        match e {
            RiccatiError::Dimension(_) => CliError::Config(e.to_string()),
            RiccatiError::NotStabilizable | RiccatiError::NotDetectable => {
                CliError::Assumption(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Assumption { .. } => CliError::Assumption(e.to_string()),
            SynthesisError::Riccati(r) => r.into(),
            SynthesisError::Model(m) => m.into(),
            SynthesisError::Dimension(_) | SynthesisError::Block(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Diverged { .. } => CliError::Numerical(e.to_string()),
            SimulationError::Synthesis(s) => s.into(),
            SimulationError::Scenario(_) | SimulationError::Dimension(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Synthesis(s) => s.into(),
            VerifyError::Simulation(s) => s.into(),
        }
    }
}
