//! Config-driven sweeps, CSV output and the verification suite behind `htq`.

pub mod acceptance;
pub mod analysis;
pub mod config;
pub mod sweep;
pub mod verify;

pub use analysis::{analyze_chain, analyze_chain_file, ChainAnalysis};
pub use config::{ExperimentConfig, FamilySpec, ModelKind};
pub use sweep::{run_sweep, SweepOutcome, SweepSummary};
pub use verify::{verify, verify_with, Check, Level, Report};

use crate::arrival::ArrivalError;
use crate::markov::MarkovError;
use crate::ssq::SsqError;
use crate::switch::SwitchError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config field `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Ssq(#[from] SsqError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Arrival(#[from] ArrivalError),
    #[error(transparent)]
    Markov(#[from] MarkovError),
}

impl HarnessError {
    /// Errors caused by the input files rather than by a run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::ConfigInvalid { .. }
                | HarnessError::Parse(_)
                | HarnessError::Io(_)
                | HarnessError::Arrival(_)
                | HarnessError::Markov(_)
                | HarnessError::Ssq(SsqError::ConfigInvalid(_))
                | HarnessError::Switch(SwitchError::ConfigInvalid(_))
        )
    }
}
