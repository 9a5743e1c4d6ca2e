//! Synthetic data and simulated users with hidden preferences.
//!
//! Stands in for human participants: a [`SimulatedUser`] holds true weights
//! `w*`, answers choice queries and rates plans, and [`run_benchmark`] drives
//! full sessions with such users to measure regret against the exact optimum.

mod benchmark;
mod data;
mod oracle;
mod user;

use thiserror::Error;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkReport, BenchmarkRow, RoundSummary, BenchmarkSummary};
pub use data::{gen_dataset, LabelRule, RuleTerm, SyntheticDataSpec};
pub use oracle::{oracle_check, random_instance, OracleConfig, OracleInstance, OracleOutcome, OracleReport, ORACLE_TOLERANCE};
pub use user::{calibrate_thresholds, regret, sim_choose, sim_rate, SimulatedUser};

use crate::classifier::ClassifierError;
use crate::dataset::DatasetError;
use crate::elicitation::ElicitationError;
use crate::recourse::RecourseError;
use crate::schema::SchemaError;
use crate::session::SessionError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimulationError {
    #[error("n_rows must be positive")]
    EmptyDataset,
    #[error("label noise must lie in [0, 0.5), got {0}")]
    InvalidNoise(f64),
    #[error("label rule: {0}")]
    InvalidRule(String),
    #[error("labels stayed single-class after {0} threshold retries")]
    DegenerateLabels(usize),
    #[error("rating cutpoints must be four strictly ascending finite values")]
    InvalidThresholds,
    #[error("true weights must lie on the simplex")]
    InvalidTrueWeights,
    #[error("plan is cheaper than the oracle optimum by {0}")]
    BelowOptimum(f64),
    #[error("benchmark configuration: {0}")]
    InvalidConfig(String),
    #[error("no rejected profile available for the benchmark")]
    NoProfiles,
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error(transparent)]
    Elicitation(#[from] ElicitationError),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
}

#[cfg(test)]
mod tests;
