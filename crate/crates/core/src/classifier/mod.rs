//! The black-box decision model: two MLPs that must both approve.

mod checkpoint;
mod mlp;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{FeatureSet, SchemaError, UserProfile};

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{logistic, Dense, Gradient, MlpModel};
pub use train::{train_ensemble, train_member, TrainConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ClassifierError {
    #[error("input has {got} coordinates, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("model parameters must be finite")]
    NonFinite,
    #[error("threshold {0} must lie strictly between 0 and 1")]
    Threshold(f64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset contains a single class")]
    SingleClass,
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    Divergence { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Anything that labels encoded profiles as approved (1) or rejected (0).
pub trait Classifier: Send + Sync {
    fn input_dim(&self) -> usize;

    fn predict_encoded(&self, encoded: &[f64]) -> u8;

    fn predict(&self, x: &UserProfile, schema: &FeatureSet) -> Result<u8, SchemaError> {
        Ok(self.predict_encoded(&schema.encode(x)?))
    }
}

/// Grants only when both members' probabilities exceed the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleClassifier {
    members: [MlpModel; 2],
    threshold: f64,
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

impl EnsembleClassifier {
    pub fn new(members: [MlpModel; 2], threshold: f64) -> Result<Self, ClassifierError> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(ClassifierError::Threshold(threshold));
        }
        if members[0].input_dim() != members[1].input_dim() {
            return Err(ClassifierError::Shape(format!(
                "members disagree on input dimension ({} vs {})",
                members[0].input_dim(),
                members[1].input_dim()
            )));
        }
        Ok(EnsembleClassifier { members, threshold })
    }

    pub fn members(&self) -> &[MlpModel; 2] {
        &self.members
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Both member probabilities for an encoded profile.
    pub fn probabilities(&self, encoded: &[f64]) -> Result<[f64; 2], ClassifierError> {
        Ok([self.members[0].forward(encoded)?, self.members[1].forward(encoded)?])
    }
}

impl Classifier for EnsembleClassifier {
    fn input_dim(&self) -> usize {
        self.members[0].input_dim()
    }

    fn predict_encoded(&self, encoded: &[f64]) -> u8 {
        debug_assert_eq!(encoded.len(), self.input_dim());
        let approve = self.members.iter().all(|m| m.probability(encoded) > self.threshold);
        u8::from(approve)
    }
}

/// Adapts a closure over encoded vectors; handy for synthetic decision rules.
pub struct FnClassifier<F> {
    dim: usize,
    rule: F,
}

impl<F: Fn(&[f64]) -> bool + Send + Sync> FnClassifier<F> {
    pub fn new(dim: usize, rule: F) -> Self {
        FnClassifier { dim, rule }
    }
}

impl<F: Fn(&[f64]) -> bool + Send + Sync> Classifier for FnClassifier<F> {
    fn input_dim(&self) -> usize {
        self.dim
    }

    fn predict_encoded(&self, encoded: &[f64]) -> u8 {
        u8::from((self.rule)(encoded))
    }
}

/// Approves when `coef · x` strictly exceeds `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub coef: Vec<f64>,
    pub threshold: f64,
}

impl LinearClassifier {
    pub fn new(coef: Vec<f64>, threshold: f64) -> Self {
        LinearClassifier { coef, threshold }
    }

    pub fn score(&self, encoded: &[f64]) -> f64 {
        self.coef.iter().zip(encoded).map(|(c, x)| c * x).sum()
    }
}

impl Classifier for LinearClassifier {
    fn input_dim(&self) -> usize {
        self.coef.len()
    }

    fn predict_encoded(&self, encoded: &[f64]) -> u8 {
        u8::from(self.score(encoded) > self.threshold)
    }
}
