//! Online estimation of a user's cost weights from choices and ratings.
//!
//! Beliefs over the weight vector are a particle posterior. Users answer
//! choice queries (pick one of `k` plans) or rate a single plan; both are
//! turned into likelihood updates under a softmax choice model.

mod choice;
mod posterior;
mod rating;
mod selection;

use thiserror::Error;

pub use choice::{choice_likelihood, choice_log_likelihood, update_posterior, ChoiceModel, ChoiceQuery, DEFAULT_BETA};
pub use posterior::{init_posterior, point_estimate, WeightPosterior, DEFAULT_PARTICLES};
pub use rating::{
    achievability_label, achievability_to_multiplier, rating_label, rating_to_update, RatingSignal, ACHIEVABILITY_LABELS,
    RATING_LABELS,
};
pub use selection::{expected_utility_of_selection, select_choice_set};

use crate::recourse::RecourseError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ElicitationError {
    #[error("a posterior needs at least one particle")]
    NoParticles,
    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),
    #[error("choice model temperature must be finite and non-negative, got {0}")]
    InvalidBeta(f64),
    #[error("a choice query needs at least one alternative")]
    EmptyQuery,
    #[error("alternative {0} duplicates an earlier one")]
    DuplicateAlternative(usize),
    #[error("chosen index {index} out of range for {k} alternatives")]
    InvalidChoice { index: usize, k: usize },
    #[error("need {needed} candidates, only {available} available")]
    InsufficientCandidates { needed: usize, available: usize },
    #[error("likelihood update left no probability mass")]
    DegenerateUpdate,
    #[error("likert value {0} outside 1..=5")]
    LikertOutOfRange(i64),
    #[error("rated intervention is not in the candidate pool")]
    NotInPool,
    #[error("alternative {index} violates the constraints: {reason}")]
    InvalidAlternative { index: usize, reason: String },
    #[error(transparent)]
    Recourse(#[from] RecourseError),
}
