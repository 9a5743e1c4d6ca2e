//! Minimum-cost recourse search.
//!
//! Given a rejected profile `x`, a classifier `h`, preference weights `w` and
//! user constraints, find the cheapest intervention `I` with `h(I(x)) != h(x)`.
//! [`mcts_search`] is the production search; [`brute_force_search`] is an exact
//! reference used to check it on small spaces.

mod actions;
mod brute_force;
mod constraints;
mod cost;
mod diverse;
mod mcts;
mod space;
mod weights;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actions::enumerate_actions;
pub use brute_force::{brute_force_search, BRUTE_FORCE_LIMIT};
pub use constraints::{ConstraintSet, FeatureConstraint};
pub use cost::{action_cost, effort, intervention_cost, CostTerms};
pub use diverse::{diverse_plans, DIVERSITY_PENALTY};
pub use mcts::{mcts_explore, mcts_search, SearchOutcome};
pub use weights::PreferenceWeights;

use crate::classifier::Classifier;
use crate::schema::{FeatureSet, Intervention, SchemaError, UserProfile};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecourseError {
    #[error("profile is already approved")]
    AlreadyApproved,
    #[error("no admissible action under the current constraints")]
    EmptyActionSpace,
    #[error("no label-flipping intervention found after {rollouts_used} rollouts")]
    NoRecourse { rollouts_used: usize },
    #[error("search space of {size:e} interventions exceeds the exhaustive-search limit")]
    SearchSpaceTooLarge { size: f64 },
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("invalid constraint on `{feature}`: {reason}")]
    InvalidConstraint { feature: String, reason: String },
    #[error("invalid search budget: {0}")]
    InvalidBudget(String),
    #[error("classifier expects {expected} inputs, schema encodes {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Everything a search needs, borrowed.
#[derive(Clone, Copy)]
pub struct RecourseProblem<'a> {
    pub schema: &'a FeatureSet,
    pub classifier: &'a dyn Classifier,
    pub profile: &'a UserProfile,
    pub weights: &'a PreferenceWeights,
    pub constraints: &'a ConstraintSet,
}

impl<'a> RecourseProblem<'a> {
    pub fn with_weights<'b>(&self, weights: &'b PreferenceWeights) -> RecourseProblem<'b>
    where
        'a: 'b,
    {
        RecourseProblem { weights, ..*self }
    }

    pub fn with_constraints<'b>(&self, constraints: &'b ConstraintSet) -> RecourseProblem<'b>
    where
        'a: 'b,
    {
        RecourseProblem { constraints, ..*self }
    }

    fn check(&self) -> Result<(), RecourseError> {
        let actual = self.schema.encoded_len();
        let expected = self.classifier.input_dim();
        if expected != actual {
            return Err(RecourseError::DimensionMismatch { expected, actual });
        }
        if self.weights.len() != self.schema.actionable_count() {
            return Err(RecourseError::InvalidWeights(format!(
                "expected {} weights, got {}",
                self.schema.actionable_count(),
                self.weights.len()
            )));
        }
        self.schema.validate_profile(self.profile)?;
        self.constraints.validate(self.schema)
    }

    pub fn cost(&self, i: &Intervention) -> Result<f64, RecourseError> {
        intervention_cost(i, self.profile, self.weights, self.constraints, self.schema)
    }

    pub fn flips(&self, i: &Intervention) -> Result<bool, RecourseError> {
        let before = self.classifier.predict(self.profile, self.schema)?;
        let after = self.classifier.predict(&self.schema.apply_intervention(i, self.profile)?, self.schema)?;
        Ok(before != after)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_rollouts: usize,
    pub max_intervention_len: usize,
    pub uct_constant: f64,
    pub seed: u64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_rollouts: 20_000,
            max_intervention_len: 4,
            uct_constant: std::f64::consts::SQRT_2,
            seed: 0,
        }
    }
}

impl SearchBudget {
    pub fn with_seed(&self, seed: u64) -> Self {
        SearchBudget { seed, ..self.clone() }
    }

    fn check(&self) -> Result<(), RecourseError> {
        if self.max_rollouts == 0 {
            return Err(RecourseError::InvalidBudget("max_rollouts must be positive".into()));
        }
        if self.max_intervention_len == 0 {
            return Err(RecourseError::InvalidBudget("max_intervention_len must be positive".into()));
        }
        if !(self.uct_constant.is_finite() && self.uct_constant >= 0.0) {
            return Err(RecourseError::InvalidBudget("uct_constant must be finite and non-negative".into()));
        }
        Ok(())
    }
}

/// Interventions a search must not return.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exclusions {
    /// Exact interventions (compared as action sets).
    pub interventions: Vec<Intervention>,
    /// Interventions touching exactly this feature set.
    pub feature_sets: Vec<BTreeSet<String>>,
}

impl Exclusions {
    pub fn is_empty(&self) -> bool {
        self.interventions.is_empty() && self.feature_sets.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecourseResult {
    pub intervention: Intervention,
    pub cost: f64,
    pub valid: bool,
    pub rollouts_used: usize,
}

impl RecourseResult {
    /// Recomputes cost and validity of `intervention` through the public path.
    pub fn evaluate(problem: &RecourseProblem<'_>, intervention: Intervention, rollouts_used: usize) -> Result<Self, RecourseError> {
        let intervention = intervention.canonical(problem.schema);
        Ok(RecourseResult {
            cost: problem.cost(&intervention)?,
            valid: problem.flips(&intervention)?,
            intervention,
            rollouts_used,
        })
    }
}

/// Relative tolerance under which two costs count as tied.
const COST_TIE_TOLERANCE: f64 = 1e-9;

/// Preference order between candidate plans: lower cost, then fewer actions,
/// then lexicographically smaller action-index sequence.
pub(crate) fn plan_order(a: (f64, &[u32]), b: (f64, &[u32])) -> Ordering {
    let tol = COST_TIE_TOLERANCE * a.0.abs().max(b.0.abs()).max(f64::MIN_POSITIVE);
    if (a.0 - b.0).abs() > tol {
        return a.0.total_cmp(&b.0);
    }
    a.1.len().cmp(&b.1.len()).then_with(|| a.1.cmp(b.1))
}
