//! Interactive algorithmic recourse.
//!
//! Given a rejected profile and a black-box classifier, the crate searches for
//! the cheapest set of feature changes that overturns the decision, where
//! "cheap" is measured by a per-user weighting of effort that is learned
//! online from the user's choices and ratings.
//!
//! - [`schema`] / [`dataset`]: feature space, profiles, actions, CSV data.
//! - [`classifier`]: the two-member MLP ensemble and its trainer.
//! - [`recourse`]: cost model, Monte Carlo Tree Search, exhaustive oracle.
//! - [`elicitation`]: particle posterior over cost weights and query selection.
//! - [`session`]: guided and exploratory negotiation state machines.
//! - [`simulation`]: synthetic data, simulated users and the benchmark harness.

pub mod classifier;
pub mod dataset;
pub mod elicitation;
pub mod fixtures;
pub mod recourse;
pub mod schema;
pub mod session;
pub mod simulation;

pub use classifier::{Classifier, EnsembleClassifier, LinearClassifier};
pub use schema::{Action, FeatureSet, Intervention, UserProfile, Value};
