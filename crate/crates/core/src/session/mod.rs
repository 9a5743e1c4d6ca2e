//! One live negotiation between a rejected user and the recourse engine.
//!
//! A session is a state machine driven by commands (`propose`, `submit_rating`,
//! `submit_choice`, `submit_constraints`, `regenerate`, `accept`). Each command
//! validates against the current state and either fails, leaving the state
//! untouched, or emits events. State changes happen only by applying events,
//! so folding a session's event log over its start event rebuilds it exactly.

mod commands;
mod events;
mod persona;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use commands::start_session;
pub use events::{replay, EventBody, ReplayError, SessionEvent};
pub use persona::{load_personas, Persona, PersonaError};

use crate::classifier::Classifier;
use crate::elicitation::{ChoiceModel, ElicitationError, WeightPosterior, DEFAULT_BETA, DEFAULT_PARTICLES};
use crate::recourse::{ConstraintSet, FeatureConstraint, RecourseError, SearchBudget};
use crate::schema::{FeatureSet, Intervention, SchemaError, UserProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// Guided protocol, one plan per round, rated on a Likert scale.
    GuidedRate,
    /// Guided protocol, `k` plans per round, the user picks one.
    GuidedChoice,
    /// Control protocol: several plans, free constraints, no learning.
    Exploratory,
}

impl SessionMode {
    pub fn is_guided(self) -> bool {
        !matches!(self, SessionMode::Exploratory)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    AwaitingProposal,
    Proposed,
    AwaitingFeedback,
    Accepted,
    Exhausted,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Accepted | Phase::Exhausted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Plans per round in guided choice mode.
    pub k: usize,
    /// Plans per round in exploratory mode.
    pub m: usize,
    pub particles: usize,
    pub beta: f64,
    pub budget: SearchBudget,
    /// Searches under posterior samples per guided round, besides the point estimate.
    pub pool_searches: usize,
    /// Cheapest distinct plans kept from each guided search.
    pub pool_per_search: usize,
    pub max_pool: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            k: 3,
            m: 2,
            particles: DEFAULT_PARTICLES,
            beta: DEFAULT_BETA,
            budget: SearchBudget {
                max_rollouts: 4000,
                ..SearchBudget::default()
            },
            pool_searches: 3,
            pool_per_search: 3,
            max_pool: 12,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_owned()));
        if self.k == 0 || self.m == 0 {
            return bad("k and m must be positive");
        }
        if self.particles == 0 {
            return bad("particles must be positive");
        }
        if self.pool_per_search == 0 || self.max_pool == 0 {
            return bad("pool sizes must be positive");
        }
        if self.budget.max_rollouts == 0 || self.budget.max_intervention_len == 0 {
            return bad("search budget must be positive");
        }
        ChoiceModel::new(self.beta)?;
        Ok(())
    }

    pub fn choice_model(&self) -> ChoiceModel {
        ChoiceModel { beta: self.beta }
    }
}

/// A plan shown to the user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub id: String,
    pub intervention: Intervention,
    /// Cost under the session's current weight estimate at proposal time.
    pub cost: f64,
    pub valid: bool,
}

/// Outcome stored when a plan is accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub plan: Plan,
    /// Cost under the final weight estimate.
    pub cost: f64,
    pub weights: Vec<f64>,
    pub valid: bool,
}

/// Per-feature constraint edit; absent fields keep their previous value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintUpdate {
    /// Achievability rating 1 ("Very difficult") to 5 ("Very easy").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub achievability: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub id: String,
    pub mode: SessionMode,
    pub config: SessionConfig,
    pub profile: UserProfile,
    pub schema_version: String,
    pub posterior: Option<WeightPosterior>,
    pub constraints: ConstraintSet,
    pub round: u32,
    pub phase: Phase,
    pub current_plans: Vec<Plan>,
    /// Plans considered in the current round; ratings are read against it.
    pub candidate_pool: Vec<Intervention>,
    /// Every plan ever shown, never re-presented.
    pub shown: Vec<Intervention>,
    /// Features revealed in exploratory mode beyond those in shown plans.
    pub disclosed: BTreeSet<String>,
    pub accepted: Option<Acceptance>,
    pub history: Vec<SessionEvent>,
    pub seed: u64,
}

/// Snapshot returned by `accept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub session_id: String,
    pub mode: SessionMode,
    pub round: u32,
    pub plan: Plan,
    pub cost: f64,
    pub weights: Vec<f64>,
    pub valid: bool,
    pub constraints: ConstraintSet,
    pub history: Vec<SessionEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    pub fn now(self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now(),
            Clock::Fixed(t) => t,
        }
    }
}

/// Immutable inputs shared by every command.
#[derive(Clone, Copy)]
pub struct SessionEnv<'a> {
    pub schema: &'a FeatureSet,
    pub classifier: &'a dyn Classifier,
    pub clock: Clock,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("profile is already approved")]
    AlreadyApproved,
    #[error("`{command}` is not allowed in phase {phase:?}")]
    WrongPhase { command: &'static str, phase: Phase },
    #[error("`{command}` is not available in {mode:?} sessions")]
    WrongMode { command: &'static str, mode: SessionMode },
    #[error("unknown plan `{0}`")]
    UnknownPlan(String),
    #[error("feature `{0}` is not part of the current proposal")]
    FeatureNotProposed(String),
    #[error("constraint update is empty")]
    EmptyUpdate,
    #[error("invalid session configuration: {0}")]
    InvalidConfig(String),
    #[error("session belongs to schema `{session}`, not `{schema}`")]
    SchemaMismatch { session: String, schema: String },
    #[error(transparent)]
    Elicitation(#[from] ElicitationError),
    #[error(transparent)]
    Recourse(#[from] RecourseError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl SessionState {
    pub fn plan(&self, plan_id: &str) -> Option<&Plan> {
        self.current_plans.iter().find(|p| p.id == plan_id)
    }

    /// Structural invariants that must hold between commands.
    pub fn check_invariants(&self, env: &SessionEnv<'_>) -> Result<(), String> {
        if self.mode.is_guided() != self.posterior.is_some() {
            return Err("posterior present exactly in guided sessions".into());
        }
        match self.phase {
            Phase::AwaitingProposal | Phase::Exhausted if !self.current_plans.is_empty() => {
                return Err(format!("{:?} with plans on display", self.phase));
            }
            Phase::Proposed | Phase::AwaitingFeedback if self.current_plans.is_empty() => {
                return Err(format!("{:?} without plans", self.phase));
            }
            _ => {}
        }
        match (&self.accepted, self.phase) {
            (Some(a), Phase::Accepted) if !a.valid => return Err("accepted plan is not valid".into()),
            (None, Phase::Accepted) => return Err("accepted without a record".into()),
            (Some(_), p) if p != Phase::Accepted => return Err("acceptance record outside Accepted".into()),
            _ => {}
        }
        for plan in &self.current_plans {
            let after = env
                .schema
                .apply_intervention(&plan.intervention, &self.profile)
                .map_err(|e| format!("plan {} not applicable: {e}", plan.id))?;
            let flips = env.classifier.predict(&after, env.schema).map_err(|e| e.to_string())? == 1;
            if !(plan.valid && flips) {
                return Err(format!("plan {} does not flip the decision", plan.id));
            }
            if !self.shown.contains(&plan.intervention) {
                return Err(format!("plan {} missing from the shown list", plan.id));
            }
        }
        for (i, e) in self.history.iter().enumerate() {
            if e.seq != i as u64 + 1 {
                return Err("event sequence numbers are not contiguous".into());
            }
        }
        Ok(())
    }

    /// Merges `c` into the constraint for `feature` without re-validation.
    fn store_constraint(&mut self, feature: &str, c: FeatureConstraint) {
        self.constraints.insert_validated(feature, c);
    }
}

/// SplitMix64 finalizer used to derive independent sub-seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
