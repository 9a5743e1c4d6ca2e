use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Acceptance, ConstraintUpdate, Phase, Plan, SessionConfig, SessionMode, SessionState};
use crate::elicitation::{init_posterior, ElicitationError};
use crate::recourse::{ConstraintSet, FeatureConstraint};
use crate::schema::{FeatureSet, Intervention, UserProfile};

/// One line of a session's append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub timestamp: DateTime<Utc>,
    pub session_id: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum EventBody {
    SessionStarted {
        mode: SessionMode,
        profile: UserProfile,
        schema_version: String,
        config: SessionConfig,
        seed: u64,
    },
    PlanProposed {
        round: u32,
        plan: Plan,
        candidate_pool: Vec<Intervention>,
    },
    RatingSubmitted {
        plan_id: String,
        likert: i64,
        label: String,
        posterior: Vec<f64>,
    },
    ChoiceSubmitted {
        plan_id: String,
        posterior: Vec<f64>,
    },
    ConstraintsSubmitted {
        updates: BTreeMap<String, ConstraintUpdate>,
        merged: BTreeMap<String, FeatureConstraint>,
    },
    FeatureDisclosed {
        feature: String,
    },
    Regenerated {
        round: u32,
    },
    PlanAccepted {
        acceptance: Acceptance,
    },
    Error {
        code: String,
        message: String,
    },
}

impl EventBody {
    pub fn kind(&self) -> &'static str {
        match self {
            EventBody::SessionStarted { .. } => "SessionStarted",
            EventBody::PlanProposed { .. } => "PlanProposed",
            EventBody::RatingSubmitted { .. } => "RatingSubmitted",
            EventBody::ChoiceSubmitted { .. } => "ChoiceSubmitted",
            EventBody::ConstraintsSubmitted { .. } => "ConstraintsSubmitted",
            EventBody::FeatureDisclosed { .. } => "FeatureDisclosed",
            EventBody::Regenerated { .. } => "Regenerated",
            EventBody::PlanAccepted { .. } => "PlanAccepted",
            EventBody::Error { .. } => "Error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("event log is empty")]
    Empty,
    #[error("first event must be SessionStarted, found {0}")]
    MissingStart(&'static str),
    #[error("event {seq} is out of sequence")]
    OutOfSequence { seq: u64 },
    #[error("event {seq} belongs to session `{found}`")]
    ForeignEvent { seq: u64, found: String },
    #[error("event {seq} ({kind}) is not legal in phase {phase:?}")]
    IllegalEvent { seq: u64, kind: &'static str, phase: Phase },
    #[error("cannot rebuild the prior: {0}")]
    Prior(#[from] ElicitationError),
}

impl SessionState {
    /// State right after a `SessionStarted` event.
    pub(crate) fn initial(event: &SessionEvent, schema: &FeatureSet) -> Result<Self, ReplayError> {
        let EventBody::SessionStarted {
            mode,
            profile,
            schema_version,
            config,
            seed,
        } = &event.body
        else {
            return Err(ReplayError::MissingStart(event.body.kind()));
        };
        let posterior = if mode.is_guided() {
            Some(init_posterior(schema, config.particles, *seed)?)
        } else {
            None
        };
        Ok(SessionState {
            id: event.session_id.clone(),
            mode: *mode,
            config: config.clone(),
            profile: profile.clone(),
            schema_version: schema_version.clone(),
            posterior,
            constraints: ConstraintSet::new(),
            round: 0,
            phase: Phase::AwaitingProposal,
            current_plans: Vec::new(),
            candidate_pool: Vec::new(),
            shown: Vec::new(),
            disclosed: Default::default(),
            accepted: None,
            history: vec![event.clone()],
            seed: *seed,
        })
    }

    fn accepts(&self, body: &EventBody) -> bool {
        use EventBody as E;
        use Phase as P;
        match (body, self.phase) {
            (E::SessionStarted { .. }, _) => false,
            (E::PlanProposed { .. }, P::AwaitingProposal | P::Proposed) => true,
            (E::RatingSubmitted { posterior, .. } | E::ChoiceSubmitted { posterior, .. }, P::Proposed) => {
                self.posterior.as_ref().is_some_and(|p| p.len() == posterior.len())
            }
            (E::ConstraintsSubmitted { .. }, P::AwaitingFeedback) => self.mode.is_guided(),
            (E::ConstraintsSubmitted { .. } | E::FeatureDisclosed { .. }, P::Proposed) => !self.mode.is_guided(),
            (E::Regenerated { .. } | E::PlanAccepted { .. }, P::Proposed | P::AwaitingFeedback) => true,
            (E::Error { .. }, P::AwaitingProposal) => true,
            _ => false,
        }
    }

    /// Applies an event produced by a command on this state.
    pub(crate) fn apply(&mut self, event: SessionEvent) {
        debug_assert!(self.accepts(&event.body), "illegal {} in {:?}", event.body.kind(), self.phase);
        match &event.body {
            EventBody::SessionStarted { .. } => {}
            EventBody::PlanProposed {
                round,
                plan,
                candidate_pool,
            } => {
                if self.phase == Phase::AwaitingProposal {
                    self.current_plans.clear();
                    self.phase = Phase::Proposed;
                }
                self.round = *round;
                self.shown.push(plan.intervention.clone());
                self.current_plans.push(plan.clone());
                self.candidate_pool.clone_from(candidate_pool);
            }
            EventBody::RatingSubmitted { posterior, .. } | EventBody::ChoiceSubmitted { posterior, .. } => {
                if let Some(p) = &self.posterior {
                    self.posterior = Some(p.with_probabilities(posterior.clone()));
                }
                self.phase = Phase::AwaitingFeedback;
            }
            EventBody::ConstraintsSubmitted { merged, .. } => {
                for (f, c) in merged {
                    self.store_constraint(f, c.clone());
                }
            }
            EventBody::FeatureDisclosed { feature } => {
                self.disclosed.insert(feature.clone());
            }
            EventBody::Regenerated { round } => {
                self.round = *round;
                self.phase = Phase::AwaitingProposal;
                self.current_plans.clear();
                self.candidate_pool.clear();
            }
            EventBody::PlanAccepted { acceptance } => {
                self.accepted = Some(acceptance.clone());
                self.phase = Phase::Accepted;
            }
            EventBody::Error { .. } => {
                self.phase = Phase::Exhausted;
                self.current_plans.clear();
                self.candidate_pool.clear();
            }
        }
        self.history.push(event);
    }

    pub(crate) fn record(&mut self, body: EventBody, timestamp: DateTime<Utc>) {
        let event = SessionEvent {
            seq: self.history.len() as u64 + 1,
            timestamp,
            session_id: self.id.clone(),
            body,
        };
        self.apply(event);
    }
}

/// Rebuilds a session by folding its event log over the start event.
pub fn replay(schema: &FeatureSet, events: &[SessionEvent]) -> Result<SessionState, ReplayError> {
    let first = events.first().ok_or(ReplayError::Empty)?;
    if first.seq != 1 {
        return Err(ReplayError::OutOfSequence { seq: first.seq });
    }
    let mut state = SessionState::initial(first, schema)?;
    for e in &events[1..] {
        if e.seq != state.history.len() as u64 + 1 {
            return Err(ReplayError::OutOfSequence { seq: e.seq });
        }
        if e.session_id != state.id {
            return Err(ReplayError::ForeignEvent {
                seq: e.seq,
                found: e.session_id.clone(),
            });
        }
        if !state.accepts(&e.body) {
            return Err(ReplayError::IllegalEvent {
                seq: e.seq,
                kind: e.body.kind(),
                phase: state.phase,
            });
        }
        state.apply(e.clone());
    }
    Ok(state)
}
