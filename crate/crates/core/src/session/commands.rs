use std::collections::{BTreeMap, BTreeSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    mix_seed, Acceptance, ConstraintUpdate, EventBody, FinalRecord, Phase, Plan, SessionConfig, SessionEnv, SessionError,
    SessionEvent, SessionMode, SessionState,
};
use crate::elicitation::{
    achievability_to_multiplier, point_estimate, rating_label, rating_to_update, select_choice_set, update_posterior,
    ChoiceQuery, RatingSignal,
};
use crate::recourse::{
    diverse_plans, mcts_explore, ConstraintSet, Exclusions, PreferenceWeights, RecourseError, RecourseProblem,
    RecourseResult,
};
use crate::schema::{Intervention, UserProfile};

/// Opens a session for a rejected profile.
pub fn start_session(
    profile: UserProfile,
    mode: SessionMode,
    env: &SessionEnv<'_>,
    config: SessionConfig,
    seed: u64,
) -> Result<SessionState, SessionError> {
    config.validate()?;
    env.schema.validate_profile(&profile)?;
    if env.classifier.input_dim() != env.schema.encoded_len() {
        return Err(RecourseError::DimensionMismatch {
            expected: env.classifier.input_dim(),
            actual: env.schema.encoded_len(),
        }
        .into());
    }
    if env.classifier.predict(&profile, env.schema)? != 0 {
        return Err(SessionError::AlreadyApproved);
    }
    let event = SessionEvent {
        seq: 1,
        timestamp: env.clock.now(),
        session_id: format!("{:016x}", mix_seed(seed, 0x5E55_1011)),
        body: EventBody::SessionStarted {
            mode,
            profile,
            schema_version: env.schema.version().to_owned(),
            config,
            seed,
        },
    };
    SessionState::initial(&event, env.schema).map_err(|e| match e {
        super::ReplayError::Prior(e) => e.into(),
        other => SessionError::InvalidConfig(other.to_string()),
    })
}

impl SessionState {
    fn require_phase(&self, command: &'static str, allowed: &[Phase]) -> Result<(), SessionError> {
        if allowed.contains(&self.phase) {
            Ok(())
        } else {
            Err(SessionError::WrongPhase {
                command,
                phase: self.phase,
            })
        }
    }

    fn require_guided(&self, command: &'static str) -> Result<(), SessionError> {
        if self.mode.is_guided() {
            Ok(())
        } else {
            Err(SessionError::WrongMode { command, mode: self.mode })
        }
    }

    fn check_schema(&self, env: &SessionEnv<'_>) -> Result<(), SessionError> {
        if env.schema.version() != self.schema_version {
            return Err(SessionError::SchemaMismatch {
                session: self.schema_version.clone(),
                schema: env.schema.version().to_owned(),
            });
        }
        Ok(())
    }

    /// Weights used to price plans: posterior point estimate, or uniform in exploratory mode.
    pub fn estimated_weights(&self, env: &SessionEnv<'_>) -> PreferenceWeights {
        match &self.posterior {
            Some(p) => point_estimate(p),
            None => PreferenceWeights::for_schema_uniform(env.schema),
        }
    }

    fn problem<'a>(&'a self, env: &SessionEnv<'a>, w: &'a PreferenceWeights) -> RecourseProblem<'a> {
        RecourseProblem {
            schema: env.schema,
            classifier: env.classifier,
            profile: &self.profile,
            weights: w,
            constraints: &self.constraints,
        }
    }

    fn round_seed(&self, salt: u64) -> u64 {
        mix_seed(mix_seed(self.seed, u64::from(self.round) + 1), salt)
    }

    fn with_events(&self, env: &SessionEnv<'_>, bodies: Vec<EventBody>) -> SessionState {
        let mut next = self.clone();
        let now = env.clock.now();
        for b in bodies {
            next.record(b, now);
        }
        next
    }

    /// Searches for this round's plans and presents them.
    pub fn propose(&self, env: &SessionEnv<'_>) -> Result<SessionState, SessionError> {
        self.require_phase("propose", &[Phase::AwaitingProposal])?;
        self.check_schema(env)?;
        let w = self.estimated_weights(env);
        let exclusions = Exclusions {
            interventions: self.shown.clone(),
            ..Default::default()
        };
        let found = match self.mode {
            SessionMode::Exploratory => self.exploratory_plans(env, &w, &exclusions),
            _ => self.guided_plans(env, &w, &exclusions),
        };
        let (pool, presented) = match found {
            Ok(found) => found,
            Err(SessionError::Recourse(e @ (RecourseError::NoRecourse { .. } | RecourseError::EmptyActionSpace))) => {
                let code = match e {
                    RecourseError::EmptyActionSpace => "empty_action_space",
                    _ => "no_recourse",
                };
                let body = EventBody::Error {
                    code: code.into(),
                    message: e.to_string(),
                };
                return Ok(self.with_events(env, vec![body]));
            }
            Err(e) => return Err(e),
        };
        let bodies = presented
            .into_iter()
            .enumerate()
            .map(|(j, r)| {
                assert!(r.valid, "proposed plan must flip the decision");
                EventBody::PlanProposed {
                    round: self.round,
                    plan: Plan {
                        id: format!("r{}-p{}", self.round, j + 1),
                        intervention: r.intervention,
                        cost: r.cost,
                        valid: r.valid,
                    },
                    candidate_pool: pool.clone(),
                }
            })
            .collect();
        Ok(self.with_events(env, bodies))
    }

    fn exploratory_plans(
        &self,
        env: &SessionEnv<'_>,
        w: &PreferenceWeights,
        exclusions: &Exclusions,
    ) -> Result<(Vec<Intervention>, Vec<RecourseResult>), SessionError> {
        let budget = self.config.budget.with_seed(self.round_seed(0));
        let plans = diverse_plans(&self.problem(env, w), self.config.m, &budget, exclusions)?;
        Ok((plans.iter().map(|r| r.intervention.clone()).collect(), plans))
    }

    fn guided_plans(
        &self,
        env: &SessionEnv<'_>,
        w: &PreferenceWeights,
        exclusions: &Exclusions,
    ) -> Result<(Vec<Intervention>, Vec<RecourseResult>), SessionError> {
        let posterior = self.posterior.as_ref().expect("guided session has a posterior");
        let mut rng = ChaCha8Rng::seed_from_u64(self.round_seed(1));
        let mut searches = vec![w.clone()];
        searches.extend(
            posterior
                .sample_indices(&mut rng, self.config.pool_searches)
                .into_iter()
                .map(|i| posterior.particles()[i].clone()),
        );
        let mut pool: Vec<Intervention> = Vec::new();
        let mut last_error = None;
        for (j, ws) in searches.iter().enumerate() {
            let budget = self.config.budget.with_seed(self.round_seed(2 + j as u64));
            match mcts_explore(&self.problem(env, ws), &budget, exclusions) {
                Ok(outcome) => {
                    for (i, _) in outcome.alternatives.into_iter().take(self.config.pool_per_search) {
                        if !pool.contains(&i) && pool.len() < self.config.max_pool {
                            pool.push(i);
                        }
                    }
                }
                Err(e @ RecourseError::NoRecourse { .. }) => last_error = Some(e),
                Err(e) => return Err(e.into()),
            }
        }
        if pool.is_empty() {
            return Err(last_error.unwrap_or(RecourseError::NoRecourse { rollouts_used: 0 }).into());
        }
        let want = match self.mode {
            SessionMode::GuidedChoice => self.config.k,
            _ => 1,
        };
        let query = select_choice_set(posterior, &pool, want.min(pool.len()), &self.profile, &self.constraints, env.schema)?;
        let problem = self.problem(env, w);
        let presented = query
            .alternatives()
            .iter()
            .map(|i| RecourseResult::evaluate(&problem, i.clone(), 0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((pool, presented))
    }

    fn require_plan(&self, plan_id: &str) -> Result<&Plan, SessionError> {
        self.plan(plan_id).ok_or_else(|| SessionError::UnknownPlan(plan_id.to_owned()))
    }

    /// Guided feedback on one presented plan, 1 ("Terrible") to 5 ("Great").
    pub fn submit_rating(&self, env: &SessionEnv<'_>, plan_id: &str, likert: i64) -> Result<SessionState, SessionError> {
        self.require_guided("rating")?;
        self.require_phase("rating", &[Phase::Proposed])?;
        self.check_schema(env)?;
        let plan = self.require_plan(plan_id)?;
        let label = rating_label(likert)?;
        let signal = RatingSignal::new(plan.intervention.clone(), likert)?;
        let posterior = self.posterior.as_ref().expect("guided session has a posterior");
        let updated = rating_to_update(
            posterior,
            &signal,
            &self.candidate_pool,
            &self.profile,
            &self.constraints,
            &self.config.choice_model(),
            env.schema,
        )?;
        let body = EventBody::RatingSubmitted {
            plan_id: plan_id.to_owned(),
            likert,
            label: label.to_owned(),
            posterior: updated.probabilities().to_vec(),
        };
        Ok(self.with_events(env, vec![body]))
    }

    /// Guided choice-mode feedback: the user prefers `plan_id` among the presented plans.
    pub fn submit_choice(&self, env: &SessionEnv<'_>, plan_id: &str) -> Result<SessionState, SessionError> {
        if self.mode != SessionMode::GuidedChoice {
            return Err(SessionError::WrongMode {
                command: "choice",
                mode: self.mode,
            });
        }
        self.require_phase("choice", &[Phase::Proposed])?;
        self.check_schema(env)?;
        self.require_plan(plan_id)?;
        let chosen = self.current_plans.iter().position(|p| p.id == plan_id).expect("plan exists");
        let query = ChoiceQuery::new(
            self.current_plans.iter().map(|p| p.intervention.clone()).collect(),
            self.profile.clone(),
            self.constraints.clone(),
            env.schema,
        )?;
        let posterior = self.posterior.as_ref().expect("guided session has a posterior");
        let updated = update_posterior(posterior, &query, chosen, &self.config.choice_model())?;
        let body = EventBody::ChoiceSubmitted {
            plan_id: plan_id.to_owned(),
            posterior: updated.probabilities().to_vec(),
        };
        Ok(self.with_events(env, vec![body]))
    }

    /// Per-feature achievability, range and option constraints.
    pub fn submit_constraints(
        &self,
        env: &SessionEnv<'_>,
        updates: &BTreeMap<String, ConstraintUpdate>,
    ) -> Result<SessionState, SessionError> {
        let phase = if self.mode.is_guided() {
            Phase::AwaitingFeedback
        } else {
            Phase::Proposed
        };
        self.require_phase("constraints", &[phase])?;
        self.check_schema(env)?;
        if updates.is_empty() {
            return Err(SessionError::EmptyUpdate);
        }
        if self.mode.is_guided() {
            if let Some(f) = updates
                .keys()
                .find(|f| !self.current_plans.iter().any(|p| p.intervention.touches(f)))
            {
                return Err(SessionError::FeatureNotProposed(f.clone()));
            }
        }
        let mut scratch: ConstraintSet = self.constraints.clone();
        let mut merged = BTreeMap::new();
        for (feature, u) in updates {
            let mut c = scratch.get(feature).cloned().unwrap_or_default();
            if let Some(likert) = u.achievability {
                c.achievability = achievability_to_multiplier(likert)?;
            }
            if let Some(r) = u.range {
                c.range = Some(r);
            }
            if let Some(o) = &u.options {
                c.options = Some(o.clone());
            }
            scratch.set(env.schema, feature, c.clone())?;
            merged.insert(feature.clone(), c);
        }
        let mut bodies = vec![EventBody::ConstraintsSubmitted {
            updates: updates.clone(),
            merged,
        }];
        if !self.mode.is_guided() {
            let in_plans: BTreeSet<&str> = self.shown.iter().flat_map(|i| i.features()).collect();
            for f in updates.keys() {
                if !in_plans.contains(f.as_str()) && !self.disclosed.contains(f) {
                    bodies.push(EventBody::FeatureDisclosed { feature: f.clone() });
                }
            }
        }
        Ok(self.with_events(env, bodies))
    }

    /// Discards the current proposal and starts the next round.
    pub fn regenerate(&self, env: &SessionEnv<'_>) -> Result<SessionState, SessionError> {
        self.require_phase("regenerate", &[Phase::Proposed, Phase::AwaitingFeedback])?;
        let body = EventBody::Regenerated { round: self.round + 1 };
        Ok(self.with_events(env, vec![body]))
    }

    /// Accepts a presented plan; the session becomes terminal.
    pub fn accept(&self, env: &SessionEnv<'_>, plan_id: &str) -> Result<SessionState, SessionError> {
        self.require_phase("accept", &[Phase::Proposed, Phase::AwaitingFeedback])?;
        self.check_schema(env)?;
        let plan = self.require_plan(plan_id)?.clone();
        let w = self.estimated_weights(env);
        let result = RecourseResult::evaluate(&self.problem(env, &w), plan.intervention.clone(), 0)?;
        assert!(result.valid, "accepted plan must flip the decision");
        let body = EventBody::PlanAccepted {
            acceptance: Acceptance {
                plan,
                cost: result.cost,
                weights: w.as_slice().to_vec(),
                valid: result.valid,
            },
        };
        Ok(self.with_events(env, vec![body]))
    }

    /// Summary of an accepted session.
    pub fn final_record(&self) -> Option<FinalRecord> {
        let a = self.accepted.as_ref()?;
        Some(FinalRecord {
            session_id: self.id.clone(),
            mode: self.mode,
            round: self.round,
            plan: a.plan.clone(),
            cost: a.cost,
            weights: a.weights.clone(),
            valid: a.valid,
            constraints: self.constraints.clone(),
            history: self.history.clone(),
        })
    }
}
