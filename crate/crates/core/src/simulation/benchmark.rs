use std::fmt::Write as _;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::user::rating_for_cost;
use super::{calibrate_thresholds, regret, sim_choose, SimulatedUser, SimulationError};
use crate::classifier::Classifier;
use crate::elicitation::{ChoiceModel, ChoiceQuery};
use crate::recourse::{
    brute_force_search, intervention_cost, mcts_explore, ConstraintSet, Exclusions, PreferenceWeights, RecourseError,
    RecourseProblem, SearchBudget,
};
use crate::schema::{FeatureSet, Intervention, UserProfile};
use crate::session::{mix_seed, start_session, Clock, Phase, SessionConfig, SessionEnv, SessionMode, SessionState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub seeds: Vec<u64>,
    pub rounds: u32,
    pub mode: SessionMode,
    pub session: SessionConfig,
    /// Temperature of the simulated users' choice model.
    pub user_beta: f64,
    /// Length limit for both the exhaustive oracle and the session's searches.
    pub max_len: usize,
    /// End a session as soon as the user rates a shown plan 4 or better.
    pub stop_on_accept: bool,
    /// Rollouts of the search whose plans calibrate the rating cutpoints.
    pub calibration_rollouts: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seeds: (0..100).collect(),
            rounds: 10,
            mode: SessionMode::GuidedChoice,
            session: SessionConfig {
                budget: SearchBudget {
                    max_rollouts: 2000,
                    max_intervention_len: 3,
                    ..SearchBudget::default()
                },
                ..SessionConfig::default()
            },
            user_beta: 10.0,
            max_len: 3,
            stop_on_accept: true,
            calibration_rollouts: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub seed: u64,
    pub round: u32,
    pub mode: SessionMode,
    /// Regret of the plan the system would deliver now.
    pub regret: f64,
    /// Cosine of the weight estimate to `w*`; absent without learning.
    pub cosine: Option<f64>,
    /// True cost of the delivered plan.
    pub cost: f64,
    /// Whether the user rates some shown plan 4 or better this round.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub sessions: usize,
    pub regret_median: f64,
    pub regret_q1: f64,
    pub regret_q3: f64,
    pub cosine_median: Option<f64>,
    pub cost_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSummary {
    pub mode: SessionMode,
    pub seeds: usize,
    pub rounds: u32,
    pub per_round: Vec<RoundSummary>,
    pub rounds_to_acceptance_median: Option<f64>,
    pub sessions_with_acceptance: usize,
    pub no_recourse: usize,
    pub plans_checked: usize,
    pub validity_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub summary: BenchmarkSummary,
}

impl BenchmarkReport {
    /// Comma-delimited table with columns seed, round, mode, regret, cosine, cost, accepted.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,round,mode,regret,cosine,cost,accepted\n");
        for r in &self.rows {
            let mode = serde_json::to_value(r.mode).expect("mode serializes");
            let cosine = r.cosine.map(|c| c.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.seed,
                r.round,
                mode.as_str().expect("mode is a string"),
                r.regret,
                cosine,
                r.cost,
                r.accepted
            )
            .expect("writing to a string");
        }
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes")
    }
}

struct SeedOutcome {
    rows: Vec<BenchmarkRow>,
    plans_checked: usize,
    violations: usize,
    no_recourse: bool,
}

fn median_of(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let pos = q * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Runs one simulated session per seed and aggregates per-round metrics.
///
/// `profiles` are candidate applicants; each seed draws one rejected by `h`
/// for which an exact optimum exists.
pub fn run_benchmark(
    config: &BenchmarkConfig,
    schema: &FeatureSet,
    h: &dyn Classifier,
    profiles: &[UserProfile],
) -> Result<BenchmarkReport, SimulationError> {
    if config.rounds == 0 {
        return Err(SimulationError::InvalidConfig("rounds must be positive".into()));
    }
    if config.max_len == 0 || config.calibration_rollouts == 0 {
        return Err(SimulationError::InvalidConfig("max_len and calibration_rollouts must be positive".into()));
    }
    ChoiceModel::new(config.user_beta)?;
    config.session.validate()?;
    let mut rejected = Vec::new();
    for p in profiles {
        if h.predict(p, schema)? == 0 {
            rejected.push(p.clone());
        }
    }
    if rejected.is_empty() {
        return Err(SimulationError::NoProfiles);
    }
    let mut rows = Vec::new();
    let mut plans_checked = 0;
    let mut violations = 0;
    let mut no_recourse = 0;
    for &seed in &config.seeds {
        let o = run_seed(config, schema, h, &rejected, seed)?;
        plans_checked += o.plans_checked;
        violations += o.violations;
        no_recourse += usize::from(o.no_recourse);
        rows.extend(o.rows);
    }
    let summary = summarize(config, &rows, plans_checked, violations, no_recourse);
    Ok(BenchmarkReport { rows, summary })
}

fn summarize(
    config: &BenchmarkConfig,
    rows: &[BenchmarkRow],
    plans_checked: usize,
    validity_violations: usize,
    no_recourse: usize,
) -> BenchmarkSummary {
    let mut per_round = Vec::new();
    let mut acceptance_rounds = Vec::new();
    for &seed in &config.seeds {
        if let Some(r) = rows.iter().find(|r| r.seed == seed && r.accepted) {
            acceptance_rounds.push(f64::from(r.round));
        }
    }
    for round in 1..=config.rounds {
        // sessions that ended early keep their last recorded values
        let latest: Vec<&BenchmarkRow> = config
            .seeds
            .iter()
            .filter_map(|&seed| rows.iter().filter(|r| r.seed == seed && r.round <= round).last())
            .collect();
        if latest.is_empty() {
            continue;
        }
        let mut regrets: Vec<f64> = latest.iter().map(|r| r.regret).collect();
        let mut costs: Vec<f64> = latest.iter().map(|r| r.cost).collect();
        let mut cosines: Vec<f64> = latest.iter().filter_map(|r| r.cosine).collect();
        per_round.push(RoundSummary {
            round,
            sessions: latest.len(),
            regret_median: median_of(&mut regrets, 0.5),
            regret_q1: median_of(&mut regrets, 0.25),
            regret_q3: median_of(&mut regrets, 0.75),
            cosine_median: (!cosines.is_empty()).then(|| median_of(&mut cosines, 0.5)),
            cost_median: median_of(&mut costs, 0.5),
        });
    }
    BenchmarkSummary {
        mode: config.mode,
        seeds: config.seeds.len(),
        rounds: config.rounds,
        per_round,
        rounds_to_acceptance_median: (!acceptance_rounds.is_empty()).then(|| median_of(&mut acceptance_rounds, 0.5)),
        sessions_with_acceptance: acceptance_rounds.len(),
        no_recourse,
        plans_checked,
        validity_violations,
    }
}

const PROFILE_ATTEMPTS: usize = 20;

fn run_seed(
    config: &BenchmarkConfig,
    schema: &FeatureSet,
    h: &dyn Classifier,
    rejected: &[UserProfile],
    seed: u64,
) -> Result<SeedOutcome, SimulationError> {
    let none = ConstraintSet::new();
    let w_star = SimulatedUser::draw_weights(schema.actionable_count(), mix_seed(seed, 2));
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let mut instance = None;
    for _ in 0..PROFILE_ATTEMPTS {
        let x = &rejected[rng.random_range(0..rejected.len())];
        let problem = RecourseProblem {
            schema,
            classifier: h,
            profile: x,
            weights: &w_star,
            constraints: &none,
        };
        match brute_force_search(&problem, config.max_len) {
            Ok(best) => {
                instance = Some((x.clone(), best));
                break;
            }
            Err(RecourseError::NoRecourse { .. }) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    let Some((x, oracle)) = instance else {
        return Ok(SeedOutcome {
            rows: Vec::new(),
            plans_checked: 0,
            violations: 0,
            no_recourse: true,
        });
    };

    // rating cutpoints from the true costs of plans found under uniform weights
    let uniform = PreferenceWeights::for_schema_uniform(schema);
    let calibration = RecourseProblem {
        schema,
        classifier: h,
        profile: &x,
        weights: &uniform,
        constraints: &none,
    };
    let budget = SearchBudget {
        max_rollouts: config.calibration_rollouts,
        max_intervention_len: config.max_len,
        seed: mix_seed(seed, 4),
        ..SearchBudget::default()
    };
    let mut sample_costs = vec![oracle.cost];
    if let Ok(o) = mcts_explore(&calibration, &budget, &Exclusions::default()) {
        for (i, _) in &o.alternatives {
            sample_costs.push(intervention_cost(i, &x, &w_star, &none, schema)?);
        }
    }
    let thresholds = calibrate_thresholds(&sample_costs)?;
    let mut user = SimulatedUser::new(w_star.clone(), ChoiceModel::new(config.user_beta)?, thresholds, mix_seed(seed, 5))?;

    let env = SessionEnv {
        schema,
        classifier: h,
        clock: Clock::Fixed(Utc.timestamp_opt(0, 0).single().expect("epoch")),
    };
    let mut session_config = config.session.clone();
    session_config.budget.max_intervention_len = config.max_len;
    let mut st = start_session(x.clone(), config.mode, &env, session_config, mix_seed(seed, 3))?;
    let mut shown: Vec<Intervention> = Vec::new();
    let mut rows = Vec::new();
    let mut plans_checked = 0;
    let mut violations = 0;
    let true_cost = |i: &Intervention| intervention_cost(i, &x, &w_star, &none, schema);

    for round in 1..=config.rounds {
        st = st.propose(&env)?;
        if st.phase == Phase::Exhausted {
            break;
        }
        for plan in &st.current_plans {
            plans_checked += 1;
            let after = schema.apply_intervention(&plan.intervention, &x)?;
            if h.predict(&after, schema)? == 0 {
                violations += 1;
            }
        }
        shown.extend(st.current_plans.iter().map(|p| p.intervention.clone()));
        let estimate = st.estimated_weights(&env);

        let mut best_now: Option<(usize, f64)> = None;
        for (j, p) in st.current_plans.iter().enumerate() {
            let c = true_cost(&p.intervention)?;
            if best_now.is_none_or(|(_, b)| c < b) {
                best_now = Some((j, c));
            }
        }
        let (best_j, best_cost) = best_now.expect("proposal has plans");
        let accepted = rating_for_cost(&user.rating_thresholds(), best_cost) >= 4;

        let delivered = if accepted && config.stop_on_accept {
            st.current_plans[best_j].intervention.clone()
        } else {
            delivered_plan(&shown, &x, &estimate, &st, schema)?
        };
        rows.push(BenchmarkRow {
            seed,
            round,
            mode: config.mode,
            regret: regret(&delivered, &x, &w_star, &none, schema, &oracle)?,
            cosine: st.mode.is_guided().then(|| estimate.cosine(&w_star)),
            cost: true_cost(&delivered)?,
            accepted,
        });
        if accepted && config.stop_on_accept {
            let id = st.current_plans[best_j].id.clone();
            let done = st.accept(&env, &id)?;
            plans_checked += 1;
            if !done.accepted.as_ref().is_some_and(|a| a.valid) {
                violations += 1;
            }
            break;
        }

        st = match config.mode {
            SessionMode::GuidedChoice => {
                let q = ChoiceQuery::new(shown_now(&st), x.clone(), st.constraints.clone(), schema)?;
                let pick = sim_choose(&mut user, &q);
                let id = st.current_plans[pick].id.clone();
                st.submit_choice(&env, &id)?
            }
            SessionMode::GuidedRate => {
                let plan = &st.current_plans[0];
                let likert = rating_for_cost(&user.rating_thresholds(), true_cost(&plan.intervention)?);
                let id = plan.id.clone();
                st.submit_rating(&env, &id, likert)?
            }
            SessionMode::Exploratory => st,
        };
        if round < config.rounds {
            st = st.regenerate(&env)?;
        }
    }
    Ok(SeedOutcome {
        rows,
        plans_checked,
        violations,
        no_recourse: false,
    })
}

fn shown_now(st: &SessionState) -> Vec<Intervention> {
    st.current_plans.iter().map(|p| p.intervention.clone()).collect()
}

/// The shown plan the system currently considers cheapest; ties go to the earliest.
fn delivered_plan(
    shown: &[Intervention],
    x: &UserProfile,
    estimate: &PreferenceWeights,
    st: &SessionState,
    schema: &FeatureSet,
) -> Result<Intervention, SimulationError> {
    let mut best: Option<(&Intervention, f64)> = None;
    for i in shown {
        let c = intervention_cost(i, x, estimate, &st.constraints, schema)?;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((i, c));
        }
    }
    Ok(best.expect("at least one plan shown").0.clone())
}
