use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SimulatedUser, SimulationError};
use crate::classifier::LinearClassifier;
use crate::recourse::{brute_force_search, mcts_search, ConstraintSet, PreferenceWeights, RecourseError, RecourseProblem, SearchBudget};
use crate::schema::{Action, FeatureKind, FeatureSet, FeatureSpec, UserProfile};
use crate::session::mix_seed;

/// Relative slack allowed between the search result and the exhaustive optimum.
pub const ORACLE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub instances: usize,
    pub rollouts: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { instances: 100, rollouts: 20_000, max_len: 3, seed: 0 }
    }
}

/// A randomly drawn small problem with a linear rejecting classifier.
#[derive(Debug, Clone)]
pub struct OracleInstance {
    pub schema: FeatureSet,
    pub classifier: LinearClassifier,
    pub profile: UserProfile,
    pub weights: PreferenceWeights,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub instance: usize,
    pub actionable: usize,
    pub oracle_cost: f64,
    pub search_cost: Option<f64>,
    pub within_tolerance: bool,
    pub dominance_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub outcomes: Vec<OracleOutcome>,
}

impl OracleReport {
    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.within_tolerance).count()
    }

    pub fn pass_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.passed() as f64 / self.outcomes.len() as f64
    }

    pub fn dominance_violations(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.dominance_holds).count()
    }

    /// Plain-text report: one line per instance followed by the totals.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            let search = o.search_cost.map_or_else(|| "none".to_string(), |c| format!("{c:.6}"));
            let _ = writeln!(
                out,
                "instance {:>3}  features {}  oracle {:.6}  mcts {}  {}",
                o.instance,
                o.actionable,
                o.oracle_cost,
                search,
                if o.within_tolerance { "ok" } else { "MISS" }
            );
        }
        let _ = writeln!(
            out,
            "instances {}  passed {}  pass_rate {:.4}  dominance_violations {}",
            self.outcomes.len(),
            self.passed(),
            self.pass_rate(),
            self.dominance_violations()
        );
        out
    }
}

/// Draws instance `index` of the suite rooted at `seed`.
///
/// Between two and five actionable features with two to four values each, plus
/// one immutable feature. The threshold sits strictly between the profile's
/// score and the best score reachable with `max_len` changes, so the profile is
/// rejected and recourse within the length limit always exists.
pub fn random_instance(seed: u64, index: usize, max_len: usize) -> OracleInstance {
    let mut attempt = 0u64;
    loop {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(mix_seed(seed, index as u64), attempt));
        attempt += 1;
        let n_actionable = rng.random_range(2..=5usize);
        let mut features = Vec::with_capacity(n_actionable + 1);
        for f in 0..n_actionable {
            let n_values = rng.random_range(2..=4usize);
            let kind = if rng.random_bool(0.5) {
                FeatureKind::Numeric { min: 0.0, max: (n_values - 1) as f64, step: 1.0, unit: String::new() }
            } else {
                FeatureKind::Categorical { options: (0..n_values).map(|v| format!("v{v}")).collect() }
            };
            features.push(FeatureSpec { name: format!("f{f}"), display_name: format!("f{f}"), kind, actionable: true });
        }
        features.push(FeatureSpec {
            name: "fixed".into(),
            display_name: "fixed".into(),
            kind: FeatureKind::Numeric { min: 0.0, max: 3.0, step: 1.0, unit: String::new() },
            actionable: false,
        });
        let schema = FeatureSet::new(format!("oracle-{index}"), features).expect("generated schema is well formed");

        let values = schema
            .features()
            .iter()
            .map(|spec| {
                let domain = spec.domain();
                (spec.name.clone(), domain[rng.random_range(0..domain.len())].clone())
            })
            .collect();
        let profile = UserProfile::new(values, &schema).expect("values come from the domain");
        let coef: Vec<f64> = (0..schema.encoded_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = LinearClassifier::new(coef, 0.0);
        let score = |p: &UserProfile| probe.score(&schema.encode(p).expect("profile is valid"));
        let base = score(&profile);

        let mut gains: Vec<f64> = schema
            .actionable_indices()
            .iter()
            .map(|&i| {
                let spec = &schema.features()[i];
                spec.domain()
                    .into_iter()
                    .filter_map(|v| schema.apply_action(&profile, &Action::new(spec.name.clone(), v)).ok())
                    .map(|moved| score(&moved) - base)
                    .fold(0.0, f64::max)
            })
            .collect();
        gains.sort_by(|a, b| b.total_cmp(a));
        let reachable: f64 = gains.iter().take(max_len).sum();
        if reachable < 1e-6 {
            continue;
        }
        let threshold = base + rng.random_range(0.2..0.9) * reachable;
        let weights = SimulatedUser::draw_weights(schema.actionable_count(), rng.random());
        return OracleInstance { schema, classifier: LinearClassifier::new(probe.coef, threshold), profile, weights };
    }
}

/// Runs the search against exhaustive enumeration on `config.instances` random instances.
pub fn oracle_check(config: &OracleConfig) -> Result<OracleReport, SimulationError> {
    if config.instances == 0 || config.rollouts == 0 || config.max_len == 0 {
        return Err(SimulationError::InvalidConfig("instances, rollouts and max_len must be positive".into()));
    }
    let constraints = ConstraintSet::default();
    let mut outcomes = Vec::with_capacity(config.instances);
    for index in 0..config.instances {
        let inst = random_instance(config.seed, index, config.max_len);
        let problem = RecourseProblem {
            schema: &inst.schema,
            classifier: &inst.classifier,
            profile: &inst.profile,
            weights: &inst.weights,
            constraints: &constraints,
        };
        let oracle = brute_force_search(&problem, config.max_len)?;
        let budget = SearchBudget {
            max_rollouts: config.rollouts,
            max_intervention_len: config.max_len,
            seed: mix_seed(config.seed, index as u64),
            ..SearchBudget::default()
        };
        let search_cost = match mcts_search(&problem, &budget) {
            Ok(r) => Some(r.cost),
            Err(RecourseError::NoRecourse { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        let slack = 1e-12 * oracle.cost.max(1.0);
        let (within_tolerance, dominance_holds) = match search_cost {
            Some(c) => (c <= oracle.cost * (1.0 + ORACLE_TOLERANCE) + slack, oracle.cost <= c + slack),
            None => (false, true),
        };
        outcomes.push(OracleOutcome {
            instance: index,
            actionable: inst.schema.actionable_count(),
            oracle_cost: oracle.cost,
            search_cost,
            within_tolerance,
            dominance_holds,
        });
    }
    Ok(OracleReport { outcomes })
}
