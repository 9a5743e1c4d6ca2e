use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::SimulationError;
use crate::elicitation::{ChoiceModel, ChoiceQuery};
use crate::recourse::{intervention_cost, ConstraintSet, PreferenceWeights, RecourseResult};
use crate::schema::{FeatureSet, Intervention, UserProfile};

/// A synthetic participant with hidden true weights.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    true_weights: PreferenceWeights,
    choice_model: ChoiceModel,
    rating_thresholds: [f64; 4],
    rng: ChaCha8Rng,
}

impl SimulatedUser {
    pub fn new(
        true_weights: PreferenceWeights,
        choice_model: ChoiceModel,
        rating_thresholds: [f64; 4],
        seed: u64,
    ) -> Result<Self, SimulationError> {
        if (true_weights.as_slice().iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SimulationError::InvalidTrueWeights);
        }
        if rating_thresholds.iter().any(|t| !t.is_finite()) || rating_thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SimulationError::InvalidThresholds);
        }
        Ok(SimulatedUser {
            true_weights,
            choice_model,
            rating_thresholds,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// True weights drawn from the flat distribution on the simplex.
    pub fn draw_weights(dim: usize, seed: u64) -> PreferenceWeights {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..dim).map(|_| Exp1.sample(&mut rng)).collect();
        PreferenceWeights::new(raw).expect("exponential draws are positive").normalized()
    }

    pub fn true_weights(&self) -> &PreferenceWeights {
        &self.true_weights
    }

    pub fn choice_model(&self) -> &ChoiceModel {
        &self.choice_model
    }

    pub fn rating_thresholds(&self) -> [f64; 4] {
        self.rating_thresholds
    }
}

/// Rating cutpoints at the 20th, 40th, 60th and 80th percentiles of `costs`,
/// nudged apart when they coincide.
pub fn calibrate_thresholds(costs: &[f64]) -> Result<[f64; 4], SimulationError> {
    let mut v: Vec<f64> = costs.iter().copied().filter(|c| c.is_finite()).collect();
    if v.is_empty() {
        return Err(SimulationError::InvalidThresholds);
    }
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    let mut t = [at(0.2), at(0.4), at(0.6), at(0.8)];
    let gap = 1e-9 * v[v.len() - 1].abs().max(1e-9);
    for i in 1..4 {
        if t[i] <= t[i - 1] {
            t[i] = t[i - 1] + gap;
        }
    }
    Ok(t)
}

/// Samples an alternative from the user's softmax choice model under `w*`.
pub fn sim_choose(u: &mut SimulatedUser, q: &ChoiceQuery) -> usize {
    if q.len() == 1 {
        return 0;
    }
    let probs = u.choice_model.probabilities(&q.costs(&u.true_weights));
    WeightedIndex::new(&probs).expect("softmax has positive mass").sample(&mut u.rng)
}

/// Likert rating of a plan: 5 below the first cutpoint down to 1 above the
/// last; a cost equal to a cutpoint falls in the lower bucket.
pub fn sim_rate(
    u: &SimulatedUser,
    i: &Intervention,
    x: &UserProfile,
    cs: &ConstraintSet,
    schema: &FeatureSet,
) -> Result<i64, SimulationError> {
    let cost = intervention_cost(i, x, &u.true_weights, cs, schema)?;
    Ok(rating_for_cost(&u.rating_thresholds, cost))
}

pub(crate) fn rating_for_cost(thresholds: &[f64; 4], cost: f64) -> i64 {
    5 - thresholds.iter().filter(|t| **t <= cost).count() as i64
}

const REGRET_TOLERANCE: f64 = 1e-12;

/// Cost gap under `w*` between `i` and the exact optimum, clamped at zero.
pub fn regret(
    i: &Intervention,
    x: &UserProfile,
    w_star: &PreferenceWeights,
    cs: &ConstraintSet,
    schema: &FeatureSet,
    oracle_best: &RecourseResult,
) -> Result<f64, SimulationError> {
    let gap = intervention_cost(i, x, w_star, cs, schema)? - oracle_best.cost;
    if gap < -REGRET_TOLERANCE * oracle_best.cost.max(1.0) {
        return Err(SimulationError::BelowOptimum(-gap));
    }
    Ok(gap.max(0.0))
}
