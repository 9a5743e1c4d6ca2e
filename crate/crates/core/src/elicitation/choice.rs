use serde::{Deserialize, Serialize};

use super::{ElicitationError, WeightPosterior};
use crate::recourse::{ConstraintSet, CostTerms, PreferenceWeights};
use crate::schema::{FeatureSet, Intervention, UserProfile};

pub const DEFAULT_BETA: f64 = 10.0;

/// Softmax (logit) choice model over negated plan costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChoiceModel {
    pub beta: f64,
}

impl Default for ChoiceModel {
    fn default() -> Self {
        ChoiceModel { beta: DEFAULT_BETA }
    }
}

impl ChoiceModel {
    pub fn new(beta: f64) -> Result<Self, ElicitationError> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(ElicitationError::InvalidBeta(beta));
        }
        Ok(ChoiceModel { beta })
    }

    /// Log-probability of choosing `chosen` given alternative costs.
    pub fn log_probability(&self, costs: &[f64], chosen: usize) -> f64 {
        let logits = costs.iter().map(|c| -self.beta * c);
        let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
        let log_z = logits.map(|l| (l - max).exp()).sum::<f64>().ln();
        (-self.beta * costs[chosen] - max) - log_z
    }

    pub fn probabilities(&self, costs: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = costs.iter().map(|c| -self.beta * c).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = e.iter().sum();
        e.iter().map(|v| v / z).collect()
    }
}

/// A set of alternative plans for one profile under fixed constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceQuery {
    alternatives: Vec<Intervention>,
    context: UserProfile,
    constraints: ConstraintSet,
    terms: Vec<CostTerms>,
}

impl ChoiceQuery {
    /// Validates that alternatives are distinct, applicable to `context` and
    /// within `constraints`.
    pub fn new(
        alternatives: Vec<Intervention>,
        context: UserProfile,
        constraints: ConstraintSet,
        schema: &FeatureSet,
    ) -> Result<Self, ElicitationError> {
        if alternatives.is_empty() {
            return Err(ElicitationError::EmptyQuery);
        }
        let canonical: Vec<Intervention> = alternatives.iter().map(|i| i.canonical(schema)).collect();
        for j in 1..canonical.len() {
            if canonical[..j].contains(&canonical[j]) {
                return Err(ElicitationError::DuplicateAlternative(j));
            }
        }
        let mut terms = Vec::with_capacity(alternatives.len());
        for (index, i) in alternatives.iter().enumerate() {
            let invalid = |reason: String| ElicitationError::InvalidAlternative { index, reason };
            if let Some(a) = i.actions().iter().find(|a| !constraints.allows(&a.feature, &a.target)) {
                return Err(invalid(format!("action {a} outside the allowed values")));
            }
            terms.push(CostTerms::new(i, &context, &constraints, schema).map_err(|e| invalid(e.to_string()))?);
        }
        Ok(ChoiceQuery {
            alternatives,
            context,
            constraints,
            terms,
        })
    }

    pub fn alternatives(&self) -> &[Intervention] {
        &self.alternatives
    }

    pub fn context(&self) -> &UserProfile {
        &self.context
    }

    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.alternatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alternatives.is_empty()
    }

    pub fn position(&self, i: &Intervention) -> Option<usize> {
        self.alternatives.iter().position(|a| a == i)
    }

    /// Cost of every alternative under `w`.
    pub fn costs(&self, w: &PreferenceWeights) -> Vec<f64> {
        self.terms.iter().map(|t| t.cost(w)).collect()
    }

    fn check_choice(&self, chosen: usize) -> Result<(), ElicitationError> {
        if chosen >= self.len() {
            return Err(ElicitationError::InvalidChoice {
                index: chosen,
                k: self.len(),
            });
        }
        Ok(())
    }
}

/// `exp(-beta c_chosen) / sum_j exp(-beta c_j)` with costs under `w`.
pub fn choice_likelihood(q: &ChoiceQuery, chosen: usize, w: &PreferenceWeights, cm: &ChoiceModel) -> Result<f64, ElicitationError> {
    choice_log_likelihood(q, chosen, w, cm).map(f64::exp)
}

pub fn choice_log_likelihood(
    q: &ChoiceQuery,
    chosen: usize,
    w: &PreferenceWeights,
    cm: &ChoiceModel,
) -> Result<f64, ElicitationError> {
    q.check_choice(chosen)?;
    Ok(cm.log_probability(&q.costs(w), chosen))
}

/// Bayes update of every particle by the likelihood of the observed choice.
pub fn update_posterior(
    p: &WeightPosterior,
    q: &ChoiceQuery,
    chosen: usize,
    cm: &ChoiceModel,
) -> Result<WeightPosterior, ElicitationError> {
    q.check_choice(chosen)?;
    let logs: Vec<f64> = p
        .particles()
        .iter()
        .map(|w| cm.log_probability(&q.costs(w), chosen))
        .collect();
    p.reweight(&logs)
}
