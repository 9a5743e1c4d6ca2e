//! Weighted, achievability-scaled, range-normalized effort.

use super::{ConstraintSet, PreferenceWeights, RecourseError};
use crate::schema::{Action, FeatureKind, FeatureSet, Intervention, SchemaError, UserProfile, Value};

/// Unweighted effort of moving `a.feature` from its value in `x` to `a.target`:
/// `|target - current| / (max - min)` for numerics, 1 for categoricals.
pub fn effort(a: &Action, x: &UserProfile, schema: &FeatureSet) -> Result<f64, RecourseError> {
    let spec = schema
        .feature(&a.feature)
        .ok_or_else(|| SchemaError::UnknownFeature(a.feature.clone()))?;
    let current = x.get(&a.feature).ok_or_else(|| SchemaError::MissingValue(a.feature.clone()))?;
    match (&spec.kind, current, &a.target) {
        (FeatureKind::Numeric { min, max, .. }, Value::Num(c), Value::Num(t)) => Ok((t - c).abs() / (max - min)),
        (FeatureKind::Categorical { .. }, Value::Cat(_), Value::Cat(_)) => Ok(1.0),
        _ => Err(SchemaError::OutOfDomain {
            feature: a.feature.clone(),
            value: a.target.to_string(),
        }
        .into()),
    }
}

fn weight_position(schema: &FeatureSet, feature: &str) -> Result<usize, RecourseError> {
    schema
        .actionable_position(feature)
        .ok_or_else(|| SchemaError::NotActionable(feature.to_owned()).into())
}

pub fn action_cost(
    a: &Action,
    x: &UserProfile,
    w: &PreferenceWeights,
    cs: &ConstraintSet,
    schema: &FeatureSet,
) -> Result<f64, RecourseError> {
    let pos = weight_position(schema, &a.feature)?;
    let scale = effort(a, x, schema)? * cs.multiplier(&a.feature);
    Ok(w.as_slice()[pos] * scale)
}

/// An intervention's cost as a linear function of the weights: one
/// `(weight position, effort x multiplier)` term per action, in action order.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTerms {
    terms: Vec<(usize, f64)>,
}

impl CostTerms {
    pub fn new(i: &Intervention, x: &UserProfile, cs: &ConstraintSet, schema: &FeatureSet) -> Result<Self, RecourseError> {
        let mut current = x.clone();
        let mut terms = Vec::with_capacity(i.len());
        for a in i.actions() {
            let pos = weight_position(schema, &a.feature)?;
            terms.push((pos, effort(a, &current, schema)? * cs.multiplier(&a.feature)));
            current = schema.apply_action(&current, a)?;
        }
        Ok(CostTerms { terms })
    }

    pub fn cost(&self, w: &PreferenceWeights) -> f64 {
        self.cost_slice(w.as_slice())
    }

    pub fn cost_slice(&self, w: &[f64]) -> f64 {
        self.terms.iter().fold(0.0, |acc, (pos, scale)| acc + w[*pos] * scale)
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.terms
    }
}

/// Sum of action costs, each taken against the profile state before that action.
pub fn intervention_cost(
    i: &Intervention,
    x: &UserProfile,
    w: &PreferenceWeights,
    cs: &ConstraintSet,
    schema: &FeatureSet,
) -> Result<f64, RecourseError> {
    Ok(CostTerms::new(i, x, cs, schema)?.cost(w))
}
