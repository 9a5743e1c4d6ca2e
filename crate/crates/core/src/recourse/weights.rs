use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RecourseError;
use crate::schema::FeatureSet;

/// Non-negative cost weights, one per actionable feature in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PreferenceWeights {
    weights: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PreferenceWeights {
    type Error = RecourseError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        PreferenceWeights::new(v)
    }
}

impl From<PreferenceWeights> for Vec<f64> {
    fn from(w: PreferenceWeights) -> Self {
        w.weights
    }
}

impl PreferenceWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self, RecourseError> {
        if weights.is_empty() {
            return Err(RecourseError::InvalidWeights("no weights".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RecourseError::InvalidWeights("weights must be finite and non-negative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(RecourseError::InvalidWeights("weights must not all be zero".into()));
        }
        Ok(PreferenceWeights { weights })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform weights need at least one feature");
        PreferenceWeights {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn for_schema_uniform(schema: &FeatureSet) -> Self {
        Self::uniform(schema.actionable_count())
    }

    /// Builds weights from a name-keyed map; missing actionable features get 0.
    pub fn from_named(named: &BTreeMap<String, f64>, schema: &FeatureSet) -> Result<Self, RecourseError> {
        for name in named.keys() {
            if schema.actionable_position(name).is_none() {
                return Err(RecourseError::InvalidWeights(format!("`{name}` is not an actionable feature")));
            }
        }
        let weights = schema
            .actionable_names()
            .map(|n| named.get(n).copied().unwrap_or(0.0))
            .collect();
        Self::new(weights)
    }

    pub fn to_named(&self, schema: &FeatureSet) -> BTreeMap<String, f64> {
        schema
            .actionable_names()
            .zip(&self.weights)
            .map(|(n, w)| (n.to_owned(), *w))
            .collect()
    }

    /// Canonical form on the probability simplex.
    pub fn normalized(&self) -> Self {
        let total: f64 = self.weights.iter().sum();
        PreferenceWeights {
            weights: self.weights.iter().map(|w| w / total).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, RecourseError> {
        Self::new(self.weights.iter().map(|w| w * factor).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn cosine(&self, other: &PreferenceWeights) -> f64 {
        let dot: f64 = self.weights.iter().zip(&other.weights).map(|(a, b)| a * b).sum();
        let na = self.weights.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb = other.weights.iter().map(|b| b * b).sum::<f64>().sqrt();
        dot / (na * nb)
    }
}
