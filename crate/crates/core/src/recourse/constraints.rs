use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RecourseError;
use crate::schema::{FeatureKind, FeatureSet, Value};

fn unit() -> f64 {
    1.0
}

fn is_unit(v: &f64) -> bool {
    *v == 1.0
}

/// User-imposed limits on one actionable feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConstraint {
    /// Acceptable numeric range `[lo, hi]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[f64; 2]>,
    /// Allowed categorical options.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
    /// Cost multiplier derived from the user's achievability rating.
    #[serde(default = "unit", skip_serializing_if = "is_unit")]
    pub achievability: f64,
}

impl Default for FeatureConstraint {
    fn default() -> Self {
        FeatureConstraint {
            range: None,
            options: None,
            achievability: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConstraintSet {
    features: BTreeMap<String, FeatureConstraint>,
}

impl ConstraintSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, feature: &str) -> Option<&FeatureConstraint> {
        self.features.get(feature)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &FeatureConstraint)> {
        self.features.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Validates and stores the constraint for `feature`, replacing any previous one.
    pub fn set(&mut self, schema: &FeatureSet, feature: &str, c: FeatureConstraint) -> Result<(), RecourseError> {
        validate_one(schema, feature, &c)?;
        self.features.insert(feature.to_owned(), c);
        Ok(())
    }

    /// Stores a constraint that was validated earlier against the same schema.
    pub(crate) fn insert_validated(&mut self, feature: &str, c: FeatureConstraint) {
        self.features.insert(feature.to_owned(), c);
    }

    pub fn validate(&self, schema: &FeatureSet) -> Result<(), RecourseError> {
        self.features.iter().try_for_each(|(f, c)| validate_one(schema, f, c))
    }

    pub fn multiplier(&self, feature: &str) -> f64 {
        self.features.get(feature).map_or(1.0, |c| c.achievability)
    }

    /// Whether `value` is an acceptable target for `feature`.
    pub fn allows(&self, feature: &str, value: &Value) -> bool {
        let Some(c) = self.features.get(feature) else {
            return true;
        };
        match value {
            Value::Num(v) => c.range.is_none_or(|[lo, hi]| {
                let tol = 1e-9 * (hi - lo).abs().max(1.0);
                *v >= lo - tol && *v <= hi + tol
            }),
            Value::Cat(s) => c.options.as_ref().is_none_or(|opts| opts.iter().any(|o| o == s)),
        }
    }
}

fn invalid(feature: &str, reason: impl Into<String>) -> RecourseError {
    RecourseError::InvalidConstraint {
        feature: feature.to_owned(),
        reason: reason.into(),
    }
}

fn validate_one(schema: &FeatureSet, feature: &str, c: &FeatureConstraint) -> Result<(), RecourseError> {
    let spec = schema.feature(feature).ok_or_else(|| invalid(feature, "unknown feature"))?;
    if !spec.actionable {
        return Err(invalid(feature, "feature is not actionable"));
    }
    if !(c.achievability.is_finite() && c.achievability > 0.0) {
        return Err(invalid(feature, "achievability multiplier must be positive"));
    }
    match &spec.kind {
        FeatureKind::Numeric { min, max, .. } => {
            if c.options.is_some() {
                return Err(invalid(feature, "options given for a numeric feature"));
            }
            if let Some([lo, hi]) = c.range {
                if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                    return Err(invalid(feature, "range must satisfy lo <= hi"));
                }
                if lo < *min || hi > *max {
                    return Err(invalid(feature, format!("range [{lo}, {hi}] outside domain [{min}, {max}]")));
                }
            }
        }
        FeatureKind::Categorical { options } => {
            if c.range.is_some() {
                return Err(invalid(feature, "range given for a categorical feature"));
            }
            if let Some(allowed) = &c.options {
                if allowed.is_empty() {
                    return Err(invalid(feature, "allowed option subset is empty"));
                }
                if let Some(bad) = allowed.iter().find(|o| !options.contains(o)) {
                    return Err(invalid(feature, format!("unknown option `{bad}`")));
                }
            }
        }
    }
    Ok(())
}
