use super::ConstraintSet;
use crate::schema::{Action, FeatureSet, UserProfile};

/// Every single-feature change allowed by the schema and `cs`, in schema order
/// and then ascending value / option order. Current values are skipped.
pub fn enumerate_actions(x: &UserProfile, schema: &FeatureSet, cs: &ConstraintSet) -> Vec<Action> {
    let mut out = Vec::new();
    for &i in schema.actionable_indices() {
        let spec = &schema.features()[i];
        let current = x.get(&spec.name);
        for value in spec.domain() {
            if Some(&value) != current && cs.allows(&spec.name, &value) {
                out.push(Action {
                    feature: spec.name.clone(),
                    target: value,
                });
            }
        }
    }
    out
}
