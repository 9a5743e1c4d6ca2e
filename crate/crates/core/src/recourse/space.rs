//! Pre-encoded action space shared by the search routines.

use std::collections::HashSet;

use super::{action_cost, enumerate_actions, Exclusions, RecourseError, RecourseProblem};
use crate::schema::{Action, Intervention};

enum Patch {
    Num { offset: usize, value: f64 },
    Cat { offset: usize, width: usize, hot: usize },
}

pub(crate) struct ActionSpace {
    pub actions: Vec<Action>,
    /// Schema index of each action's feature.
    pub feature: Vec<usize>,
    pub costs: Vec<f64>,
    /// `(schema index, first action, one past last action)` per feature with actions.
    pub groups: Vec<(usize, usize, usize)>,
    patches: Vec<Patch>,
    base: Vec<f64>,
    base_label: u8,
    excluded_sets: HashSet<Vec<u32>>,
    excluded_features: Vec<Vec<usize>>,
}

impl ActionSpace {
    pub fn build(problem: &RecourseProblem<'_>, exclusions: &Exclusions) -> Result<Self, RecourseError> {
        problem.check()?;
        let schema = problem.schema;
        let base = schema.encode(problem.profile)?;
        let base_label = problem.classifier.predict_encoded(&base);
        if base_label != 0 {
            return Err(RecourseError::AlreadyApproved);
        }
        let actions = enumerate_actions(problem.profile, schema, problem.constraints);
        if actions.is_empty() {
            return Err(RecourseError::EmptyActionSpace);
        }
        let mut feature = Vec::with_capacity(actions.len());
        let mut costs = Vec::with_capacity(actions.len());
        let mut patches = Vec::with_capacity(actions.len());
        let mut groups: Vec<(usize, usize, usize)> = Vec::new();
        for (k, a) in actions.iter().enumerate() {
            let fi = schema.index_of(&a.feature).expect("enumerated action on known feature");
            let spec = &schema.features()[fi];
            let offset = schema.encoded_offset(fi);
            let width = spec.encoded_width();
            let mut block = vec![0.0; width];
            spec.encode_value(&a.target, &mut block)?;
            patches.push(if spec.is_numeric() {
                Patch::Num { offset, value: block[0] }
            } else {
                let hot = block.iter().position(|v| *v == 1.0).expect("one-hot block");
                Patch::Cat { offset, width, hot }
            });
            costs.push(action_cost(a, problem.profile, problem.weights, problem.constraints, schema)?);
            feature.push(fi);
            match groups.last_mut() {
                Some(g) if g.0 == fi => g.2 = k + 1,
                _ => groups.push((fi, k, k + 1)),
            }
        }
        let mut space = ActionSpace {
            actions,
            feature,
            costs,
            groups,
            patches,
            base,
            base_label,
            excluded_sets: HashSet::new(),
            excluded_features: Vec::new(),
        };
        for i in &exclusions.interventions {
            if let Some(set) = space.index_set(i) {
                space.excluded_sets.insert(set);
            }
        }
        for fs in &exclusions.feature_sets {
            let mut idx: Vec<usize> = fs.iter().filter_map(|f| schema.index_of(f)).collect();
            if idx.len() == fs.len() {
                idx.sort_unstable();
                space.excluded_features.push(idx);
            }
        }
        Ok(space)
    }

    /// Sorted action indices of `i`, or `None` if some action is outside the space.
    pub fn index_set(&self, i: &Intervention) -> Option<Vec<u32>> {
        let mut set = i
            .actions()
            .iter()
            .map(|a| self.actions.iter().position(|b| b == a).map(|k| k as u32))
            .collect::<Option<Vec<u32>>>()?;
        set.sort_unstable();
        Some(set)
    }

    pub fn intervention(&self, set: &[u32]) -> Intervention {
        Intervention::new(set.iter().map(|&k| self.actions[k as usize].clone()).collect())
            .expect("index sets touch distinct features")
    }

    /// Cost of a sorted index set, summed in canonical order.
    pub fn cost(&self, set: &[u32]) -> f64 {
        set.iter().fold(0.0, |acc, &k| acc + self.costs[k as usize])
    }

    pub fn is_excluded(&self, set: &[u32]) -> bool {
        if self.excluded_sets.contains(set) {
            return true;
        }
        if self.excluded_features.is_empty() {
            return false;
        }
        let features: Vec<usize> = set.iter().map(|&k| self.feature[k as usize]).collect();
        self.excluded_features.iter().any(|f| *f == features)
    }

    /// Whether applying the actions in `set` changes the classifier's decision.
    pub fn flips(&self, set: &[u32], classifier: &dyn crate::classifier::Classifier, scratch: &mut Vec<f64>) -> bool {
        scratch.clear();
        scratch.extend_from_slice(&self.base);
        for &k in set {
            match self.patches[k as usize] {
                Patch::Num { offset, value } => scratch[offset] = value,
                Patch::Cat { offset, width, hot } => {
                    scratch[offset..offset + width].iter_mut().for_each(|v| *v = 0.0);
                    scratch[offset + hot] = 1.0;
                }
            }
        }
        classifier.predict_encoded(scratch) != self.base_label
    }
}
