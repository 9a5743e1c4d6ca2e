//! Exhaustive reference search over every intervention up to a length limit.

use std::cmp::Ordering;

use super::{action_cost, enumerate_actions, plan_order, RecourseError, RecourseProblem, RecourseResult};
use crate::schema::{Action, Intervention};

/// Largest `|actions|^max_len` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

struct Enumeration<'a, 'p> {
    problem: &'a RecourseProblem<'p>,
    actions: Vec<Action>,
    costs: Vec<f64>,
    /// Action index ranges per feature, in schema order.
    groups: Vec<std::ops::Range<usize>>,
    max_len: usize,
    best: Option<(Vec<u32>, f64)>,
    checked: usize,
}

impl Enumeration<'_, '_> {
    fn visit(&mut self, next_group: usize, set: &mut Vec<u32>, cost: f64) -> Result<(), RecourseError> {
        if !set.is_empty() {
            let improves = match &self.best {
                None => true,
                Some((b, bc)) => plan_order((cost, set), (*bc, b)) == Ordering::Less,
            };
            if improves {
                let i = Intervention::new(set.iter().map(|&k| self.actions[k as usize].clone()).collect())?;
                self.checked += 1;
                if self.problem.flips(&i)? {
                    self.best = Some((set.clone(), cost));
                }
            }
        }
        if set.len() == self.max_len {
            return Ok(());
        }
        for g in next_group..self.groups.len() {
            for k in self.groups[g].clone() {
                set.push(k as u32);
                self.visit(g + 1, set, cost + self.costs[k])?;
                set.pop();
            }
        }
        Ok(())
    }
}

/// Exact minimum-cost flipping intervention with at most `max_len` actions.
///
/// Ties are broken exactly as in the tree search. Refuses spaces where
/// `|actions|^max_len` exceeds [`BRUTE_FORCE_LIMIT`].
pub fn brute_force_search(problem: &RecourseProblem<'_>, max_len: usize) -> Result<RecourseResult, RecourseError> {
    problem.check()?;
    if problem.classifier.predict(problem.profile, problem.schema)? != 0 {
        return Err(RecourseError::AlreadyApproved);
    }
    let actions = enumerate_actions(problem.profile, problem.schema, problem.constraints);
    if actions.is_empty() {
        return Err(RecourseError::EmptyActionSpace);
    }
    let size = (actions.len() as f64).powi(max_len as i32);
    if size > BRUTE_FORCE_LIMIT {
        return Err(RecourseError::SearchSpaceTooLarge { size });
    }
    let costs = actions
        .iter()
        .map(|a| action_cost(a, problem.profile, problem.weights, problem.constraints, problem.schema))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut groups: Vec<std::ops::Range<usize>> = Vec::new();
    for (k, a) in actions.iter().enumerate() {
        match groups.last_mut() {
            Some(r) if actions[r.start].feature == a.feature => r.end = k + 1,
            _ => groups.push(k..k + 1),
        }
    }
    let mut e = Enumeration {
        problem,
        actions,
        costs,
        groups,
        max_len,
        best: None,
        checked: 0,
    };
    e.visit(0, &mut Vec::new(), 0.0)?;
    let checked = e.checked;
    let (set, _) = e.best.ok_or(RecourseError::NoRecourse { rollouts_used: checked })?;
    let i = Intervention::new(set.iter().map(|&k| e.actions[k as usize].clone()).collect())?;
    RecourseResult::evaluate(problem, i, checked)
}
