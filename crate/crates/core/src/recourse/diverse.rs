use std::collections::BTreeSet;

use super::{mcts_explore, ConstraintSet, Exclusions, RecourseError, RecourseProblem, RecourseResult, SearchBudget};

/// Achievability factor applied to features already used by an earlier plan.
pub const DIVERSITY_PENALTY: f64 = 4.0;

/// Up to `m` plans touching pairwise distinct feature sets.
///
/// The first plan is exactly the tree-search result. Each later search runs
/// with the features of earlier plans made more expensive and their exact
/// feature sets excluded. Reported costs use the unpenalized constraints.
/// Returns fewer than `m` plans when no further distinct plan is found.
pub fn diverse_plans(
    problem: &RecourseProblem<'_>,
    m: usize,
    budget: &SearchBudget,
    exclusions: &Exclusions,
) -> Result<Vec<RecourseResult>, RecourseError> {
    let mut plans: Vec<RecourseResult> = Vec::with_capacity(m);
    let mut excl = exclusions.clone();
    let mut penalized = problem.constraints.clone();
    for j in 0..m {
        let searched = problem.with_constraints(&penalized);
        let outcome = match mcts_explore(&searched, &budget.with_seed(budget.seed.wrapping_add(j as u64)), &excl) {
            Ok(o) => o,
            Err(RecourseError::NoRecourse { .. }) if !plans.is_empty() => break,
            Err(e) => return Err(e),
        };
        let plan = RecourseResult::evaluate(problem, outcome.best.intervention, outcome.rollouts_used)?;
        let features: BTreeSet<String> = plan.intervention.features().map(str::to_owned).collect();
        penalized = penalize(problem, &penalized, &features)?;
        excl.feature_sets.push(features);
        plans.push(plan);
    }
    Ok(plans)
}

fn penalize(problem: &RecourseProblem<'_>, cs: &ConstraintSet, features: &BTreeSet<String>) -> Result<ConstraintSet, RecourseError> {
    let mut out = cs.clone();
    for f in features {
        let mut c = cs.get(f).cloned().unwrap_or_default();
        c.achievability *= DIVERSITY_PENALTY;
        out.set(problem.schema, f, c)?;
    }
    Ok(out)
}
