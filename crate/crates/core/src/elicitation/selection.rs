use super::{ChoiceQuery, ElicitationError, WeightPosterior};
use crate::recourse::{ConstraintSet, CostTerms};
use crate::schema::{FeatureSet, Intervention, UserProfile};

/// Posterior expectation of the best (least costly) alternative's utility,
/// with utility `-cost`.
pub fn expected_utility_of_selection(
    p: &WeightPosterior,
    set: &[Intervention],
    context: &UserProfile,
    cs: &ConstraintSet,
    schema: &FeatureSet,
) -> Result<f64, ElicitationError> {
    if set.is_empty() {
        return Err(ElicitationError::EmptyQuery);
    }
    let terms = set
        .iter()
        .map(|i| CostTerms::new(i, context, cs, schema))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(p.expectation(|w| {
        terms
            .iter()
            .map(|t| -t.cost(w))
            .fold(f64::NEG_INFINITY, f64::max)
    }))
}

/// Greedy maximization of the expected utility of selection over `candidates`.
///
/// Each step adds the candidate with the largest marginal gain; ties go to the
/// earlier candidate. Utilities are shifted by the worst utility over all
/// candidates and particles so the empty set is worth zero; this leaves the
/// argmax of every step unchanged.
pub fn select_choice_set(
    p: &WeightPosterior,
    candidates: &[Intervention],
    k: usize,
    context: &UserProfile,
    cs: &ConstraintSet,
    schema: &FeatureSet,
) -> Result<ChoiceQuery, ElicitationError> {
    if k == 0 || candidates.len() < k {
        return Err(ElicitationError::InsufficientCandidates {
            needed: k.max(1),
            available: candidates.len(),
        });
    }
    // Validates distinctness, applicability and constraints up front.
    let pool = ChoiceQuery::new(candidates.to_vec(), context.clone(), cs.clone(), schema)?;
    let utilities: Vec<Vec<f64>> = p
        .particles()
        .iter()
        .map(|w| pool.costs(w).into_iter().map(|c| -c).collect())
        .collect();
    let floor = utilities
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let probs = p.probabilities();
    let mut best = vec![floor; p.len()];
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut pick: Option<(usize, f64)> = None;
        for j in (0..candidates.len()).filter(|j| !chosen.contains(j)) {
            let value: f64 = (0..p.len())
                .map(|i| probs[i] * (best[i].max(utilities[i][j]) - floor))
                .sum();
            if pick.is_none_or(|(_, v)| value > v) {
                pick = Some((j, value));
            }
        }
        let (j, _) = pick.expect("enough candidates remain");
        for (b, u) in best.iter_mut().zip(&utilities) {
            *b = b.max(u[j]);
        }
        chosen.push(j);
    }
    let alternatives = chosen.iter().map(|&j| candidates[j].clone()).collect();
    ChoiceQuery::new(alternatives, context.clone(), cs.clone(), schema)
}
