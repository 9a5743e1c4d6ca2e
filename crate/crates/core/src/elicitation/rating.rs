use serde::{Deserialize, Serialize};

use super::{update_posterior, ChoiceModel, ChoiceQuery, ElicitationError, WeightPosterior};
use crate::recourse::ConstraintSet;
use crate::schema::{FeatureSet, Intervention, UserProfile};

/// Likert anchors for plan ratings, index 0 is rating 1.
pub const RATING_LABELS: [&str; 5] = ["Terrible", "Bad", "Neutral", "Good", "Great"];

/// Likert anchors for per-feature achievability, index 0 is rating 1.
pub const ACHIEVABILITY_LABELS: [&str; 5] = ["Very difficult", "Difficult", "Neutral", "Easy", "Very easy"];

const ACHIEVABILITY_MULTIPLIERS: [f64; 5] = [4.0, 2.0, 1.0, 0.5, 0.25];

fn likert_index(likert: i64) -> Result<usize, ElicitationError> {
    if (1..=5).contains(&likert) {
        Ok((likert - 1) as usize)
    } else {
        Err(ElicitationError::LikertOutOfRange(likert))
    }
}

pub fn rating_label(likert: i64) -> Result<&'static str, ElicitationError> {
    likert_index(likert).map(|i| RATING_LABELS[i])
}

pub fn achievability_label(likert: i64) -> Result<&'static str, ElicitationError> {
    likert_index(likert).map(|i| ACHIEVABILITY_LABELS[i])
}

/// Cost multiplier for an achievability rating: 1 → 4.0 … 5 → 0.25.
pub fn achievability_to_multiplier(likert: i64) -> Result<f64, ElicitationError> {
    likert_index(likert).map(|i| ACHIEVABILITY_MULTIPLIERS[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingSignal {
    pub intervention: Intervention,
    pub likert: i64,
}

impl RatingSignal {
    pub fn new(intervention: Intervention, likert: i64) -> Result<Self, ElicitationError> {
        likert_index(likert)?;
        Ok(RatingSignal { intervention, likert })
    }
}

/// Turns a rating of one pool member into a posterior update.
///
/// Ratings 4 and 5 count as choosing the rated plan from the pool. Ratings 1
/// and 2 apply the inverse of that evidence: each particle is divided by the
/// likelihood it assigns to the rated plan being chosen, so a bad rating
/// followed by a good one on the same pool cancels out. Rating 3 changes nothing.
pub fn rating_to_update(
    p: &WeightPosterior,
    r: &RatingSignal,
    pool: &[Intervention],
    context: &UserProfile,
    cs: &ConstraintSet,
    cm: &ChoiceModel,
    schema: &FeatureSet,
) -> Result<WeightPosterior, ElicitationError> {
    likert_index(r.likert)?;
    if pool.is_empty() {
        return Err(ElicitationError::EmptyQuery);
    }
    let query = ChoiceQuery::new(pool.to_vec(), context.clone(), cs.clone(), schema)?;
    let rated = query.position(&r.intervention).ok_or(ElicitationError::NotInPool)?;
    match r.likert {
        3 => Ok(p.clone()),
        4 | 5 => update_posterior(p, &query, rated, cm),
        _ => {
            let logs: Vec<f64> = p
                .particles()
                .iter()
                .map(|w| -cm.log_probability(&query.costs(w), rated))
                .collect();
            p.reweight(&logs)
        }
    }
}
