use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimulationError;
use crate::dataset::Dataset;
use crate::schema::{FeatureKind, FeatureSet, UserProfile};

/// Contribution of one feature to the label score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RuleTerm {
    /// Coefficient on the min-max scaled value of a numeric feature.
    Numeric(f64),
    /// Per-option contribution of a categorical feature.
    Categorical(BTreeMap<String, f64>),
}

/// Linear score over the encoded features; label 1 when the score exceeds the threshold.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelRule {
    pub terms: BTreeMap<String, RuleTerm>,
    /// `None` puts the threshold at the median score.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl LabelRule {
    /// The rule as a coefficient vector over `schema.encode` output.
    pub fn coefficients(&self, schema: &FeatureSet) -> Result<Vec<f64>, SimulationError> {
        let mut coef = vec![0.0; schema.encoded_len()];
        for (name, term) in &self.terms {
            let i = schema
                .index_of(name)
                .ok_or_else(|| SimulationError::InvalidRule(format!("unknown feature `{name}`")))?;
            let offset = schema.encoded_offset(i);
            match (&schema.features()[i].kind, term) {
                (FeatureKind::Numeric { .. }, RuleTerm::Numeric(c)) => coef[offset] = *c,
                (FeatureKind::Categorical { options }, RuleTerm::Categorical(per)) => {
                    for (opt, c) in per {
                        let k = options.iter().position(|o| o == opt).ok_or_else(|| {
                            SimulationError::InvalidRule(format!("feature `{name}` has no option `{opt}`"))
                        })?;
                        coef[offset + k] = *c;
                    }
                }
                _ => return Err(SimulationError::InvalidRule(format!("term kind does not match feature `{name}`"))),
            }
        }
        if coef.iter().any(|c| !c.is_finite()) {
            return Err(SimulationError::InvalidRule("coefficients must be finite".into()));
        }
        Ok(coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataSpec {
    pub schema: FeatureSet,
    pub n_rows: usize,
    pub label_rule: LabelRule,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

const THRESHOLD_RETRIES: usize = 10;

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Rows drawn uniformly from each feature's domain, labelled by the noisy rule.
///
/// If the labels come out single-class the threshold is moved to the median
/// score and the noise redrawn, up to ten times.
pub fn gen_dataset(spec: &SyntheticDataSpec) -> Result<Dataset, SimulationError> {
    if spec.n_rows == 0 {
        return Err(SimulationError::EmptyDataset);
    }
    if !(0.0..0.5).contains(&spec.label_noise) {
        return Err(SimulationError::InvalidNoise(spec.label_noise));
    }
    let schema = &spec.schema;
    let coef = spec.label_rule.coefficients(schema)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let domains: Vec<_> = schema.features().iter().map(|f| f.domain()).collect();
    let mut profiles = Vec::with_capacity(spec.n_rows);
    let mut scores = Vec::with_capacity(spec.n_rows);
    for _ in 0..spec.n_rows {
        let values = schema
            .features()
            .iter()
            .zip(&domains)
            .map(|(f, d)| (f.name.clone(), d[rng.random_range(0..d.len())].clone()))
            .collect();
        let p = UserProfile::new(values, schema)?;
        let z = schema.encode(&p)?;
        scores.push(coef.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>());
        profiles.push(p);
    }
    let mut threshold = spec.label_rule.threshold.unwrap_or_else(|| median(&scores));
    for attempt in 0..=THRESHOLD_RETRIES {
        if attempt > 0 {
            threshold = median(&scores);
        }
        let labels: Vec<u8> = scores
            .iter()
            .map(|s| {
                let clean = u8::from(*s > threshold);
                if spec.label_noise > 0.0 && rng.random_bool(spec.label_noise) {
                    1 - clean
                } else {
                    clean
                }
            })
            .collect();
        let positives = labels.iter().filter(|y| **y == 1).count();
        if positives > 0 && positives < labels.len() {
            return Ok(Dataset {
                schema: schema.clone(),
                rows: profiles.into_iter().zip(labels).collect(),
            });
        }
    }
    Err(SimulationError::DegenerateLabels(THRESHOLD_RETRIES))
}
