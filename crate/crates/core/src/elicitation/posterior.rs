use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::ElicitationError;
use crate::recourse::PreferenceWeights;
use crate::schema::FeatureSet;

pub const DEFAULT_PARTICLES: usize = 500;

const MASS_TOLERANCE: f64 = 1e-9;

#[derive(Serialize, Deserialize)]
struct PosteriorDocument {
    particles: Vec<PreferenceWeights>,
    probabilities: Vec<f64>,
}

/// Weighted particle approximation of the distribution over cost weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PosteriorDocument", into = "PosteriorDocument")]
pub struct WeightPosterior {
    particles: Vec<PreferenceWeights>,
    probabilities: Vec<f64>,
}

impl TryFrom<PosteriorDocument> for WeightPosterior {
    type Error = ElicitationError;

    fn try_from(d: PosteriorDocument) -> Result<Self, Self::Error> {
        WeightPosterior::new(d.particles, d.probabilities)
    }
}

impl From<WeightPosterior> for PosteriorDocument {
    fn from(p: WeightPosterior) -> Self {
        PosteriorDocument {
            particles: p.particles,
            probabilities: p.probabilities,
        }
    }
}

impl WeightPosterior {
    /// Particles are normalized to the simplex; probabilities must sum to 1.
    pub fn new(particles: Vec<PreferenceWeights>, probabilities: Vec<f64>) -> Result<Self, ElicitationError> {
        if particles.is_empty() {
            return Err(ElicitationError::NoParticles);
        }
        if particles.len() != probabilities.len() {
            return Err(ElicitationError::InvalidPosterior(format!(
                "{} particles but {} probabilities",
                particles.len(),
                probabilities.len()
            )));
        }
        let dim = particles[0].len();
        if particles.iter().any(|w| w.len() != dim) {
            return Err(ElicitationError::InvalidPosterior("particles differ in dimension".into()));
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ElicitationError::InvalidPosterior("probabilities must be finite and non-negative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(ElicitationError::InvalidPosterior(format!("probabilities sum to {total}")));
        }
        Ok(WeightPosterior {
            particles: particles.iter().map(PreferenceWeights::normalized).collect(),
            probabilities,
        })
    }

    pub fn particles(&self) -> &[PreferenceWeights] {
        &self.particles
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    /// Same particles with new probabilities (already normalized by the caller).
    pub(crate) fn with_probabilities(&self, probabilities: Vec<f64>) -> Self {
        WeightPosterior {
            particles: self.particles.clone(),
            probabilities,
        }
    }

    /// Multiplies each probability by `exp(log_factor[i])` and renormalizes.
    pub(crate) fn reweight(&self, log_factors: &[f64]) -> Result<Self, ElicitationError> {
        debug_assert_eq!(log_factors.len(), self.len());
        if log_factors.iter().all(|f| f.to_bits() == log_factors[0].to_bits()) && log_factors[0].is_finite() {
            return Ok(self.clone());
        }
        let logs: Vec<f64> = self
            .probabilities
            .iter()
            .zip(log_factors)
            .map(|(p, f)| if *p > 0.0 { p.ln() + f } else { f64::NEG_INFINITY })
            .collect();
        if logs.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
            return Err(ElicitationError::DegenerateUpdate);
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(ElicitationError::DegenerateUpdate);
        }
        let unnorm: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = unnorm.iter().sum();
        Ok(self.with_probabilities(unnorm.iter().map(|u| u / total).collect()))
    }

    /// Draws `count` particle indices with replacement, proportional to probability.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<usize> {
        let dist = WeightedIndex::new(&self.probabilities).expect("posterior has positive mass");
        (0..count).map(|_| dist.sample(rng)).collect()
    }

    /// Probability-weighted expectation of `f` over particles.
    pub fn expectation(&self, mut f: impl FnMut(&PreferenceWeights) -> f64) -> f64 {
        self.particles.iter().zip(&self.probabilities).map(|(w, p)| p * f(w)).sum()
    }
}

/// `n` particles from the flat distribution on the simplex over the actionable
/// features, each with probability `1/n`.
pub fn init_posterior(schema: &FeatureSet, n: usize, seed: u64) -> Result<WeightPosterior, ElicitationError> {
    init_posterior_dim(schema.actionable_count(), n, seed)
}

pub(crate) fn init_posterior_dim(dim: usize, n: usize, seed: u64) -> Result<WeightPosterior, ElicitationError> {
    if n == 0 {
        return Err(ElicitationError::NoParticles);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let particles = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..dim).map(|_| Exp1.sample(&mut rng)).collect();
            PreferenceWeights::new(raw).map(|w| w.normalized())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WeightPosterior {
        particles,
        probabilities: vec![1.0 / n as f64; n],
    })
}

/// Probability-weighted mean particle, renormalized to the simplex.
pub fn point_estimate(p: &WeightPosterior) -> PreferenceWeights {
    let mut mean = vec![0.0; p.dim()];
    for (w, prob) in p.particles.iter().zip(&p.probabilities) {
        for (m, v) in mean.iter_mut().zip(w.as_slice()) {
            *m += prob * v;
        }
    }
    PreferenceWeights::new(mean)
        .expect("mean of simplex points is a valid weight vector")
        .normalized()
}
