//! Mini-batch SGD on mean binary cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ClassifierError, EnsembleClassifier, MlpModel, DEFAULT_THRESHOLD};
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Hidden layer widths for member 0 and member 1.
    pub hidden_dims: [Vec<usize>; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 32,
            seed: 0,
            hidden_dims: [vec![16, 8], vec![12, 12]],
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(ClassifierError::Config("epochs and batch_size must be positive".into()));
        }
        if self.hidden_dims.iter().flatten().any(|&d| d == 0) {
            return Err(ClassifierError::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Trains one ensemble member. Initialization, shuffling and batching all come
/// from a generator keyed by `(cfg.seed, member_index)`.
pub fn train_member(data: &Dataset, cfg: &TrainConfig, member_index: usize) -> Result<MlpModel, ClassifierError> {
    cfg.validate()?;
    if member_index > 1 {
        return Err(ClassifierError::Config(format!("member index {member_index} out of range")));
    }
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let positives = data.positives();
    if positives == 0 || positives == data.len() {
        return Err(ClassifierError::SingleClass);
    }

    let encoded = data
        .rows
        .iter()
        .map(|(x, y)| Ok((data.schema.encode(x)?, f64::from(*y))))
        .collect::<Result<Vec<_>, ClassifierError>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(member_index as u64 + 1);

    let mut dims = vec![data.schema.encoded_len()];
    dims.extend(&cfg.hidden_dims[member_index]);
    dims.push(1);
    let mut model = MlpModel::init(&dims, &mut rng)?;

    let mut order: Vec<usize> = (0..encoded.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| (encoded[i].0.as_slice(), encoded[i].1)).collect();
            epoch_loss += model.loss(&batch) * batch.len() as f64;
            let grad = model.gradient(&batch);
            model.step(&grad, cfg.learning_rate);
        }
        if !epoch_loss.is_finite() || !model.flat_params().iter().all(|p| p.is_finite()) {
            return Err(ClassifierError::Divergence { epoch });
        }
    }
    Ok(model)
}

pub fn train_ensemble(data: &Dataset, cfg: &TrainConfig) -> Result<EnsembleClassifier, ClassifierError> {
    let members = [train_member(data, cfg, 0)?, train_member(data, cfg, 1)?];
    EnsembleClassifier::new(members, DEFAULT_THRESHOLD)
}
