//! Versioned JSON checkpoint of an ensemble.

use serde::{Deserialize, Serialize};

use super::{ClassifierError, Dense, EnsembleClassifier, MlpModel};

pub const CHECKPOINT_FORMAT: &str = "recourse-mlp-ensemble";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct MemberDoc {
    layer_dims: Vec<usize>,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    format: String,
    version: u32,
    threshold: f64,
    members: Vec<MemberDoc>,
}

pub fn save_checkpoint(h: &EnsembleClassifier) -> String {
    let members = h
        .members()
        .iter()
        .map(|m| MemberDoc {
            layer_dims: m.layer_dims(),
            layers: m
                .layers()
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.clone(),
                    biases: l.biases.clone(),
                })
                .collect(),
        })
        .collect();
    let doc = CheckpointDoc {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        threshold: h.threshold(),
        members,
    };
    let mut text = serde_json::to_string(&doc).expect("checkpoint serializes");
    text.push('\n');
    text
}

pub fn load_checkpoint(text: &str) -> Result<EnsembleClassifier, ClassifierError> {
    let doc: CheckpointDoc = serde_json::from_str(text).map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(ClassifierError::Checkpoint(format!("unknown format `{}`", doc.format)));
    }
    if doc.version != CHECKPOINT_VERSION {
        return Err(ClassifierError::Checkpoint(format!("unsupported version {}", doc.version)));
    }
    let members: Vec<MlpModel> = doc
        .members
        .into_iter()
        .map(|m| {
            if m.layer_dims.len() != m.layers.len() + 1 {
                return Err(ClassifierError::Shape("layer_dims does not match layer count".into()));
            }
            let layers = m
                .layers
                .into_iter()
                .enumerate()
                .map(|(i, l)| Dense {
                    inputs: m.layer_dims[i],
                    outputs: m.layer_dims[i + 1],
                    weights: l.weights,
                    biases: l.biases,
                })
                .collect();
            MlpModel::from_layers(layers)
        })
        .collect::<Result<_, _>>()?;
    let members: [MlpModel; 2] = members
        .try_into()
        .map_err(|v: Vec<MlpModel>| ClassifierError::Checkpoint(format!("expected 2 members, found {}", v.len())))?;
    EnsembleClassifier::new(members, doc.threshold)
}
