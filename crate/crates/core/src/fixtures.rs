//! Loading of schema, data-spec, checkpoint and persona files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{load_checkpoint, ClassifierError, EnsembleClassifier};
use crate::schema::{parse_schema, FeatureSet, SchemaError};
use crate::session::{load_personas, Persona, PersonaError};
use crate::simulation::{LabelRule, SyntheticDataSpec};

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: SchemaError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: ClassifierError,
    },
    #[error("{path}: {source}")]
    Persona {
        path: PathBuf,
        #[source]
        source: PersonaError,
    },
}

/// The repository's `fixtures/` directory.
pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn read(path: &Path) -> Result<String, FixtureError> {
    fs::read_to_string(path).map_err(|source| FixtureError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_schema(path: &Path) -> Result<FeatureSet, FixtureError> {
    parse_schema(&read(path)?).map_err(|source| FixtureError::Schema {
        path: path.to_owned(),
        source,
    })
}

pub fn load_classifier(path: &Path) -> Result<EnsembleClassifier, FixtureError> {
    load_checkpoint(&read(path)?).map_err(|source| FixtureError::Checkpoint {
        path: path.to_owned(),
        source,
    })
}

pub fn load_persona_file(path: &Path, schema: &FeatureSet, h: &EnsembleClassifier) -> Result<Vec<Persona>, FixtureError> {
    load_personas(&read(path)?, schema, h).map_err(|source| FixtureError::Persona {
        path: path.to_owned(),
        source,
    })
}

/// On-disk data spec; `schema` is a path relative to the spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpecFile {
    pub schema: PathBuf,
    pub n_rows: usize,
    pub label_rule: LabelRule,
    #[serde(default)]
    pub label_noise: f64,
    #[serde(default)]
    pub seed: u64,
}

pub fn load_data_spec(path: &Path) -> Result<SyntheticDataSpec, FixtureError> {
    let file: DataSpecFile = serde_json::from_str(&read(path)?).map_err(|source| FixtureError::Json {
        path: path.to_owned(),
        source,
    })?;
    let schema_path = path.parent().unwrap_or(Path::new(".")).join(&file.schema);
    Ok(SyntheticDataSpec {
        schema: load_schema(&schema_path)?,
        n_rows: file.n_rows,
        label_rule: file.label_rule,
        label_noise: file.label_noise,
        seed: file.seed,
    })
}

/// Compact demo schema, data spec and file names inside [`fixture_dir`].
pub const COMPACT_SCHEMA: &str = "compact_schema.json";
pub const COMPACT_DATASPEC: &str = "compact_dataspec.json";
pub const COMPACT_MODEL: &str = "compact_model.json";
pub const COMPACT_PERSONAS: &str = "personas.json";
pub const STUDY_SCHEMA: &str = "study_schema.json";
