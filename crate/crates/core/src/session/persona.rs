use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Classifier;
use crate::schema::{FeatureSet, SchemaError, UserProfile};

/// A fictional applicant used to start demo sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub narrative: String,
    pub profile: UserProfile,
}

#[derive(Debug, Error)]
pub enum PersonaError {
    #[error("malformed persona file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("persona `{name}`: {source}")]
    InvalidProfile {
        name: String,
        #[source]
        source: SchemaError,
    },
    #[error("persona `{0}` is approved by the classifier")]
    Approved(String),
    #[error("duplicate persona name `{0}`")]
    Duplicate(String),
}

/// Parses a JSON list of personas, checking each is valid and rejected by `h`.
pub fn load_personas(text: &str, schema: &FeatureSet, h: &dyn Classifier) -> Result<Vec<Persona>, PersonaError> {
    let raw: Vec<Persona> = serde_json::from_str(text)?;
    let mut out: Vec<Persona> = Vec::with_capacity(raw.len());
    for p in raw {
        if out.iter().any(|q| q.name == p.name) {
            return Err(PersonaError::Duplicate(p.name));
        }
        let invalid = |source| PersonaError::InvalidProfile {
            name: p.name.clone(),
            source,
        };
        let profile = UserProfile::new(p.profile.values().clone(), schema).map_err(invalid)?;
        if h.predict(&profile, schema).map_err(invalid)? != 0 {
            return Err(PersonaError::Approved(p.name));
        }
        out.push(Persona { profile, ..p });
    }
    Ok(out)
}
