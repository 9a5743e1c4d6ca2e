//! Server configuration, read from TOML. Relative paths resolve against the
//! directory holding the config file.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use recourse_core::recourse::SearchBudget;
use recourse_core::session::{SessionConfig, SessionMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("`{field}` points to {path}, which does not exist")]
    MissingPath { field: &'static str, path: PathBuf },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidedSubMode {
    #[default]
    Choice,
    Rate,
}

impl GuidedSubMode {
    pub fn session_mode(self) -> SessionMode {
        match self {
            GuidedSubMode::Choice => SessionMode::GuidedChoice,
            GuidedSubMode::Rate => SessionMode::GuidedRate,
        }
    }
}

/// Overrides of the per-session search budget; unset fields keep the defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetOverrides {
    pub max_rollouts: Option<usize>,
    pub max_intervention_len: Option<usize>,
    pub uct_constant: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: SocketAddr,
    pub schema: PathBuf,
    pub model: PathBuf,
    #[serde(default)]
    pub personas: Option<PathBuf>,
    /// Event logs go here, one JSON-lines file per session; unset keeps sessions in memory only.
    #[serde(default)]
    pub log_dir: Option<PathBuf>,
    #[serde(default)]
    pub guided_sub_mode: GuidedSubMode,
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub m: Option<usize>,
    #[serde(default)]
    pub particles: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub budget: BudgetOverrides,
    #[serde(default)]
    pub root_seed: u64,
}

fn default_bind() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

impl ServerConfig {
    /// Minimal configuration for the given schema and model files.
    pub fn new(schema: PathBuf, model: PathBuf) -> Self {
        ServerConfig {
            bind: default_bind(),
            schema,
            model,
            personas: None,
            log_dir: None,
            guided_sub_mode: GuidedSubMode::default(),
            k: None,
            m: None,
            particles: None,
            beta: None,
            budget: BudgetOverrides::default(),
            root_seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut config: ServerConfig =
            toml::from_str(&text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.check()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.schema);
        join(&mut self.model);
        if let Some(p) = self.personas.as_mut() {
            join(p);
        }
        if let Some(p) = self.log_dir.as_mut() {
            join(p);
        }
    }

    /// Checks that input files exist and the session settings are valid.
    pub fn check(&self) -> Result<(), ConfigError> {
        let must_exist = [("schema", Some(&self.schema)), ("model", Some(&self.model)), ("personas", self.personas.as_ref())];
        for (field, path) in must_exist {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(ConfigError::MissingPath { field, path: path.clone() });
                }
            }
        }
        self.session_config().validate().map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn session_config(&self) -> SessionConfig {
        let base = SessionConfig::default();
        let b = &self.budget;
        SessionConfig {
            k: self.k.unwrap_or(base.k),
            m: self.m.unwrap_or(base.m),
            particles: self.particles.unwrap_or(base.particles),
            beta: self.beta.unwrap_or(base.beta),
            budget: SearchBudget {
                max_rollouts: b.max_rollouts.unwrap_or(base.budget.max_rollouts),
                max_intervention_len: b.max_intervention_len.unwrap_or(base.budget.max_intervention_len),
                uct_constant: b.uct_constant.unwrap_or(base.budget.uct_constant),
                seed: 0,
            },
            ..base
        }
    }
}
