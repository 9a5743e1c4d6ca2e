//! Shared server state: the immutable model and schema plus the live sessions.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use thiserror::Error;
use tokio::sync::Mutex as SessionLock;

use recourse_core::classifier::EnsembleClassifier;
use recourse_core::fixtures::{self, FixtureError};
use recourse_core::schema::FeatureSet;
use recourse_core::session::{mix_seed, replay, Clock, Persona, ReplayError, SessionConfig, SessionEnv, SessionEvent, SessionState};

use crate::config::{GuidedSubMode, ServerConfig};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("event log {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("event log {path}, line {line}: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("event log {path}: {source}")]
    Replay {
        path: PathBuf,
        #[source]
        source: ReplayError,
    },
}

pub struct AppState {
    pub schema: FeatureSet,
    pub classifier: EnsembleClassifier,
    pub personas: Vec<Persona>,
    pub session_config: SessionConfig,
    pub guided_sub_mode: GuidedSubMode,
    pub clock: Clock,
    root_seed: u64,
    counter: AtomicU64,
    log_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, Arc<SessionLock<SessionState>>>>,
}

impl AppState {
    /// Loads schema, model and personas named by `config`, then restores any
    /// sessions found in its log directory.
    pub fn from_config(config: &ServerConfig, clock: Clock) -> Result<Self, StoreError> {
        let schema = fixtures::load_schema(&config.schema)?;
        let classifier = fixtures::load_classifier(&config.model)?;
        let personas = match &config.personas {
            Some(path) => fixtures::load_persona_file(path, &schema, &classifier)?,
            None => Vec::new(),
        };
        let state = AppState {
            schema,
            classifier,
            personas,
            session_config: config.session_config(),
            guided_sub_mode: config.guided_sub_mode,
            clock,
            root_seed: config.root_seed,
            counter: AtomicU64::new(0),
            log_dir: config.log_dir.clone(),
            sessions: Mutex::new(HashMap::new()),
        };
        if let Some(dir) = &state.log_dir {
            fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.clone(), source })?;
            state.restore(dir)?;
        }
        Ok(state)
    }

    pub fn env(&self) -> SessionEnv<'_> {
        SessionEnv { schema: &self.schema, classifier: &self.classifier, clock: self.clock }
    }

    /// Seed for the next session: the root seed mixed with a running counter.
    pub fn next_seed(&self) -> u64 {
        mix_seed(self.root_seed, self.counter.fetch_add(1, Ordering::SeqCst))
    }

    pub fn get(&self, id: &str) -> Option<Arc<SessionLock<SessionState>>> {
        self.sessions.lock().expect("session map lock").get(id).cloned()
    }

    /// Registers a new session and persists its events.
    pub fn insert(&self, state: SessionState) -> Result<(), StoreError> {
        self.persist(&state.id, &state.history)?;
        self.sessions
            .lock()
            .expect("session map lock")
            .insert(state.id.clone(), Arc::new(SessionLock::new(state)));
        Ok(())
    }

    /// Appends `events` to the session's log, if logging is enabled.
    pub fn persist(&self, id: &str, events: &[SessionEvent]) -> Result<(), StoreError> {
        let Some(dir) = &self.log_dir else {
            return Ok(());
        };
        let path = log_path(dir, id);
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(io)?;
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("events serialize"));
            buf.push('\n');
        }
        file.write_all(buf.as_bytes()).map_err(io)
    }

    fn restore(&self, dir: &Path) -> Result<(), StoreError> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|source| StoreError::Io { path: dir.to_owned(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut map = self.sessions.lock().expect("session map lock");
        for path in paths {
            let events = read_log(&path)?;
            let state = replay(&self.schema, &events).map_err(|source| StoreError::Replay { path: path.clone(), source })?;
            map.insert(state.id.clone(), Arc::new(SessionLock::new(state)));
        }
        self.counter.store(map.len() as u64, Ordering::SeqCst);
        Ok(())
    }
}

pub fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.jsonl"))
}

/// Reads a JSON-lines event log.
pub fn read_log(path: &Path) -> Result<Vec<SessionEvent>, StoreError> {
    let text = fs::read_to_string(path).map_err(|source| StoreError::Io { path: path.to_owned(), source })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| StoreError::Malformed { path: path.to_owned(), line: i + 1, source })
        })
        .collect()
}
