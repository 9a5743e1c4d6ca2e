//! The `recourse` command line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};
use thiserror::Error;

use recourse_core::classifier::{save_checkpoint, train_ensemble, Classifier, ClassifierError, TrainConfig};
use recourse_core::dataset::{emit_csv, ingest_csv, DatasetError};
use recourse_core::fixtures::{self, FixtureError};
use recourse_core::recourse::{mcts_search, ConstraintSet, PreferenceWeights, RecourseProblem, SearchBudget};
use recourse_core::schema::Value;
use recourse_core::session::{Clock, Persona, SessionMode};
use recourse_core::simulation::{gen_dataset, oracle_check, run_benchmark, BenchmarkConfig, OracleConfig, SimulationError};

use crate::config::{ConfigError, ServerConfig};
use crate::store::{AppState, StoreError};

pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {source}")]
    Dataset {
        path: PathBuf,
        #[source]
        source: DatasetError,
    },
    #[error("training failed: {0}")]
    Train(#[from] ClassifierError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Parser)]
#[command(name = "recourse", version, about = "Interactive algorithmic recourse: training, serving and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Guided,
    Exploratory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SubModeArg {
    Choice,
    Rate,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the two-member classifier on a labelled CSV and write a checkpoint.
    Train {
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Serve the session API.
    Serve {
        /// TOML configuration; RECOURSE_CONFIG is read when the flag is absent.
        #[arg(long, env = "RECOURSE_CONFIG")]
        config: PathBuf,
    },
    /// Run simulated sessions and write per-round metrics as CSV.
    Simulate {
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        #[arg(long, default_value_t = 10)]
        rounds: u32,
        #[arg(long, value_enum, default_value_t = ModeArg::Guided)]
        mode: ModeArg,
        #[arg(long, value_enum, default_value_t = SubModeArg::Choice)]
        sub_mode: SubModeArg,
        #[arg(long)]
        out: PathBuf,
        /// Also write the aggregate summary as JSON.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// Data spec whose rejected rows serve as applicants; its schema is used.
        #[arg(long, default_value = "fixtures/compact_dataspec.json")]
        dataspec: PathBuf,
        #[arg(long, default_value = "fixtures/compact_model.json")]
        model: PathBuf,
        /// Search rollouts per session search.
        #[arg(long)]
        rollouts: Option<usize>,
        /// End a session once the simulated user would accept a shown plan.
        #[arg(long)]
        stop_on_accept: bool,
    },
    /// Compare the tree search with exhaustive enumeration on random small instances.
    OracleCheck {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 20_000)]
        rollouts: usize,
        #[arg(long, default_value_t = 3)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a labelled synthetic dataset as CSV.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick demo personas among the rejected synthetic applicants.
    Personas {
        #[arg(long, default_value = "fixtures/compact_dataspec.json")]
        dataspec: PathBuf,
        #[arg(long, default_value = "fixtures/compact_model.json")]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs a parsed command; the returned text goes to standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Train { schema, data, out, seed, epochs } => train(&schema, &data, &out, seed, epochs),
        Command::Serve { config } => serve(&config),
        Command::Simulate {
            seeds,
            rounds,
            mode,
            sub_mode,
            out,
            summary,
            first_seed,
            dataspec,
            model,
            rollouts,
            stop_on_accept,
        } => {
            let mode = match (mode, sub_mode) {
                (ModeArg::Exploratory, _) => SessionMode::Exploratory,
                (ModeArg::Guided, SubModeArg::Choice) => SessionMode::GuidedChoice,
                (ModeArg::Guided, SubModeArg::Rate) => SessionMode::GuidedRate,
            };
            let mut config = BenchmarkConfig {
                seeds: (first_seed..first_seed + seeds).collect(),
                rounds,
                mode,
                stop_on_accept,
                ..BenchmarkConfig::default()
            };
            if let Some(r) = rollouts {
                config.session.budget.max_rollouts = r;
                config.calibration_rollouts = r;
            }
            simulate(&config, &dataspec, &model, &out, summary.as_deref())
        }
        Command::OracleCheck { instances, rollouts, max_len, seed } => {
            Ok(oracle_check(&OracleConfig { instances, rollouts, max_len, seed })?.render())
        }
        Command::GenData { spec, out } => {
            let spec = fixtures::load_data_spec(&spec)?;
            let data = gen_dataset(&spec)?;
            let csv = emit_csv(&data, LABEL_COLUMN).map_err(|source| CliError::Dataset { path: out.clone(), source })?;
            write(&out, &csv)?;
            Ok(format!("wrote {} rows ({} approved) to {}\n", data.len(), data.positives(), out.display()))
        }
        Command::Personas { dataspec, model, out } => personas(&dataspec, &model, &out),
    }
}

fn train(schema: &Path, data: &Path, out: &Path, seed: u64, epochs: Option<usize>) -> Result<String, CliError> {
    let schema = fixtures::load_schema(schema)?;
    let text = fixtures::read(data)?;
    let dataset = ingest_csv(&text, &schema, LABEL_COLUMN).map_err(|source| CliError::Dataset { path: data.to_owned(), source })?;
    let defaults = TrainConfig::default();
    let cfg = TrainConfig { seed, epochs: epochs.unwrap_or(defaults.epochs), ..defaults };
    let h = train_ensemble(&dataset, &cfg)?;
    let correct = dataset
        .rows
        .iter()
        .filter(|(p, y)| h.predict(p, &schema).map(|p| p == *y).unwrap_or(false))
        .count();
    let checkpoint = save_checkpoint(&h);
    write(out, &checkpoint)?;
    Ok(format!(
        "wrote {}\nsha256 {}\ntraining accuracy {:.4}\n",
        out.display(),
        sha256_hex(checkpoint.as_bytes()),
        correct as f64 / dataset.len() as f64
    ))
}

fn serve(config_path: &Path) -> Result<String, CliError> {
    let config = ServerConfig::load(config_path)?;
    let state = Arc::new(AppState::from_config(&config, Clock::System)?);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(format!("cannot start runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(config.bind)
            .await
            .map_err(|e| CliError::Other(format!("cannot bind {}: {e}", config.bind)))?;
        eprintln!("listening on {}", config.bind);
        axum::serve(listener, crate::api::router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| CliError::Other(format!("server error: {e}")))
    })?;
    Ok(String::new())
}

fn simulate(
    config: &BenchmarkConfig,
    dataspec: &Path,
    model: &Path,
    out: &Path,
    summary: Option<&Path>,
) -> Result<String, CliError> {
    let spec = fixtures::load_data_spec(dataspec)?;
    let h = fixtures::load_classifier(model)?;
    let data = gen_dataset(&spec)?;
    let profiles: Vec<_> = data.rows.into_iter().map(|(p, _)| p).collect();
    let report = run_benchmark(config, &spec.schema, &h, &profiles)?;
    write(out, &report.to_csv())?;
    let json = report.summary_json();
    if let Some(path) = summary {
        write(path, &json)?;
    }
    Ok(json + "\n")
}

const NARRATIVES: [(&str, &str); 2] = [
    ("female", "Applied for a personal loan to consolidate debt and was turned down."),
    ("male", "Applied for a loan to refurbish the family home and was turned down."),
];

/// One rejected applicant per listed sex for whom a plan exists under uniform weights.
fn personas(dataspec: &Path, model: &Path, out: &Path) -> Result<String, CliError> {
    let spec = fixtures::load_data_spec(dataspec)?;
    let schema = &spec.schema;
    let h = fixtures::load_classifier(model)?;
    let data = gen_dataset(&spec)?;
    let weights = PreferenceWeights::for_schema_uniform(schema);
    let constraints = ConstraintSet::default();
    let budget = SearchBudget { max_rollouts: 2000, max_intervention_len: 3, ..SearchBudget::default() };
    let names = ["Alice", "Bob"];
    let mut found = Vec::new();
    for ((sex, narrative), name) in NARRATIVES.iter().zip(names) {
        let pick = data.rows.iter().find(|(p, _)| {
            p.get("sex").and_then(Value::as_cat) == Some(sex)
                && h.predict(p, schema) == Ok(0)
                && mcts_search(
                    &RecourseProblem { schema, classifier: &h, profile: p, weights: &weights, constraints: &constraints },
                    &budget,
                )
                .is_ok()
        });
        let (profile, _) = pick.ok_or_else(|| CliError::Other(format!("no rejected `{sex}` applicant with recourse")))?;
        found.push(Persona { name: name.to_owned(), narrative: (*narrative).to_owned(), profile: profile.clone() });
    }
    let json = serde_json::to_string_pretty(&found).expect("personas serialize") + "\n";
    write(out, &json)?;
    let mut msg = String::new();
    for p in &found {
        let _ = writeln!(msg, "{}: {}", p.name, p.narrative);
    }
    Ok(msg)
}
