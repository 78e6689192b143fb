//! Command-line front end for `crkit`: builds a configured model, runs one
//! task and writes a versioned JSON summary plus CSV dumps.

pub mod config;
pub mod tasks;

use config::ExperimentConfig;
use crkit::CrError;
use serde::Serialize;
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Compute(#[from] CrError),
}

impl CliError {
    /// 1 for configuration and I/O problems, 2 for failed computations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Compute(CrError::Config(_) | CrError::Io(_) | CrError::UnsupportedManifold(_)) => 1,
            CliError::Compute(_) => 2,
        }
    }
}

/// A named numeric contract: `value ≤ threshold` (or `≥` when `at_least`).
#[derive(Clone, Debug, Serialize)]
pub struct Record {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub at_least: bool,
    pub pass: bool,
}

impl Record {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Record {
        Record { name: name.into(), value, threshold, at_least: false, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Record {
        Record { name: name.into(), value, threshold, at_least: true, pass: value >= threshold }
    }

    /// A yes/no contract stored as 1 (holds) or 0.
    pub fn holds(name: &str, ok: bool) -> Record {
        Record { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: 1.0, at_least: true, pass: ok }
    }

    pub fn describe(&self) -> String {
        let op = if self.at_least { ">=" } else { "<=" };
        format!("{}: {} (required {op} {})", self.name, self.value, self.threshold)
    }
}

/// Everything a task produces.
#[derive(Debug)]
pub struct Outcome {
    pub results: serde_json::Value,
    pub records: Vec<Record>,
    /// `(file name, CSV text)`.
    pub tables: Vec<(String, String)>,
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: u32,
    task: &'static str,
    model: &'a config::ModelConfig,
    params: &'a config::TaskParams,
    seed: u64,
    results: &'a serde_json::Value,
    records: &'a [Record],
    pass: bool,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.pass)
    }

    /// The JSON summary, byte-stable for a fixed config.
    pub fn summary_json(&self, cfg: &ExperimentConfig) -> String {
        let s = Summary {
            schema: SCHEMA_VERSION,
            task: cfg.task.name(),
            model: &cfg.model,
            params: &cfg.params,
            seed: cfg.seed,
            results: &self.results,
            records: &self.records,
            pass: self.pass(),
        };
        serde_json::to_string_pretty(&s).expect("summary serializes") + "\n"
    }

    pub fn write(&self, cfg: &ExperimentConfig, dir: &Path) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(io)?;
        std::fs::write(dir.join("summary.json"), self.summary_json(cfg)).map_err(io)?;
        for (name, text) in &self.tables {
            std::fs::write(dir.join(name), text).map_err(io)?;
        }
        Ok(())
    }
}

/// Validates the config and runs its task.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    tasks::run_task(cfg)
}
