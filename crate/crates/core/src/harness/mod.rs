//! Reproducible experiment runs.
//!
//! A run takes a validated [`ExperimentConfig`], computes every output in
//! memory on a rayon pool of the configured size, then writes the CSV files
//! and a `manifest.json` holding the config echo, version, duration, SHA-256
//! of each output and a few headline metrics. All randomness derives from
//! `master_seed` through [`crate::numeric::split_seed`], and every reduction
//! is ordered, so outputs are byte-identical for any thread count.

mod config;
mod experiments;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    validate_config, validate_value, AtomSpec, ConfigError, ConfigIssue, DetectorParams, EckartParams,
    ExperimentConfig, IlcrsParams, InterferenceParams, Method, ModeParams, Params, PlanckParams, SolitonParams,
    DEFAULT_OUTPUT, DEFAULT_TRIALS, EXPERIMENTS,
};

/// Process exit codes of the command-line tool.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const USAGE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const RUNTIME: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{experiment}: {message}")]
    Runtime { experiment: String, message: String },
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(ConfigError::UnknownExperiment(_)) => exit_code::USAGE,
            HarnessError::Config(_) => exit_code::VALIDATION,
            HarnessError::Io { .. } | HarnessError::Runtime { .. } => exit_code::RUNTIME,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One output file, held in memory until the run is complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutputs {
    pub artifacts: Vec<Artifact>,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub duration_seconds: f64,
    /// File name to lowercase hex SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
}

/// Computes the outputs of `config` without touching the file system.
pub fn compute_outputs(config: &ExperimentConfig) -> Result<RunOutputs, HarnessError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Runtime {
            experiment: config.experiment.clone(),
            message: format!("thread pool: {e}"),
        })?;
    pool.install(|| experiments::dispatch(config))
}

/// Runs `config`, writes its outputs and `manifest.json` into
/// `config.output`, and returns the manifest.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
    let start = Instant::now();
    let outputs = compute_outputs(config)?;
    let dir = &config.output;
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut checksums = BTreeMap::new();
    for artifact in &outputs.artifacts {
        let path = dir.join(&artifact.name);
        fs::write(&path, &artifact.bytes).map_err(|e| HarnessError::io(&path, e))?;
        checksums.insert(artifact.name.clone(), hex::encode(Sha256::digest(&artifact.bytes)));
    }
    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
        outputs: checksums,
        metrics: outputs.metrics,
    };
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(manifest)
}
