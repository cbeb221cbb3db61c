//! Command-line orchestration.
//!
//! - [`config`]: JSON run configuration and `--set` overrides.
//! - [`cache`]: fingerprinted on-disk Floquet-map cache.
//! - [`executor`]: ordered, failure-isolating parallel scans.
//! - [`calibrate`]: drive-frequency window search.
//! - [`commands`]: the subcommands and their CSV artifacts.

pub mod cache;
pub mod calibrate;
pub mod commands;
pub mod config;
pub mod executor;

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheStats, MapCache};
pub use calibrate::{calibrate_omega, CalibrationResult, CalibrationSettings};
pub use commands::{execute, run, run_command, Cli, Command, EXIT_PARTIAL};
pub use config::RunConfig;
pub use executor::{scan_executor, ItemFailure, ScanOutcome};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("{failed} of {total} work items failed")]
    PartialFailure { failed: usize, total: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Propagation(#[from] crate::propagation::PropagationError),
    #[error(transparent)]
    Spectral(#[from] crate::spectral::SpectralError),
    #[error(transparent)]
    Correlation(#[from] crate::correlations::CorrelationError),
    #[error(transparent)]
    MeanField(#[from] crate::meanfield::MeanFieldError),
    #[error(transparent)]
    PhaseSpace(#[from] crate::phase_space::PhaseSpaceError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Artifact {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Run record written next to the artifacts as `<command>.manifest.json`.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config: RunConfig,
    pub wall_seconds: f64,
    pub artifacts: Vec<Artifact>,
    pub cache: CacheStats,
    /// Cache entries found but rejected and rebuilt.
    pub cache_rejected: Vec<String>,
    pub failures: Vec<ItemFailure>,
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects artifacts written under one output directory.
#[derive(Debug)]
pub struct ArtifactWriter {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self, RunnerError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Renders `fill` into memory, writes it to `name` and records its checksum.
    pub fn write<F>(&mut self, name: &str, fill: F) -> Result<(), RunnerError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        std::fs::write(self.dir.join(name), &buf)?;
        self.artifacts.push(Artifact { path: name.to_string(), sha256: sha256_hex(&buf) });
        Ok(())
    }

    pub fn into_artifacts(self) -> Vec<Artifact> {
        self.artifacts
    }
}
