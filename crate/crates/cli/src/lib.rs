//! Batch front end for `drawstat-core`: reads a manifest, runs the selected
//! pipelines over a worker pool and writes tables, JSON and figures.

pub mod config;
pub mod export;
pub mod pipeline;
pub mod render;

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Corpus(String),
    #[error("{0}")]
    Pipeline(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Corpus(_) => 3,
            CliError::Pipeline(_) | CliError::Output { .. } => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Corpus(_) => "corpus",
            CliError::Pipeline(_) => "pipeline",
            CliError::Output { .. } => "output",
        }
    }

    /// One-line JSON for stderr.
    pub fn report(&self) -> String {
        serde_json::json!({
            "error": {
                "kind": self.kind(),
                "exit_code": self.exit_code(),
                "message": self.to_string(),
            }
        })
        .to_string()
    }
}

pub(crate) fn output_err(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}
