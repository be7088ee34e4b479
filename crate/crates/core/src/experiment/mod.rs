//! Config-driven experiment runner behind the `isacpilot` binary.

pub mod config;
pub mod table;
pub mod tasks;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::IsacError;
pub use config::{ExperimentConfig, PilotSpec, Scenario, Task};
pub use table::{emit_all, emit_table, read_metadata, Cell, ResultTable};
pub use tasks::{median, run_task, spearman, TaskContext, TaskOutput, FRONTIER_COLUMNS};

#[derive(Debug)]
pub enum RunError {
    /// Unparseable or invalid configuration.
    Config(String),
    /// Numeric failure while a task was running, or a failed check.
    Numeric {
        task: Task,
        message: String,
    },
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric { .. } => 3,
            RunError::Io(_) => 4,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numeric { task, message } => write!(f, "task {} failed: {message}", task.name()),
            RunError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub task: Task,
    pub config_path: PathBuf,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub line: String,
    pub files: Vec<PathBuf>,
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Parse a config, reporting the line and column of the first error.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, RunError> {
    ExperimentConfig::from_toml_str(text).map_err(|e| {
        let msg = e.message().trim().to_string();
        match e.span() {
            Some(span) => {
                let (l, c) = line_col(text, span.start);
                RunError::Config(format!("line {l}, column {c}: {msg}"))
            }
            None => RunError::Config(msg),
        }
    })
}

fn read_config(path: &Path) -> Result<(String, String), RunError> {
    let bytes = fs::read(path).map_err(|e| RunError::Io(format!("cannot read {}: {e}", path.display())))?;
    let hash = config_hash(&bytes);
    let text = String::from_utf8(bytes).map_err(|_| RunError::Config(format!("{} is not UTF-8", path.display())))?;
    Ok((text, hash))
}

fn invalid(e: IsacError) -> RunError {
    RunError::Config(e.to_string())
}

/// Run one task end to end. Tables are written only after all of them are computed.
pub fn run_config(opts: &RunOptions) -> Result<RunSummary, RunError> {
    let (text, hash) = read_config(&opts.config_path)?;
    let mut config = parse_config(&text)?;
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    config.validate_for(opts.task).map_err(invalid)?;
    let scenario = config.build_scenario().map_err(invalid)?;
    let ctx =
        TaskContext { task: opts.task, config: &config, scenario: &scenario, seed: config.seed, config_hash: &hash };
    let output = run_task(&ctx).map_err(|e| RunError::Numeric { task: opts.task, message: e.to_string() })?;
    let dir =
        opts.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."));
    let files =
        emit_all(&output.tables, &dir).map_err(|e| RunError::Io(format!("writing to {}: {e}", dir.display())))?;
    if let Some(message) = output.failure {
        return Err(RunError::Numeric { task: opts.task, message });
    }
    let names: Vec<String> =
        files.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    Ok(RunSummary { line: format!("{}; wrote {} to {}", output.summary, names.join(", "), dir.display()), files })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerifyEntry {
    pub file: PathBuf,
    pub matches: bool,
}

/// Re-hash `config_path` and compare it with every CSV in `dir` that records a config hash.
pub fn verify(config_path: &Path, dir: &Path) -> Result<Vec<VerifyEntry>, RunError> {
    let (_, hash) = read_config(config_path)?;
    let io = |e: std::io::Error| RunError::Io(format!("reading {}: {e}", dir.display()));
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(io)?;
        if let Some(recorded) = read_metadata(&text, "config_sha256") {
            out.push(VerifyEntry { matches: recorded == hash, file });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_and_column() {
        assert_eq!(line_col("ab\ncd\nef", 4), (2, 2));
        assert_eq!(line_col("x", 0), (1, 1));
    }

    #[test]
    fn parse_error_reports_position() {
        let err = parse_config("seed = 1\n[array]\nn_tx = 4\nbogus = 2\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line 4, column 1"), "{err}");
    }
}
