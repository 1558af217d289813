use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::space::SearchSpace;
use crate::dsl::Assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialPhase {
    Random,
    Bayesian,
    Warm,
}

/// One evaluated assignment. Failed trials carry `failed: true`, an error
/// message and no objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub phase: TrialPhase,
    pub assignment: Assignment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
    pub seed: u64,
    /// Seconds since the Unix epoch; `null` unless timestamps are enabled.
    #[serde(default)]
    pub timestamp: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn success(
        trial: usize,
        phase: TrialPhase,
        assignment: Assignment,
        objective: f64,
        metrics: BTreeMap<String, f64>,
        seed: u64,
    ) -> Self {
        Self {
            trial,
            phase,
            assignment,
            objective: Some(objective),
            metrics,
            seed,
            timestamp: None,
            failed: false,
            error: None,
        }
    }

    pub fn failure(trial: usize, phase: TrialPhase, assignment: Assignment, error: String, seed: u64) -> Self {
        Self {
            trial,
            phase,
            assignment,
            objective: None,
            metrics: BTreeMap::new(),
            seed,
            timestamp: None,
            failed: true,
            error: Some(error),
        }
    }

    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("trial records serialize");
        s.push('\n');
        s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Parses a JSONL trace. Blank lines are skipped; line numbers are 1-based.
pub fn read_trace<R: BufRead>(input: R) -> Result<Vec<TrialRecord>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(&line)
            .map_err(|e| TraceError::Parse { line: i + 1, message: e.to_string() })?;
        if !rec.failed && rec.objective.is_none() {
            return Err(TraceError::Parse { line: i + 1, message: "successful trial without objective".into() });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<TrialRecord>, TraceError> {
    let file = File::open(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
    read_trace(BufReader::new(file))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub records: Vec<TrialRecord>,
    pub skipped: usize,
}

/// Records of a previous trace that fit `space`, relabelled as warm.
/// Records whose assignment does not validate are skipped and counted.
pub fn warm_start_load(path: &Path, space: &SearchSpace) -> Result<WarmStart, TraceError> {
    let mut records = Vec::new();
    let mut skipped = 0;
    for mut r in load_trace(path)? {
        if space.check(&r.assignment).is_ok() {
            r.phase = TrialPhase::Warm;
            records.push(r);
        } else {
            skipped += 1;
        }
    }
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} records incompatible with the search space", path.display());
    }
    Ok(WarmStart { records, skipped })
}

/// Append-only trace file; every record is flushed as soon as it is written.
pub struct TraceWriter {
    file: File,
    path: PathBuf,
}

impl TraceWriter {
    /// Creates or truncates `path`.
    pub fn create(path: &Path) -> Result<Self, TraceError> {
        let file = File::create(path).map_err(|source| TraceError::Io { path: path.to_path_buf(), source })?;
        Ok(Self { file, path: path.to_path_buf() })
    }

    pub fn append(&mut self, record: &TrialRecord) -> Result<(), TraceError> {
        let io = |source| TraceError::Io { path: self.path.clone(), source };
        self.file.write_all(record.to_json_line().as_bytes()).map_err(io)?;
        self.file.flush().map_err(|source| TraceError::Io { path: self.path.clone(), source })
    }
}
