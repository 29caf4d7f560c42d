//! Versioned on-disk artifacts: `<root>/<cve>/run-<n>/...`. Runs are never overwritten.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentOutcome, AgentTranscript};
use crate::fsutil::write_atomic;
use crate::llm::UsageEntry;
use crate::stages::FailureKind;

pub const METADATA: &str = "metadata.json";
pub const KB_FILE: &str = "kb.json";
pub const SNAPSHOT_REF: &str = "snapshot.ref";
pub const TRANSCRIPTS_DIR: &str = "transcripts";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no artifacts for {0}")]
    NotFound(String),
    #[error("storage failed at {path}: {reason}")]
    StorageFailed { path: PathBuf, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::StorageFailed {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptIndexEntry {
    pub file: String,
    pub stage: String,
    pub agent: String,
    pub outcome: Option<AgentOutcome>,
    pub tool_calls: usize,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: String,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub cve_id: String,
    pub run: u32,
    pub round: u32,
    pub status: String,
    pub stage: String,
    pub failure_kind: Option<FailureKind>,
    pub failure_reason: Option<String>,
    pub cost_usd: f64,
    pub seconds: f64,
    pub sandbox_id: Option<String>,
    pub snapshot_ref: Option<String>,
    pub exploit_path: Option<String>,
    pub verifier_path: Option<String>,
    pub kb_path: Option<String>,
    pub bundle_digest: Option<String>,
    pub bundle_intact: Option<bool>,
    pub flag_token: Option<String>,
    pub trace: Vec<TraceEntry>,
    pub transcripts: Vec<TranscriptIndexEntry>,
    pub usage: Vec<UsageEntry>,
}

#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

/// One run directory, created exclusively.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub cve_id: String,
    pub index: u32,
    pub path: PathBuf,
    transcript_seq: std::cell::Cell<u32>,
}

impl ArtifactStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn cve_dir(&self, cve: &str) -> PathBuf {
        self.root.join(cve)
    }

    /// Existing run indices, ascending.
    pub fn runs(&self, cve: &str) -> Vec<u32> {
        let mut out: Vec<u32> = std::fs::read_dir(self.cve_dir(cve))
            .into_iter()
            .flatten()
            .filter_map(Result::ok)
            .filter_map(|e| e.file_name().to_str()?.strip_prefix("run-")?.parse().ok())
            .collect();
        out.sort_unstable();
        out
    }

    pub fn begin_run(&self, cve: &str) -> Result<RunDir, StoreError> {
        let dir = self.cve_dir(cve);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut next = self.runs(cve).last().copied().unwrap_or(0) + 1;
        loop {
            let path = dir.join(format!("run-{next}"));
            match std::fs::create_dir(&path) {
                Ok(()) => {
                    return Ok(RunDir {
                        cve_id: cve.to_string(),
                        index: next,
                        path,
                        transcript_seq: std::cell::Cell::new(0),
                    })
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
    }

    pub fn metadata(&self, cve: &str, run: u32) -> Result<RunMetadata, StoreError> {
        let path = self.cve_dir(cve).join(format!("run-{run}")).join(METADATA);
        let text = std::fs::read_to_string(&path).map_err(|_| StoreError::NotFound(format!("{cve} run {run}")))?;
        serde_json::from_str(&text).map_err(|e| StoreError::StorageFailed {
            path,
            reason: e.to_string(),
        })
    }

    pub fn all_metadata(&self, cve: &str) -> Result<Vec<RunMetadata>, StoreError> {
        let runs = self.runs(cve);
        if runs.is_empty() {
            return Err(StoreError::NotFound(cve.to_string()));
        }
        runs.into_iter().map(|r| self.metadata(cve, r)).collect()
    }

    pub fn is_reproduced(&self, cve: &str) -> bool {
        self.runs(cve)
            .into_iter()
            .any(|r| self.metadata(cve, r).map(|m| m.status == "reproduced").unwrap_or(false))
    }
}

impl RunDir {
    pub fn write(&self, rel: &str, content: &[u8]) -> Result<PathBuf, StoreError> {
        let path = self.path.join(rel);
        write_atomic(&path, content).map_err(io_err(&path))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<PathBuf, StoreError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| StoreError::StorageFailed {
            path: self.path.join(rel),
            reason: e.to_string(),
        })?;
        self.write(rel, text.as_bytes())
    }

    /// Stores a transcript under `transcripts/` and, if given, a copy in the
    /// stage directory. Returns the index entry.
    pub fn write_transcript(&self, stage: &str, t: &AgentTranscript) -> Result<TranscriptIndexEntry, StoreError> {
        let n = self.transcript_seq.get() + 1;
        self.transcript_seq.set(n);
        let file = format!("{TRANSCRIPTS_DIR}/{n:02}_{}.jsonl", t.agent());
        let path = self.path.join(&file);
        t.write_jsonl(&path).map_err(io_err(&path))?;
        if matches!(stage, "builder" | "exploiter" | "verifier") {
            let copy = self.path.join(stage).join(format!("{n:02}_{}.jsonl", t.agent()));
            t.write_jsonl(&copy).map_err(io_err(&copy))?;
        }
        Ok(TranscriptIndexEntry {
            file,
            stage: stage.to_string(),
            agent: t.agent().to_string(),
            outcome: t.outcome(),
            tool_calls: t.tool_calls_made(),
            cost_usd: t.cost_usd(),
        })
    }
}
