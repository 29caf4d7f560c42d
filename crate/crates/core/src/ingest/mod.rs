//! Resolves a CVE id into a [`RawCveBundle`]: record, vulnerable source tree,
//! patch diffs and advisory texts.

mod advisory;
mod bundle;
mod record;
mod registry;
mod repo;
mod tree;
pub mod version;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use advisory::{
    collect_advisories, match_keyword, to_plain_text, FixtureFetcher, HttpFetcher, WebFetcher,
    ADVISORY_KEYWORDS, MAX_ADVISORY_BYTES,
};
pub use bundle::{assemble_raw_bundle, RawCveBundle};
pub use record::{
    parse_commit_url, AdvisoryDoc, AffectedConfig, CveId, CveRecord, PatchCommit, RepoLocator,
    SourceSnapshot,
};
pub use registry::{CveRegistry, CvelistMirror, FixtureRegistry};
pub use repo::{FixtureRepoHost, GitCli, GitHubApi, RepoHost};
pub use tree::{directory_tree, MAX_TREE_DEPTH, MAX_TREE_ENTRIES};
pub use version::{Classification, TagVersion, VersionRange};

use crate::fsutil;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("invalid CVE identifier: {0}")]
    InvalidCveId(String),
    #[error("CVE not found: {0}")]
    NotFound(String),
    #[error("CVE registry unavailable: {0}")]
    RegistryUnavailable(String),
    #[error("malformed CVE record: {0}")]
    MalformedRecord(String),
    #[error("no available tag is classified as affected")]
    NoAffectedVersion,
    #[error("no tag could be ordered: {0}")]
    AmbiguousVersioning(String),
    #[error("tag not found: {0}")]
    TagMissing(String),
    #[error("download failed: {0}")]
    DownloadFailed(String),
    #[error("downloaded tree is empty: {0}")]
    EmptyTree(PathBuf),
    #[error("diff unavailable: {0}")]
    DiffUnavailable(String),
    #[error("i/o error: {0}")]
    Io(String),
}

/// Maximum tag (by version precedence) classified affected by the record.
pub fn resolve_vulnerable_version(record: &CveRecord, available_tags: &[String]) -> Result<String, IngestError> {
    let parsed: Vec<(TagVersion, &String)> = available_tags
        .iter()
        .filter_map(|t| TagVersion::parse(t).map(|v| (v, t)))
        .collect();
    if parsed.is_empty() {
        return Err(IngestError::AmbiguousVersioning(format!(
            "none of {} tags parse as a version",
            available_tags.len()
        )));
    }
    parsed
        .into_iter()
        .filter(|(_, tag)| record.classify(tag) == Classification::Affected)
        .max_by(|(va, ta), (vb, tb)| va.cmp(vb).then_with(|| ta.cmp(tb)))
        .map(|(_, tag)| tag.clone())
        .ok_or(IngestError::NoAffectedVersion)
}

pub fn download_source(
    host: &dyn RepoHost,
    record: &CveRecord,
    version: &str,
    dest: &Path,
) -> Result<SourceSnapshot, IngestError> {
    let repo = record.repository.as_ref().ok_or_else(|| {
        IngestError::MalformedRecord(format!("{}: no repository resolved", record.cve_id))
    })?;
    if dest.exists() {
        std::fs::remove_dir_all(dest).map_err(|e| IngestError::Io(e.to_string()))?;
    }
    std::fs::create_dir_all(dest).map_err(|e| IngestError::Io(e.to_string()))?;
    host.download_tag(repo, version, dest)?;
    if fsutil::dir_is_empty(dest).map_err(|e| IngestError::Io(e.to_string()))? {
        return Err(IngestError::EmptyTree(dest.to_path_buf()));
    }
    let directory_tree = directory_tree(dest, MAX_TREE_DEPTH, MAX_TREE_ENTRIES)
        .map_err(|e| IngestError::Io(e.to_string()))?;
    Ok(SourceSnapshot {
        root_path: dest.to_path_buf(),
        version_tag: version.to_string(),
        directory_tree,
    })
}

/// Fetches every commit referenced by the record that points into `repo`, in
/// reference order. Unreachable commits are kept with `unavailable` set.
pub fn collect_patch_commits(host: &dyn RepoHost, record: &CveRecord, repo: &RepoLocator) -> Vec<PatchCommit> {
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for url in &record.reference_urls {
        let Some((commit_repo, sha)) = parse_commit_url(url) else {
            continue;
        };
        if !commit_repo.same_repo(repo) || seen.contains(&sha) {
            continue;
        }
        seen.push(sha.clone());
        match host.fetch_commit(repo, &sha) {
            Ok((diff, message)) if !diff.trim().is_empty() => out.push(PatchCommit {
                commit_id: sha,
                diff_text: diff,
                message,
                unavailable: false,
            }),
            Ok((_, message)) => out.push(PatchCommit {
                commit_id: sha,
                diff_text: String::new(),
                message,
                unavailable: true,
            }),
            Err(err) => {
                tracing::warn!(commit = %sha, error = %err, "patch diff unavailable");
                out.push(PatchCommit {
                    commit_id: sha,
                    diff_text: String::new(),
                    message: String::new(),
                    unavailable: true,
                });
            }
        }
    }
    out
}

/// The data processor: registry + repository host + web fetcher.
#[derive(Clone)]
pub struct Ingestor {
    pub registry: Arc<dyn CveRegistry>,
    pub repo_host: Arc<dyn RepoHost>,
    pub fetcher: Arc<dyn WebFetcher>,
    pub workdir: PathBuf,
    /// Operator-supplied repository; replaces whatever the record references.
    pub repo_override: Option<RepoLocator>,
}

impl Ingestor {
    pub fn fetch_cve_record(&self, id: &CveId) -> Result<CveRecord, IngestError> {
        let mut record = self.registry.fetch(id)?;
        if let Some(over) = &self.repo_override {
            record.repository = Some(over.clone());
        }
        Ok(record)
    }

    pub fn bundle_dir(&self, id: &CveId) -> PathBuf {
        self.workdir.join(id.as_str()).join("bundle")
    }

    pub fn ingest(&self, id: &CveId) -> Result<RawCveBundle, IngestError> {
        let record = self.fetch_cve_record(id)?;
        let repo = record.repository.clone().ok_or_else(|| {
            IngestError::MalformedRecord(format!(
                "{id}: references contain no repository URL and none was supplied"
            ))
        })?;
        let tags = self.repo_host.list_tags(&repo)?;
        let version = resolve_vulnerable_version(&record, &tags)?;
        let dir = self.bundle_dir(id);
        let source = download_source(self.repo_host.as_ref(), &record, &version, &dir.join("source"))?;
        let advisories = collect_advisories(&record, self.fetcher.as_ref());
        let patches = collect_patch_commits(self.repo_host.as_ref(), &record, &repo);
        let bundle = assemble_raw_bundle(record, source, patches, advisories)?;
        bundle.persist(&dir).map_err(|e| IngestError::Io(e.to_string()))?;
        Ok(bundle)
    }
}
