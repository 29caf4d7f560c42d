use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{AdvisoryDoc, CveRecord, PatchCommit, SourceSnapshot};
use super::IngestError;
use crate::digest::{sha256_hex, tree_digest};

/// Everything the pipeline knows about one CVE before any agent runs.
/// Fields are private: once assembled the bundle can only be read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawCveBundle {
    record: CveRecord,
    source: SourceSnapshot,
    patches: Vec<PatchCommit>,
    advisories: Vec<AdvisoryDoc>,
    digest: String,
}

impl RawCveBundle {
    pub fn record(&self) -> &CveRecord {
        &self.record
    }

    pub fn source(&self) -> &SourceSnapshot {
        &self.source
    }

    pub fn patches(&self) -> &[PatchCommit] {
        &self.patches
    }

    pub fn advisories(&self) -> &[AdvisoryDoc] {
        &self.advisories
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// Recomputes the digest from the in-memory fields and the source tree on disk.
    pub fn current_digest(&self) -> Result<String, IngestError> {
        compute_digest(&self.record, &self.source, &self.patches, &self.advisories)
    }

    pub fn verify_integrity(&self) -> Result<bool, IngestError> {
        Ok(self.current_digest()? == self.digest)
    }

    /// Writes `record.json`, `advisories/` and `patches/` under `dir`. The
    /// source tree is expected to already live in `dir/source`.
    pub fn persist(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.join("advisories"))?;
        std::fs::create_dir_all(dir.join("patches"))?;
        std::fs::write(dir.join("record.json"), serde_json::to_string_pretty(&self.record)?)?;
        for (i, adv) in self.advisories.iter().enumerate() {
            std::fs::write(dir.join("advisories").join(format!("{:02}.txt", i + 1)), &adv.text)?;
        }
        std::fs::write(
            dir.join("advisories/index.json"),
            serde_json::to_string_pretty(&self.advisories.iter().map(|a| {
                serde_json::json!({"url": a.url, "matched_keyword": a.matched_keyword, "fetch_failed": a.fetch_failed})
            }).collect::<Vec<_>>())?,
        )?;
        for p in &self.patches {
            std::fs::write(dir.join("patches").join(format!("{}.diff", p.commit_id)), &p.diff_text)?;
        }
        std::fs::write(dir.join("digest"), &self.digest)?;
        Ok(())
    }
}

fn compute_digest(
    record: &CveRecord,
    source: &SourceSnapshot,
    patches: &[PatchCommit],
    advisories: &[AdvisoryDoc],
) -> Result<String, IngestError> {
    let tree = tree_digest(&source.root_path, &[".git"])
        .map_err(|e| IngestError::Io(format!("digesting source: {e}")))?;
    let doc = serde_json::json!({
        "record": record,
        "version_tag": source.version_tag,
        "directory_tree": source.directory_tree,
        "patches": patches,
        "advisories": advisories,
        "tree": tree,
    });
    Ok(sha256_hex(doc.to_string()))
}

pub fn assemble_raw_bundle(
    record: CveRecord,
    source: SourceSnapshot,
    patches: Vec<PatchCommit>,
    advisories: Vec<AdvisoryDoc>,
) -> Result<RawCveBundle, IngestError> {
    if record.repository.is_none() {
        return Err(IngestError::MalformedRecord(format!(
            "{}: no repository resolved",
            record.cve_id
        )));
    }
    if !source.root_path.is_dir() {
        return Err(IngestError::EmptyTree(source.root_path.clone()));
    }
    let digest = compute_digest(&record, &source, &patches, &advisories)?;
    Ok(RawCveBundle {
        record,
        source,
        patches,
        advisories,
        digest,
    })
}
