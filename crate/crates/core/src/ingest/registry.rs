//! CVE registry backends: the public cvelist mirror and a local directory of records.

use std::path::PathBuf;

use super::record::{CveId, CveRecord};
use super::IngestError;
use crate::net::HttpClient;

pub trait CveRegistry: Send + Sync {
    fn name(&self) -> &'static str;
    fn fetch(&self, id: &CveId) -> Result<CveRecord, IngestError>;
}

/// Reads `https://raw.githubusercontent.com/CVEProject/cvelistV5/main/cves/<year>/<bucket>xxx/<id>.json`.
#[derive(Debug, Clone)]
pub struct CvelistMirror {
    pub base_url: String,
    client: HttpClient,
}

impl CvelistMirror {
    pub const DEFAULT_BASE: &'static str =
        "https://raw.githubusercontent.com/CVEProject/cvelistV5/main/cves";

    pub fn new(base_url: impl Into<String>, client: HttpClient) -> Self {
        Self {
            base_url: base_url.into(),
            client,
        }
    }

    pub fn record_url(&self, id: &CveId) -> String {
        let number: u64 = id.number().parse().unwrap_or(0);
        format!(
            "{}/{}/{}xxx/{}.json",
            self.base_url.trim_end_matches('/'),
            id.year(),
            number / 1000,
            id
        )
    }
}

impl CveRegistry for CvelistMirror {
    fn name(&self) -> &'static str {
        "cvelist"
    }

    fn fetch(&self, id: &CveId) -> Result<CveRecord, IngestError> {
        let url = self.record_url(id);
        let text = self.client.get_text(&url, &[]).map_err(|e| match e.status() {
            Some(404) => IngestError::NotFound(id.to_string()),
            _ => IngestError::RegistryUnavailable(e.to_string()),
        })?;
        CveRecord::from_cvelist_json(id, &text)
    }
}

/// Pre-fetched records stored as `<dir>/<CVE-ID>.json`.
#[derive(Debug, Clone)]
pub struct FixtureRegistry {
    pub dir: PathBuf,
}

impl FixtureRegistry {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }
}

impl CveRegistry for FixtureRegistry {
    fn name(&self) -> &'static str {
        "fixture"
    }

    fn fetch(&self, id: &CveId) -> Result<CveRecord, IngestError> {
        let path = self.dir.join(format!("{id}.json"));
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(IngestError::NotFound(id.to_string()))
            }
            Err(e) => return Err(IngestError::RegistryUnavailable(format!("{}: {e}", path.display()))),
        };
        CveRecord::from_cvelist_json(id, &text)
    }
}
