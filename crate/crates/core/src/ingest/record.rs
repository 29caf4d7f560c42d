//! CVE records in the cvelist 5.x format and the normalized types built from them.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::version::{Classification, VersionRange};
use super::IngestError;

static CVE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CVE-\d{4}-\d{4,}$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CveId(String);

impl CveId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn year(&self) -> &str {
        &self.0[4..8]
    }

    /// Numeric part of the id, e.g. `4340` for `CVE-2024-4340`.
    pub fn number(&self) -> &str {
        &self.0[9..]
    }
}

impl FromStr for CveId {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_uppercase();
        if CVE_ID.is_match(&s) {
            Ok(CveId(s))
        } else {
            Err(IngestError::InvalidCveId(s))
        }
    }
}

impl TryFrom<String> for CveId {
    type Error = IngestError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<CveId> for String {
    fn from(id: CveId) -> String {
        id.0
    }
}

impl fmt::Display for CveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

const REPO_HOSTS: &[&str] = &["github.com", "gitlab.com", "bitbucket.org", "codeberg.org"];
const RESERVED_OWNERS: &[&str] = &[
    "advisories",
    "orgs",
    "users",
    "sponsors",
    "topics",
    "marketplace",
    "security",
];

/// A repository on a hosting service, e.g. `github.com/andialbrecht/sqlparse`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepoLocator {
    pub host: String,
    pub owner: String,
    pub name: String,
}

impl RepoLocator {
    pub fn parse_url(raw: &str) -> Option<Self> {
        let url = url::Url::parse(raw.trim()).ok()?;
        let host = url.host_str()?.trim_start_matches("www.").to_ascii_lowercase();
        if !REPO_HOSTS.contains(&host.as_str()) {
            return None;
        }
        let mut segs = url.path_segments()?.filter(|s| !s.is_empty());
        let owner = segs.next()?.to_string();
        let name = segs.next()?.trim_end_matches(".git").to_string();
        if RESERVED_OWNERS.contains(&owner.to_ascii_lowercase().as_str()) || name.is_empty() {
            return None;
        }
        Some(Self { host, owner, name })
    }

    pub fn web_url(&self) -> String {
        format!("https://{}/{}/{}", self.host, self.owner, self.name)
    }

    pub fn clone_url(&self) -> String {
        format!("{}.git", self.web_url())
    }

    pub fn same_repo(&self, other: &RepoLocator) -> bool {
        self.host == other.host
            && self.owner.eq_ignore_ascii_case(&other.owner)
            && self.name.eq_ignore_ascii_case(&other.name)
    }
}

impl fmt::Display for RepoLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.host, self.owner, self.name)
    }
}

/// Extracts `(repository, revision)` from commit URLs such as
/// `https://github.com/o/r/commit/<sha>` or `.../pull/12/commits/<sha>`.
pub fn parse_commit_url(raw: &str) -> Option<(RepoLocator, String)> {
    let repo = RepoLocator::parse_url(raw)?;
    let url = url::Url::parse(raw.trim()).ok()?;
    let segs: Vec<&str> = url.path_segments()?.filter(|s| !s.is_empty()).collect();
    let rest = &segs[2..];
    let sha = match rest {
        ["commit", sha, ..] | ["-", "commit", sha, ..] | ["commits", sha, ..] => *sha,
        ["pull", _, "commits", sha, ..] => *sha,
        _ => return None,
    };
    let sha = sha.trim_end_matches(".patch").trim_end_matches(".diff");
    if sha.len() >= 7 && sha.bytes().all(|b| b.is_ascii_hexdigit()) {
        Some((repo, sha.to_ascii_lowercase()))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AffectedConfig {
    pub version_range: VersionRange,
    pub platform_notes: Option<String>,
}

impl AffectedConfig {
    pub fn classify(&self, version: &str) -> Classification {
        self.version_range.classify(version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: CveId,
    pub description: String,
    pub cwe_ids: Vec<String>,
    pub reference_urls: Vec<String>,
    pub affected: Vec<AffectedConfig>,
    pub repository: Option<RepoLocator>,
}

impl CveRecord {
    /// A version counts as affected when any config says so.
    pub fn classify(&self, version: &str) -> Classification {
        let mut seen_not_affected = false;
        for cfg in &self.affected {
            match cfg.classify(version) {
                Classification::Affected => return Classification::Affected,
                Classification::NotAffected => seen_not_affected = true,
                Classification::Unknown => {}
            }
        }
        if seen_not_affected {
            Classification::NotAffected
        } else {
            Classification::Unknown
        }
    }

    /// Parses a cvelist 5.x record document.
    pub fn from_cvelist_json(expected: &CveId, text: &str) -> Result<Self, IngestError> {
        let doc: cvelist::Record = serde_json::from_str(text)
            .map_err(|e| IngestError::MalformedRecord(format!("{expected}: {e}")))?;
        let id: CveId = doc.cve_metadata.cve_id.parse().map_err(|_| {
            IngestError::MalformedRecord(format!("bad cveId {:?}", doc.cve_metadata.cve_id))
        })?;
        if &id != expected {
            return Err(IngestError::MalformedRecord(format!(
                "record id {id} does not match requested {expected}"
            )));
        }
        if doc.cve_metadata.state.eq_ignore_ascii_case("REJECTED") {
            return Err(IngestError::NotFound(format!("{id} is rejected")));
        }
        let cna = doc
            .containers
            .cna
            .ok_or_else(|| IngestError::MalformedRecord(format!("{id}: missing cna container")))?;

        let description = cna
            .descriptions
            .iter()
            .find(|d| d.lang.starts_with("en"))
            .or_else(|| cna.descriptions.first())
            .map(|d| d.value.trim().to_string())
            .unwrap_or_default();

        let mut cwe_ids = Vec::new();
        let mut raw_refs = Vec::new();
        for container in std::iter::once(&cna).chain(doc.containers.adp.iter()) {
            for pt in &container.problem_types {
                for d in &pt.descriptions {
                    if let Some(cwe) = &d.cwe_id {
                        if !cwe_ids.contains(cwe) {
                            cwe_ids.push(cwe.clone());
                        }
                    }
                }
            }
            raw_refs.extend(container.references.iter().map(|r| r.url.clone()));
        }

        let mut reference_urls: Vec<String> = Vec::new();
        for raw in raw_refs {
            match url::Url::parse(raw.trim()) {
                Ok(u) if u.has_host() => {
                    let s = raw.trim().to_string();
                    if !reference_urls.contains(&s) {
                        reference_urls.push(s);
                    }
                }
                _ => tracing::warn!(cve = %id, url = %raw, "dropping invalid reference URL"),
            }
        }

        let mut affected = Vec::new();
        for product in &cna.affected {
            let notes = product_notes(product);
            for v in &product.versions {
                if !v.status.eq_ignore_ascii_case("affected") {
                    continue;
                }
                if let Some(range) = v.to_range() {
                    affected.push(AffectedConfig {
                        version_range: range,
                        platform_notes: notes.clone(),
                    });
                }
            }
        }

        let repository = select_repository(&id, &reference_urls);
        Ok(CveRecord {
            cve_id: id,
            description,
            cwe_ids,
            reference_urls,
            affected,
            repository,
        })
    }
}

fn product_notes(product: &cvelist::Affected) -> Option<String> {
    let mut parts = Vec::new();
    if let Some(p) = &product.product {
        match &product.vendor {
            Some(v) => parts.push(format!("{v}/{p}")),
            None => parts.push(p.clone()),
        }
    }
    if !product.platforms.is_empty() {
        parts.push(format!("platforms: {}", product.platforms.join(", ")));
    }
    (!parts.is_empty()).then(|| parts.join("; "))
}

/// First repository-hosting URL wins; the others are logged.
fn select_repository(id: &CveId, refs: &[String]) -> Option<RepoLocator> {
    let mut found: Vec<RepoLocator> = Vec::new();
    for r in refs {
        if let Some(loc) = RepoLocator::parse_url(r) {
            if !found.iter().any(|f| f.same_repo(&loc)) {
                found.push(loc);
            }
        }
    }
    if found.len() > 1 {
        let alts: Vec<String> = found[1..].iter().map(ToString::to_string).collect();
        tracing::info!(cve = %id, chosen = %found[0], alternatives = ?alts, "multiple repositories referenced");
    }
    found.into_iter().next()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchCommit {
    pub commit_id: String,
    pub diff_text: String,
    pub message: String,
    /// Set when the diff could not be fetched; `diff_text` is then empty.
    pub unavailable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdvisoryDoc {
    pub url: String,
    pub text: String,
    pub matched_keyword: String,
    pub fetch_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceSnapshot {
    pub root_path: PathBuf,
    pub version_tag: String,
    pub directory_tree: String,
}

mod cvelist {
    use serde::Deserialize;

    use super::VersionRange;

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct Record {
        pub cve_metadata: Metadata,
        pub containers: Containers,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct Metadata {
        pub cve_id: String,
        #[serde(default)]
        pub state: String,
    }

    #[derive(Deserialize)]
    pub struct Containers {
        pub cna: Option<Container>,
        #[serde(default)]
        pub adp: Vec<Container>,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct Container {
        #[serde(default)]
        pub descriptions: Vec<Description>,
        #[serde(default)]
        pub problem_types: Vec<ProblemType>,
        #[serde(default)]
        pub references: Vec<Reference>,
        #[serde(default)]
        pub affected: Vec<Affected>,
    }

    #[derive(Deserialize)]
    pub struct Description {
        #[serde(default)]
        pub lang: String,
        pub value: String,
    }

    #[derive(Deserialize)]
    pub struct ProblemType {
        #[serde(default)]
        pub descriptions: Vec<ProblemDescription>,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct ProblemDescription {
        pub cwe_id: Option<String>,
    }

    #[derive(Deserialize)]
    pub struct Reference {
        pub url: String,
    }

    #[derive(Deserialize)]
    pub struct Affected {
        pub vendor: Option<String>,
        pub product: Option<String>,
        #[serde(default)]
        pub platforms: Vec<String>,
        #[serde(default)]
        pub versions: Vec<Version>,
    }

    #[derive(Deserialize)]
    #[serde(rename_all = "camelCase")]
    pub struct Version {
        pub version: String,
        pub status: String,
        pub less_than: Option<String>,
        pub less_than_or_equal: Option<String>,
    }

    const UNBOUNDED: &[&str] = &["0", "*", "", "unspecified", "n/a", "all"];

    impl Version {
        pub fn to_range(&self) -> Option<VersionRange> {
            let lower = {
                let v = self.version.trim();
                (!UNBOUNDED.contains(&v.to_ascii_lowercase().as_str())).then(|| v.to_string())
            };
            let clean = |s: &String| {
                let s = s.trim();
                (!UNBOUNDED.contains(&s)).then(|| s.to_string())
            };
            match (
                self.less_than.as_ref().and_then(clean),
                self.less_than_or_equal.as_ref().and_then(clean),
            ) {
                (Some(u), _) => Some(VersionRange::Bounded {
                    lower,
                    upper: Some(u),
                    upper_inclusive: false,
                }),
                (None, Some(u)) => Some(VersionRange::Bounded {
                    lower,
                    upper: Some(u),
                    upper_inclusive: true,
                }),
                (None, None) if self.less_than.is_some() || self.less_than_or_equal.is_some() => {
                    Some(VersionRange::Bounded {
                        lower,
                        upper: None,
                        upper_inclusive: false,
                    })
                }
                (None, None) => lower.map(|v| VersionRange::Exact { version: v }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cve_id_validation() {
        assert!("CVE-2024-4340".parse::<CveId>().is_ok());
        assert!("cve-2021-44228".parse::<CveId>().is_ok());
        assert!("CVE-24-1".parse::<CveId>().is_err());
        assert!("GHSA-xxxx".parse::<CveId>().is_err());
        let id: CveId = "CVE-2024-4340".parse().unwrap();
        assert_eq!((id.year(), id.number()), ("2024", "4340"));
    }

    #[test]
    fn repo_locator_from_urls() {
        let r = RepoLocator::parse_url(
            "https://github.com/andialbrecht/sqlparse/security/advisories/GHSA-2m57-hf25-phgg",
        )
        .unwrap();
        assert_eq!(r.to_string(), "github.com/andialbrecht/sqlparse");
        assert!(RepoLocator::parse_url("https://github.com/advisories/GHSA-2m57").is_none());
        assert!(RepoLocator::parse_url("https://example.com/a/b").is_none());
        assert_eq!(
            RepoLocator::parse_url("https://gitlab.com/g/p.git").unwrap().name,
            "p"
        );
    }

    #[test]
    fn commit_urls() {
        let (repo, sha) =
            parse_commit_url("https://github.com/o/r/commit/B4A39D9850969B4E1D6940D32094EE0B42A2CF03")
                .unwrap();
        assert_eq!(repo.name, "r");
        assert_eq!(sha, "b4a39d9850969b4e1d6940d32094ee0b42a2cf03");
        assert!(parse_commit_url("https://github.com/o/r/pull/7/commits/abcdef12").is_some());
        assert!(parse_commit_url("https://gitlab.com/o/r/-/commit/abcdef12").is_some());
        assert!(parse_commit_url("https://github.com/o/r/issues/5").is_none());
    }

    const RECORD: &str = r#"{
      "dataType": "CVE_RECORD",
      "cveMetadata": {"cveId": "CVE-2099-0001", "state": "PUBLISHED"},
      "containers": {
        "cna": {
          "descriptions": [{"lang": "en", "value": "Stack exhaustion in parser."}],
          "problemTypes": [{"descriptions": [{"cweId": "CWE-674", "lang": "en", "description": "x"}]}],
          "references": [
            {"url": "https://github.com/acme/parser/commit/abcdef1234"},
            {"url": "not a url"},
            {"url": "https://github.com/other/fork"}
          ],
          "affected": [{"vendor": "acme", "product": "parser",
            "versions": [
              {"version": "0", "lessThan": "2.0.0", "status": "affected", "versionType": "semver"},
              {"version": "2.0.0", "status": "unaffected"}
            ]}]
        },
        "adp": [{"problemTypes": [{"descriptions": [{"cweId": "CWE-400"}]}]}]
      }
    }"#;

    #[test]
    fn parses_cvelist_record() {
        let id: CveId = "CVE-2099-0001".parse().unwrap();
        let rec = CveRecord::from_cvelist_json(&id, RECORD).unwrap();
        assert_eq!(rec.cwe_ids, vec!["CWE-674", "CWE-400"]);
        assert_eq!(rec.reference_urls.len(), 2);
        assert_eq!(rec.repository.unwrap().name, "parser");
        assert_eq!(rec.affected.len(), 1);
        assert_eq!(rec.affected[0].version_range, VersionRange::less_than("2.0.0"));
        assert_eq!(rec.affected[0].platform_notes.as_deref(), Some("acme/parser"));
    }

    #[test]
    fn mismatched_or_broken_records() {
        let other: CveId = "CVE-2099-0002".parse().unwrap();
        assert!(matches!(
            CveRecord::from_cvelist_json(&other, RECORD),
            Err(IngestError::MalformedRecord(_))
        ));
        assert!(matches!(
            CveRecord::from_cvelist_json(&other, "{}"),
            Err(IngestError::MalformedRecord(_))
        ));
    }

    #[test]
    fn any_affected_config_wins() {
        let id: CveId = "CVE-2099-0001".parse().unwrap();
        let mut rec = CveRecord::from_cvelist_json(&id, RECORD).unwrap();
        rec.affected.push(AffectedConfig {
            version_range: VersionRange::exact("3.1.0"),
            platform_notes: None,
        });
        assert_eq!(rec.classify("3.1.0"), Classification::Affected);
        assert_eq!(rec.classify("2.5.0"), Classification::NotAffected);
        assert_eq!(rec.classify("trunk"), Classification::Unknown);
    }
}
