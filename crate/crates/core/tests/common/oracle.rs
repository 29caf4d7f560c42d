//! Brute-force reference implementations the ingest code is checked against.

use cveforge_core::ingest::{AffectedConfig, CveRecord, VersionRange, WebFetcher};
use proptest::prelude::*;

pub type Triple = (u32, u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RangeKind {
    LessThan,
    LessThanOrEqual,
    Exact,
}

/// A tag as `(a, b, c)` plus whether it carries a `v` prefix.
pub fn tag_text(t: Triple, v_prefix: bool) -> String {
    format!("{}{}.{}.{}", if v_prefix { "v" } else { "" }, t.0, t.1, t.2)
}

pub fn triple() -> impl Strategy<Value = Triple> {
    (0u32..4, 0u32..6, 0u32..12)
}

/// Tags with some noise mixed in that must never be picked.
pub fn tag_list() -> impl Strategy<Value = Vec<(Option<Triple>, String)>> {
    prop::collection::vec(
        prop_oneof![
            8 => (triple(), any::<bool>()).prop_map(|(t, v)| (Some(t), tag_text(t, v))),
            1 => prop::sample::select(vec!["latest", "nightly", "release-candidate", "main"])
                .prop_map(|s| (None, s.to_string())),
        ],
        0..24,
    )
}

pub fn range_kind() -> impl Strategy<Value = RangeKind> {
    prop_oneof![Just(RangeKind::LessThan), Just(RangeKind::LessThanOrEqual), Just(RangeKind::Exact)]
}

pub fn make_range(kind: RangeKind, bound: Triple) -> VersionRange {
    let b = tag_text(bound, false);
    match kind {
        RangeKind::LessThan => VersionRange::less_than(b),
        RangeKind::LessThanOrEqual => VersionRange::less_than_or_equal(b),
        RangeKind::Exact => VersionRange::exact(b),
    }
}

pub fn record_with(ranges: &[VersionRange], references: Vec<String>) -> CveRecord {
    CveRecord {
        cve_id: "CVE-2099-0001".parse().unwrap(),
        description: String::new(),
        cwe_ids: Vec::new(),
        reference_urls: references,
        affected: ranges
            .iter()
            .map(|r| AffectedConfig {
                version_range: r.clone(),
                platform_notes: None,
            })
            .collect(),
        repository: None,
    }
}

fn in_range(kind: RangeKind, bound: Triple, t: Triple) -> bool {
    match kind {
        RangeKind::LessThan => t < bound,
        RangeKind::LessThanOrEqual => t <= bound,
        RangeKind::Exact => t == bound,
    }
}

/// Sort every affected tag by its numeric triple and take the last one.
/// Equal triples (`1.2.3` and `v1.2.3`) are ordered by tag text.
pub fn oracle_resolve(tags: &[(Option<Triple>, String)], ranges: &[(RangeKind, Triple)]) -> Option<String> {
    let mut affected: Vec<(Triple, &String)> = tags
        .iter()
        .filter_map(|(t, s)| t.map(|t| (t, s)))
        .filter(|(t, _)| ranges.iter().any(|&(k, b)| in_range(k, b, *t)))
        .collect();
    affected.sort();
    affected.last().map(|(_, s)| (*s).clone())
}

pub const KEYWORDS: [&str; 5] = ["advisories", "advisory", "bounties", "bounty", "security"];

/// Reference URLs that mention a keyword in any letter case, in their original order.
pub fn oracle_advisory_urls(urls: &[String]) -> Vec<String> {
    urls.iter()
        .filter(|u| {
            let lower = u.to_lowercase();
            KEYWORDS.iter().any(|k| lower.contains(k))
        })
        .cloned()
        .collect()
}

pub fn reference_url() -> impl Strategy<Value = String> {
    let segment = prop_oneof![
        3 => "[a-z0-9]{1,8}",
        1 => prop::sample::select(vec![
            "Security", "ADVISORY", "advisories", "bounty", "huntr-bounties", "secure", "advise", "bount",
        ])
        .prop_map(str::to_string),
    ];
    (prop::sample::select(vec!["github.com", "nvd.nist.gov", "example.org", "security.example.com"]),
     prop::collection::vec(segment, 0..4))
        .prop_map(|(host, segs)| format!("https://{host}/{}", segs.join("/")))
}

/// Echoes the URL back as the page body; fails for `.invalid` hosts.
pub struct EchoFetcher;

impl WebFetcher for EchoFetcher {
    fn name(&self) -> &'static str {
        "echo"
    }

    fn fetch(&self, url: &str) -> Result<String, String> {
        if url.contains(".invalid") {
            Err("unreachable".into())
        } else {
            Ok(format!("page at {url}"))
        }
    }
}
