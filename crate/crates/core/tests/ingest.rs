mod common;

use common::oracle::*;
use common::*;
use cveforge_core::ingest::{
    collect_advisories, match_keyword, resolve_vulnerable_version, CveRegistry, FixtureRegistry,
    FixtureRepoHost, IngestError, RepoHost,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn resolution_matches_sort_and_filter_oracle(
        tags in tag_list(),
        ranges in prop::collection::vec((range_kind(), triple()), 1..3),
    ) {
        let record = record_with(
            &ranges.iter().map(|&(k, b)| make_range(k, b)).collect::<Vec<_>>(),
            Vec::new(),
        );
        let names: Vec<String> = tags.iter().map(|(_, s)| s.clone()).collect();
        let got = resolve_vulnerable_version(&record, &names);
        let parseable = tags.iter().any(|(t, _)| t.is_some());
        match oracle_resolve(&tags, &ranges) {
            Some(want) => prop_assert_eq!(got.unwrap(), want),
            None if parseable => prop_assert!(matches!(got, Err(IngestError::NoAffectedVersion)), "{:?}", got),
            None => prop_assert!(matches!(got, Err(IngestError::AmbiguousVersioning(_))), "{:?}", got),
        }
    }

    #[test]
    fn advisory_filter_matches_substring_oracle(urls in prop::collection::vec(reference_url(), 0..10)) {
        let record = record_with(&[], urls.clone());
        let docs = collect_advisories(&record, &EchoFetcher);
        let kept: Vec<String> = docs.iter().map(|d| d.url.clone()).collect();
        prop_assert_eq!(kept, oracle_advisory_urls(&urls));
        for d in &docs {
            prop_assert!(d.url.to_lowercase().contains(&d.matched_keyword));
            prop_assert_eq!(match_keyword(&d.url), Some(d.matched_keyword.as_str()));
            prop_assert!(d.text.contains(&d.url));
        }
    }
}

#[test]
fn failed_advisory_fetch_is_recorded_not_fatal() {
    let record = record_with(
        &[],
        vec![
            "https://down.invalid/security/1".into(),
            "https://example.org/advisory/2".into(),
        ],
    );
    let docs = collect_advisories(&record, &EchoFetcher);
    assert_eq!(docs.len(), 2);
    assert!(docs[0].fetch_failed && docs[0].text.is_empty());
    assert!(!docs[1].fetch_failed);
}

#[test]
fn golden_record_resolves_last_vulnerable_release() {
    let world = fixture("golden");
    let record = FixtureRegistry::new(world.join("records"))
        .fetch(&GOLDEN_CVE.parse().unwrap())
        .unwrap();
    let repo = record.repository.clone().expect("repository from references");
    assert_eq!((repo.owner.as_str(), repo.name.as_str()), ("andialbrecht", "sqlparse"));
    let mut tags = FixtureRepoHost::new(world.join("repos")).list_tags(&repo).unwrap();
    tags.sort();
    assert_eq!(tags, ["0.4.3", "0.4.4", "0.5.0"]);
    assert_eq!(resolve_vulnerable_version(&record, &tags).unwrap(), "0.4.4");
    assert_eq!(record.cwe_ids, ["CWE-674"]);
}
