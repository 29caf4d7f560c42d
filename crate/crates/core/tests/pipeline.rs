mod common;

use std::collections::BTreeSet;

use common::*;
use cveforge_core::llm::RoleName;
use cveforge_core::pipeline::{batch_run, AbortCause, BatchOptions, Stage, Status};
use cveforge_core::runtime::build_pipeline;
use cveforge_core::sandbox::NetworkPolicy;
use cveforge_core::stages::FailureKind;
use serde_json::json;

#[test]
fn golden_path_reproduces() {
    let scratch = tempfile::tempdir().unwrap();
    let cfg = offline_config(&fixture("golden"), scratch.path());
    let pipeline = build_pipeline(&cfg).unwrap();
    let result = pipeline.reproduce(GOLDEN_CVE, 1);
    let m = &result.metadata;
    assert_eq!(*result.state.status(), Status::Reproduced, "{m:#?}");
    assert_eq!(result.state.stage(), Stage::Stored);
    let stages: Vec<&str> = m.trace.iter().map(|t| t.stage.as_str()).collect();
    assert_eq!(stages, ["ingest", "knowledge", "builder", "exploiter", "verifier", "stored", "stored"]);
    assert_eq!(m.flag_token.as_deref(), Some(FLAG));
    assert_eq!(m.bundle_intact, Some(true));
    let total: f64 = m.usage.iter().map(|u| u.cost_usd).sum();
    assert!((m.cost_usd - total).abs() < 1e-9);
    let dir = result.run_dir.unwrap();
    for f in ["kb.json", "exploit.py", "verifier.py", "metadata.json", "snapshot.ref"] {
        assert!(dir.join(f).is_file(), "{f} missing");
    }
    assert_eq!(std::fs::read_dir(dir.join("transcripts")).unwrap().count(), m.transcripts.len());
    // the sandbox is gone, its logs were kept
    assert!(!scratch.path().join("sandboxes").join(m.sandbox_id.as_ref().unwrap()).exists());
    assert!(dir.join("logs/0003_err.log").is_file());
    let snapshot = std::fs::read_to_string(dir.join("snapshot.ref")).unwrap();
    assert!(scratch.path().join("sandboxes/snapshots").join(snapshot.trim()).is_dir());
    // every test in this binary runs offline
    assert_eq!(cveforge_core::net::requests_issued(), 0);
}

#[test]
fn golden_trace_is_deterministic() {
    let run = || {
        let scratch = tempfile::tempdir().unwrap();
        let cfg = offline_config(&fixture("golden"), scratch.path());
        let m = build_pipeline(&cfg).unwrap().reproduce(GOLDEN_CVE, 1).metadata;
        (m.trace, m.usage.iter().map(|u| (u.role, u.prompt_tokens, u.completion_tokens)).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}

#[test]
fn verifier_rejects_patched_release() {
    let scratch = tempfile::tempdir().unwrap();
    let cfg = offline_config(&fixture("golden"), scratch.path());
    let pipeline = build_pipeline(&cfg).unwrap();
    let result = pipeline.reproduce(GOLDEN_CVE, 1);
    let dir = result.run_dir.unwrap();
    let weak = golden_turns(RoleName::VerifierDeveloper)[1]["answer"]["script"].as_str().unwrap().to_string();

    let patched = fixture("golden/repos/andialbrecht/sqlparse/tags/0.5.0");
    let sb = pipeline.sandboxes.create(Some(&patched)).unwrap();
    sb.write_to_file("exploit.py", &std::fs::read_to_string(dir.join("exploit.py")).unwrap()).unwrap();
    sb.write_to_file("verifier.py", &std::fs::read_to_string(dir.join("verifier.py")).unwrap()).unwrap();
    sb.write_to_file("weak.py", &weak).unwrap();
    // Pretend the installer reports the vulnerable version; only the behaviour differs.
    sb.write_to_file(".pip-state/sqlparse", "0.4.4\n").unwrap();

    let robust = sb.execute_with("python3 verifier.py", false, NetworkPolicy::Restricted, std::time::Duration::from_secs(60)).unwrap();
    assert!(!robust.ok);
    assert!(!robust.payload.contains(FLAG), "{}", robust.payload);
    let fooled = sb.execute_with("python3 weak.py", false, NetworkPolicy::Restricted, std::time::Duration::from_secs(60)).unwrap();
    assert!(fooled.payload.contains(FLAG), "{}", fooled.payload);
}

#[test]
fn budget_exhaustion_mid_builder_aborts() {
    let overrides: Vec<_> = RoleName::ALL.into_iter().map(|r| (r, with_usage(r, 0, 1000))).collect();
    let s = scripted(&fixture("golden"), &overrides, |cfg| {
        flat_pricing(cfg, 1.0);
        cfg.caps.budget_usd = 5.0;
    });
    let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
    assert!(
        matches!(r.state.status(), Status::Aborted { stage: Stage::Builder, cause: AbortCause::Budget, .. }),
        "{:?}",
        r.state.status()
    );
    assert_eq!(s.mock.call_count(), 5);
    assert_eq!(s.mock.calls_for(RoleName::ExploitDeveloper), 0);
    assert!((r.metadata.cost_usd - 5.0).abs() < 1e-9);
    assert_eq!(r.metadata.failure_kind, Some(FailureKind::Budget));
}

#[test]
fn deadline_aborts_with_time() {
    let overrides: Vec<_> = RoleName::ALL.into_iter().map(|r| (r, with_delay(r, 400))).collect();
    let s = scripted(&fixture("golden"), &overrides, |cfg| cfg.caps.deadline_minutes = 1.0 / 60.0);
    let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
    assert!(
        matches!(r.state.status(), Status::Aborted { cause: AbortCause::Time, .. }),
        "{:?}",
        r.state.status()
    );
    assert_eq!(r.metadata.failure_kind, Some(FailureKind::Timeout));
    assert!(r.metadata.seconds < 3.0);
}

#[test]
fn builder_critic_rejecting_twice_fails_builder() {
    let dev = golden_turns(RoleName::SetupDeveloper);
    let reject = critique(false, "The installed version is not shown.");
    let s = scripted(
        &fixture("golden"),
        &[
            (RoleName::SetupDeveloper, [dev.clone(), dev.clone(), dev].concat()),
            (RoleName::SetupCritic, vec![reject.clone(), reject.clone(), reject]),
        ],
        |_| {},
    );
    let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
    assert!(
        matches!(r.state.status(), Status::Failed { stage: Stage::Builder, kind: FailureKind::CriticRejected, .. }),
        "{:?}",
        r.state.status()
    );
    assert_eq!(agents_run(&r.metadata, "setup_developer"), 2);
    assert_eq!(agents_run(&r.metadata, "setup_critic"), 2);
    assert_eq!(s.mock.remaining(RoleName::SetupCritic), 1);
    assert_eq!(s.mock.calls_for(RoleName::ExploitDeveloper), 0);
}

#[test]
fn unknown_cve_is_ingest_error() {
    let scratch = tempfile::tempdir().unwrap();
    let cfg = offline_config(&fixture("golden"), scratch.path());
    let r = build_pipeline(&cfg).unwrap().reproduce("CVE-0000-0000", 1);
    assert!(matches!(
        r.state.status(),
        Status::Failed { stage: Stage::Ingest, kind: FailureKind::IngestError, .. }
    ));
    let r = build_pipeline(&cfg).unwrap().reproduce("not-a-cve", 1);
    assert_eq!(r.metadata.failure_kind, Some(FailureKind::IngestError));
    assert!(r.run_dir.is_none());
}

#[test]
fn verifier_mutating_exploit_fails_flag_check() {
    let mutate = format!(
        "import subprocess\nimport sys\n\ndef pre_setup():\n    with open('exploit.py', 'a') as f:\n        f.write('\\nprint(1)\\n')\n\n\
         def run_exploit():\n    return subprocess.run([sys.executable, 'exploit.py'], capture_output=True, text=True)\n\n\
         def post_setup(r):\n    print('{FLAG}')\n\npre_setup()\npost_setup(run_exploit())\n"
    );
    let s = scripted(
        &fixture("golden"),
        &[
            (RoleName::VerifierDeveloper, vec![verifier_answer(&mutate), robust_verifier()]),
            (RoleName::VerifierCritic, vec![critique(true, "ok")]),
        ],
        |_| {},
    );
    let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
    assert_eq!(*r.state.status(), Status::Reproduced);
    let checks: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(r.run_dir.unwrap().join("verifier/checks.json")).unwrap()).unwrap();
    let first = &checks[0]["outcome"];
    assert_eq!(first["flag_found"], json!(true));
    assert_ne!(first["exploit_digest_before"], first["exploit_digest_after"]);
    assert!(first["failure_reason"].as_str().unwrap().contains("modified"));
    // the critic only ever saw the second script
    assert_eq!(s.mock.calls_for(RoleName::VerifierCritic), 1);
}

#[test]
fn batch_converges_and_never_reruns() {
    let scratch = tempfile::tempdir().unwrap();
    let cfg = offline_config(&fixture("batch"), scratch.path());
    let pipeline = build_pipeline(&cfg).unwrap();
    let ids: Vec<String> = (1001..=1003).map(|n| format!("CVE-2099-{n}")).collect();
    let report = batch_run(&pipeline, &ids, &BatchOptions { rounds: 3, parallelism: 2 });
    assert_eq!(report.convergence(), vec![(1, 1), (2, 1), (3, 0)]);
    assert_eq!(report.remaining(), 1);
    let by_id = |id: &str| report.records.iter().find(|r| r.cve_id == id).unwrap().clone();
    assert_eq!((by_id("CVE-2099-1001").round, by_id("CVE-2099-1001").attempts), (1, 1));
    assert_eq!((by_id("CVE-2099-1002").round, by_id("CVE-2099-1002").attempts), (2, 2));
    assert_eq!(by_id("CVE-2099-1003").status, "failed");
    assert_eq!(by_id("CVE-2099-1003").attempts, 3);
    // every attempt ran in its own sandbox
    let sandboxes: BTreeSet<_> = report.attempts.iter().map(|a| a.sandbox_id.clone().unwrap()).collect();
    assert_eq!(sandboxes.len(), report.attempts.len());

    // a second batch skips what is already stored
    let again = batch_run(&pipeline, &ids, &BatchOptions { rounds: 1, parallelism: 2 });
    assert_eq!(again.skipped, vec!["CVE-2099-1001", "CVE-2099-1002"]);
    assert_eq!(again.attempts.len(), 1);
    assert_eq!(pipeline.store.runs("CVE-2099-1001").len(), 1);
}

#[test]
fn empty_batch_is_empty_report() {
    let scratch = tempfile::tempdir().unwrap();
    let cfg = offline_config(&fixture("batch"), scratch.path());
    let report = batch_run(&build_pipeline(&cfg).unwrap(), &[], &BatchOptions::default());
    assert!(report.records.is_empty() && report.rounds.is_empty());
}
