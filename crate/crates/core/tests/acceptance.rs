//! Acceptance suite. Each test checks one criterion and writes a single
//! `criterion N: PASS|FAIL - ...` line to stderr (bypassing libtest capture)
//! before asserting.
//!
//! Criterion 8 (a live run of CVE-2024-4340 against real providers inside a
//! container sandbox, under the $5 / 45 minute caps) needs provider keys and
//! network access. It is not part of this suite; see the README for how to
//! run it by hand.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::oracle::*;
use common::*;
use cveforge_core::agent::{
    run_agent, AgentEnv, AgentOutcome, AgentSpec, ContextBlocks, DEFAULT_MAX_TOOL_CALLS, DEFAULT_REVIEW_TOKENS,
};
use cveforge_core::digest::tree_digest;
use cveforge_core::ingest::{
    collect_advisories, resolve_vulnerable_version, CveRegistry, FixtureRegistry, FixtureRepoHost, RepoHost,
};
use cveforge_core::llm::{Budget, Gateway, MockProvider, Pricing, ProviderRegistry, RoleBindings, RoleName, ScriptedTurn};
use cveforge_core::pipeline::{batch_run, AbortCause, BatchOptions, Stage, Status};
use cveforge_core::runtime::build_pipeline;
use cveforge_core::sandbox::{
    LocalBackend, SandboxError, SandboxFactory, SandboxHandle, SandboxSettings, ToolRegistry, LINUX_COMMAND,
    MAX_PAYLOAD_LINES, MAX_READ_LINES, WRITE_FILE,
};
use cveforge_core::stages::builder::{plan_schema, READ_ONLY_TOOLS};
use cveforge_core::stages::verifier::verifier_schema;
use cveforge_core::stages::FailureKind;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};
use tempfile::TempDir;

/// Randomized cases per property check.
const CASES: u32 = 200;
const INGEST_CASES: u32 = 500;
/// Wall-clock ceiling for the golden replay.
const GOLDEN_LIMIT: Duration = Duration::from_secs(120);
/// Tolerance between reported cost and the ledger sum, in USD.
const COST_TOLERANCE: f64 = 1e-9;
/// Test-scaled sandbox timings.
const FOREGROUND_TIMEOUT: Duration = Duration::from_secs(2);
const BACKGROUND_SAMPLE: Duration = Duration::from_millis(100);
const BACKGROUND_SLACK: Duration = Duration::from_secs(1);

fn criterion(n: u32, summary: &str, body: impl FnOnce() -> String) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let line = match &outcome {
        Ok(detail) => format!("criterion {n}: PASS - {summary} ({detail})\n"),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            format!("criterion {n}: FAIL - {summary}: {msg}\n")
        }
    };
    let _ = std::io::stderr().write_all(line.as_bytes());
    if let Err(panic) = outcome {
        std::panic::resume_unwind(panic);
    }
}

fn run_property<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    if let Err(e) = runner.run(&strategy, test) {
        panic!("{e}");
    }
}

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn sandbox_factory(tmp: &TempDir) -> SandboxFactory {
    let mut s = SandboxSettings::new(tmp.path().join("sandboxes"));
    s.foreground_timeout = FOREGROUND_TIMEOUT;
    s.background_sample = BACKGROUND_SAMPLE;
    SandboxFactory::new(Arc::new(LocalBackend), s)
}

fn numbered(n: usize) -> String {
    (1..=n).map(|i| format!("line {i}\n")).collect()
}

#[test]
fn criterion_1_golden_path_replay() {
    criterion(1, "golden-path replay reproduces CVE-2024-4340", || {
        let started = Instant::now();
        let scratch = tempfile::tempdir().unwrap();
        let cfg = offline_config(&fixture("golden"), scratch.path());
        let result = build_pipeline(&cfg).unwrap().reproduce(GOLDEN_CVE, 1);
        let elapsed = started.elapsed();
        let m = &result.metadata;
        assert_eq!(*result.state.status(), Status::Reproduced, "{m:#?}");
        assert!(elapsed < GOLDEN_LIMIT, "took {elapsed:?}");

        let stages: Vec<&str> = m.trace.iter().map(|t| t.stage.as_str()).collect();
        assert_eq!(stages, ["ingest", "knowledge", "builder", "exploiter", "verifier", "stored", "stored"]);
        assert_eq!(m.flag_token.as_deref(), Some(FLAG));

        let dir = result.run_dir.clone().unwrap();
        for f in ["kb.json", "exploit.py", "verifier.py", "metadata.json"] {
            assert!(dir.join(f).is_file(), "{f} missing");
        }
        assert!(std::fs::read_dir(dir.join("transcripts")).unwrap().count() > 0);

        let kb = std::fs::read_to_string(dir.join("kb.json")).unwrap();
        assert!(kb.contains("0.4.4"), "kb lacks the vulnerable version");
        let setup = std::fs::read_to_string(dir.join("builder/setup_report.json")).unwrap();
        assert!(setup.contains("pip install sqlparse==0.4.4"));
        let exploit = std::fs::read_to_string(dir.join("exploit.py")).unwrap();
        assert!(exploit.contains(r#""[" * depth + "]" * depth"#) || exploit.contains(r#""["*depth+"]"*depth"#));
        assert!(exploit.contains("10000"));
        let report = std::fs::read_to_string(dir.join("exploiter/report.json")).unwrap();
        assert!(report.contains("RecursionError"));

        // weak verifier passes the flag check, the critic rejects it, the robust one is accepted
        let checks = read_json(&dir.join("verifier/checks.json"));
        let kinds: Vec<(String, bool)> = checks
            .as_array()
            .unwrap()
            .iter()
            .map(|c| match c.get("outcome") {
                Some(o) => ("flag".to_string(), o["flag_found"] == json!(true)),
                None => ("critic".to_string(), c["verdict"]["accepted"] == json!(true)),
            })
            .collect();
        let expected = [("flag", true), ("critic", false), ("flag", true), ("critic", true)];
        assert_eq!(kinds, expected.map(|(k, v)| (k.to_string(), v)));

        // a second replay walks the same trace with the same usage
        let scratch2 = tempfile::tempdir().unwrap();
        let again = build_pipeline(&offline_config(&fixture("golden"), scratch2.path()))
            .unwrap()
            .reproduce(GOLDEN_CVE, 1)
            .metadata;
        assert_eq!(again.trace, m.trace);
        let usage = |u: &[cveforge_core::llm::UsageEntry]| {
            u.iter().map(|e| (e.role, e.prompt_tokens, e.completion_tokens)).collect::<Vec<_>>()
        };
        assert_eq!(usage(&again.usage), usage(&m.usage));
        format!("{:.2}s", elapsed.as_secs_f64())
    });
}

#[test]
fn criterion_2_tool_contracts() {
    criterion(2, "tool contracts hold over randomized inputs", || {
        let tmp = tempfile::tempdir().unwrap();
        let factory = sandbox_factory(&tmp);
        let sb = factory.create(None).unwrap();

        // get_file: at most 300 lines per call, pages stitch back into the file
        run_property(CASES, (0usize..900, 1usize..400, 0usize..1000), |(total, count, offset)| {
            let name = format!("pages_{total}.txt");
            if !sb.workdir().join(&name).exists() {
                sb.write_to_file(&name, &numbered(total)).unwrap();
            }
            let r = sb.get_file(&name, offset, count).unwrap();
            let body: Vec<&str> = r.payload.lines().skip(1).collect();
            let expect = count.min(MAX_READ_LINES).min(total.saturating_sub(offset));
            prop_assert!(body.len() <= MAX_READ_LINES);
            prop_assert_eq!(body.len(), expect);
            prop_assert_eq!(r.truncated, offset.min(total) + expect < total);

            let mut stitched = Vec::new();
            let mut at = 0;
            loop {
                let page = sb.get_file(&name, at, count).unwrap();
                let lines: Vec<String> = page.payload.lines().skip(1).map(str::to_string).collect();
                at += lines.len();
                stitched.extend(lines);
                if !page.truncated {
                    break;
                }
            }
            let want: Vec<String> = (1..=total).map(|i| format!("line {i}")).collect();
            prop_assert_eq!(stitched, want);
            Ok(())
        });

        // command payload: exactly the last <= 100 lines, full log recoverable
        run_property(CASES, (0usize..350, 0usize..60), |(out, err)| {
            let r = sb.execute(&format!("seq 1 {out}; seq 1 {err} >&2"), false).unwrap();
            let n = if r.payload.is_empty() { 0 } else { r.payload.lines().count() };
            prop_assert_eq!(n, (out + err).min(MAX_PAYLOAD_LINES));
            prop_assert_eq!(r.truncated, out + err > MAX_PAYLOAD_LINES);
            let log = r.command.unwrap();
            let full = std::fs::read_to_string(sb.workdir().join(&log.stdout_path)).unwrap();
            let want: String = (1..=out).map(|i| format!("{i}\n")).collect();
            prop_assert_eq!(full, want);
            if err == 0 && out > 0 {
                let tail: Vec<String> = (out.saturating_sub(MAX_PAYLOAD_LINES) + 1..=out).map(|i| i.to_string()).collect();
                prop_assert_eq!(r.payload.lines().map(str::to_string).collect::<Vec<_>>(), tail);
            }
            Ok(())
        });

        // background: returns within the sample window plus slack, still_running is right
        let bg = factory.create(None).unwrap();
        run_property(CASES, (any::<bool>(), 0u32..3), |(long, lines)| {
            let cmd = if long {
                format!("seq 1 {lines}; sleep 30")
            } else {
                format!("seq 1 {lines}")
            };
            let started = Instant::now();
            let r = bg.execute(&cmd, true).unwrap();
            prop_assert!(started.elapsed() <= BACKGROUND_SAMPLE + BACKGROUND_SLACK, "{:?}", started.elapsed());
            prop_assert!(r.background);
            prop_assert_eq!(r.still_running, Some(long));
            prop_assert_eq!(r.command.unwrap().exit_code.is_none(), long);
            Ok(())
        });
        bg.teardown();
        assert_eq!(bg.background_count(), 0);

        // env store: set, override and clear read back through commands
        run_property(
            CASES,
            prop::collection::vec(
                prop_oneof![
                    4 => ("[A-E]", "[a-z0-9]{0,6}").prop_map(|(k, v)| Some((format!("ACC_{k}"), v))),
                    1 => Just(None),
                ],
                0..8,
            ),
            |ops| {
                sb.clear_env();
                let mut model = std::collections::BTreeMap::new();
                for op in &ops {
                    match op {
                        Some((k, v)) => {
                            sb.set_env(k, v).unwrap();
                            model.insert(k.clone(), v.clone());
                        }
                        None => {
                            sb.clear_env();
                            model.clear();
                        }
                    }
                }
                let r = sb.execute("env | grep '^ACC_' | sort || true", false).unwrap();
                let want: Vec<String> = model.iter().map(|(k, v)| format!("{k}={v}")).collect();
                prop_assert_eq!(r.payload.lines().map(str::to_string).collect::<Vec<_>>(), want);
                Ok(())
            },
        );

        // foreground timeout: process group killed, partial logs kept
        let started = Instant::now();
        let err = sb
            .execute("echo partial; sh -c 'echo $$ > child.pid; exec sleep 999'", false)
            .unwrap_err();
        let elapsed = started.elapsed();
        assert!(elapsed >= FOREGROUND_TIMEOUT && elapsed < FOREGROUND_TIMEOUT + Duration::from_secs(5));
        let SandboxError::Timeout { log, tail, .. } = err else {
            panic!("expected a timeout, got {err:?}")
        };
        assert_eq!(tail, "partial");
        assert_eq!(std::fs::read_to_string(sb.workdir().join(&log.stdout_path)).unwrap(), "partial\n");
        let pid: i32 = std::fs::read_to_string(sb.workdir().join("child.pid")).unwrap().trim().parse().unwrap();
        std::thread::sleep(Duration::from_millis(100));
        // SAFETY: signal 0 only probes for existence.
        let alive = unsafe { libc::kill(pid, 0) } == 0;
        let zombie = std::fs::read_to_string(format!("/proc/{pid}/stat"))
            .map(|s| s.split_whitespace().nth(2) == Some("Z"))
            .unwrap_or(true);
        assert!(!alive || zombie, "child {pid} outlived the timeout");
        sb.teardown();
        format!("{CASES} cases per property")
    });
}

fn dev_runs(meta: &cveforge_core::store::RunMetadata, agent: &str) -> usize {
    agents_run(meta, agent)
}

#[test]
fn criterion_3_cap_enforcement() {
    criterion(3, "tool-call and feedback caps are enforced", || {
        // 61 tool calls from the first agent that has tools
        let ls: Vec<Value> = (0..61).map(|_| json!({"tool_calls": [{"name": "execute_ls_command", "arguments": {"dir": "."}}]})).collect();
        let s = scripted(&fixture("golden"), &[(RoleName::PrereqDeveloper, ls)], |_| {});
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(matches!(r.state.status(), Status::Failed { stage: Stage::Builder, .. }), "{:?}", r.state.status());
        let t = r.metadata.transcripts.iter().find(|t| t.agent == "prereq_developer").unwrap();
        assert_eq!(t.outcome, Some(AgentOutcome::CapExhausted));
        assert_eq!(t.tool_calls, DEFAULT_MAX_TOOL_CALLS);
        assert!(r.metadata.failure_reason.as_deref().unwrap().starts_with("cap_exhausted"));
        assert_eq!(s.mock.calls_for(RoleName::SetupDeveloper), 0);

        // builder: one feedback round, the third scripted run never happens
        let dev = golden_turns(RoleName::SetupDeveloper);
        let reject = critique(false, "installed version not shown");
        let s = scripted(
            &fixture("golden"),
            &[
                (RoleName::SetupDeveloper, [dev.clone(), dev.clone(), dev].concat()),
                (RoleName::SetupCritic, vec![reject.clone(); 3]),
            ],
            |_| {},
        );
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(matches!(r.state.status(), Status::Failed { stage: Stage::Builder, kind: FailureKind::CriticRejected, .. }));
        assert_eq!(dev_runs(&r.metadata, "setup_developer"), 2);
        assert_eq!(s.mock.remaining(RoleName::SetupCritic), 1);

        // exploiter: one feedback round
        let dev = golden_turns(RoleName::ExploitDeveloper);
        let s = scripted(
            &fixture("golden"),
            &[
                (RoleName::ExploitDeveloper, [dev.clone(), dev.clone(), dev].concat()),
                (RoleName::ExploitCritic, vec![critique(false, "no evidence"); 3]),
            ],
            |_| {},
        );
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(matches!(r.state.status(), Status::Failed { stage: Stage::Exploiter, kind: FailureKind::CriticRejected, .. }));
        assert_eq!(dev_runs(&r.metadata, "exploit_developer"), 2);
        assert_eq!(dev_runs(&r.metadata, "exploit_critic"), 2);
        assert_eq!(s.mock.remaining(RoleName::ExploitCritic), 1);
        assert_eq!(s.mock.calls_for(RoleName::VerifierDeveloper), 0);

        // flag check: five attempts, a sixth script is never requested
        let silent = verifier_script("raise SystemExit(1)");
        let s = scripted(
            &fixture("golden"),
            &[(RoleName::VerifierDeveloper, vec![verifier_answer(&silent); 6])],
            |_| {},
        );
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(matches!(r.state.status(), Status::Failed { stage: Stage::Verifier, kind: FailureKind::FlagCheckFailed, .. }));
        assert_eq!(dev_runs(&r.metadata, "verifier_developer"), 5);
        assert_eq!(s.mock.remaining(RoleName::VerifierDeveloper), 1);
        assert_eq!(s.mock.calls_for(RoleName::VerifierCritic), 0);

        // verifier critic: five reviews, a sixth is never requested
        let s = scripted(
            &fixture("golden"),
            &[
                (RoleName::VerifierDeveloper, vec![verifier_answer(&unconditional_flag()); 6]),
                (RoleName::VerifierCritic, vec![critique(false, "prints the flag unconditionally"); 6]),
            ],
            |_| {},
        );
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(matches!(r.state.status(), Status::Failed { stage: Stage::Verifier, kind: FailureKind::CriticRejected, .. }));
        assert_eq!(dev_runs(&r.metadata, "verifier_developer"), 5);
        assert_eq!(dev_runs(&r.metadata, "verifier_critic"), 5);
        assert_eq!(s.mock.remaining(RoleName::VerifierDeveloper), 1);
        assert_eq!(s.mock.remaining(RoleName::VerifierCritic), 1);
        "60 calls, 1/1/5/5 feedback".to_string()
    });
}

/// Runs the exploit, ignores what happened, then executes `post`.
fn verifier_script(post: &str) -> String {
    format!(
        "import subprocess\nimport sys\n\ndef pre_setup():\n    pass\n\n\
         def run_exploit():\n    subprocess.run([sys.executable, 'exploit.py'], capture_output=True)\n\n\
         def post_setup():\n    {post}\n\npre_setup()\nrun_exploit()\npost_setup()\n"
    )
}

fn unconditional_flag() -> String {
    verifier_script(&format!("print('{FLAG}')"))
}

#[test]
fn criterion_4_budget_and_deadline() {
    criterion(4, "budget and deadline abort before the next call", || {
        // $0.90 per call: five calls cost $4.50, a sixth would reach $5.40
        let overrides: Vec<_> = RoleName::ALL.into_iter().map(|r| (r, with_usage(r, 0, 1000))).collect();
        let s = scripted(&fixture("golden"), &overrides, |cfg| {
            flat_pricing(cfg, 0.9);
            cfg.caps.budget_usd = 5.0;
        });
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(
            matches!(r.state.status(), Status::Aborted { cause: AbortCause::Budget, .. }),
            "{:?}",
            r.state.status()
        );
        assert_eq!(s.mock.call_count(), 5);
        let ledger: f64 = r.metadata.usage.iter().map(|u| u.cost_usd).sum();
        assert!((r.metadata.cost_usd - ledger).abs() < COST_TOLERANCE);
        assert!((r.metadata.cost_usd - 4.5).abs() < COST_TOLERANCE);
        let stored = read_json(&r.run_dir.unwrap().join("metadata.json"));
        assert!((stored["cost_usd"].as_f64().unwrap() - ledger).abs() < COST_TOLERANCE);

        // 1 s deadline, 400 ms per model call
        let overrides: Vec<_> = RoleName::ALL.into_iter().map(|r| (r, with_delay(r, 400))).collect();
        let s = scripted(&fixture("golden"), &overrides, |cfg| cfg.caps.deadline_minutes = 1.0 / 60.0);
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert!(
            matches!(r.state.status(), Status::Aborted { cause: AbortCause::Time, .. }),
            "{:?}",
            r.state.status()
        );
        let ledger: f64 = r.metadata.usage.iter().map(|u| u.cost_usd).sum();
        assert!((r.metadata.cost_usd - ledger).abs() < COST_TOLERANCE);

        // the golden run itself
        let scratch = tempfile::tempdir().unwrap();
        let m = build_pipeline(&offline_config(&fixture("golden"), scratch.path()))
            .unwrap()
            .reproduce(GOLDEN_CVE, 1)
            .metadata;
        let ledger: f64 = m.usage.iter().map(|u| u.cost_usd).sum();
        assert!((m.cost_usd - ledger).abs() < COST_TOLERANCE);
        format!("5 calls, ${:.2}", 4.5)
    });
}

struct AgentHarness {
    _tmp: TempDir,
    mock: Arc<MockProvider>,
    gateway: Gateway,
    tools: ToolRegistry,
    budget: Budget,
    sandbox: SandboxHandle,
}

impl AgentHarness {
    fn on_golden_source() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let src = fixture("golden/repos/andialbrecht/sqlparse/tags/0.4.4");
        let sandbox = sandbox_factory(&tmp).create(Some(&src)).unwrap();
        let mock = Arc::new(MockProvider::new());
        let providers = ProviderRegistry::new().with("mock", mock.clone());
        let gateway = Gateway::new(providers, RoleBindings::uniform("mock", "mock-model", Pricing::default()))
            .with_retry_base(Duration::ZERO);
        Self {
            _tmp: tmp,
            mock,
            gateway,
            tools: ToolRegistry::standard(),
            budget: Budget::new(5.0, Duration::from_secs(600)),
            sandbox,
        }
    }

    fn env(&self) -> AgentEnv<'_> {
        AgentEnv {
            gateway: &self.gateway,
            tools: &self.tools,
            budget: &self.budget,
            sandbox: &self.sandbox,
            review_tokens: DEFAULT_REVIEW_TOKENS,
            tool_call_cap: DEFAULT_MAX_TOOL_CALLS,
        }
    }
}

#[test]
fn criterion_5_permissions_and_integrity() {
    criterion(5, "read-only agents, exploit integrity and critic gating", || {
        let attempts = || {
            vec![
                ScriptedTurn::call(WRITE_FILE, json!({"path": "sqlparse/__init__.py", "content": "x"})),
                ScriptedTurn::call(LINUX_COMMAND, json!({"command": "touch pwned"})),
                ScriptedTurn::call("set_environment_variable", json!({"name": "X", "value": "1"})),
            ]
        };
        let cases = [
            (RoleName::PrereqDeveloper, plan_schema()),
            (RoleName::VerifierDeveloper, verifier_schema()),
        ];
        for (role, schema) in cases {
            let h = AgentHarness::on_golden_source();
            let before = tree_digest(h.sandbox.workdir(), &[]).unwrap();
            let spec = AgentSpec::read_only(role, "Explore.", READ_ONLY_TOOLS, schema);
            // the script then runs dry, which ends the agent
            h.mock.push(role, attempts());
            let run = run_agent(h.env(), &spec, &ContextBlocks::default());
            let denied = run.transcript.turns().filter(|t| t.content.starts_with("ToolNotPermitted")).count();
            assert_eq!(denied, 3, "{role}");
            assert_eq!(run.transcript.tool_calls_made(), 0);
            assert_eq!(tree_digest(h.sandbox.workdir(), &[]).unwrap(), before, "{role} changed the sandbox");
            assert!(h.sandbox.command_logs().is_empty());
        }

        // mutating the exploit fails the flag check even though the flag is printed
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
        let checks = read_json(&r.run_dir.clone().unwrap().join("verifier/checks.json"));
        let first = &checks[0]["outcome"];
        assert_eq!(first["flag_found"], json!(true));
        assert_ne!(first["exploit_digest_before"], first["exploit_digest_after"]);
        assert_eq!(s.mock.calls_for(RoleName::VerifierCritic), 1);

        // an unconditional flag passes the checker and is stopped by the critic
        let critic = golden_turns(RoleName::VerifierCritic);
        let s = scripted(
            &fixture("golden"),
            &[(RoleName::VerifierDeveloper, vec![verifier_answer(&unconditional_flag()), robust_verifier()])],
            |_| {},
        );
        let r = s.pipeline.reproduce(GOLDEN_CVE, 1);
        assert_eq!(*r.state.status(), Status::Reproduced);
        let checks = read_json(&r.run_dir.unwrap().join("verifier/checks.json"));
        assert_eq!(checks[0]["outcome"]["flag_found"], json!(true));
        assert_eq!(checks[0]["outcome"]["ran_ok"], json!(true));
        assert_eq!(checks[1]["verdict"]["accepted"], json!(false));
        assert_eq!(critic[0]["answer"]["accepted"], json!(false));
        "ToolNotPermitted for both read-only agents".to_string()
    });
}

#[test]
fn criterion_6_ingest_correctness() {
    criterion(6, "ingest matches the brute-force oracles", || {
        let strategy = (tag_list(), prop::collection::vec((range_kind(), triple()), 1..3));
        run_property(INGEST_CASES, strategy, |(tags, ranges)| {
            let record = record_with(&ranges.iter().map(|&(k, b)| make_range(k, b)).collect::<Vec<_>>(), Vec::new());
            let names: Vec<String> = tags.iter().map(|(_, s)| s.clone()).collect();
            let got = resolve_vulnerable_version(&record, &names).ok();
            prop_assert_eq!(got, oracle_resolve(&tags, &ranges));
            Ok(())
        });

        run_property(INGEST_CASES, prop::collection::vec(reference_url(), 0..10), |urls| {
            let record = record_with(&[], urls.clone());
            let kept: Vec<String> = collect_advisories(&record, &EchoFetcher).into_iter().map(|d| d.url).collect();
            prop_assert_eq!(kept, oracle_advisory_urls(&urls));
            Ok(())
        });

        let world = fixture("golden");
        let record = FixtureRegistry::new(world.join("records")).fetch(&GOLDEN_CVE.parse().unwrap()).unwrap();
        let tags = FixtureRepoHost::new(world.join("repos"))
            .list_tags(record.repository.as_ref().unwrap())
            .unwrap();
        assert_eq!(resolve_vulnerable_version(&record, &tags).unwrap(), "0.4.4");
        format!("{INGEST_CASES} cases each, golden tag 0.4.4")
    });
}

#[test]
fn criterion_7_batch_semantics() {
    criterion(7, "batch rounds converge and parallelism does not change the report", || {
        let ids: Vec<String> = (1001..=1004).map(|n| format!("CVE-2099-{n}")).collect();
        let run = |parallelism: usize| {
            let scratch = tempfile::tempdir().unwrap();
            let pipeline = build_pipeline(&offline_config(&fixture("batch"), scratch.path())).unwrap();
            let report = batch_run(&pipeline, &ids, &BatchOptions { rounds: 3, parallelism });
            (scratch, pipeline, report)
        };
        let (_s1, pipeline, parallel) = run(4);
        let (_s2, _, serial) = run(1);
        assert_eq!(parallel.comparable(), serial.comparable());

        // the reproduced set only grows, and nothing reproduced is attempted again
        let mut done = BTreeSet::new();
        for round in 1..=3 {
            let attempted: Vec<_> = parallel.attempts.iter().filter(|a| a.round == round).collect();
            assert!(attempted.iter().all(|a| !done.contains(&a.cve_id)), "round {round} reran a reproduced CVE");
            let before = done.len();
            done.extend(attempted.iter().filter(|a| a.status == "reproduced").map(|a| a.cve_id.clone()));
            assert!(done.len() >= before);
        }
        assert_eq!(parallel.convergence(), vec![(1, 2), (2, 1), (3, 0)]);
        assert_eq!(done.len(), parallel.reproduced());

        let sandboxes: BTreeSet<_> = parallel.attempts.iter().map(|a| a.sandbox_id.clone().unwrap()).collect();
        assert_eq!(sandboxes.len(), parallel.attempts.len());

        let again = batch_run(&pipeline, &ids, &BatchOptions { rounds: 1, parallelism: 4 });
        assert_eq!(again.skipped.len(), parallel.reproduced());
        assert!(again.attempts.iter().all(|a| !done.contains(&a.cve_id)));
        format!("convergence {:?}", parallel.convergence())
    });
}
