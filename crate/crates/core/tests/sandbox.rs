use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use cveforge_core::digest::file_digest;
use cveforge_core::sandbox::{
    LocalBackend, NetworkPolicy, SandboxError, SandboxFactory, SandboxHandle, SandboxSettings,
    SnapshotRef, ToolRegistry, LINUX_COMMAND, MAX_PAYLOAD_LINES, MAX_READ_LINES,
};
use proptest::prelude::*;
use serde_json::{json, Map, Value};
use tempfile::TempDir;

fn factory(tmp: &TempDir) -> SandboxFactory {
    let mut s = SandboxSettings::new(tmp.path().join("sandboxes"));
    s.foreground_timeout = Duration::from_secs(30);
    s.background_sample = Duration::from_millis(300);
    SandboxFactory::new(Arc::new(LocalBackend), s)
}

fn sandbox() -> (TempDir, SandboxHandle) {
    let tmp = tempfile::tempdir().unwrap();
    let sb = factory(&tmp).create(None).unwrap();
    (tmp, sb)
}

fn numbered(n: usize) -> String {
    (1..=n).map(|i| format!("line {i}\n")).collect()
}

fn body_lines(payload: &str) -> Vec<&str> {
    payload.lines().skip(1).collect()
}

#[test]
fn get_file_pagination() {
    let (_t, sb) = sandbox();
    sb.write_to_file("big.txt", &numbered(500)).unwrap();
    let r = sb.get_file("big.txt", 0, 500).unwrap();
    assert_eq!(body_lines(&r.payload).len(), 300);
    assert!(r.truncated);
    assert!(r.payload.starts_with("[file big.txt | lines 1-300 of 500 | more below: use offset=300]"));

    let r = sb.get_file("big.txt", 300, 300).unwrap();
    let lines = body_lines(&r.payload);
    assert_eq!(lines.len(), 200);
    assert_eq!(lines[0], "line 301");
    assert_eq!(lines[199], "line 500");
    assert!(!r.truncated);

    sb.write_to_file("empty.txt", "").unwrap();
    let r = sb.get_file("empty.txt", 0, 300).unwrap();
    assert_eq!(body_lines(&r.payload).len(), 0);
    assert!(!r.truncated);
}

#[test]
fn get_file_errors() {
    let (_t, sb) = sandbox();
    assert!(matches!(sb.get_file("nope", 0, 10), Err(SandboxError::FileNotFound(_))));
    std::fs::write(sb.workdir().join("bin.dat"), [0u8, 1, 2, 255]).unwrap();
    let err = sb.get_file("bin.dat", 0, 10).unwrap_err();
    assert_eq!(err, SandboxError::NotAText { path: "bin.dat".into(), bytes: 4 });
    assert!(matches!(
        sb.get_file("../../etc/passwd", 0, 10),
        Err(SandboxError::PathEscapesSandbox(_))
    ));
}

#[test]
fn write_to_file_contract() {
    let (_t, sb) = sandbox();
    let script = "import sqlparse\nprint(sqlparse.__version__)\n";
    sb.write_to_file("exploit.py", script).unwrap();
    assert_eq!(
        file_digest(&sb.workdir().join("exploit.py")).unwrap(),
        cveforge_core::digest::sha256_hex(script)
    );
    sb.write_to_file("a/b/c.txt", "x").unwrap();
    assert_eq!(std::fs::read_to_string(sb.workdir().join("a/b/c.txt")).unwrap(), "x");
    assert!(matches!(
        sb.write_to_file("../../etc/passwd", "x"),
        Err(SandboxError::PathEscapesSandbox(_))
    ));
}

#[test]
fn ls_matches_directory_walk() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("src");
    for f in ["README.md", "setup.py", "sqlparse/__init__.py", "sqlparse/sql.py", ".hidden"] {
        let p = src.join(f);
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(p, "x").unwrap();
    }
    std::fs::create_dir_all(src.join("empty")).unwrap();
    let sb = factory(&tmp).create(Some(&src)).unwrap();
    let r = sb.execute_ls(".").unwrap();
    assert!(r.payload.lines().any(|l| l == "sqlparse/"));

    // Oracle: independent walk of the source tree.
    let mut expected: Vec<String> = walkdir::WalkDir::new(&src)
        .min_depth(1)
        .max_depth(1)
        .into_iter()
        .map(|e| {
            let e = e.unwrap();
            let n = e.file_name().to_string_lossy().to_string();
            if e.file_type().is_dir() { n + "/" } else { n }
        })
        .collect();
    expected.sort();
    assert_eq!(r.payload, expected.join("\n"));
    assert_eq!(sb.execute_ls("empty").unwrap().payload, "");
    assert!(matches!(sb.execute_ls("missing"), Err(SandboxError::DirNotFound(_))));
}

#[test]
fn command_payload_is_last_hundred_lines() {
    let (_t, sb) = sandbox();
    let r = sb.execute("seq 1 250", false).unwrap();
    let lines: Vec<&str> = r.payload.lines().collect();
    assert_eq!(lines.len(), MAX_PAYLOAD_LINES);
    assert_eq!(lines[0], "151");
    assert_eq!(lines[99], "250");
    assert!(r.truncated);
    let log = r.command.clone().unwrap();
    assert_eq!(log.exit_code, Some(0));
    assert_eq!(log.stdout_path, ".cveforge/logs/0001_out.log");
    assert_eq!(log.stderr_path, ".cveforge/logs/0001_err.log");

    // Full output recoverable through get_file on the log path.
    let full = sb.get_file(r.log_path.as_deref().unwrap(), 0, 300).unwrap();
    let full = body_lines(&full.payload);
    assert_eq!(full.len(), 250);
    assert_eq!(full[0], "1");
}

#[test]
fn stdout_and_stderr_are_separate() {
    let (_t, sb) = sandbox();
    let r = sb.execute("echo out; echo err >&2; exit 3", false).unwrap();
    let log = r.command.unwrap();
    assert_eq!(log.exit_code, Some(3));
    assert!(!r.ok);
    let read = |p: &str| std::fs::read_to_string(sb.workdir().join(p)).unwrap();
    assert_eq!(read(&log.stdout_path), "out\n");
    assert_eq!(read(&log.stderr_path), "err\n");
    assert_eq!(r.payload, "out\nerr");
}

#[test]
fn foreground_timeout_kills_process_group() {
    let tmp = tempfile::tempdir().unwrap();
    let mut f = factory(&tmp);
    let mut settings = f.settings().clone();
    settings.foreground_timeout = Duration::from_secs(2);
    f = SandboxFactory::new(Arc::new(LocalBackend), settings);
    let sb = f.create(None).unwrap();
    // A child of the shell writes its pid, then sleeps.
    let started = Instant::now();
    let err = sb.execute("echo begin; sh -c 'echo $$ > child.pid; exec sleep 999' ; echo never", false).unwrap_err();
    let elapsed = started.elapsed();
    assert!(elapsed >= Duration::from_secs(2) && elapsed < Duration::from_secs(10), "{elapsed:?}");
    let SandboxError::Timeout { secs, log, tail } = err else { panic!("expected timeout") };
    assert_eq!(secs, 2);
    assert_eq!(log.exit_code, None);
    assert!(sb.workdir().join(&log.stdout_path).exists());
    assert!(sb.workdir().join(&log.stderr_path).exists());
    assert_eq!(tail, "begin");

    let pid: i32 = std::fs::read_to_string(sb.workdir().join("child.pid")).unwrap().trim().parse().unwrap();
    std::thread::sleep(Duration::from_millis(100));
    // SAFETY: signal 0 only probes for existence.
    let alive = unsafe { libc::kill(pid, 0) } == 0;
    let zombie = std::fs::read_to_string(format!("/proc/{pid}/stat"))
        .map(|s| s.split_whitespace().nth(2) == Some("Z"))
        .unwrap_or(true);
    assert!(!alive || zombie, "orphan process {pid} survived");
}

#[test]
fn background_commands_report_running_state() {
    let (_t, sb) = sandbox();
    let r = sb.execute("echo serving; sleep 30", true).unwrap();
    assert!(r.background);
    assert_eq!(r.still_running, Some(true));
    assert_eq!(r.payload, "serving");
    assert_eq!(r.command.as_ref().unwrap().exit_code, None);
    assert_eq!(sb.background_count(), 1);

    let r = sb.execute("echo quick", true).unwrap();
    assert_eq!(r.still_running, Some(false));
    assert_eq!(r.command.unwrap().exit_code, Some(0));

    // Background processes survive later foreground commands.
    sb.execute("true", false).unwrap();
    assert_eq!(sb.background_count(), 1);
    sb.teardown();
    assert_eq!(sb.background_count(), 0);
}

#[test]
fn env_store_injection() {
    let (_t, sb) = sandbox();
    sb.set_env("FOO", "bar").unwrap();
    assert_eq!(sb.execute("printenv FOO", false).unwrap().payload, "bar");
    sb.set_env("FOO", "a").unwrap();
    sb.set_env("FOO", "b").unwrap();
    assert_eq!(sb.execute("printenv FOO", false).unwrap().payload, "b");
    sb.clear_env();
    assert_eq!(sb.execute("printenv FOO", false).unwrap().payload, "");
    assert!(matches!(sb.set_env("1BAD", "x"), Err(SandboxError::InvalidName(_))));
    // `export` in one command does not leak into the next.
    sb.execute("export LEAK=1", false).unwrap();
    assert_eq!(sb.execute("printenv LEAK", false).unwrap().payload, "");
}

#[test]
fn restricted_policy_blocks_proxy_aware_clients() {
    let (_t, sb) = sandbox();
    let r = sb
        .execute_with("printenv https_proxy", false, NetworkPolicy::Restricted, Duration::from_secs(5))
        .unwrap();
    assert_eq!(r.payload, "http://127.0.0.1:9");
    assert_eq!(sb.execute("printenv https_proxy || true", false).unwrap().payload, "");
}

#[test]
fn snapshot_and_restore() {
    let tmp = tempfile::tempdir().unwrap();
    let f = factory(&tmp);
    let sb = f.create(None).unwrap();
    sb.write_to_file("f.txt", "original").unwrap();
    sb.set_env("KEEP", "1").unwrap();
    let digest = file_digest(&sb.workdir().join("f.txt")).unwrap();
    let snap = sb.snapshot().unwrap();
    std::fs::remove_file(sb.workdir().join("f.txt")).unwrap();

    let restored = f.restore(&snap).unwrap();
    assert_ne!(restored.id(), sb.id());
    assert_eq!(file_digest(&restored.workdir().join("f.txt")).unwrap(), digest);
    assert_eq!(restored.execute("printenv KEEP", false).unwrap().payload, "1");

    assert!(matches!(
        f.restore(&SnapshotRef("snap-unknown".into())),
        Err(SandboxError::SnapshotFailed(_))
    ));
}

#[test]
fn tools_fold_errors_into_results() {
    let (_t, sb) = sandbox();
    let reg = ToolRegistry::standard();
    let args = |v: Value| -> Map<String, Value> { v.as_object().unwrap().clone() };
    let r = reg.get("get_file").unwrap().invoke(&sb, &args(json!({"path": "missing.txt"})));
    assert!(!r.ok);
    assert!(r.render().starts_with("ERROR: file not found"));
    let r = reg
        .get(LINUX_COMMAND)
        .unwrap()
        .invoke(&sb, &args(json!({"command": "echo hi"})));
    assert!(r.ok);
    assert!(r.render().contains("exit code: 0"));
    assert!(r.render().ends_with("--- output ---\nhi"));
    let r = reg
        .get("set_environment_variable")
        .unwrap()
        .invoke(&sb, &args(json!({"clear": true})));
    assert!(r.ok);
}

#[test]
fn logs_are_totally_ordered() {
    let (_t, sb) = sandbox();
    for i in 0..5 {
        sb.execute(&format!("echo {i}"), false).unwrap();
    }
    let seqs: Vec<u32> = sb.command_logs().iter().map(|l| l.seq).collect();
    assert_eq!(seqs, [1, 2, 3, 4, 5]);
}

fn shared() -> &'static (TempDir, SandboxHandle) {
    static SB: std::sync::OnceLock<(TempDir, SandboxHandle)> = std::sync::OnceLock::new();
    SB.get_or_init(sandbox)
}

fn within(root: &Path, rel: &str) -> bool {
    let canon_root = root.canonicalize().unwrap();
    let mut cur = root.join(rel);
    while !cur.exists() {
        cur = cur.parent().unwrap().to_path_buf();
    }
    cur.canonicalize().unwrap().starts_with(canon_root)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pagination_never_exceeds_limit(total in 0usize..800, offset in 0usize..900, count in 0usize..1000) {
        let (_t, sb) = shared();
        let name = format!("p_{total}.txt");
        if !sb.workdir().join(&name).exists() {
            sb.write_to_file(&name, &numbered(total)).unwrap();
        }
        let r = sb.get_file(&name, offset, count).unwrap();
        let got = body_lines(&r.payload);
        let expect = count.min(MAX_READ_LINES).min(total.saturating_sub(offset));
        prop_assert!(got.len() <= MAX_READ_LINES);
        prop_assert_eq!(got.len(), expect);
        prop_assert_eq!(r.truncated, offset.min(total) + expect < total);
        if let Some(first) = got.first() {
            prop_assert_eq!(first.to_string(), format!("line {}", offset + 1));
        }
    }

    #[test]
    fn command_payload_never_exceeds_limit(out in 0usize..400, err in 0usize..200) {
        let (_t, sb) = shared();
        let r = sb.execute(&format!("seq 1 {out}; seq 1 {err} >&2"), false).unwrap();
        let n = if r.payload.is_empty() { 0 } else { r.payload.lines().count() };
        prop_assert!(n <= MAX_PAYLOAD_LINES);
        prop_assert_eq!(n, (out + err).min(MAX_PAYLOAD_LINES));
        prop_assert_eq!(r.truncated, out + err > MAX_PAYLOAD_LINES);
    }

    #[test]
    fn env_injection_matches_store(
        vars in proptest::collection::btree_map("[A-Z][A-Z0-9_]{0,8}", "[a-zA-Z0-9 ._:/-]{0,20}", 0..6)
    ) {
        let (_t, sb) = shared();
        sb.clear_env();
        let names: Vec<String> = vars.keys().map(|k| format!("PT_{k}")).collect();
        for (name, v) in names.iter().zip(vars.values()) {
            sb.set_env(name, v).unwrap();
        }
        let store = sb.env();
        prop_assert_eq!(store.len(), vars.len());
        // Oracle: the environment the child sees, restricted to the test prefix.
        let r = sb.execute("env | grep '^PT_' | sort || true", false).unwrap();
        let mut expected: Vec<String> = names.iter().zip(vars.values()).map(|(k, v)| format!("{k}={v}")).collect();
        expected.sort();
        let seen: Vec<String> = r.payload.lines().map(str::to_string).collect();
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn resolved_paths_stay_inside(parts in proptest::collection::vec(prop_oneof![
        Just("..".to_string()), Just(".".to_string()), "[a-z]{1,4}".prop_map(|s| s)
    ], 1..6), absolute in any::<bool>()) {
        let (_t, sb) = shared();
        let mut rel = parts.join("/");
        if absolute { rel = format!("/{rel}"); }
        match sb.resolve(&rel) {
            Ok(p) => {
                let inner = p.strip_prefix(sb.workdir()).unwrap();
                prop_assert!(within(sb.workdir(), &inner.to_string_lossy()));
            }
            Err(e) => prop_assert!(matches!(e, SandboxError::PathEscapesSandbox(_))),
        }
    }
}
