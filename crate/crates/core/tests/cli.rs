use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BASE: &str = include_str!("fixtures/aosp_base.te");

const PROC_SECURITY: &str = "\
class file { read write append open };
attribute domain;
type init, domain;
type vold, domain;
type proc_security;
neverallow { domain -init } proc_security:file { append write };
allow vold proc_security:file write;
";

const PS: &str = "\
LABEL USER PID PPID NAME
u:r:init:s0 root 1 0 /init
u:r:untrusted_app:s0 u0_a12 1234 321 com.example.app
u:r:untrusted_app:s0 u0_a13 1240 321 com.example.app
u:r:hal:s0 system 400 1 /system/bin/hal
";

const LS: &str = "\
/:
drwxr-xr-x root root u:object_r:rootfs:s0 .
dr-xr-xr-x root root u:object_r:proc:s0 proc
drwx------ root root u:object_r:rootfs:s0 secret

/proc:
-r--r--r-- root root u:object_r:proc:s0 version
-rw-r--r-- root root u:object_r:proc_security:s0 mmap_min_addr

/secret:
-rwxr-xr-x root root u:object_r:tee_exec:s0 tee_loader
";

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, contents: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, contents).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_sepolyzer"))
        .args(args)
        .env_remove("SEPOLYZER_CONFIG")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not one JSON document: {e}\n{}", stdout(o)))
}

fn snapshot(env: &Env) -> PathBuf {
    let ps = env.file("ps.txt", PS);
    let ls = env.file("ls.txt", LS);
    let out = env.path("snap.json");
    let o = run(["ingest", "--ps", p(&ps), "--ls", p(&ls), "-o", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn stats_reports_counts_and_baseline_delta() {
    let env = Env::new();
    let base = env.file("base.te", BASE);
    let subject = env.file(
        "subject.te",
        &format!("{BASE}allow mediaserver default_prop:property_service set;\n"),
    );
    let o = run(["--json", "stats", p(&subject), "--baseline", p(&base)]);
    assert_eq!(o.status.code(), Some(0));
    let doc = json(&o);
    assert_eq!(doc["allow_rule_count"], 20);
    assert_eq!(doc["delta"]["allow_rule_count"], 1);
    assert!(doc["ratios"].is_object());
    assert!(!o.stderr.is_empty(), "human text goes to stderr in JSON mode");

    let empty = env.file("empty.te", "");
    let o = run(["--json", "stats", p(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["type_count"], 0);
}

#[test]
fn diff_examples() {
    let env = Env::new();
    let base = env.file("base.te", BASE);
    let o = run(["diff", p(&base), p(&base)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "no differences\n");

    let subject = env.file(
        "subject.te",
        &format!("{BASE}allow untrusted_app proc_security:file read;\nallow hal proc:dir search;\n"),
    );
    let o = run(["--json", "diff", p(&base), p(&subject)]);
    let doc = json(&o);
    assert_eq!(doc["added_allows"].as_array().unwrap().len(), 2);

    let o = run(["--json", "diff", p(&base), p(&subject), "--type", "untrusted_app"]);
    let added = json(&o)["added_allows"].as_array().unwrap().clone();
    assert_eq!(added.len(), 1);
    assert_eq!(added[0]["text"], "allow untrusted_app proc_security:file read;");

    let o = run(["diff", p(&base), p(&subject), "--type", "no_such_type"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn check_neverallow_examples() {
    let env = Env::new();
    let bad = env.file("bad.te", PROC_SECURITY);
    let o = run(["--json", "check-neverallow", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    let doc = json(&o);
    assert_eq!(doc["violation_count"], 1);
    assert_eq!(doc["violations"][0]["witness"]["source"], "vold");

    let clean = env.file("clean.te", &PROC_SECURITY.replace("allow vold", "allow init"));
    assert_eq!(run(["check-neverallow", p(&clean)]).status.code(), Some(0));

    let extra = env.file("extra.te", "neverallow init proc_security:file write;\n");
    let o = run(["--json", "check-neverallow", p(&clean), "--neverallows", p(&extra)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["violations"][0]["witness"]["source"], "init");
}

#[test]
fn lint_exit_codes_follow_fail_on() {
    let env = Env::new();
    let base = env.file("base.te", BASE);
    assert_eq!(run(["lint", p(&base), "--baseline", p(&base)]).status.code(), Some(0));

    let app = env.file(
        "app.te",
        &format!("{BASE}allow untrusted_app proc_security:file {{ read write }};\n"),
    );
    let o = run(["--json", "lint", p(&app), "--baseline", p(&base)]);
    assert_eq!(o.status.code(), Some(1));
    let doc = json(&o);
    let l4 = doc["findings"]
        .as_array()
        .unwrap()
        .iter()
        .find(|f| f["detector"] == "L4")
        .unwrap();
    assert_eq!(l4["severity"], "error");

    // L1 alone is a warning: passes by default, fails with --fail-on warning.
    let l1 = env.file(
        "l1.te",
        &format!("{BASE}allow mediaserver default_prop:property_service set;\n"),
    );
    assert_eq!(run(["lint", p(&l1), "--baseline", p(&base)]).status.code(), Some(0));
    let o = run(["lint", p(&l1), "--baseline", p(&base), "--fail-on", "warning"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("L1"));
    assert_eq!(run(["lint", p(&l1), "--fail-on", "loud"]).status.code(), Some(3));
}

#[test]
fn lint_config_comes_from_environment() {
    let env = Env::new();
    let base = env.file("base.te", BASE);
    let subject = env.file("s.te", &format!("{BASE}allow hal security_file:file read;\n"));
    let cfg = env.file(
        "lint.conf",
        "# make missing open fatal\nmissing_open_severity = error\n",
    );
    let with_env = |config: Option<&Path>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_sepolyzer"));
        cmd.args(["--json", "lint", p(&subject), "--baseline", p(&base)]);
        match config {
            Some(c) => cmd.env("SEPOLYZER_CONFIG", c),
            None => cmd.env_remove("SEPOLYZER_CONFIG"),
        };
        cmd.output().unwrap()
    };
    let plain = with_env(None);
    let configured = with_env(Some(&cfg));
    let l6 = |o: &Output| {
        json(o)["findings"]
            .as_array()
            .unwrap()
            .iter()
            .find(|f| f["detector"] == "L6")
            .map(|f| f["severity"].clone())
    };
    assert_eq!(l6(&plain), Some("info".into()));
    assert_eq!(l6(&configured), Some("error".into()));
    assert_eq!(configured.status.code(), Some(1));

    let broken = env.file("broken.conf", "crowded_ratio_threshold = 0.5\n");
    assert_eq!(with_env(Some(&broken)).status.code(), Some(2));
}

#[test]
fn query_examples() {
    let env = Env::new();
    let snap = snapshot(&env);
    let policy = env.file(
        "p.te",
        &format!(
            "{BASE}allow untrusted_app proc:file {{ read open }};\n\
             allow untrusted_app proc_security:file {{ read getattr }};\n"
        ),
    );
    let o = run([
        "--json",
        "query",
        "--policy",
        p(&policy),
        "--snapshot",
        p(&snap),
        "--pid",
        "1234",
        "--access",
        "read",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&o);
    assert_eq!(doc["results"][0]["files"], serde_json::json!(["/", "/proc/version"]));

    let o = run([
        "--json",
        "query",
        "--policy",
        p(&policy),
        "--snapshot",
        p(&snap),
        "--process",
        "com.example.app",
        "--access",
        "read",
    ]);
    let pids: Vec<u64> = json(&o)["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["pid"].as_u64().unwrap())
        .collect();
    assert_eq!(pids, [1234, 1240]);

    let o = run([
        "-v",
        "query",
        "--policy",
        p(&policy),
        "--snapshot",
        p(&snap),
        "--file",
        "/proc/version",
        "--access",
        "read",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mac-file"));

    let o = run([
        "query",
        "--policy",
        p(&policy),
        "--snapshot",
        p(&snap),
        "--file",
        "/nonexistent",
        "--access",
        "read",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = run([
        "query",
        "--policy",
        p(&policy),
        "--snapshot",
        p(&snap),
        "--pid",
        "999",
        "--access",
        "read",
    ]);
    assert_eq!(o.status.code(), Some(3));
    let o = run([
        "query",
        "--policy",
        p(&policy),
        "--snapshot",
        p(&snap),
        "--access",
        "read",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn ingest_is_idempotent_and_reports_lines() {
    let env = Env::new();
    let first = std::fs::read(snapshot(&env)).unwrap();
    let second = std::fs::read(snapshot(&env)).unwrap();
    assert_eq!(first, second);

    let ps = env.file("ps.txt", PS);
    let empty_ls = env.file("empty.txt", "");
    let o = run(["ingest", "--ps", p(&ps), "--ls", p(&empty_ls)]);
    assert_eq!(o.status.code(), Some(0));
    let doc = json(&o);
    assert_eq!(doc["processes"].as_array().unwrap().len(), 4);
    assert_eq!(doc["files"], serde_json::json!([]));

    let bad_ps = env.file(
        "bad_ps.txt",
        "LABEL USER PID PPID NAME\nu:r:init:s0 root 1 0 /init\nnot a line\n",
    );
    let o = run(["ingest", "--ps", p(&bad_ps), "--ls", p(&empty_ls)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        String::from_utf8_lossy(&o.stderr).contains(":3:"),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn graph_is_deterministic() {
    let env = Env::new();
    let base = env.file("base.te", BASE);
    let a = env.path("a.dot");
    let b = env.path("b.dot");
    assert_eq!(run(["graph", p(&base), "-o", p(&a)]).status.code(), Some(0));
    assert_eq!(run(["graph", p(&base), "-o", p(&b)]).status.code(), Some(0));
    let dot = std::fs::read_to_string(&a).unwrap();
    assert_eq!(dot, std::fs::read_to_string(&b).unwrap());
    assert!(dot.contains("\"untrusted_app\" -> \"appdomain\""), "{dot}");

    let one = env.file("one.te", "attribute domain;\ntype init, domain;\n");
    let o = run(["graph", p(&one)]);
    assert_eq!(stdout(&o).matches("->").count(), 1);
}

#[test]
fn malformed_inputs_map_to_exit_codes() {
    let env = Env::new();
    let good = env.file("good.te", BASE);
    let broken = env.file("broken.te", "type a;\nallow a b:file;\ntype c\n");
    let bad_snapshot = env.file("snap.json", "{\"version\": 7}");
    let bad_ls = env.file("ls.txt", "/x:\nthis is not an ls line\n");
    let ps = env.file("ps.txt", PS);
    let missing = env.path("missing.te");
    let undeclared = env.file("undeclared.te", "allow a b:file read;\n");

    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec!["stats", p(&missing)], 2),
        (vec!["stats", p(&broken)], 2),
        (vec!["diff", p(&good), p(&broken)], 2),
        (vec!["check-neverallow", p(&broken)], 2),
        (vec!["lint", p(&good), "--baseline", p(&missing)], 2),
        (vec!["lint", p(&good), "--snapshot", p(&bad_snapshot)], 2),
        (vec!["graph", p(&broken)], 2),
        (vec!["ingest", "--ps", p(&ps), "--ls", p(&bad_ls)], 2),
        (
            vec![
                "query",
                "--policy",
                p(&good),
                "--snapshot",
                p(&bad_snapshot),
                "--pid",
                "1",
                "--access",
                "read",
            ],
            2,
        ),
        (vec!["frobnicate"], 3),
        (vec!["stats"], 3),
        (
            vec![
                "query",
                "--policy",
                p(&good),
                "--snapshot",
                p(&bad_snapshot),
                "--pid",
                "1",
                "--access",
                "fly",
            ],
            3,
        ),
        (vec!["--strict", "stats", p(&undeclared)], 2),
    ];
    for (args, code) in cases {
        let o = run(&args);
        assert_eq!(
            o.status.code(),
            Some(code),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        let mut with_json = vec!["--json"];
        with_json.extend(&args);
        let o = run(&with_json);
        assert_eq!(o.status.code(), Some(code));
        assert_eq!(json(&o)["error"]["code"], code, "{args:?}");
    }
    assert_eq!(run(["--help"]).status.code(), Some(0));
}

#[test]
fn json_mode_emits_one_document_per_command() {
    let env = Env::new();
    let base = env.file("base.te", BASE);
    let snap = snapshot(&env);
    let commands: Vec<Vec<&str>> = vec![
        vec!["stats", p(&base)],
        vec!["diff", p(&base), p(&base)],
        vec!["check-neverallow", p(&base)],
        vec!["lint", p(&base), "--snapshot", p(&snap)],
        vec![
            "query",
            "--policy",
            p(&base),
            "--snapshot",
            p(&snap),
            "--pid",
            "1",
            "--access",
            "execute",
        ],
    ];
    for args in commands {
        let mut with_json = vec!["--json"];
        with_json.extend(&args);
        let a = run(&with_json);
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        json(&a);
        assert_eq!(a.stdout, run(&with_json).stdout, "{args:?} is not deterministic");
    }
}
