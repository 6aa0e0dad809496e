//! Command-line front end. `run` is the whole program minus process exit,
//! so it can be driven from tests.
//!
//! Exit codes: 0 clean, 1 findings or violations, 2 unreadable or invalid
//! input, 3 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::assertions::{all_witnesses, check_neverallows};
use crate::device::{self, AccessChecker, AccessKind, ProcessEntry, Snapshot};
use crate::diff::{diff_policies, DiffError, PolicyDiff};
use crate::graph::export_attribute_graph;
use crate::lint::{run_lint, Detector, LintConfig, Severity};
use crate::model::{AvRule, Policy};
use crate::parser::{parse_policy_with, ParseOptions};
use crate::stats::{complexity_ratios, compute_stats, expanded_allow_count, stats_delta};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FINDINGS: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sepolyzer", version, about = "Analyze SEAndroid type enforcement policies")]
struct Cli {
    /// Emit one JSON document on stdout; human text goes to stderr.
    #[arg(long, global = true)]
    json: bool,
    /// More detail: all witnesses, access traces, unknown identifiers.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Reject undeclared identifiers instead of journaling them.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Size and complexity metrics, optionally against a baseline.
    Stats {
        policy: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
    },
    /// Rules and declarations added or removed relative to a baseline.
    Diff {
        baseline: PathBuf,
        subject: PathBuf,
        /// Only show entries touching this type.
        #[arg(long = "type", value_name = "TYPE")]
        type_filter: Option<String>,
    },
    /// Allow rules that break neverallow assertions.
    CheckNeverallow {
        policy: PathBuf,
        /// Extra neverallow statements to check.
        #[arg(long)]
        neverallows: Option<PathBuf>,
    },
    /// Heuristic misconfiguration checks.
    Lint(LintArgs),
    /// Which files a process can access, or which processes can access a file.
    Query(QueryArgs),
    /// Build a snapshot from recorded `ps -Z` and `ls -RlZ` output.
    Ingest {
        #[arg(long)]
        ps: PathBuf,
        #[arg(long)]
        ls: PathBuf,
        /// `USER GROUP...` lines for DAC group checks.
        #[arg(long)]
        groups: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Type/attribute membership graph in DOT.
    Graph {
        policy: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct LintArgs {
    policy: PathBuf,
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[arg(long)]
    snapshot: Option<PathBuf>,
    #[arg(long, env = "SEPOLYZER_CONFIG")]
    config: Option<PathBuf>,
    /// Lowest severity that makes the run fail.
    #[arg(long, default_value = "error", value_parser = parse_severity)]
    fail_on: Severity,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("selector").required(true).args(["process", "pid", "file"])))]
struct QueryArgs {
    #[arg(long)]
    policy: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    /// Process name (every match is reported).
    #[arg(long)]
    process: Option<String>,
    #[arg(long)]
    pid: Option<u32>,
    #[arg(long)]
    file: Option<String>,
    #[arg(long, value_parser = parse_access)]
    access: AccessKind,
}

fn parse_severity(s: &str) -> Result<Severity, String> {
    s.parse()
}

fn parse_access(s: &str) -> Result<AccessKind, String> {
    s.parse()
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
    details: Vec<String>,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
            details: Vec::new(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
            details: Vec::new(),
        }
    }
}

/// Output sinks. In JSON mode human-readable text goes to `err`.
struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    json: bool,
    verbose: bool,
}

impl Io<'_> {
    fn text(&mut self, s: &str) {
        let sink = if self.json { &mut *self.err } else { &mut *self.out };
        let _ = sink.write_all(s.as_bytes());
    }

    fn note(&mut self, s: &str) {
        let _ = writeln!(self.err, "{s}");
    }

    fn emit(&mut self, doc: &Value) {
        let _ = writeln!(self.out, "{}", serde_json::to_string_pretty(doc).expect("json"));
    }
}

pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return EXIT_CLEAN;
            }
            let rendered = e.render().to_string();
            let _ = write!(err, "{rendered}");
            if args.iter().any(|a| a == "--json") {
                let message = rendered
                    .lines()
                    .next()
                    .unwrap_or_default()
                    .trim_start_matches("error: ");
                let doc = json!({"error": {"code": EXIT_USAGE, "message": message, "details": []}});
                let _ = writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json"));
            }
            return EXIT_USAGE;
        }
    };
    let mut io = Io {
        out,
        err,
        json: cli.json,
        verbose: cli.verbose,
    };
    let result = match cli.command {
        Command::Stats { policy, baseline } => cmd_stats(&mut io, cli.strict, &policy, baseline.as_deref()),
        Command::Diff {
            baseline,
            subject,
            type_filter,
        } => cmd_diff(&mut io, cli.strict, &baseline, &subject, type_filter.as_deref()),
        Command::CheckNeverallow { policy, neverallows } => {
            cmd_check_neverallow(&mut io, cli.strict, &policy, neverallows.as_deref())
        }
        Command::Lint(args) => cmd_lint(&mut io, cli.strict, &args),
        Command::Query(args) => cmd_query(&mut io, cli.strict, &args),
        Command::Ingest { ps, ls, groups, output } => {
            cmd_ingest(&mut io, &ps, &ls, groups.as_deref(), output.as_deref())
        }
        Command::Graph { policy, output } => cmd_graph(&mut io, cli.strict, &policy, output.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            io.note(&format!("error: {}", f.message));
            for d in &f.details {
                io.note(&format!("  {d}"));
            }
            if io.json {
                io.emit(&json!({"error": {"code": f.code, "message": f.message, "details": f.details}}));
            }
            f.code
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))
}

fn load_policy(io: &mut Io<'_>, path: &Path, strict: bool) -> Result<Policy, Failure> {
    let text = read(path)?;
    let name = path.display().to_string();
    let opts = ParseOptions {
        strict,
        file: Some(Arc::from(name.as_str())),
    };
    let policy = parse_policy_with(&text, &opts).map_err(|errors| Failure {
        code: EXIT_INPUT,
        message: format!("{name}: {} parse error(s)", errors.len()),
        details: errors
            .iter()
            .map(|e| format!("{name}:{e}\n      {}", e.snippet))
            .collect(),
    })?;
    let journal = policy.journal();
    if !journal.is_empty() {
        io.note(&format!(
            "warning: {name}: {} undeclared identifier(s) accepted",
            journal.len()
        ));
        if io.verbose {
            for u in journal {
                let class = u.class.as_ref().map(|c| format!(" in class {c}")).unwrap_or_default();
                io.note(&format!("  {}: {:?} {}{class}", u.origin, u.kind, u.name));
            }
        }
    }
    Ok(policy)
}

fn load_snapshot(path: &Path) -> Result<Snapshot, Failure> {
    Snapshot::from_json(&read(path)?).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn rule_json(rule: &AvRule) -> Value {
    json!({"origin": rule.origin.to_string(), "text": rule.to_string()})
}

fn cmd_stats(io: &mut Io<'_>, strict: bool, path: &Path, baseline: Option<&Path>) -> Result<i32, Failure> {
    let policy = load_policy(io, path, strict)?;
    let base = baseline.map(|b| load_policy(io, b, strict)).transpose()?;
    let stats = compute_stats(&policy);
    let ratios = complexity_ratios(&stats);
    let expanded = expanded_allow_count(&policy);

    let mut text = String::new();
    for (label, value) in stats.rows() {
        writeln!(text, "{label:<22}{value}").unwrap();
    }
    writeln!(text, "{:<22}{expanded}", "expanded allows").unwrap();
    writeln!(text, "{ratios}").unwrap();

    let mut doc = serde_json::to_value(stats).expect("json");
    doc["expanded_allow_count"] = json!(expanded);
    doc["ratios"] = serde_json::to_value(ratios).expect("json");

    if let Some(base) = &base {
        let bstats = compute_stats(base);
        let delta = stats_delta(&bstats, &stats);
        writeln!(text, "\nagainst baseline:").unwrap();
        for ((label, b), (_, d)) in bstats.rows().into_iter().zip(delta.rows()) {
            writeln!(text, "{label:<22}{b:>8} -> {:<8} ({d:+})", b as i64 + d).unwrap();
        }
        writeln!(
            text,
            "baseline {}",
            complexity_ratios(&bstats).to_string().replace('\n', "\nbaseline ")
        )
        .unwrap();
        doc["baseline"] = serde_json::to_value(bstats).expect("json");
        doc["baseline_ratios"] = serde_json::to_value(complexity_ratios(&bstats)).expect("json");
        doc["delta"] = serde_json::to_value(delta).expect("json");
    }
    io.text(&text);
    if io.json {
        io.emit(&doc);
    }
    Ok(EXIT_CLEAN)
}

fn diff_text(d: &PolicyDiff) -> String {
    if d.is_empty() {
        return "no differences\n".into();
    }
    let mut text = String::new();
    let mut section = |title: &str, items: Vec<String>| {
        if !items.is_empty() {
            writeln!(text, "{title} ({}):", items.len()).unwrap();
            for i in items {
                writeln!(text, "  {i}").unwrap();
            }
        }
    };
    let strs = |v: &[AvRule]| v.iter().map(|r| format!("{r}    # {}", r.origin)).collect::<Vec<_>>();
    section("added types", d.added_types.iter().cloned().collect());
    section("removed types", d.removed_types.iter().cloned().collect());
    section("added attributes", d.added_attributes.iter().cloned().collect());
    section("removed attributes", d.removed_attributes.iter().cloned().collect());
    section("added allow rules", strs(&d.added_allows));
    section("removed allow rules", strs(&d.removed_allows));
    section("added neverallow rules", strs(&d.added_neverallows));
    section("removed neverallow rules", strs(&d.removed_neverallows));
    section(
        "added type transitions",
        d.added_transitions.iter().map(|t| t.to_string()).collect(),
    );
    section(
        "removed type transitions",
        d.removed_transitions.iter().map(|t| t.to_string()).collect(),
    );
    section(
        "added genfs contexts",
        d.added_genfs.iter().map(|g| g.to_string()).collect(),
    );
    section(
        "removed genfs contexts",
        d.removed_genfs.iter().map(|g| g.to_string()).collect(),
    );
    text
}

fn diff_json(d: &PolicyDiff) -> Value {
    let rules = |v: &[AvRule]| v.iter().map(rule_json).collect::<Vec<_>>();
    let texts = |v: Vec<String>| json!(v);
    json!({
        "identical": d.is_empty(),
        "added_types": d.added_types,
        "removed_types": d.removed_types,
        "added_attributes": d.added_attributes,
        "removed_attributes": d.removed_attributes,
        "added_allows": rules(&d.added_allows),
        "removed_allows": rules(&d.removed_allows),
        "added_neverallows": rules(&d.added_neverallows),
        "removed_neverallows": rules(&d.removed_neverallows),
        "added_transitions": texts(d.added_transitions.iter().map(|t| t.to_string()).collect()),
        "removed_transitions": texts(d.removed_transitions.iter().map(|t| t.to_string()).collect()),
        "added_genfs": texts(d.added_genfs.iter().map(|g| g.to_string()).collect()),
        "removed_genfs": texts(d.removed_genfs.iter().map(|g| g.to_string()).collect()),
    })
}

fn cmd_diff(
    io: &mut Io<'_>,
    strict: bool,
    baseline: &Path,
    subject: &Path,
    filter: Option<&str>,
) -> Result<i32, Failure> {
    let b = load_policy(io, baseline, strict)?;
    let s = load_policy(io, subject, strict)?;
    let d = diff_policies(&b, &s, filter).map_err(|e| match e {
        DiffError::FilterUnknownType(_) => Failure::usage(e.to_string()),
    })?;
    io.text(&diff_text(&d));
    if io.json {
        io.emit(&diff_json(&d));
    }
    Ok(EXIT_CLEAN)
}

fn cmd_check_neverallow(io: &mut Io<'_>, strict: bool, path: &Path, extra: Option<&Path>) -> Result<i32, Failure> {
    let policy = load_policy(io, path, strict)?;
    // Extra assertions refer to the main policy's types, so they are parsed
    // leniently on their own and resolved against the main policy.
    let extra_rules = match extra {
        Some(p) => load_policy(
            &mut Io {
                verbose: false,
                ..reborrow(io)
            },
            p,
            false,
        )?
        .neverallows()
        .to_vec(),
        None => Vec::new(),
    };
    let violations = check_neverallows(&policy, &extra_rules).map_err(|e| Failure::input(e.to_string()))?;

    let mut text = String::new();
    let mut docs = Vec::new();
    for v in &violations {
        writeln!(text, "violation: {}\n    {}: {}", v.neverallow, v.allow.origin, v.allow).unwrap();
        writeln!(
            text,
            "    witness: {} {}:{} {}",
            v.witness_source, v.witness_target, v.witness_class, v.witness_perms
        )
        .unwrap();
        let mut doc = json!({
            "neverallow": rule_json(&v.neverallow),
            "allow": rule_json(&v.allow),
            "witness": {
                "source": v.witness_source,
                "target": v.witness_target,
                "class": v.witness_class,
                "perms": v.witness_perms,
            },
        });
        if io.verbose {
            let all = all_witnesses(&policy, &v.neverallow, &v.allow).map_err(|e| Failure::input(e.to_string()))?;
            for (s, t) in &all {
                writeln!(text, "      pair: {s} {t}").unwrap();
            }
            doc["pairs"] = json!(all);
        }
        docs.push(doc);
    }
    writeln!(
        text,
        "{} violation(s) of {} neverallow rule(s)",
        violations.len(),
        policy.neverallows().len() + extra_rules.len()
    )
    .unwrap();
    io.text(&text);
    if io.json {
        io.emit(&json!({"violation_count": violations.len(), "violations": docs}));
    }
    Ok(if violations.is_empty() {
        EXIT_CLEAN
    } else {
        EXIT_FINDINGS
    })
}

/// Same sinks, shorter borrow.
fn reborrow<'b>(io: &'b mut Io<'_>) -> Io<'b> {
    Io {
        out: &mut *io.out,
        err: &mut *io.err,
        json: io.json,
        verbose: io.verbose,
    }
}

fn cmd_lint(io: &mut Io<'_>, strict: bool, args: &LintArgs) -> Result<i32, Failure> {
    let config = match &args.config {
        Some(p) => LintConfig::parse(&read(p)?).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        None => LintConfig::default(),
    };
    let policy = load_policy(io, &args.policy, strict)?;
    let baseline = args
        .baseline
        .as_deref()
        .map(|b| load_policy(io, b, strict))
        .transpose()?;
    let snapshot = args.snapshot.as_deref().map(load_snapshot).transpose()?;
    let report = run_lint(&policy, baseline.as_ref(), snapshot.as_ref(), &config);

    let mut text = String::new();
    for d in Detector::ALL {
        let group: Vec<_> = report.findings.iter().filter(|f| f.detector == d).collect();
        if group.is_empty() {
            continue;
        }
        writeln!(text, "{d} {} ({})", d.title(), group.len()).unwrap();
        for f in group {
            writeln!(text, "  {}", f.to_string().replace('\n', "\n  ")).unwrap();
        }
    }
    if io.verbose {
        writeln!(text, "default type usage:").unwrap();
        for (t, n) in &report.default_type_usage {
            writeln!(text, "  {t:<20}{n}").unwrap();
        }
    }
    if !report.unknown_labels.is_empty() {
        let labels: Vec<&str> = report.unknown_labels.iter().map(String::as_str).collect();
        io.note(&format!(
            "warning: snapshot labels not declared in policy: {}",
            labels.join(", ")
        ));
    }
    let mut counts: BTreeMap<&str, usize> = [("error", 0), ("warning", 0), ("info", 0)].into();
    for f in &report.findings {
        *counts.get_mut(f.severity.as_str()).expect("severity") += 1;
    }
    writeln!(
        text,
        "{} finding(s): {} error, {} warning, {} info",
        report.findings.len(),
        counts["error"],
        counts["warning"],
        counts["info"]
    )
    .unwrap();
    io.text(&text);

    let failing = report.findings.iter().any(|f| f.severity >= args.fail_on);
    if io.json {
        let mut doc = serde_json::to_value(&report).expect("json");
        doc["summary"] = json!(counts);
        doc["fail_on"] = json!(args.fail_on);
        doc["failed"] = json!(failing);
        io.emit(&doc);
    }
    Ok(if failing { EXIT_FINDINGS } else { EXIT_CLEAN })
}

fn process_json(p: &ProcessEntry) -> Value {
    json!({"pid": p.pid, "ppid": p.ppid, "name": p.name, "user": p.user, "domain": p.domain()})
}

fn trace_summary(decision: &device::AccessDecision) -> String {
    let steps: Vec<String> = decision.trace.iter().map(|s| s.to_string()).collect();
    format!("{} checks passed\n        {}", steps.len(), steps.join("\n        "))
}

fn cmd_query(io: &mut Io<'_>, strict: bool, args: &QueryArgs) -> Result<i32, Failure> {
    let policy = load_policy(io, &args.policy, strict)?;
    let snapshot = load_snapshot(&args.snapshot)?;
    let checker = AccessChecker::new(&policy, &snapshot);
    let kind = args.access;
    let mut text = String::new();

    if let Some(path) = &args.file {
        if snapshot.file(path).is_none() {
            return Err(Failure::usage(format!("no file `{path}` in snapshot")));
        }
        let procs = checker
            .query_processes(path, kind)
            .map_err(|e| Failure::usage(e.to_string()))?;
        writeln!(text, "processes that can {kind} {path}: {}", procs.len()).unwrap();
        let mut docs = Vec::new();
        for p in &procs {
            writeln!(text, "  {:>6} {} ({}, {})", p.pid, p.name, p.domain(), p.user).unwrap();
            let mut doc = process_json(p);
            if io.verbose {
                let d = checker.can_access(p, path, kind).expect("path checked");
                writeln!(text, "        {}", trace_summary(&d)).unwrap();
                doc["trace"] = serde_json::to_value(&d.trace).expect("json");
            }
            docs.push(doc);
        }
        io.text(&text);
        if io.json {
            io.emit(&json!({"file": path, "access": kind, "processes": docs}));
        }
        return Ok(EXIT_CLEAN);
    }

    let selected: Vec<&ProcessEntry> = snapshot
        .processes()
        .iter()
        .filter(|p| match (&args.process, args.pid) {
            (Some(name), _) => &p.name == name,
            (None, Some(pid)) => p.pid == pid,
            _ => false,
        })
        .collect();
    if selected.is_empty() {
        return Err(Failure::usage("process selector matches nothing in the snapshot"));
    }
    let mut groups = Vec::new();
    for p in selected {
        let files = checker.query_files(p, kind);
        writeln!(
            text,
            "pid {} {} ({}, {}): {} file(s) can be {kind}",
            p.pid,
            p.name,
            p.domain(),
            p.user,
            files.len()
        )
        .unwrap();
        let mut entries = Vec::new();
        for f in &files {
            writeln!(text, "  {f}").unwrap();
            if io.verbose {
                let d = checker.can_access(p, f, kind).expect("listed path");
                writeln!(text, "        {}", trace_summary(&d)).unwrap();
                entries.push(json!({"path": f, "trace": d.trace}));
            } else {
                entries.push(json!(f));
            }
        }
        let mut doc = process_json(p);
        doc["files"] = json!(entries);
        groups.push(doc);
    }
    io.text(&text);
    if io.json {
        io.emit(&json!({"access": kind, "results": groups}));
    }
    Ok(EXIT_CLEAN)
}

fn cmd_ingest(
    io: &mut Io<'_>,
    ps: &Path,
    ls: &Path,
    groups: Option<&Path>,
    output: Option<&Path>,
) -> Result<i32, Failure> {
    let located =
        |p: &Path, e: device::IngestError| Failure::input(format!("{}:{}: {}", p.display(), e.line, e.message));
    let processes = device::ingest_ps(&read(ps)?).map_err(|e| located(ps, e))?;
    let files = device::ingest_ls(&read(ls)?).map_err(|e| located(ls, e))?;
    let user_groups = match groups {
        Some(g) => device::ingest_groups(&read(g)?).map_err(|e| located(g, e))?,
        None => BTreeMap::new(),
    };
    let snapshot = Snapshot::new(processes, files, user_groups).map_err(|e| Failure::input(e.to_string()))?;
    let json = snapshot.to_json();
    match output {
        Some(out) => {
            write_file(out, &json)?;
            io.text(&format!(
                "wrote {} ({} processes, {} files)\n",
                out.display(),
                snapshot.processes().len(),
                snapshot.files().len()
            ));
            if io.json {
                io.emit(&json!({
                    "output": out.display().to_string(),
                    "processes": snapshot.processes().len(),
                    "files": snapshot.files().len(),
                }));
            }
        }
        // The snapshot is itself the JSON document.
        None => {
            let _ = io.out.write_all(json.as_bytes());
        }
    }
    Ok(EXIT_CLEAN)
}

fn cmd_graph(io: &mut Io<'_>, strict: bool, path: &Path, output: Option<&Path>) -> Result<i32, Failure> {
    let policy = load_policy(io, path, strict)?;
    let dot = export_attribute_graph(&policy);
    match output {
        Some(out) => {
            write_file(out, &dot)?;
            if io.json {
                io.emit(&json!({"output": out.display().to_string(), "dot": dot}));
            } else {
                io.note(&format!("wrote {}", out.display()));
            }
        }
        None if io.json => io.emit(&json!({"dot": dot})),
        None => io.text(&dot),
    }
    Ok(EXIT_CLEAN)
}
