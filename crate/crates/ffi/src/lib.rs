//! C ABI for sepolyzer.
//!
//! Policies and snapshots are opaque handles created by `sep_*_parse` /
//! `sep_snapshot_*` and released with the matching `_free`. Every fallible
//! call returns a [`SepStatus`]; on failure `sep_last_error_message` gives a
//! description valid until the next call on the same thread. Strings handed
//! out through `char **` parameters are owned by the caller and must be
//! released with `sep_string_free`. Reports are JSON documents.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sepolyzer::assertions::check_neverallows;
use sepolyzer::device::{self, AccessChecker, AccessKind, Snapshot};
use sepolyzer::diff::diff_policies;
use sepolyzer::graph::export_attribute_graph;
use sepolyzer::lint::{run_lint, LintConfig};
use sepolyzer::stats::{complexity_ratios, compute_stats};
use sepolyzer::{parse_policy_with, serialize_policy, ParseOptions, Policy};

/// Result of an FFI call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Policy text did not parse.
    Parse = 3,
    /// Other malformed input: snapshot JSON, ps/ls text, lint configuration,
    /// unknown filter type.
    InvalidInput = 4,
    /// A pid or path is not in the snapshot.
    NotFound = 5,
    /// Internal error; the library caught a panic.
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SepAccessKind {
    Read = 0,
    Write = 1,
    Execute = 2,
}

impl From<SepAccessKind> for AccessKind {
    fn from(k: SepAccessKind) -> Self {
        match k {
            SepAccessKind::Read => AccessKind::Read,
            SepAccessKind::Write => AccessKind::Write,
            SepAccessKind::Execute => AccessKind::Execute,
        }
    }
}

/// Parsed policy.
pub struct SepPolicy {
    inner: Policy,
}

/// Recorded device state.
pub struct SepSnapshot {
    inner: Snapshot,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let c = CString::new(message.into().replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SepStatus, String);

impl Fail {
    fn new(status: SepStatus, message: impl Into<String>) -> Self {
        Fail(status, message.into())
    }
}

type FfiResult = Result<(), Fail>;

/// Runs `body`, turning errors and panics into a status code.
fn guard(body: impl FnOnce() -> FfiResult) -> SepStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => SepStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal error");
            SepStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(SepStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::new(SepStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail::new(SepStatus::NullPointer, format!("{name} is NULL")))
}

unsafe fn put<T>(out: *mut T, value: T, name: &str) -> FfiResult {
    if out.is_null() {
        return Err(Fail::new(SepStatus::NullPointer, format!("{name} is NULL")));
    }
    out.write(value);
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> FfiResult {
    if out.is_null() {
        return Err(Fail::new(SepStatus::NullPointer, "out is NULL"));
    }
    let c = CString::new(s).map_err(|_| Fail::new(SepStatus::Internal, "output contains NUL"))?;
    out.write(c.into_raw());
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("report serializes")
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Owned by the
/// library.
#[no_mangle]
pub extern "C" fn sep_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses policy text. Parse errors are reported one per line in the error
/// message as `line:column: message`.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_parse(text: *const c_char, strict: bool, out: *mut *mut SepPolicy) -> SepStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let opts = ParseOptions { strict, file: None };
        let policy = parse_policy_with(text, &opts).map_err(|errs| {
            let lines: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
            Fail::new(SepStatus::Parse, lines.join("\n"))
        })?;
        put(out, Box::into_raw(Box::new(SepPolicy { inner: policy })), "out")
    })
}

/// # Safety
/// `policy` must come from `sep_policy_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_free(policy: *mut SepPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Canonical policy text.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_serialize(policy: *const SepPolicy, out: *mut *mut c_char) -> SepStatus {
    guard(|| put_string(out, serialize_policy(&handle(policy, "policy")?.inner)))
}

/// `{ ...counts..., "ratios": {...} }`.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_stats_json(policy: *const SepPolicy, out: *mut *mut c_char) -> SepStatus {
    guard(|| {
        let stats = compute_stats(&handle(policy, "policy")?.inner);
        let mut doc = serde_json::to_value(stats).expect("stats serialize");
        doc["ratios"] = serde_json::to_value(complexity_ratios(&stats)).expect("ratios serialize");
        put_string(out, doc.to_string())
    })
}

/// Neverallow violations as a JSON array. `extra` (may be NULL) contributes
/// its neverallow rules. `count` (may be NULL) receives the number found.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_check_neverallows_json(
    policy: *const SepPolicy,
    extra: *const SepPolicy,
    out: *mut *mut c_char,
    count: *mut usize,
) -> SepStatus {
    guard(|| {
        let policy = &handle(policy, "policy")?.inner;
        let extra = extra.as_ref().map(|e| e.inner.neverallows()).unwrap_or(&[]);
        let violations =
            check_neverallows(policy, extra).map_err(|e| Fail::new(SepStatus::InvalidInput, e.to_string()))?;
        if !count.is_null() {
            count.write(violations.len());
        }
        put_string(out, to_json(&violations))
    })
}

/// Structural diff. `type_filter` may be NULL.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_diff_json(
    baseline: *const SepPolicy,
    subject: *const SepPolicy,
    type_filter: *const c_char,
    out: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let b = &handle(baseline, "baseline")?.inner;
        let s = &handle(subject, "subject")?.inner;
        let filter = opt_str_arg(type_filter, "type_filter")?;
        let d = diff_policies(b, s, filter).map_err(|e| Fail::new(SepStatus::InvalidInput, e.to_string()))?;
        put_string(out, to_json(&d))
    })
}

/// Lint report. `baseline`, `snapshot` and `config_text` (key = value
/// lines) may be NULL.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_lint_json(
    policy: *const SepPolicy,
    baseline: *const SepPolicy,
    snapshot: *const SepSnapshot,
    config_text: *const c_char,
    out: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let policy = &handle(policy, "policy")?.inner;
        let config = match opt_str_arg(config_text, "config_text")? {
            Some(text) => LintConfig::parse(text).map_err(|e| Fail::new(SepStatus::InvalidInput, e.to_string()))?,
            None => LintConfig::default(),
        };
        let report = run_lint(
            policy,
            baseline.as_ref().map(|b| &b.inner),
            snapshot.as_ref().map(|s| &s.inner),
            &config,
        );
        put_string(out, to_json(&report))
    })
}

/// Attribute hierarchy in DOT.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_policy_graph_dot(policy: *const SepPolicy, out: *mut *mut c_char) -> SepStatus {
    guard(|| put_string(out, export_attribute_graph(&handle(policy, "policy")?.inner)))
}

/// Whether the allow rules together grant `perms` (space-separated) to
/// `domain` on `target_type:class`.
///
/// # Safety
/// Strings must be NUL-terminated; `allowed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_mac_allows(
    policy: *const SepPolicy,
    domain: *const c_char,
    target_type: *const c_char,
    class: *const c_char,
    perms: *const c_char,
    allowed: *mut bool,
) -> SepStatus {
    guard(|| {
        let policy = &handle(policy, "policy")?.inner;
        let perms: Vec<&str> = str_arg(perms, "perms")?.split_whitespace().collect();
        let ok = device::mac_allows(
            policy,
            str_arg(domain, "domain")?,
            str_arg(target_type, "target_type")?,
            str_arg(class, "class")?,
            &perms,
        );
        put(allowed, ok, "allowed")
    })
}

/// Loads a snapshot from its JSON form.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_snapshot_from_json(json: *const c_char, out: *mut *mut SepSnapshot) -> SepStatus {
    guard(|| {
        let snapshot = Snapshot::from_json(str_arg(json, "json")?)
            .map_err(|e| Fail::new(SepStatus::InvalidInput, e.to_string()))?;
        put(out, Box::into_raw(Box::new(SepSnapshot { inner: snapshot })), "out")
    })
}

/// Builds a snapshot from recorded `ps -Z` and `ls -RlZ` text. `groups`
/// (`USER GROUP...` lines) may be NULL.
///
/// # Safety
/// Strings must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_snapshot_ingest(
    ps: *const c_char,
    ls: *const c_char,
    groups: *const c_char,
    out: *mut *mut SepSnapshot,
) -> SepStatus {
    guard(|| {
        let bad = |what: &str, e: device::IngestError| Fail::new(SepStatus::InvalidInput, format!("{what}: {e}"));
        let processes = device::ingest_ps(str_arg(ps, "ps")?).map_err(|e| bad("ps", e))?;
        let files = device::ingest_ls(str_arg(ls, "ls")?).map_err(|e| bad("ls", e))?;
        let user_groups = match opt_str_arg(groups, "groups")? {
            Some(g) => device::ingest_groups(g).map_err(|e| bad("groups", e))?,
            None => Default::default(),
        };
        let snapshot = Snapshot::new(processes, files, user_groups)
            .map_err(|e| Fail::new(SepStatus::InvalidInput, e.to_string()))?;
        put(out, Box::into_raw(Box::new(SepSnapshot { inner: snapshot })), "out")
    })
}

/// Canonical snapshot JSON.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_snapshot_to_json(snapshot: *const SepSnapshot, out: *mut *mut c_char) -> SepStatus {
    guard(|| put_string(out, handle(snapshot, "snapshot")?.inner.to_json()))
}

/// # Safety
/// `snapshot` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn sep_snapshot_free(snapshot: *mut SepSnapshot) {
    if !snapshot.is_null() {
        drop(Box::from_raw(snapshot));
    }
}

/// Decides whether process `pid` can access `path`. `trace_json` (may be
/// NULL) receives the step-by-step trace.
///
/// # Safety
/// Handles must be valid; `allowed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_can_access(
    policy: *const SepPolicy,
    snapshot: *const SepSnapshot,
    pid: u32,
    path: *const c_char,
    kind: SepAccessKind,
    allowed: *mut bool,
    trace_json: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let policy = &handle(policy, "policy")?.inner;
        let snapshot = &handle(snapshot, "snapshot")?.inner;
        let process = snapshot
            .process_by_pid(pid)
            .ok_or_else(|| Fail::new(SepStatus::NotFound, format!("no process with pid {pid}")))?;
        let decision = device::can_access(policy, snapshot, process, str_arg(path, "path")?, kind.into())
            .map_err(|e| Fail::new(SepStatus::NotFound, e.to_string()))?;
        put(allowed, decision.allowed, "allowed")?;
        if !trace_json.is_null() {
            put_string(trace_json, to_json(&decision.trace))?;
        }
        Ok(())
    })
}

/// Paths process `pid` can access, as a sorted JSON array.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_query_files_json(
    policy: *const SepPolicy,
    snapshot: *const SepSnapshot,
    pid: u32,
    kind: SepAccessKind,
    out: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let policy = &handle(policy, "policy")?.inner;
        let snapshot = &handle(snapshot, "snapshot")?.inner;
        let process = snapshot
            .process_by_pid(pid)
            .ok_or_else(|| Fail::new(SepStatus::NotFound, format!("no process with pid {pid}")))?;
        let files = AccessChecker::new(policy, snapshot).query_files(process, kind.into());
        put_string(out, to_json(&files))
    })
}

/// Processes that can access `path`, as a JSON array ordered by pid.
///
/// # Safety
/// Handles must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sep_query_processes_json(
    policy: *const SepPolicy,
    snapshot: *const SepSnapshot,
    path: *const c_char,
    kind: SepAccessKind,
    out: *mut *mut c_char,
) -> SepStatus {
    guard(|| {
        let policy = &handle(policy, "policy")?.inner;
        let snapshot = &handle(snapshot, "snapshot")?.inner;
        let procs = device::query_processes(policy, snapshot, str_arg(path, "path")?, kind.into())
            .map_err(|e| Fail::new(SepStatus::NotFound, e.to_string()))?;
        put_string(out, to_json(&procs))
    })
}
