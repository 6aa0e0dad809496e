use std::ffi::{c_char, CStr, CString};
use std::ptr;

use sepolyzer_ffi::*;

const POLICY: &str = "class file { read write append open getattr };\nclass dir { search };\n\
                      attribute domain;\ntype init, domain;\ntype vold, domain;\ntype untrusted_app, domain;\n\
                      type proc_security;\ntype rootfs;\ntype proc;\n\
                      neverallow { domain -init } proc_security:file { append write };\n\
                      allow vold proc_security:file write;\n\
                      allow domain { rootfs proc }:dir search;\n\
                      allow untrusted_app proc_security:file { read getattr };\n";

const PS: &str = "LABEL USER PID PPID NAME\nu:r:untrusted_app:s0 u0_a12 1234 321 com.example.app\n";
const LS: &str = "/:\ndrwxr-xr-x root root u:object_r:rootfs:s0 .\ndr-xr-xr-x root root u:object_r:proc:s0 proc\n\
                  /proc:\n-rw-r--r-- root root u:object_r:proc_security:s0 mmap_min_addr\n";

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a library string.
unsafe fn take(p: *mut c_char) -> String {
    assert!(!p.is_null());
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    sep_string_free(p);
    s
}

unsafe fn last_error() -> String {
    let p = sep_last_error_message();
    assert!(!p.is_null());
    CStr::from_ptr(p).to_str().unwrap().to_owned()
}

unsafe fn parse(text: &str) -> *mut SepPolicy {
    let mut p = ptr::null_mut();
    assert_eq!(sep_policy_parse(c(text).as_ptr(), false, &mut p), SepStatus::Ok);
    p
}

#[test]
fn neverallow_round_trip() {
    unsafe {
        let p = parse(POLICY);
        let mut out = ptr::null_mut();
        let mut count = 0usize;
        assert_eq!(
            sep_policy_check_neverallows_json(p, ptr::null(), &mut out, &mut count),
            SepStatus::Ok
        );
        assert_eq!(count, 1);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v[0]["witness_source"], "vold");
        assert_eq!(v[0]["witness_target"], "proc_security");
        assert_eq!(v[0]["witness_perms"], serde_json::json!(["write"]));
        sep_policy_free(p);
    }
}

#[test]
fn parse_errors_set_message() {
    unsafe {
        let mut p = ptr::null_mut();
        let status = sep_policy_parse(c("allow vold :file write;").as_ptr(), false, &mut p);
        assert_eq!(status, SepStatus::Parse);
        assert!(p.is_null());
        assert!(last_error().starts_with("1:12:"));
    }
}

#[test]
fn null_arguments() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(sep_policy_parse(ptr::null(), false, &mut p), SepStatus::NullPointer);
        let mut out = ptr::null_mut();
        assert_eq!(sep_policy_stats_json(ptr::null(), &mut out), SepStatus::NullPointer);
        sep_policy_free(ptr::null_mut());
        sep_snapshot_free(ptr::null_mut());
        sep_string_free(ptr::null_mut());
    }
}

#[test]
fn invalid_utf8() {
    unsafe {
        let bytes = [0xffu8, 0xfe, 0];
        let mut p = ptr::null_mut();
        assert_eq!(
            sep_policy_parse(bytes.as_ptr().cast(), false, &mut p),
            SepStatus::InvalidUtf8
        );
    }
}

#[test]
fn stats_serialize_graph_diff() {
    unsafe {
        let p = parse(POLICY);
        let mut out = ptr::null_mut();
        assert_eq!(sep_policy_stats_json(p, &mut out), SepStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(v["type_count"], 6);
        assert_eq!(v["domain_count"], 3);

        assert_eq!(sep_policy_serialize(p, &mut out), SepStatus::Ok);
        let text = take(out);
        let again = parse(&text);
        assert_eq!(sep_policy_serialize(again, &mut out), SepStatus::Ok);
        assert_eq!(take(out), text);

        assert_eq!(sep_policy_graph_dot(p, &mut out), SepStatus::Ok);
        assert!(take(out).contains("\"vold\" -> \"domain\";"));

        assert_eq!(sep_policy_diff_json(p, again, ptr::null(), &mut out), SepStatus::Ok);
        let d: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        assert_eq!(d["added_allows"], serde_json::json!([]));
        assert_eq!(
            sep_policy_diff_json(p, again, c("nope").as_ptr(), &mut out),
            SepStatus::InvalidInput
        );

        sep_policy_free(again);
        sep_policy_free(p);
    }
}

#[test]
fn lint_and_config() {
    unsafe {
        let p = parse(POLICY);
        let mut out = ptr::null_mut();
        assert_eq!(
            sep_policy_lint_json(p, ptr::null(), ptr::null(), ptr::null(), &mut out),
            SepStatus::Ok
        );
        let v: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        let detectors: Vec<&str> = v["findings"]
            .as_array()
            .unwrap()
            .iter()
            .map(|f| f["detector"].as_str().unwrap())
            .collect();
        assert!(detectors.contains(&"L5"));
        let bad = c("crowded_ratio_threshold = 0.5");
        assert_eq!(
            sep_policy_lint_json(p, ptr::null(), ptr::null(), bad.as_ptr(), &mut out),
            SepStatus::InvalidInput
        );
        sep_policy_free(p);
    }
}

#[test]
fn snapshot_access() {
    unsafe {
        let p = parse(POLICY);
        let mut s = ptr::null_mut();
        assert_eq!(
            sep_snapshot_ingest(c(PS).as_ptr(), c(LS).as_ptr(), ptr::null(), &mut s),
            SepStatus::Ok
        );

        let mut allowed = true;
        let mut trace = ptr::null_mut();
        let path = c("/proc/mmap_min_addr");
        let status = sep_can_access(p, s, 1234, path.as_ptr(), SepAccessKind::Read, &mut allowed, &mut trace);
        assert_eq!(status, SepStatus::Ok);
        assert!(!allowed, "open is not granted");
        let t: serde_json::Value = serde_json::from_str(&take(trace)).unwrap();
        let failed: Vec<&str> = t
            .as_array()
            .unwrap()
            .iter()
            .filter(|s| s["allowed"] == false)
            .map(|s| s["step"].as_str().unwrap())
            .collect();
        assert_eq!(failed, vec!["mac-file"]);

        assert_eq!(
            sep_can_access(
                p,
                s,
                99,
                path.as_ptr(),
                SepAccessKind::Read,
                &mut allowed,
                ptr::null_mut()
            ),
            SepStatus::NotFound
        );
        let missing = c("/nope");
        assert_eq!(
            sep_can_access(
                p,
                s,
                1234,
                missing.as_ptr(),
                SepAccessKind::Read,
                &mut allowed,
                ptr::null_mut()
            ),
            SepStatus::NotFound
        );

        let mut out = ptr::null_mut();
        assert_eq!(
            sep_query_files_json(p, s, 1234, SepAccessKind::Read, &mut out),
            SepStatus::Ok
        );
        assert_eq!(take(out), "[]");
        assert_eq!(
            sep_query_processes_json(p, s, path.as_ptr(), SepAccessKind::Read, &mut out),
            SepStatus::Ok
        );
        assert_eq!(take(out), "[]");

        assert_eq!(sep_snapshot_to_json(s, &mut out), SepStatus::Ok);
        let json = take(out);
        let mut back = ptr::null_mut();
        assert_eq!(sep_snapshot_from_json(c(&json).as_ptr(), &mut back), SepStatus::Ok);
        assert_eq!(sep_snapshot_to_json(back, &mut out), SepStatus::Ok);
        assert_eq!(take(out), json);

        let mut bad = ptr::null_mut();
        assert_eq!(
            sep_snapshot_from_json(c("{}").as_ptr(), &mut bad),
            SepStatus::InvalidInput
        );
        assert_eq!(
            sep_snapshot_ingest(c("garbage").as_ptr(), c("").as_ptr(), ptr::null(), &mut bad),
            SepStatus::InvalidInput
        );
        assert!(last_error().contains("line 1"));

        sep_snapshot_free(back);
        sep_snapshot_free(s);
        sep_policy_free(p);
    }
}

#[test]
fn error_is_cleared_on_success() {
    unsafe {
        let mut p = ptr::null_mut();
        sep_policy_parse(c("garbage").as_ptr(), false, &mut p);
        assert!(!sep_last_error_message().is_null());
        let p = parse(POLICY);
        assert!(sep_last_error_message().is_null());
        sep_policy_free(p);
    }
}
