#ifndef SEPOLYZER_H
#define SEPOLYZER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of an FFI call.
typedef enum SepStatus {
  SEP_STATUS_OK = 0,
  // A required pointer argument was NULL.
  SEP_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  SEP_STATUS_INVALID_UTF8 = 2,
  // Policy text did not parse.
  SEP_STATUS_PARSE = 3,
  // Other malformed input: snapshot JSON, ps/ls text, lint configuration,
  // unknown filter type.
  SEP_STATUS_INVALID_INPUT = 4,
  // A pid or path is not in the snapshot.
  SEP_STATUS_NOT_FOUND = 5,
  // Internal error; the library caught a panic.
  SEP_STATUS_INTERNAL = 6,
} SepStatus;

typedef enum SepAccessKind {
  SEP_ACCESS_KIND_READ = 0,
  SEP_ACCESS_KIND_WRITE = 1,
  SEP_ACCESS_KIND_EXECUTE = 2,
} SepAccessKind;

// Parsed policy.
typedef struct SepPolicy SepPolicy;

// Recorded device state.
typedef struct SepSnapshot SepSnapshot;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *sep_version(void);

// Message for the last failed call on this thread, or NULL. Owned by the
// library.
const char *sep_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void sep_string_free(char *s);

// Parses policy text. Parse errors are reported one per line in the error
// message as `line:column: message`.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum SepStatus sep_policy_parse(const char *text, bool strict, struct SepPolicy **out);

// # Safety
// `policy` must come from `sep_policy_parse` and not be freed twice.
void sep_policy_free(struct SepPolicy *policy);

// Canonical policy text.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_policy_serialize(const struct SepPolicy *policy, char **out);

// `{ ...counts..., "ratios": {...} }`.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_policy_stats_json(const struct SepPolicy *policy, char **out);

// Neverallow violations as a JSON array. `extra` (may be NULL) contributes
// its neverallow rules. `count` (may be NULL) receives the number found.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_policy_check_neverallows_json(const struct SepPolicy *policy,
                                                 const struct SepPolicy *extra,
                                                 char **out,
                                                 uintptr_t *count);

// Structural diff. `type_filter` may be NULL.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_policy_diff_json(const struct SepPolicy *baseline,
                                    const struct SepPolicy *subject,
                                    const char *type_filter,
                                    char **out);

// Lint report. `baseline`, `snapshot` and `config_text` (key = value
// lines) may be NULL.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_policy_lint_json(const struct SepPolicy *policy,
                                    const struct SepPolicy *baseline,
                                    const struct SepSnapshot *snapshot,
                                    const char *config_text,
                                    char **out);

// Attribute hierarchy in DOT.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_policy_graph_dot(const struct SepPolicy *policy, char **out);

// Whether the allow rules together grant `perms` (space-separated) to
// `domain` on `target_type:class`.
//
// # Safety
// Strings must be NUL-terminated; `allowed` must be writable.
enum SepStatus sep_mac_allows(const struct SepPolicy *policy,
                              const char *domain,
                              const char *target_type,
                              const char *class_,
                              const char *perms,
                              bool *allowed);

// Loads a snapshot from its JSON form.
//
// # Safety
// `json` must be NUL-terminated; `out` must be writable.
enum SepStatus sep_snapshot_from_json(const char *json, struct SepSnapshot **out);

// Builds a snapshot from recorded `ps -Z` and `ls -RlZ` text. `groups`
// (`USER GROUP...` lines) may be NULL.
//
// # Safety
// Strings must be NUL-terminated; `out` must be writable.
enum SepStatus sep_snapshot_ingest(const char *ps,
                                   const char *ls,
                                   const char *groups,
                                   struct SepSnapshot **out);

// Canonical snapshot JSON.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_snapshot_to_json(const struct SepSnapshot *snapshot, char **out);

// # Safety
// `snapshot` must come from this library and not be freed twice.
void sep_snapshot_free(struct SepSnapshot *snapshot);

// Decides whether process `pid` can access `path`. `trace_json` (may be
// NULL) receives the step-by-step trace.
//
// # Safety
// Handles must be valid; `allowed` must be writable.
enum SepStatus sep_can_access(const struct SepPolicy *policy,
                              const struct SepSnapshot *snapshot,
                              uint32_t pid,
                              const char *path,
                              enum SepAccessKind kind,
                              bool *allowed,
                              char **trace_json);

// Paths process `pid` can access, as a sorted JSON array.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_query_files_json(const struct SepPolicy *policy,
                                    const struct SepSnapshot *snapshot,
                                    uint32_t pid,
                                    enum SepAccessKind kind,
                                    char **out);

// Processes that can access `path`, as a JSON array ordered by pid.
//
// # Safety
// Handles must be valid; `out` must be writable.
enum SepStatus sep_query_processes_json(const struct SepPolicy *policy,
                                        const struct SepSnapshot *snapshot,
                                        const char *path,
                                        enum SepAccessKind kind,
                                        char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEPOLYZER_H */
