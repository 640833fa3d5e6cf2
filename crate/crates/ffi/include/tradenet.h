#ifndef TRADENET_H
#define TRADENET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Values 2 to 5 match the command-line exit codes.
 */
typedef enum TnStatus {
  TN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TN_STATUS_NULL_ARGUMENT = 1,
  /**
   * Scenario or argument failed validation.
   */
  TN_STATUS_INVALID = 2,
  /**
   * The offer dynamics hit its round cap; outputs are still written.
   */
  TN_STATUS_CAP_HIT = 3,
  /**
   * A result failed its verifier.
   */
  TN_STATUS_VERIFICATION_FAILED = 4,
  /**
   * A documented impossibility, e.g. no CE or no extension at the bound.
   */
  TN_STATUS_IMPOSSIBLE = 5,
  /**
   * A string argument was not UTF-8.
   */
  TN_STATUS_INVALID_UTF8 = 6,
  /**
   * Unknown analysis name.
   */
  TN_STATUS_UNKNOWN_ANALYSIS = 7,
  /**
   * Internal panic caught at the boundary.
   */
  TN_STATUS_PANIC = 8,
} TnStatus;

/**
 * Opaque market handle.
 */
typedef struct TnMarket TnMarket;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *tn_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *tn_last_error(void);

/**
 * Parses scenario JSON into a new market handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TnStatus tn_market_from_json(const char *json, struct TnMarket **out);

/**
 * Releases a handle. Null is a no-op.
 *
 * # Safety
 * `m` must come from `tn_market_from_json` and not be used afterwards.
 */
void tn_market_free(struct TnMarket *m);

/**
 * Number of agents and trades.
 *
 * # Safety
 * `m` must be a live handle; the out pointers may be null.
 */
enum TnStatus tn_market_size(const struct TnMarket *m, size_t *agents, size_t *trades);

/**
 * Market value w(I) as an exact decimal or `num/den` string.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum TnStatus tn_market_value(const struct TnMarket *m, char **out);

/**
 * Runs an analysis and writes its verified JSON to `out`.
 *
 * `what` is one of `validate`, `ce`, `core`, `fairness`, `essential`,
 * `reduce`, `ne-check`, `extend-ce`. The last two take a named offer
 * `profile` and `epsilon`; the others ignore them (pass null). On a
 * documented impossibility the status is `Impossible` and `out` holds the
 * structured error JSON.
 *
 * # Safety
 * `m` must be a live handle, strings NUL-terminated or null, `out` valid.
 */
enum TnStatus tn_analyze(const struct TnMarket *m,
                         const char *what,
                         const char *profile,
                         const char *epsilon,
                         char **out);

/**
 * Runs a named run of the scenario with the given seed (ignored for
 * scripted schedules). Writes the verified terminal JSON to `terminal` and,
 * when `trace` is non-null, the JSONL trace to `trace`.
 *
 * # Safety
 * `m` must be a live handle, `run` NUL-terminated, `terminal` valid;
 * `trace` may be null.
 */
enum TnStatus tn_run(const struct TnMarket *m,
                     const char *run,
                     uint64_t seed,
                     char **terminal,
                     char **trace);

/**
 * Frees a string returned by this library. Null is a no-op.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void tn_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRADENET_H */
