#ifndef FOGLINE_H
#define FOGLINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FoglineStatus {
  FOGLINE_STATUS_OK = 0,
  FOGLINE_STATUS_NULL_POINTER = 1,
  FOGLINE_STATUS_INVALID_UTF8 = 2,
  FOGLINE_STATUS_INVALID_ARGUMENT = 3,
  FOGLINE_STATUS_PARSE_ERROR = 4,
  FOGLINE_STATUS_BOOT_FAILURE = 5,
  FOGLINE_STATUS_TIMEOUT = 6,
  FOGLINE_STATUS_UNREACHABLE = 7,
  FOGLINE_STATUS_PANIC = 99,
} FoglineStatus;

/**
 * A simulated deployment.
 */
typedef struct FoglineSim FoglineSim;

typedef struct FoglineSummary {
  size_t n;
  size_t failures;
  double mean_ms;
  double ci95_low_ms;
  double ci95_high_ms;
} FoglineSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next fogline call on the same thread.
 */
const char *fogline_last_error(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void fogline_string_free(char *s);

/**
 * Boots a simulated deployment under the default latency matrix.
 * `mode` is "orchestrated" or "native", `pattern` one of "host-network",
 * "proxy-server", "env-variable", `layout` "hybrid" or "cloud".
 *
 * # Safety
 * String arguments are valid nul-terminated strings; `out` is writable.
 */
enum FoglineStatus fogline_sim_boot(const char *mode,
                                    const char *pattern,
                                    const char *layout,
                                    uint64_t seed,
                                    struct FoglineSim **out);

/**
 * Runs one request of `app` with a JSON `input`. On success the response
 * time is stored in `response_ms` and the JSON result (or `{"error": ..}`
 * when the application failed) in `result_json`.
 *
 * # Safety
 * `sim` comes from [`fogline_sim_boot`]; strings are nul-terminated; out
 * pointers are writable.
 */
enum FoglineStatus fogline_sim_submit(struct FoglineSim *sim,
                                      const char *app,
                                      const char *input_json,
                                      double deadline_ms,
                                      double *response_ms,
                                      char **result_json);

/**
 * Simulated time of the deployment, in milliseconds.
 *
 * # Safety
 * `sim` is null or comes from [`fogline_sim_boot`].
 */
double fogline_sim_now_ms(const struct FoglineSim *sim);

/**
 * # Safety
 * `sim` is null or comes from [`fogline_sim_boot`] and is not used again.
 */
void fogline_sim_free(struct FoglineSim *sim);

/**
 * Runs a benchmark under the default matrix and fills `out`.
 *
 * # Safety
 * Strings are nul-terminated; `out` is writable.
 */
enum FoglineStatus fogline_bench_run(const char *app,
                                     const char *mode,
                                     const char *layout,
                                     size_t samples,
                                     uint64_t seed,
                                     struct FoglineSummary *out);

/**
 * Parses a Deployment document and returns the normalized spec as JSON.
 *
 * # Safety
 * `yaml` is nul-terminated; `out_json` is writable.
 */
enum FoglineStatus fogline_parse_deployment(const char *yaml, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FOGLINE_H */
