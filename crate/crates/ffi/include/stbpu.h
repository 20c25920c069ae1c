#ifndef STBPU_H
#define STBPU_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum StbpuStatus {
  STBPU_STATUS_OK = 0,
  STBPU_STATUS_NULL_POINTER = 1,
  STBPU_STATUS_INVALID_UTF8 = 2,
  // Out-of-range number or unknown name.
  STBPU_STATUS_INVALID_ARGUMENT = 3,
  // Malformed trace, netlist or config text.
  STBPU_STATUS_PARSE = 4,
  STBPU_STATUS_IO = 5,
  // Simulation or attack failed.
  STBPU_STATUS_FAILED = 6,
  STBPU_STATUS_PANIC = 7,
} StbpuStatus;

// Opaque predictor configuration.
typedef struct StbpuConfig StbpuConfig;

// Opaque simulation report.
typedef struct StbpuReport StbpuReport;

// Opaque branch trace.
typedef struct StbpuTrace StbpuTrace;

// Headline numbers of a report.
typedef struct StbpuSummary {
  uint64_t branches;
  double direction_accuracy;
  double target_accuracy;
  double oae;
  uint64_t direction_misp;
  uint64_t target_misp;
  uint64_t btb_evictions;
  uint64_t rerandomizations;
  // 0 when the counter is disabled.
  uint64_t misp_threshold;
  uint64_t evict_threshold;
} StbpuSummary;

typedef struct StbpuAttackResult {
  bool success;
  double score;
  uint64_t misp_triggered;
  uint64_t evict_triggered;
  uint64_t rerandomizations;
  uint64_t wall_trials;
  uint64_t victim_misp;
} StbpuAttackResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *stbpu_version(void);

// Message for the last failed call on this thread; empty after a success.
// Valid until the next `stbpu_*` call on the same thread.
const char *stbpu_last_error(void);

// New configuration for `model` (e.g. "stbpu"), full size or the
// desk-scale preset.
//
// # Safety
// `model` must be a NUL-terminated string; `out` must be writable.
enum StbpuStatus stbpu_config_new(const char *model, bool scaled, struct StbpuConfig **out_cfg);

// Sets one field, e.g. `btb_ways` = "4". The result must still validate.
//
// # Safety
// `cfg` must come from `stbpu_config_new`; strings must be NUL-terminated.
enum StbpuStatus stbpu_config_set(struct StbpuConfig *cfg, const char *key, const char *value);

// # Safety
// `cfg` must come from `stbpu_config_new` or be NULL.
void stbpu_config_free(struct StbpuConfig *cfg);

// Parses trace text in the line format written by `stbpu synth`.
//
// # Safety
// `text` must be NUL-terminated; `out_trace` must be writable.
enum StbpuStatus stbpu_trace_parse(const char *text, struct StbpuTrace **out_trace);

// # Safety
// `path` must be NUL-terminated; `out_trace` must be writable.
enum StbpuStatus stbpu_trace_load(const char *path, struct StbpuTrace **out_trace);

// Synthetic trace: `scenario` is one of loop, alternating,
// context_switch_heavy, gadget_victim, smt_pair.
//
// # Safety
// `scenario` must be NUL-terminated; `out_trace` must be writable.
enum StbpuStatus stbpu_trace_synth(const char *scenario,
                                   uintptr_t total,
                                   uint64_t seed,
                                   struct StbpuTrace **out_trace);

// Number of records, 0 for NULL.
//
// # Safety
// `trace` must come from a `stbpu_trace_*` constructor or be NULL.
uintptr_t stbpu_trace_len(const struct StbpuTrace *trace);

// # Safety
// `trace` must come from a `stbpu_trace_*` constructor or be NULL.
void stbpu_trace_free(struct StbpuTrace *trace);

// Re-randomization thresholds Γ = ceil(r·C) for `cfg`.
//
// # Safety
// `cfg` must be a live handle; outputs must be writable.
enum StbpuStatus stbpu_thresholds(const struct StbpuConfig *cfg,
                                  double r,
                                  uint64_t *misp_threshold,
                                  uint64_t *evict_threshold);

// Simulates `trace` on `cfg`. Token models derive thresholds from `r`;
// `r <= 0` disables re-randomization. Other models ignore `r`.
//
// # Safety
// Handles must be live; `out_report` must be writable.
enum StbpuStatus stbpu_simulate(const struct StbpuConfig *cfg,
                                const struct StbpuTrace *trace,
                                double r,
                                uint64_t seed,
                                struct StbpuReport **out_report);

// # Safety
// `report` must be live; `out_summary` must be writable.
enum StbpuStatus stbpu_report_summary(const struct StbpuReport *report,
                                      struct StbpuSummary *out_summary);

// CSV (header plus one row). Release with `stbpu_string_free`; NULL on
// a NULL report.
//
// # Safety
// `report` must be live or NULL.
char *stbpu_report_csv(const struct StbpuReport *report);

// # Safety
// `report` must come from `stbpu_simulate` or be NULL.
void stbpu_report_free(struct StbpuReport *report);

// # Safety
// `s` must come from a string-returning `stbpu_*` call or be NULL.
void stbpu_string_free(char *s);

// P(A ⇒ V) = 1 / (I · 2^(T+O)).
double stbpu_collision_prob(uint64_t sets, uint32_t tag_bits, uint32_t offset_bits);

// Trials for an even chance of guessing an Ω-bit target.
double stbpu_injection_cost(uint32_t target_bits);

// Expected mispredictions and evictions for a full reuse set.
//
// # Safety
// Outputs must be writable.
enum StbpuStatus stbpu_reuse_cost(uint64_t sets,
                                  uint32_t ways,
                                  uint32_t tag_bits,
                                  uint32_t offset_bits,
                                  double *out_misp,
                                  double *out_evict);

// Evictions to cover a fraction `p` of the sets with group elimination.
//
// # Safety
// `out_evict` must be writable.
enum StbpuStatus stbpu_gem_eviction_cost(double p, uint64_t sets, uint32_t ways, double *out_evict);

// Runs one attack-surface cell (e.g. "btb-rb-he") on the desk-scale rig
// with thresholds at r = 0.05.
//
// # Safety
// Strings must be NUL-terminated; `out_result` must be writable.
enum StbpuStatus stbpu_attack(const char *scenario,
                              const char *model,
                              uint64_t seed,
                              struct StbpuAttackResult *out_result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STBPU_H */
