#ifndef ORCS_H
#define ORCS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum OrcsStatus {
  ORCS_STATUS_OK = 0,
  ORCS_STATUS_NULL_POINTER = 1,
  ORCS_STATUS_INVALID_ARGUMENT = 2,
  ORCS_STATUS_CONFIG = 3,
  ORCS_STATUS_CAPACITY = 4,
  ORCS_STATUS_NEIGHBOR_LIST_OVERFLOW = 5,
  ORCS_STATUS_MODE_UNSUPPORTED = 6,
  ORCS_STATUS_STRUCTURE = 7,
  ORCS_STATUS_NON_FINITE_FORCE = 8,
  ORCS_STATUS_ORACLE_LIMIT = 9,
  ORCS_STATUS_IO = 10,
  ORCS_STATUS_PANIC = 11,
} OrcsStatus;

// Opaque simulation handle.
typedef struct OrcsSimulation OrcsSimulation;

// Timings and counters of one step.
typedef struct OrcsStepRecord {
  uint64_t step;
  double maintain_ms;
  double query_ms;
  double integrate_ms;
  // 1 when the BVH was rebuilt, 0 when refitted or not used.
  uint8_t rebuilt;
  uint64_t k_u;
  uint64_t interactions;
  double mean_nodes_visited;
  double avg_neighbors;
} OrcsStepRecord;

// Aggregates over a run of steps.
typedef struct OrcsRunSummary {
  uint64_t steps_run;
  double mean_step_ms;
  double total_ms;
  double maintain_ms;
  double query_ms;
  double integrate_ms;
  uint64_t rebuilds;
  uint64_t peak_memory_bytes;
} OrcsRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or null if none failed.
//
// The pointer stays valid until the next failing call on this thread.
const char *orcs_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *orcs_version(void);

// Creates a simulation from `key = value` config text (the CLI's config
// file format). A null `config` means all defaults. On success `*out`
// receives a handle the caller must free with `orcs_simulation_free`.
//
// # Safety
// `config` is null or a NUL-terminated string; `out` is a valid pointer.
enum OrcsStatus orcs_simulation_new(const char *config, struct OrcsSimulation **out);

// Releases a handle. Null is a no-op.
//
// # Safety
// `handle` is null or came from `orcs_simulation_new` and was not freed yet.
void orcs_simulation_free(struct OrcsSimulation *handle);

// Advances one step. `record` may be null.
//
// # Safety
// `handle` is a live handle; `record` is null or valid for writes.
enum OrcsStatus orcs_simulation_step(struct OrcsSimulation *handle, struct OrcsStepRecord *record);

// Advances `steps` steps, stopping at the first failure. `summary` may be
// null; when given it covers the steps that completed.
//
// # Safety
// `handle` is a live handle; `summary` is null or valid for writes.
enum OrcsStatus orcs_simulation_run(struct OrcsSimulation *handle,
                                    uint64_t steps,
                                    struct OrcsRunSummary *summary);

// Particle count, or 0 for a null handle.
//
// # Safety
// `handle` is null or a live handle.
size_t orcs_simulation_len(const struct OrcsSimulation *handle);

// Steps completed so far, or 0 for a null handle.
//
// # Safety
// `handle` is null or a live handle.
uint64_t orcs_simulation_steps_done(const struct OrcsSimulation *handle);

// Copies positions as `x y z` triples into `out`, which holds `len` doubles
// and must fit `3 * orcs_simulation_len(handle)`.
//
// # Safety
// `handle` is a live handle; `out` is valid for `len` writes.
enum OrcsStatus orcs_simulation_positions(const struct OrcsSimulation *handle,
                                          double *out,
                                          size_t len);

// Copies the per-particle search radii into `out`, which holds `len`
// doubles and must fit `orcs_simulation_len(handle)`.
//
// # Safety
// `handle` is a live handle; `out` is valid for `len` writes.
enum OrcsStatus orcs_simulation_radii(const struct OrcsSimulation *handle, double *out, size_t len);

// Refits between rebuilds that minimise the modelled cost, clamped to
// `[0, k_max]`; `k_max` when the slope is at or below `delta_min`.
uint64_t orcs_k_u_opt(double t_u, double t_r, double delta_q, double delta_min, uint64_t k_max);

// Modelled query-plus-maintenance time of `n_steps` steps rebuilding every
// `k_u + 1` steps.
double orcs_total_cost(double t_r,
                       double t_u,
                       double t_q,
                       double delta_q,
                       uint64_t n_steps,
                       uint64_t k_u);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ORCS_H */
