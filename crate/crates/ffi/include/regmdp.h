#ifndef REGMDP_H
#define REGMDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RegmdpStatus {
  REGMDP_STATUS_OK = 0,
  REGMDP_STATUS_NULL_POINTER = 1,
  REGMDP_STATUS_INVALID_ARGUMENT = 2,
  REGMDP_STATUS_INVALID_MDP = 3,
  REGMDP_STATUS_DIVERGED = 4,
  REGMDP_STATUS_CONFIG = 5,
  REGMDP_STATUS_IO = 6,
  REGMDP_STATUS_PANIC = 7,
} RegmdpStatus;

typedef enum RegmdpScheme {
  REGMDP_SCHEME_MDVI_EXPLICIT = 0,
  REGMDP_SCHEME_MVI = 1,
  REGMDP_SCHEME_BAL = 2,
} RegmdpScheme;

typedef enum RegmdpBoundingKind {
  REGMDP_BOUNDING_KIND_IDENTITY = 0,
  REGMDP_BOUNDING_KIND_ZERO = 1,
  /**
   * `clamp(x / p0, p1, p2)`
   */
  REGMDP_BOUNDING_KIND_CLIP = 2,
  /**
   * `tanh(x / p0)`
   */
  REGMDP_BOUNDING_KIND_TANH = 3,
  REGMDP_BOUNDING_KIND_SIGN = 4,
  /**
   * Time-dependent clip with `T1 = p0`, `T2 = p1`.
   */
  REGMDP_BOUNDING_KIND_TD_CLIP = 5,
} RegmdpBoundingKind;

/**
 * Opaque MDP handle.
 */
typedef struct RegmdpMdp RegmdpMdp;

/**
 * Opaque run trace handle.
 */
typedef struct RegmdpTrace RegmdpTrace;

typedef struct RegmdpBounding {
  enum RegmdpBoundingKind kind;
  double p0;
  double p1;
  double p2;
} RegmdpBounding;

/**
 * Parameters of [`regmdp_run`]. `init_range` is the half-width of the
 * uniform initial table; negative selects `V^τ_max`.
 */
typedef struct RegmdpRunParams {
  enum RegmdpScheme scheme;
  double alpha;
  double kappa;
  struct RegmdpBounding f;
  struct RegmdpBounding g;
  size_t iterations;
  uint64_t seed;
  double init_range;
  bool allow_invalid_bounding;
} RegmdpRunParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *regmdp_last_error_message(void);

/**
 * Builds the grid world from a JSON config; null selects the defaults.
 *
 * # Safety
 * `config_json` is null or a NUL-terminated string; `out` is writable.
 */
enum RegmdpStatus regmdp_gridworld_new(const char *config_json, struct RegmdpMdp **out);

/**
 * # Safety
 * `out` is writable.
 */
enum RegmdpStatus regmdp_random_mdp_new(size_t num_states,
                                        size_t num_actions,
                                        uint64_t seed,
                                        double reward_scale,
                                        double discount,
                                        struct RegmdpMdp **out);

/**
 * Parses the shape-tagged JSON layout.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum RegmdpStatus regmdp_mdp_from_json(const char *json, struct RegmdpMdp **out);

/**
 * # Safety
 * `mdp` is null or a handle from this library, not yet freed.
 */
void regmdp_mdp_free(struct RegmdpMdp *mdp);

/**
 * Zero for a null handle.
 *
 * # Safety
 * `mdp` is null or a live handle.
 */
size_t regmdp_mdp_num_states(const struct RegmdpMdp *mdp);

/**
 * Zero for a null handle.
 *
 * # Safety
 * `mdp` is null or a live handle.
 */
size_t regmdp_mdp_num_actions(const struct RegmdpMdp *mdp);

/**
 * Writes `V*_temperature` into `out[0..num_states]`.
 *
 * # Safety
 * `mdp` is a live handle; `out` points to `len` writable doubles.
 */
enum RegmdpStatus regmdp_soft_optimal_value(const struct RegmdpMdp *mdp,
                                            double temperature,
                                            double tol,
                                            double *out,
                                            size_t len);

/**
 * `α log Σ exp(row/α)`; `α = 0` gives the maximum.
 *
 * # Safety
 * `row` points to `len` readable doubles; `out` is writable.
 */
enum RegmdpStatus regmdp_log_sum_exp(const double *row, size_t len, double alpha, double *out);

/**
 * Runs one scheme. A divergent run still yields a trace; check
 * [`regmdp_trace_diverged`].
 *
 * # Safety
 * `mdp` is a live handle; `params` is readable; `out` is writable.
 */
enum RegmdpStatus regmdp_run(const struct RegmdpMdp *mdp,
                             const struct RegmdpRunParams *params,
                             struct RegmdpTrace **out);

/**
 * # Safety
 * `trace` is null or a handle from this library, not yet freed.
 */
void regmdp_trace_free(struct RegmdpTrace *trace);

/**
 * Number of records (iterations run plus one); zero for a null handle.
 *
 * # Safety
 * `trace` is null or a live handle.
 */
size_t regmdp_trace_len(const struct RegmdpTrace *trace);

/**
 * True if the run diverged; the divergent iteration goes to `iteration`
 * when it is non-null.
 *
 * # Safety
 * `trace` is null or a live handle; `iteration` is null or writable.
 */
bool regmdp_trace_diverged(const struct RegmdpTrace *trace, size_t *iteration);

/**
 * Writes `V_k` of record `record` into `out[0..num_states]`.
 *
 * # Safety
 * `trace` is a live handle; `out` points to `len` writable doubles.
 */
enum RegmdpStatus regmdp_trace_values(const struct RegmdpTrace *trace,
                                      size_t record,
                                      double *out,
                                      size_t len);

/**
 * Writes the final `Ψ` row-major (`num_states × num_actions`).
 *
 * # Safety
 * `trace` is a live handle; `out` points to `len` writable doubles.
 */
enum RegmdpStatus regmdp_trace_final_psi(const struct RegmdpTrace *trace, double *out, size_t len);

/**
 * Runs an experiment config (JSON text) into `out_dir`. `jobs = 0` uses
 * every core. `exit_code` receives 0, or 2 if any run diverged.
 *
 * # Safety
 * Both strings are NUL-terminated; `exit_code` is null or writable.
 */
enum RegmdpStatus regmdp_run_experiment_json(const char *config_json,
                                             const char *out_dir,
                                             size_t jobs,
                                             int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REGMDP_H */
