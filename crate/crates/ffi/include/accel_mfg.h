#ifndef ACCEL_MFG_H
#define ACCEL_MFG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AmStatus {
  AM_STATUS_OK = 0,
  AM_STATUS_INVALID_ARGUMENT = 1,
  AM_STATUS_NULL_POINTER = 2,
  /**
   * A solver or numerical routine failed.
   */
  AM_STATUS_NUMERICAL = 3,
  /**
   * The output buffer is too small; the needed length was written.
   */
  AM_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  AM_STATUS_PANIC = 5,
} AmStatus;

typedef struct AmDomain AmDomain;

typedef struct AmMeasure AmMeasure;

typedef struct AmTrajectory AmTrajectory;

typedef struct AmEntryResult {
  double value;
  /**
   * 0 linear, 1 full quadratic, 2 parabolic then flat.
   */
  int32_t regime;
  /**
   * Switch time into the flat phase, NaN outside that regime.
   */
  double tau;
  double theta_star;
} AmEntryResult;

/**
 * Quadratic running cost `a|x − target|² + b|v|²` plus the terminal
 * counterpart; all zero gives the pure energy problem.
 */
typedef struct AmSolveOptions {
  double horizon;
  size_t knots;
  double running_a;
  double running_b;
  double terminal_a;
  double terminal_b;
  double target[2];
} AmSolveOptions;

/**
 * Position and velocity; the second components are ignored on intervals.
 */
typedef struct AmState {
  double x[2];
  double v[2];
} AmState;

typedef struct AmEquilibriumOptions {
  double horizon;
  size_t knots;
  size_t max_iters;
  double exploitability_tol;
  /**
   * Positive for congestion, negative for aggregation, zero for none.
   */
  double coupling_strength;
  double bandwidth;
} AmEquilibriumOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *am_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *am_version(void);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum AmStatus am_domain_interval(double a, double b, struct AmDomain **out);

/**
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum AmStatus am_domain_disc(double cx, double cy, double radius, struct AmDomain **out);

/**
 * Convex polygon from `n` counter-clockwise vertices stored as `xy[2i], xy[2i+1]`.
 *
 * # Safety
 * `xy` must point to `2n` doubles and `out` must be valid for writing.
 */
enum AmStatus am_domain_polygon(const double *xy, size_t n, struct AmDomain **out);

/**
 * # Safety
 * `domain` must be null or a handle from `am_domain_*` not yet freed.
 */
void am_domain_free(struct AmDomain *domain);

/**
 * Signed distance to the boundary, negative inside.
 *
 * # Safety
 * `domain` must be a live handle and `out` valid for writing.
 */
enum AmStatus am_domain_signed_distance(const struct AmDomain *domain,
                                        double x0,
                                        double x1,
                                        double *out);

/**
 * Closed-form entry problem from `(x, v)` with `x < 0`, target velocity `w`,
 * entry time `theta` and horizon `horizon`.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum AmStatus am_oracle_entry(double x,
                              double v,
                              double w,
                              double theta,
                              double horizon,
                              struct AmEntryResult *out);

/**
 * Default options: `T = 1`, 512 knots, zero running and terminal costs.
 */
struct AmSolveOptions am_solve_options_default(void);

/**
 * Optimal control from `start`. Writes the value and, when `trajectory`
 * is non-null, a new trajectory handle.
 *
 * # Safety
 * `domain` must be a live handle; `start`, `options` readable; `value`
 * writable; `trajectory` null or writable.
 */
enum AmStatus am_solve(const struct AmDomain *domain,
                       const struct AmState *start,
                       const struct AmSolveOptions *options,
                       double *value,
                       struct AmTrajectory **trajectory);

/**
 * # Safety
 * `trajectory` must be null or a live handle.
 */
void am_trajectory_free(struct AmTrajectory *trajectory);

/**
 * Number of knots.
 *
 * # Safety
 * `trajectory` must be a live handle and `out` writable.
 */
enum AmStatus am_trajectory_len(const struct AmTrajectory *trajectory, size_t *out);

/**
 * State at time `t ∈ [0, T]`.
 *
 * # Safety
 * `trajectory` must be a live handle and `out` writable.
 */
enum AmStatus am_trajectory_eval(const struct AmTrajectory *trajectory,
                                 double t,
                                 struct AmState *out);

/**
 * Copies knot times and states into buffers of capacity `cap`. Writes the
 * knot count to `len` in every case and returns `BufferTooSmall` when it
 * exceeds `cap`.
 *
 * # Safety
 * `times` and `states` must hold `cap` elements; `len` must be writable.
 */
enum AmStatus am_trajectory_knots(const struct AmTrajectory *trajectory,
                                  double *times,
                                  struct AmState *states,
                                  size_t cap,
                                  size_t *len);

/**
 * Exact W1 between two equally weighted clouds of the same size, ground
 * metric `|Δx| + |Δv|`.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` states; `out` must be writable.
 */
enum AmStatus am_w1_exact(const struct AmState *a,
                          size_t na,
                          const struct AmState *b,
                          size_t nb,
                          double *out);

struct AmEquilibriumOptions am_equilibrium_options_default(void);

/**
 * Fictitious play from `n` equally weighted initial states with zero base
 * costs. Writes a measure handle, the final exploitability and whether it
 * fell below the tolerance (1) or not (0).
 *
 * # Safety
 * `domain` must be live; `m0` must hold `n` states; `options` readable;
 * the three outputs writable.
 */
enum AmStatus am_equilibrium(const struct AmDomain *domain,
                             const struct AmState *m0,
                             size_t n,
                             const struct AmEquilibriumOptions *options,
                             struct AmMeasure **measure,
                             double *exploitability,
                             int32_t *converged);

/**
 * # Safety
 * `measure` must be null or a live handle.
 */
void am_measure_free(struct AmMeasure *measure);

/**
 * Number of atoms (trajectories) in the measure.
 *
 * # Safety
 * `measure` must be live and `out` writable.
 */
enum AmStatus am_measure_atoms(const struct AmMeasure *measure, size_t *out);

/**
 * `m(t)`: one state and weight per atom, into buffers of capacity `cap`.
 * Writes the atom count to `len` in every case.
 *
 * # Safety
 * `states` and `weights` must hold `cap` elements; `len` writable.
 */
enum AmStatus am_measure_pushforward(const struct AmMeasure *measure,
                                     double t,
                                     struct AmState *states,
                                     double *weights,
                                     size_t cap,
                                     size_t *len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACCEL_MFG_H */
