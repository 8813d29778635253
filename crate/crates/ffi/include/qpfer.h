#ifndef QPFER_H
#define QPFER_H

/* Generated by cbindgen from qpfer-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Bumped whenever the exported surface changes incompatibly.
 */
#define QPFER_ABI_VERSION 1

/**
 * Selector for the protocol variant arguments.
 */
#define QPFER_VARIANT_FOUR_STATE 0

/**
 * Selector for the protocol variant arguments.
 */
#define QPFER_VARIANT_SIX_STATE 1

/**
 * Channel family selector: equal X, Y, and Z weights.
 */
#define QPFER_FAMILY_SYMMETRIC 0

/**
 * Channel family selector: equal X and Z weights, no Y component.
 */
#define QPFER_FAMILY_XZ_ONLY 1

/**
 * Channel family selector: weights taken from the `w_x, w_y, w_z` arguments.
 */
#define QPFER_FAMILY_CUSTOM 2

/**
 * Result of every fallible call.
 */
typedef enum QpferStatus {
  /**
   * The call succeeded and all output parameters are set.
   */
  QPFER_STATUS_OK = 0,
  /**
   * An argument was rejected; outputs are untouched.
   */
  QPFER_STATUS_INVALID_INPUT = 1,
  /**
   * The search space contains no feasible answer; outputs are untouched.
   */
  QPFER_STATUS_INFEASIBLE = 2,
  /**
   * An unexpected internal failure; outputs are untouched.
   */
  QPFER_STATUS_INTERNAL = 3,
} QpferStatus;

/**
 * A feasible post-processing schedule together with its residual rates
 * and key rate. Obtain from [`qpfer_schedule_search`], inspect through
 * the `qpfer_schedule_*` accessors, release with [`qpfer_schedule_free`].
 */
typedef struct QpferSchedule QpferSchedule;

/**
 * Search space for schedule searches and threshold scans.
 */
typedef struct QpferBounds {
  /**
   * Maximum number of interleaved pair-parity steps.
   */
  uint32_t max_b;
  /**
   * Maximum number of interleaved pooling steps.
   */
  uint32_t max_p_rounds;
  /**
   * Largest final pooling width considered.
   */
  uint64_t r_max;
  /**
   * Feasibility target both final-step bounds must meet.
   */
  double target;
} QpferBounds;

/**
 * A Pauli error distribution: four probabilities summing to one.
 */
typedef struct QpferDist {
  double p_i;
  double p_x;
  double p_y;
  double p_z;
} QpferDist;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * The ABI revision compiled into this library.
 */
uint32_t qpfer_abi_version(void);

/**
 * Message for the most recent failure on the calling thread.
 *
 * The pointer stays valid until the next failing qpfer call on the same
 * thread; do not free it. Returns an empty string when nothing failed yet.
 */
const char *qpfer_last_error_message(void);

/**
 * The default search space used by the command-line tool.
 */
struct QpferBounds qpfer_default_bounds(void);

/**
 * Distribution of residual errors on accepted decoded qubits, plus the
 * probability that a code survives the parity check.
 *
 * # Safety
 *
 * `out` and `out_survival` must be valid for writes or null (null outputs
 * are rejected with [`QpferStatus::InvalidInput`]).
 */
enum QpferStatus qpfer_decoded_distribution(struct QpferDist channel,
                                            struct QpferDist *out,
                                            double *out_survival);

/**
 * Bit-flip and phase-flip rates of a distribution.
 *
 * # Safety
 *
 * `out_bit` and `out_phase` must be valid for writes or null.
 */
enum QpferStatus qpfer_flip_rates(struct QpferDist dist, double *out_bit, double *out_phase);

/**
 * The pair-parity purification step on a distribution, with the pair
 * survival probability.
 *
 * # Safety
 *
 * `out` and `out_survival` must be valid for writes or null.
 */
enum QpferStatus qpfer_bstep(struct QpferDist dist, struct QpferDist *out, double *out_survival);

/**
 * The parity-pooling purification step over `r` draws.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_pstep(struct QpferDist dist, uint64_t r, struct QpferDist *out);

/**
 * Exact marginal flip rates after pooling `r` draws.
 *
 * # Safety
 *
 * `out_bit` and `out_phase` must be valid for writes or null.
 */
enum QpferStatus qpfer_pooling_rates(struct QpferDist dist,
                                     uint64_t r,
                                     double *out_bit,
                                     double *out_phase);

/**
 * Certified upper bounds for a final pooling step of width `r`, and
 * whether both meet `target`.
 *
 * # Safety
 *
 * The three output pointers must be valid for writes or null.
 */
enum QpferStatus qpfer_pooling_feasibility(struct QpferDist dist,
                                           uint64_t r,
                                           double target,
                                           bool *out_feasible,
                                           double *out_bit_bound,
                                           double *out_phase_bound);

/**
 * Binary entropy in bits; rejects arguments outside `[0, 1]`.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_binary_entropy(double p, double *out);

/**
 * Asymptotic CSS distillation rate for the given residual rates; negative
 * values mean no key.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_css_key_rate(double e_bit, double e_phase, double *out);

/**
 * The working distribution a four-state session plans against, given its
 * two measured rates.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_four_state_working_distribution(double bit_rate,
                                                       double phase_rate,
                                                       struct QpferDist *out);

/**
 * The physical channel a family produces at the given scale.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_family_distribution(uint32_t family,
                                           double w_x,
                                           double w_y,
                                           double w_z,
                                           double scale,
                                           struct QpferDist *out);

/**
 * Searches the bounded schedule space for a feasible post-processing
 * plan. On success writes a handle the caller must release with
 * [`qpfer_schedule_free`]; when nothing in the space works, returns
 * [`QpferStatus::Infeasible`] and writes null.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_schedule_search(struct QpferDist dist,
                                       struct QpferBounds bounds,
                                       struct QpferSchedule **out);

/**
 * Number of interleaved steps in the schedule (the final pooling step is
 * not counted). Returns 0 on a null handle.
 *
 * # Safety
 *
 * `handle` must be null or a live pointer from [`qpfer_schedule_search`].
 */
size_t qpfer_schedule_step_count(const struct QpferSchedule *handle);

/**
 * Interleaved step at `index`: writes 0 for a pair-parity step, or the
 * pooling width for a pooling step.
 *
 * # Safety
 *
 * `handle` must be null or a live pointer from [`qpfer_schedule_search`];
 * `out_width` must be valid for writes or null.
 */
enum QpferStatus qpfer_schedule_step(const struct QpferSchedule *handle,
                                     size_t index,
                                     uint64_t *out_width);

/**
 * Width of the final pooling step. Returns 0 on a null handle.
 *
 * # Safety
 *
 * `handle` must be null or a live pointer from [`qpfer_schedule_search`].
 */
uint64_t qpfer_schedule_final_r(const struct QpferSchedule *handle);

/**
 * Residual bit and phase rates the schedule certifies.
 *
 * # Safety
 *
 * `handle` must be null or a live pointer from [`qpfer_schedule_search`];
 * the output pointers must be valid for writes or null.
 */
enum QpferStatus qpfer_schedule_residual(const struct QpferSchedule *handle,
                                         double *out_bit,
                                         double *out_phase);

/**
 * Key rate of the schedule. Returns NaN on a null handle.
 *
 * # Safety
 *
 * `handle` must be null or a live pointer from [`qpfer_schedule_search`].
 */
double qpfer_schedule_key_rate(const struct QpferSchedule *handle);

/**
 * Releases a schedule handle. Null is a no-op.
 *
 * # Safety
 *
 * `handle` must be null or a pointer from [`qpfer_schedule_search`] that
 * has not been freed yet.
 */
void qpfer_schedule_free(struct QpferSchedule *handle);

/**
 * Certifies the largest channel scale of a family at which the bounded
 * pipeline still distills key. With `use_decode` false the code stage is
 * skipped and the bare channel is post-processed directly.
 *
 * Writes the certified scale and the first infeasible scale probed (NaN
 * when the whole scan stayed feasible).
 *
 * # Safety
 *
 * `out_certified` and `out_first_infeasible` must be valid for writes or
 * null.
 */
enum QpferStatus qpfer_find_threshold(uint32_t family,
                                      double w_x,
                                      double w_y,
                                      double w_z,
                                      uint32_t variant,
                                      double precision,
                                      struct QpferBounds bounds,
                                      bool use_decode,
                                      double *out_certified,
                                      double *out_first_infeasible);

/**
 * Runs the full protocol simulation. `config_json` is a JSON document
 * with the same schema as the `[simulate]` section of the command-line
 * tool's config file; the report comes back as a JSON document the caller
 * must release with [`qpfer_string_free`].
 *
 * The protocol outcome (abort flag, feasibility, key length) is encoded
 * in the report, not in the status: the status only reports whether the
 * simulation itself could run.
 *
 * # Safety
 *
 * `config_json` must be a NUL-terminated string; `out_json` must be valid
 * for writes or null.
 */
enum QpferStatus qpfer_simulate_json(const char *config_json, char **out_json);

/**
 * Releases a string returned by this library. Null is a no-op.
 *
 * # Safety
 *
 * `s` must be null or a pointer returned by a qpfer function that has not
 * been freed yet.
 */
void qpfer_string_free(char *s);

/**
 * Largest probability deviation between the optical receiver model and
 * the record-level decode semantics, swept over every code state and
 * joint Pauli error of the variant. Values above 1e-12 indicate a bug.
 *
 * # Safety
 *
 * `out` must be valid for writes or null.
 */
enum QpferStatus qpfer_optics_max_deviation(uint32_t variant, double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* QPFER_H */
