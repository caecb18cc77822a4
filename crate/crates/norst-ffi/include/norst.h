#ifndef NORST_H
#define NORST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum NorstStatus {
  NorstStatus_Ok = 0,
  NorstStatus_NullPointer = 1,
  NorstStatus_InvalidArgument = 2,
  NorstStatus_DimensionMismatch = 3,
  NorstStatus_NumericalError = 4,
  NorstStatus_BufferTooSmall = 5,
  NorstStatus_Panic = 6,
} NorstStatus;

/**
 * Opaque tracker handle.
 */
typedef struct NorstTracker NorstTracker;

/**
 * Tracker knobs, mirroring the Rust parameter struct.
 */
typedef struct NorstParams {
  uintptr_t r;
  uintptr_t k_steps;
  uintptr_t alpha;
  double omega_supp;
  double xi;
  double lambda_thresh;
  bool adaptive_thresholds;
} NorstParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL when no
 * failure has occurred. The pointer stays valid until the next failing
 * call on the same thread.
 */
const char *norst_last_error_message(void);

/**
 * Fills `out` with the derived tracker parameters (window, refinement
 * count, thresholds) from problem facts.
 *
 * # Safety
 * `out` must point to writable `NorstParams` storage.
 */
enum NorstStatus norst_suggest_params(uintptr_t n,
                                      uintptr_t r,
                                      double f,
                                      double lambda_plus,
                                      double x_min,
                                      double zeta,
                                      struct NorstParams *out);

/**
 * Creates a tracker from an initial subspace estimate.
 *
 * `p_init` is an `n x r` column-major orthonormal matrix; `t_start` is the
 * global index of the first streamed frame (the training frame count).
 * On success `*out` owns the tracker; release it with
 * [`norst_tracker_free`].
 *
 * # Safety
 * `p_init` must point to `n * r` readable doubles and `out` to writable
 * pointer storage.
 */
enum NorstStatus norst_tracker_new(const double *p_init,
                                   uintptr_t n,
                                   uintptr_t r,
                                   const struct NorstParams *params,
                                   uintptr_t t_start,
                                   struct NorstTracker **out);

/**
 * Creates a tracker seeded with a random orthogonal basis (the
 * missing-data initialization); tracking starts at frame 0.
 *
 * # Safety
 * `out` must point to writable pointer storage.
 */
enum NorstStatus norst_tracker_new_random_init(uintptr_t n,
                                               const struct NorstParams *params,
                                               uint64_t seed,
                                               struct NorstTracker **out);

/**
 * Processes one frame: splits `y` into outlier and low-rank parts, writing
 * both (`n` doubles each), and advances the detect/update machinery.
 *
 * # Safety
 * `handle` must come from a constructor and not be freed; `y`, `x_hat_out`
 * and `l_hat_out` must point to `n` readable / writable doubles.
 */
enum NorstStatus norst_tracker_process_frame(struct NorstTracker *handle,
                                             const double *y,
                                             uintptr_t n,
                                             double *x_hat_out,
                                             double *l_hat_out);

/**
 * Processes one frame whose outlier support (or missing set) is known:
 * the l1 step is skipped and the listed entries are re-estimated by least
 * squares.
 *
 * # Safety
 * As [`norst_tracker_process_frame`]; additionally `support` must point to
 * `support_len` readable indices, each `< n`.
 */
enum NorstStatus norst_tracker_process_masked_frame(struct NorstTracker *handle,
                                                    const double *y,
                                                    uintptr_t n,
                                                    const uintptr_t *support,
                                                    uintptr_t support_len,
                                                    double *x_hat_out,
                                                    double *l_hat_out);

/**
 * Number of entries in the most recent frame's estimated outlier support.
 *
 * # Safety
 * `handle` must be a live tracker; `out` must be writable.
 */
enum NorstStatus norst_tracker_last_support_len(const struct NorstTracker *handle, uintptr_t *out);

/**
 * Copies the most recent frame's support indices into `out` (capacity
 * `cap`); fails with `BufferTooSmall` when `cap` is insufficient.
 *
 * # Safety
 * `handle` must be a live tracker; `out` must point to `cap` writable
 * `usize` slots.
 */
enum NorstStatus norst_tracker_last_support(const struct NorstTracker *handle,
                                            uintptr_t *out,
                                            uintptr_t cap);

/**
 * Copies the current subspace estimate into `out` as an `n x r`
 * column-major matrix. `cap` is the number of doubles available.
 *
 * # Safety
 * `handle` must be a live tracker; `out` must point to `cap` writable
 * doubles.
 */
enum NorstStatus norst_tracker_current_basis(const struct NorstTracker *handle,
                                             double *out,
                                             uintptr_t cap);

/**
 * Number of change detections so far.
 *
 * # Safety
 * `handle` must be a live tracker; `out` must be writable.
 */
enum NorstStatus norst_tracker_detection_count(const struct NorstTracker *handle, uintptr_t *out);

/**
 * Global frame index of detection `idx`.
 *
 * # Safety
 * `handle` must be a live tracker; `out` must be writable.
 */
enum NorstStatus norst_tracker_detection(const struct NorstTracker *handle,
                                         uintptr_t idx,
                                         uintptr_t *out);

/**
 * Frames processed so far.
 *
 * # Safety
 * `handle` must be a live tracker; `out` must be writable.
 */
enum NorstStatus norst_tracker_frames_processed(const struct NorstTracker *handle, uintptr_t *out);

/**
 * Releases a tracker. NULL is a no-op.
 *
 * # Safety
 * `handle` must come from a constructor and not already be freed.
 */
void norst_tracker_free(struct NorstTracker *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NORST_H */
