#ifndef DEXKIT_H
#define DEXKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Doubles per vertex in a packed hand frame.
 */
#define DEX_VERTEX_STRIDE 7

#define DEX_VERTEX_COUNT 26

#define DEX_JOINT_COUNT 16

typedef enum DexStatus {
  DEX_STATUS_OK = 0,
  DEX_STATUS_NULL_POINTER = 1,
  DEX_STATUS_INVALID_ARGUMENT = 2,
  DEX_STATUS_INVALID_FRAME = 3,
  DEX_STATUS_DEGENERATE_HAND = 4,
  DEX_STATUS_KINEMATICS = 5,
  DEX_STATUS_CURATION = 6,
  DEX_STATUS_PARSE = 7,
  DEX_STATUS_PANIC = 8,
} DexStatus;

/**
 * Gesture machine output. Values are stable.
 */
typedef enum DexGestureEvent {
  DEX_GESTURE_EVENT_NONE = 0,
  DEX_GESTURE_EVENT_START = 1,
  DEX_GESTURE_EVENT_STOP = 2,
} DexGestureEvent;

/**
 * Finger indices accepted by the kinematics functions.
 */
typedef enum DexFinger {
  DEX_FINGER_INDEX = 0,
  DEX_FINGER_MIDDLE = 1,
  DEX_FINGER_RING = 2,
  DEX_FINGER_THUMB = 3,
} DexFinger;

/**
 * Fist-gesture state machine.
 */
typedef struct DexGesture DexGesture;

/**
 * Stateful retargeter for one operator stream.
 */
typedef struct DexRetargeter DexRetargeter;

/**
 * Robot rig: kinematic tables, mounts, limits and retargeting constants.
 */
typedef struct DexRig DexRig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call on this thread.
 */
const char *dex_last_error(void);

/**
 * Creates the default Allegro rig.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DexStatus dex_rig_new_default(struct DexRig **out);

/**
 * Parses and validates a rig from a NUL-terminated JSON string.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a pointer write.
 */
enum DexStatus dex_rig_from_json(const char *json, struct DexRig **out);

/**
 * Releases a rig. Null is ignored.
 *
 * # Safety
 * `rig` must come from a `dex_rig_*` constructor and not be used afterwards.
 */
void dex_rig_free(struct DexRig *rig);

/**
 * Number of joints in the chain of `finger`.
 *
 * # Safety
 * `rig` must be a live handle; `out` must be valid for a write.
 */
enum DexStatus dex_chain_dof(const struct DexRig *rig, uint32_t finger_index, uintptr_t *out);

/**
 * Fingertip position in the hand base frame for joint angles `theta`.
 *
 * # Safety
 * `theta` must hold `len` doubles and `out_tip` 3 doubles.
 */
enum DexStatus dex_fk(const struct DexRig *rig,
                      uint32_t finger_index,
                      const double *theta,
                      uintptr_t len,
                      double *out_tip);

/**
 * Solves IK for one finger from `seed`. Non-convergence is not an error:
 * the best angles are written with `*out_converged == false`.
 *
 * # Safety
 * `target` must hold 3 doubles; `seed` and `out_theta` `len` doubles.
 */
enum DexStatus dex_ik(const struct DexRig *rig,
                      uint32_t finger_index,
                      const double *target,
                      const double *seed,
                      uintptr_t len,
                      double *out_theta,
                      double *out_residual,
                      bool *out_converged);

/**
 * Retargets one frame without tracking state: 16 target angles and the
 * command `q_target - q_current`.
 *
 * # Safety
 * `vertices` must hold 26×7 doubles; `q_current`, `out_q_target` and
 * `out_dq` 16 doubles each.
 */
enum DexStatus dex_retarget_frame(const struct DexRig *rig,
                                  double t,
                                  const double *vertices,
                                  const double *q_current,
                                  double *out_q_target,
                                  double *out_dq);

/**
 * Creates a tracking retargeter. The rig is copied.
 *
 * # Safety
 * `rig` must be a live handle; `out` must be valid for a pointer write.
 */
enum DexStatus dex_retargeter_new(const struct DexRig *rig, struct DexRetargeter **out);

/**
 * Retargets the next frame of a stream, warm-started from the previous one.
 *
 * # Safety
 * As [`dex_retarget_frame`], with a live `retargeter`.
 */
enum DexStatus dex_retargeter_step(struct DexRetargeter *retargeter,
                                   double t,
                                   const double *vertices,
                                   const double *q_current,
                                   double *out_q_target,
                                   double *out_dq);

/**
 * Forgets the warm start; the next step runs the full search.
 *
 * # Safety
 * `retargeter` must be a live handle.
 */
enum DexStatus dex_retargeter_reset(struct DexRetargeter *retargeter);

/**
 * Releases a retargeter. Null is ignored.
 *
 * # Safety
 * `retargeter` must come from [`dex_retargeter_new`] and not be used afterwards.
 */
void dex_retargeter_free(struct DexRetargeter *retargeter);

/**
 * True when every non-thumb fingertip lies within `threshold` meters of the palm.
 *
 * # Safety
 * `vertices` must hold 26×7 doubles; `out` must be valid for a write.
 */
enum DexStatus dex_detect_fist(const double *vertices, double threshold, bool *out);

/**
 * Creates a gesture machine requiring `hold_time` seconds of fist per toggle.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum DexStatus dex_gesture_new(double hold_time, struct DexGesture **out);

/**
 * Feeds one fist sample at time `t`.
 *
 * # Safety
 * `gesture` must be a live handle; `out_event` must be valid for a write.
 */
enum DexStatus dex_gesture_step(struct DexGesture *gesture,
                                bool fist,
                                double t,
                                enum DexGestureEvent *out_event);

/**
 * Whether the machine is currently recording.
 *
 * # Safety
 * `gesture` must be a live handle; `out` must be valid for a write.
 */
enum DexStatus dex_gesture_recording(const struct DexGesture *gesture, bool *out);

/**
 * Releases a gesture machine. Null is ignored.
 *
 * # Safety
 * `gesture` must come from [`dex_gesture_new`] and not be used afterwards.
 */
void dex_gesture_free(struct DexGesture *gesture);

/**
 * HDBSCAN over `n` row-major points of dimension `dim`: GLOSH outlier
 * scores in [0, 1] and cluster labels (-1 for noise).
 *
 * # Safety
 * `points` must hold `n * dim` doubles; `out_scores` and `out_labels` `n` values.
 */
enum DexStatus dex_glosh(const double *points,
                         uintptr_t n,
                         uintptr_t dim,
                         uintptr_t min_samples,
                         uintptr_t min_cluster_size,
                         double *out_scores,
                         int64_t *out_labels);

/**
 * Percentile filter over fused outlier scores: `out_keep[i]` is true when
 * demo `i` scores at or below the nearest-rank `p`-th percentile.
 *
 * # Safety
 * `scores` and `out_keep` must hold `n` values.
 */
enum DexStatus dex_filter_percentile(const double *scores, uintptr_t n, double p, bool *out_keep);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEXKIT_H */
