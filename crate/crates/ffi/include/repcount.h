#ifndef REPCOUNT_H
#define REPCOUNT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcCountingMode {
  // Every frame counts.
  RC_COUNTING_MODE_SEGMENTED = 0,
  // A frame counts only when sqrt(periodicity * period_score) > tau.
  RC_COUNTING_MODE_GATED = 1,
} RcCountingMode;

// Result code of every fallible call.
typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_ARGUMENT = 2,
  RC_STATUS_DIVISION_BY_ZERO = 3,
  RC_STATUS_EMPTY_SET = 4,
  RC_STATUS_DUPLICATE_ID = 5,
  RC_STATUS_TRACK_TOO_SHORT = 6,
  RC_STATUS_PANIC = 7,
} RcStatus;

// Ground-truth and predicted counts accumulated one video at a time.
typedef struct RcEvalSet RcEvalSet;

// Per-frame predictions of one video at one stride.
typedef struct RcTrack RcTrack;

typedef struct RcCountingOptions {
  enum RcCountingMode mode;
  double tau;
  // Drop frames after the last full window instead of counting them.
  bool drop_tail;
  // With `drop_tail`, pad a track shorter than one window.
  bool pad_short;
} RcCountingOptions;

typedef struct RcMetrics {
  size_t n_videos;
  double oboa;
  double oboe;
  double mae;
  double alpha_used;
} RcMetrics;

typedef struct RcCountResult {
  double count;
  double period_score_mean;
  size_t speed_chosen;
} RcCountResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL if none.
const char *rc_last_error(void);

// Library version as a static NUL-terminated string.
const char *rc_version(void);

// Segmented mode, tau 0.5, trailing partial window counted.
struct RcCountingOptions rc_counting_options_default(void);

struct RcEvalSet *rc_eval_set_new(void);

// # Safety
// `set` must come from [`rc_eval_set_new`] and not be used afterwards.
// NULL is ignored.
void rc_eval_set_free(struct RcEvalSet *set);

// Adds one video. Values are validated when the set is evaluated.
//
// # Safety
// `set` must be a live handle and `video_id` a NUL-terminated string.
enum RcStatus rc_eval_set_push(struct RcEvalSet *set,
                               const char *video_id,
                               double gt_count,
                               double pred_count);

// Number of videos in the set; 0 for NULL.
//
// # Safety
// `set` must be a live handle or NULL.
size_t rc_eval_set_len(const struct RcEvalSet *set);

// OBOA, OBOE and MAE over the set with the given α.
//
// # Safety
// `set` must be a live handle and `out` writable.
enum RcStatus rc_evaluate(const struct RcEvalSet *set,
                          double alpha,
                          bool round_predictions,
                          struct RcMetrics *out);

// Creates an empty track, or returns NULL with the last error set.
//
// # Safety
// `video_id` must be a NUL-terminated string.
struct RcTrack *rc_track_new(const char *video_id, size_t speed, size_t window_size);

// # Safety
// `track` must come from [`rc_track_new`] and not be used afterwards.
// NULL is ignored.
void rc_track_free(struct RcTrack *track);

// Appends `n` frames given as three parallel arrays. Nothing is appended
// if any frame is out of range.
//
// # Safety
// `track` must be a live handle and each array must hold `n` values.
enum RcStatus rc_track_push_frames(struct RcTrack *track,
                                   const double *periodicity,
                                   const double *period_len,
                                   const double *period_score,
                                   size_t n);

// # Safety
// `track` must be a live handle or NULL.
size_t rc_track_len(const struct RcTrack *track);

// Contribution of one frame to the count: `1/period_len` when counted,
// else 0.
//
// # Safety
// `options` and `out` must be valid pointers.
enum RcStatus rc_per_frame_count(double periodicity,
                                 double period_len,
                                 double period_score,
                                 const struct RcCountingOptions *options,
                                 double *out);

// Counts a single track.
//
// # Safety
// `track`, `options` and `out` must be valid pointers.
enum RcStatus rc_count_track(const struct RcTrack *track,
                             const struct RcCountingOptions *options,
                             struct RcCountResult *out);

// Counts each of `strides` and reports the stride with the highest mean
// period score. Scores within `tie_tolerance` of the best go to the lowest
// stride. `tracks` must hold one track per stride, all of the same video.
//
// # Safety
// `tracks` must point to `n_tracks` live handles and `strides` to
// `n_strides` values; `options` and `out` must be valid.
enum RcStatus rc_multispeed_count(const struct RcTrack *const *tracks,
                                  size_t n_tracks,
                                  const size_t *strides,
                                  size_t n_strides,
                                  double tie_tolerance,
                                  const struct RcCountingOptions *options,
                                  struct RcCountResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPCOUNT_H */
