/* C interface to the gatekeeper cascade toolkit. */

#pragma once

/* Generated with cbindgen:0.29.4 */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every FFI call.
typedef enum GkStatus {
  GK_STATUS_OK = 0,
  GK_STATUS_NULL_ARGUMENT = 1,
  GK_STATUS_INVALID_ARGUMENT = 2,
  GK_STATUS_NUMERIC_ERROR = 3,
  GK_STATUS_IO_ERROR = 4,
  GK_STATUS_UTF8_ERROR = 5,
  GK_STATUS_BUFFER_TOO_SMALL = 6,
  GK_STATUS_PANIC = 7,
} GkStatus;

// Which deferral curve to evaluate.
typedef enum GkCurveKind {
  GK_CURVE_REALIZED = 0,
  GK_CURVE_IDEAL = 1,
  GK_CURVE_RANDOM = 2,
} GkCurveKind;

// Which confidence signal to derive from logits.
typedef enum GkGating {
  GK_GATING_MAX_SOFTMAX = 0,
  GK_GATING_NEG_PRED_ENTROPY = 1,
} GkGating;

// Opaque record-set handle.
typedef struct GkRecords GkRecords;

// Metric suite of one evaluated record set. NaN marks absent values
// (graded-mode overlap/AUROC/dominance, degenerate deferral headroom,
// undefined correlation).
typedef struct GkMetrics {
  double acc_s;
  double acc_l;
  double delta;
  double s_o;
  double s_auroc;
  double s_d;
  double pearson_rho;
} GkMetrics;

// Hybrid-loss terms for one batch.
typedef struct GkLossBreakdown {
  double l_corr;
  double l_incorr;
  double l_total;
  size_t n_corr;
  size_t n_incorr;
} GkLossBreakdown;

// Toolkit version as a static nul-terminated string.
const char *gk_version(void);

// Build a binary-mode record set from parallel arrays. Correctness flags
// are 0 or 1.
//
// # Safety
// `signals`, `s_correct`, `l_correct` must point to `len` readable
// elements; `out` must be a valid pointer.
enum GkStatus gk_records_from_binary(const double *signals,
                                     const uint8_t *s_correct,
                                     const uint8_t *l_correct,
                                     size_t len,
                                     struct GkRecords **out);

// Build a graded-mode record set from parallel score arrays in `[0, 1]`.
//
// # Safety
// `signals`, `s_scores`, `l_scores` must point to `len` readable
// elements; `out` must be a valid pointer.
enum GkStatus gk_records_from_graded(const double *signals,
                                     const double *s_scores,
                                     const double *l_scores,
                                     size_t len,
                                     struct GkRecords **out);

// Read a record set from the interchange CSV
// (`index,signal,s_value,l_value,mode`).
//
// # Safety
// `path` must be a nul-terminated string; `out` must be valid.
enum GkStatus gk_records_read_csv(const char *path, struct GkRecords **out);

// Write a record set to the interchange CSV.
//
// # Safety
// `records` must be a live handle; `path` must be nul-terminated.
enum GkStatus gk_records_write_csv(const struct GkRecords *records, const char *path);

// Number of records in the set.
//
// # Safety
// `records` must be a live handle; `out` must be valid.
enum GkStatus gk_records_len(const struct GkRecords *records, size_t *out);

// Release a record handle. Passing NULL is a no-op.
//
// # Safety
// `records` must have been returned by a `gk_records_*` constructor and
// not freed before.
void gk_records_free(struct GkRecords *records);

// Run a full threshold sweep and fill the metric suite. `grid_points`
// controls the overlap estimator's density grid (0 selects the default);
// `unit_interval_domain` selects reflected `[0,1]` support for bounded
// confidence signals, otherwise the padded data span is used.
//
// # Safety
// `records` must be a live handle; `out` must be valid.
enum GkStatus gk_records_metrics(const struct GkRecords *records,
                                 size_t grid_points,
                                 bool unit_interval_domain,
                                 struct GkMetrics *out);

// Evaluate one deferral curve on its `n + 1` cut points. `capacity` is
// the element count of both output buffers; `written` receives the
// number of points.
//
// # Safety
// `records` must be a live handle; `ratios_out` and `accuracies_out`
// must hold at least `capacity` elements; `written` must be valid.
enum GkStatus gk_records_curve(const struct GkRecords *records,
                               enum GkCurveKind kind,
                               double *ratios_out,
                               double *accuracies_out,
                               size_t capacity,
                               size_t *written);

// Evaluate the hybrid correctness-aware loss on a batch of logits
// (row-major, `examples x classes`). When `grad_out` is non-NULL it
// receives the analytic logit gradient in the same layout.
//
// # Safety
// `logits` must hold `examples * classes` elements, `labels` must hold
// `examples` elements, `breakdown_out` must be valid, and `grad_out`
// must be NULL or hold `examples * classes` elements.
enum GkStatus gk_loss_classification(const double *logits,
                                     const uint32_t *labels,
                                     size_t examples,
                                     size_t classes,
                                     double alpha,
                                     struct GkLossBreakdown *breakdown_out,
                                     double *grad_out);

// Derive one confidence signal per logit row: max softmax, or negative
// entropy of the row distribution.
//
// # Safety
// `logits` must hold `examples * classes` elements; `signals_out` must
// hold `examples` elements.
enum GkStatus gk_signals_from_logits(const double *logits,
                                     size_t examples,
                                     size_t classes,
                                     enum GkGating gating,
                                     double *signals_out);

// Pick the acceptance threshold whose deferred fraction is closest to
// the target on the calibration signals; ties prefer fewer deferrals.
//
// # Safety
// `signals` must hold `len` elements; `tau_out` and `achieved_out` must
// be valid.
enum GkStatus gk_calibrate_threshold(const double *signals,
                                     size_t len,
                                     double target_deferral_ratio,
                                     double *tau_out,
                                     double *achieved_out);
