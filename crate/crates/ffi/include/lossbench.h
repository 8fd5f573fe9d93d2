/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef LOSSBENCH_H
#define LOSSBENCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LbStatus {
  LB_STATUS_OK = 0,
  LB_STATUS_NULL_POINTER = 1,
  LB_STATUS_INVALID_ARGUMENT = 2,
  LB_STATUS_SHAPE = 3,
  LB_STATUS_NON_FINITE = 4,
  LB_STATUS_MISSING_LABELS = 5,
  LB_STATUS_MISALIGNED = 6,
  LB_STATUS_PARSE = 7,
  LB_STATUS_IO = 8,
  LB_STATUS_PANIC = 9,
} LbStatus;

typedef enum LbCombineMethod {
  LB_COMBINE_METHOD_VOTE = 0,
  LB_COMBINE_METHOD_SIMPLE = 1,
  LB_COMBINE_METHOD_WEIGHTED = 2,
} LbCombineMethod;

/*
 Opaque N×K probability matrix with optional labels.
 */
typedef struct LbPredictions LbPredictions;

/*
 Loss family and hyperparameters; `family` indexes the order of
 `lb_loss_family_from_name` names.
 */
typedef struct LbLossSpec {
  uint32_t family;
  double beta;
  double lambda;
  double gamma;
  double sigma;
} LbLossSpec;

/*
 Headline metrics of a labeled prediction matrix; undefined AUCs are NaN.
 */
typedef struct LbMetricSummary {
  uint64_t n;
  double accuracy;
  double precision_weighted;
  double recall_weighted;
  double f1_weighted;
  double mcc;
  double auroc_macro;
  double auprc_macro;
  double log_loss;
} LbMetricSummary;

typedef struct LbMaskMetrics {
  double iou;
  double dice;
  double accuracy;
} LbMaskMetrics;

/*
 Segmentation loss parameters; `family` follows `lb_seg_loss_spec_default`.
 */
typedef struct LbSegLossSpec {
  uint32_t family;
  double bce_weight;
  double alpha_fp;
  double beta_fn;
  double gamma_ft;
  double focal_alpha;
  double focal_gamma;
  double epsilon;
} LbSegLossSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the most recent failure on this thread, or NULL. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *lb_last_error_message(void);

/*
 Library version, a static NUL-terminated string.
 */
const char *lb_version(void);

/*
 Builds a handle from `n·k` row-major probabilities and optional `n` labels
 (pass NULL for unlabeled data). Rows must sum to 1.
 */
enum LbStatus lb_predictions_new(const double *probs,
                                 size_t n,
                                 size_t k,
                                 const uint32_t *labels,
                                 struct LbPredictions **out);

/*
 Reads a `sample_id,true_label,p_0,…` CSV.
 */
enum LbStatus lb_predictions_read_csv(const char *path, struct LbPredictions **out);

enum LbStatus lb_predictions_write_csv(const struct LbPredictions *h, const char *path);

/*
 Releases a handle; NULL is ignored.
 */
void lb_predictions_free(struct LbPredictions *h);

enum LbStatus lb_predictions_shape(const struct LbPredictions *h, size_t *n, size_t *k);

/*
 Copies the probabilities into `out` (`len` must equal n·k).
 */
enum LbStatus lb_predictions_probs(const struct LbPredictions *h, double *out, size_t len);

/*
 Index of a loss family by its snake_case name (e.g. `calibrated_cce`).
 */
enum LbStatus lb_loss_family_from_name(const char *name, uint32_t *family);

/*
 Default hyperparameters for `family`.
 */
enum LbStatus lb_loss_spec_default(uint32_t family, struct LbLossSpec *out);

/*
 Loss of `n×k` logits against integer labels; `grad_logits` (n·k values)
 receives the gradient unless NULL.
 */
enum LbStatus lb_loss_evaluate(const struct LbLossSpec *spec,
                               const double *logits,
                               const uint32_t *labels,
                               size_t n,
                               size_t k,
                               double *value,
                               double *grad_logits);

enum LbStatus lb_metric_summary(const struct LbPredictions *h, struct LbMetricSummary *out);

/*
 Normal-approximation interval for a proportion-like metric over `n` samples.
 */
enum LbStatus lb_wald_ci(double metric, uint64_t n, double level, double *lo, double *hi);

/*
 Exact binomial interval for `successes` out of `n`.
 */
enum LbStatus lb_clopper_pearson_ci(uint64_t successes,
                                    uint64_t n,
                                    double level,
                                    double *lo,
                                    double *hi);

/*
 Log-loss-minimizing simplex weights for `m` labeled, aligned models.
 */
enum LbStatus lb_fit_weights(const struct LbPredictions *const *models,
                             size_t m,
                             double *weights,
                             double *log_loss);

/*
 Combines `m` aligned models; `weights` (m values) is read only for
 `LB_COMBINE_METHOD_WEIGHTED`.
 */
enum LbStatus lb_combine(const struct LbPredictions *const *models,
                         size_t m,
                         enum LbCombineMethod method,
                         const double *weights,
                         struct LbPredictions **out);

/*
 IoU, Dice and pixel accuracy of two hard `h×w` masks.
 */
enum LbStatus lb_mask_metrics(const double *pred,
                              const double *truth,
                              size_t h,
                              size_t w,
                              struct LbMaskMetrics *out);

/*
 Pixelwise AND of `m` hard masks, each `h·w` values laid out back to back.
 */
enum LbStatus lb_mask_and(const double *masks, size_t m, size_t h, size_t w, double *out);

/*
 Defaults for family 0 bce, 1 weighted_bce_dice, 2 focal, 3 tversky, 4 focal_tversky.
 */
enum LbStatus lb_seg_loss_spec_default(uint32_t family, struct LbSegLossSpec *out);

/*
 Loss of a soft `h×w` prediction against a hard truth mask.
 */
enum LbStatus lb_seg_loss(const struct LbSegLossSpec *spec,
                          const double *pred,
                          const double *truth,
                          size_t h,
                          size_t w,
                          double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LOSSBENCH_H */
