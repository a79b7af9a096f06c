#ifndef LFQ_H
#define LFQ_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every call.
 */
typedef enum LfqStatus {
  LFQ_STATUS_OK = 0,
  LFQ_STATUS_NULL_ARGUMENT = 1,
  LFQ_STATUS_INVALID_UTF8 = 2,
  LFQ_STATUS_INVALID_ARGUMENT = 3,
  LFQ_STATUS_IO = 4,
  LFQ_STATUS_METRIC = 5,
  LFQ_STATUS_SCALING = 6,
  LFQ_STATUS_BENCH = 7,
  LFQ_STATUS_SERVICE = 8,
  LFQ_STATUS_PANIC = 9,
} LfqStatus;

/**
 * Parameter tables for the metrics.
 */
typedef struct LfqMetricConfig LfqMetricConfig;

/**
 * A directory of durable studies.
 */
typedef struct LfqStudyStore LfqStudyStore;

/**
 * Fitted `q = a + b / (1 + exp(-c (o - d)))`.
 */
typedef struct LfqLogistic {
  double a;
  double b;
  double c;
  double d;
} LfqLogistic;

typedef struct LfqCorrelation {
  double pcc;
  double srocc;
  double rmse;
  double outlier_ratio;
} LfqCorrelation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`) and returns the full message length.
 *
 * # Safety
 * `buf` is null or points to `len` writable bytes.
 */
size_t lfq_last_error(char *buf, size_t len);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void lfq_string_free(char *s);

/**
 * Bundled metric tables.
 *
 * # Safety
 * `out` is a valid pointer.
 */
enum LfqStatus lfq_metric_config_default(struct LfqMetricConfig **out);

/**
 * Tables from `dir`; files absent there keep their defaults.
 *
 * # Safety
 * `dir` is a NUL-terminated string and `out` a valid pointer.
 */
enum LfqStatus lfq_metric_config_load(const char *dir, struct LfqMetricConfig **out);

/**
 * # Safety
 * `cfg` is null or a live handle.
 */
void lfq_metric_config_free(struct LfqMetricConfig *cfg);

/**
 * Scores `test` against `reference`: interleaved RGB samples in `[0,1]`,
 * `width * height * 3` each. `metric` is one of `psnr_hvs`, `ms_ssim`,
 * `fsimc`, `iw_ssim`, `psnr`.
 *
 * # Safety
 * Pointers are valid for the sizes given; `metric` is NUL-terminated.
 */
enum LfqStatus lfq_metric_compute(const struct LfqMetricConfig *cfg,
                                  const char *metric,
                                  const double *reference,
                                  const double *test,
                                  size_t width,
                                  size_t height,
                                  double *out_value);

/**
 * Scores two image files (PNG or PPM).
 *
 * # Safety
 * Strings are NUL-terminated; `cfg` and `out_value` are valid.
 */
enum LfqStatus lfq_metric_compute_files(const struct LfqMetricConfig *cfg,
                                        const char *metric,
                                        const char *reference_path,
                                        const char *test_path,
                                        double *out_value);

/**
 * Case V scale values from an `n x n` row-major win matrix (`wins[i*n+j]`:
 * times `i` was preferred over `j`). `out_scores` receives `n` values with
 * the first condition at 0. `prior` is the Bayesian regularization weight.
 *
 * # Safety
 * `wins` holds `n*n` values and `out_scores` room for `n`.
 */
enum LfqStatus lfq_thurstone(const double *wins, size_t n, double prior, double *out_scores);

/**
 * Least-squares logistic fit of `q` against `o`.
 *
 * # Safety
 * `o` and `q` hold `n` values; `out` is valid.
 */
enum LfqStatus lfq_logistic_fit(const double *o,
                                const double *q,
                                size_t n,
                                struct LfqLogistic *out);

double lfq_logistic_predict(struct LfqLogistic p, double o);

/**
 * PCC, SROCC, RMSE and outlier ratio of `predicted` against `observed`;
 * `half_widths` (CI half-widths of the observations) may be null.
 *
 * # Safety
 * Arrays hold `n` values; `out` is valid.
 */
enum LfqStatus lfq_correlate(const double *predicted,
                             const double *observed,
                             const double *half_widths,
                             size_t n,
                             struct LfqCorrelation *out);

/**
 * Opens (creating if needed) a study store and replays its logs.
 *
 * # Safety
 * `root` is NUL-terminated; `out` is valid.
 */
enum LfqStatus lfq_store_open(const char *root, struct LfqStudyStore **out);

/**
 * # Safety
 * `store` is null or a live handle.
 */
void lfq_store_free(struct LfqStudyStore *store);

/**
 * Registers a study manifest (JSON) whose images live under `assets_dir`.
 * `options_json` may be null for defaults. Writes the study id.
 *
 * # Safety
 * Strings are NUL-terminated; `out_id` is valid.
 */
enum LfqStatus lfq_store_create_study(const struct LfqStudyStore *store,
                                      const char *manifest_json,
                                      const char *assets_dir,
                                      const char *options_json,
                                      char **out_id);

/**
 * Registers an observer from an operator record (JSON); writes the
 * observer state as JSON.
 *
 * # Safety
 * Strings are NUL-terminated; `out_json` is valid.
 */
enum LfqStatus lfq_store_register(const struct LfqStudyStore *store,
                                  const char *study_id,
                                  const char *record_json,
                                  char **out_json);

/**
 * Serves the observer's next item; writes the directive as JSON.
 *
 * # Safety
 * Strings are NUL-terminated; `out_json` is valid.
 */
enum LfqStatus lfq_store_next(const struct LfqStudyStore *store,
                              const char *study_id,
                              const char *observer_id,
                              char **out_json);

/**
 * Records an answer (`left`, `right` or `not_sure`, as displayed).
 * `latency_ms` below zero means unknown. Writes the acknowledgement JSON.
 *
 * # Safety
 * Strings are NUL-terminated; `out_json` is valid.
 */
enum LfqStatus lfq_store_submit(const struct LfqStudyStore *store,
                                const char *study_id,
                                const char *observer_id,
                                const char *triplet_id,
                                const char *choice,
                                int64_t latency_ms,
                                char **out_json);

/**
 * Exports responses as newline-delimited JSON.
 *
 * # Safety
 * Strings are NUL-terminated; `out_ndjson` is valid.
 */
enum LfqStatus lfq_store_export(const struct LfqStudyStore *store,
                                const char *study_id,
                                bool include_training,
                                char **out_ndjson);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LFQ_H */
