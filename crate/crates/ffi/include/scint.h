#ifndef SCINT_H
#define SCINT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result code of every fallible call.
typedef enum ScintStatus {
  SCINT_STATUS_OK = 0,
  // A required pointer argument was null.
  SCINT_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  SCINT_STATUS_INVALID_UTF8 = 2,
  // Bad parameters or hyperparameters.
  SCINT_STATUS_CONFIG = 3,
  // File could not be read or written.
  SCINT_STATUS_IO = 4,
  // Input malformed or violating a precondition.
  SCINT_STATUS_DATA = 5,
  // Argument outside a function's domain.
  SCINT_STATUS_DOMAIN = 6,
  // Numerical failure (non-convergence, singular matrix).
  SCINT_STATUS_NUMERICAL = 7,
  // A Rust panic was caught at the boundary.
  SCINT_STATUS_PANIC = 8,
} ScintStatus;

// Labelled feature rows.
typedef struct ScintDataset ScintDataset;

// A trained classifier.
typedef struct ScintModel ScintModel;

// Confusion counts, `counts[predicted - 1][truth - 1]`.
typedef struct ScintConfusion {
  uint64_t counts[3][3];
} ScintConfusion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null if none. The pointer
// stays valid until the next failing call on this thread.
const char *scint_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *scint_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void scint_string_free(char *s);

// Severity class (1, 2 or 3) of an S4 value.
//
// # Safety
// `out_class` must be null or point to writable memory.
enum ScintStatus scint_classify_s4(double s4, uint8_t *out_class);

// Pierce point of a line of sight on a thin shell at `shell_height_km`
// over a 6371 km Earth. Longitude is returned in [0, 360).
//
// # Safety
// `out_lat_deg` and `out_lon_deg` must be null or point to writable memory.
enum ScintStatus scint_compute_ipp(double receiver_lat_deg,
                                   double receiver_lon_deg,
                                   double elevation_deg,
                                   double azimuth_deg,
                                   double shell_height_km,
                                   double *out_lat_deg,
                                   double *out_lon_deg);

// Builds a dataset from `n_rows` rows of 7 features (row-major: day of
// year, hour of day, IPP latitude, IPP longitude, Kp, SSN, F10.7) and
// class labels 1-3.
//
// # Safety
// `features` must point to `7 * n_rows` doubles and `labels` to `n_rows`
// bytes; `out` must be null or writable.
enum ScintStatus scint_dataset_new(const double *features,
                                   const uint8_t *labels,
                                   uintptr_t n_rows,
                                   struct ScintDataset **out);

// Reads a dataset CSV as written by `scint preprocess`.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be null or writable.
enum ScintStatus scint_dataset_read_csv(const char *path, struct ScintDataset **out);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
uintptr_t scint_dataset_len(const struct ScintDataset *dataset);

// Per-class row counts.
//
// # Safety
// `dataset` must be a live handle and `out_counts` point to 3 writable `size_t`.
enum ScintStatus scint_dataset_class_counts(const struct ScintDataset *dataset,
                                            uintptr_t *out_counts);

// # Safety
// `dataset` must be null or a handle not yet freed.
void scint_dataset_free(struct ScintDataset *dataset);

// Trains a classifier. `params` is a model name (`tree`, `nb`, `svm`,
// `knn`, `boosted`, `bagged`) for default hyperparameters, or a JSON
// object such as `{"model_kind":"bagged_trees","n_learners":50}`.
//
// # Safety
// `dataset` must be a live handle, `params` a NUL-terminated string and
// `out` null or writable.
enum ScintStatus scint_model_train(const struct ScintDataset *dataset,
                                   const char *params,
                                   uint64_t seed,
                                   struct ScintModel **out);

// Loads a model saved by `scint train` or [`scint_model_save`].
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be null or writable.
enum ScintStatus scint_model_load(const char *path, struct ScintModel **out);

// # Safety
// `model` must be a live handle and `path` a NUL-terminated string.
enum ScintStatus scint_model_save(const struct ScintModel *model, const char *path);

// Serialized model; release with [`scint_string_free`].
//
// # Safety
// `model` must be a live handle and `out_json` null or writable.
enum ScintStatus scint_model_to_json(const struct ScintModel *model, char **out_json);

// Predicts one row of `n_features` values. `out_scores`, when not null,
// receives the three class scores.
//
// # Safety
// `model` must be a live handle, `features` point to `n_features`
// doubles, `out_class` be writable and `out_scores` null or point to 3
// writable doubles.
enum ScintStatus scint_model_predict(const struct ScintModel *model,
                                     const double *features,
                                     uintptr_t n_features,
                                     uint8_t *out_class,
                                     double *out_scores);

// # Safety
// `model` must be null or a handle not yet freed.
void scint_model_free(struct ScintModel *model);

// Confusion counts of paired class labels (1-3).
//
// # Safety
// `predicted` and `truth` must point to `n` bytes; `out` must be writable.
enum ScintStatus scint_confusion_accumulate(const uint8_t *predicted,
                                            const uint8_t *truth,
                                            uintptr_t n,
                                            struct ScintConfusion *out);

// Trace over total. Fails with `Data` on an empty matrix.
//
// # Safety
// `cm` must point to a valid struct and `out_accuracy` be writable.
enum ScintStatus scint_confusion_accuracy(const struct ScintConfusion *cm, double *out_accuracy);

// One-vs-rest precision and recall of `class` (1-3). A rate whose
// denominator is zero is reported as NaN.
//
// # Safety
// `cm` must point to a valid struct; the outputs must be writable.
enum ScintStatus scint_confusion_precision_recall(const struct ScintConfusion *cm,
                                                  uint8_t class_,
                                                  double *out_precision,
                                                  double *out_recall);

// Pooled confusion counts of `k`-fold cross-validation.
//
// # Safety
// `dataset` must be a live handle, `params` as for [`scint_model_train`]
// and `out` writable.
enum ScintStatus scint_cross_validate(const struct ScintDataset *dataset,
                                      const char *params,
                                      uintptr_t k,
                                      uint64_t seed,
                                      struct ScintConfusion *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCINT_H */
