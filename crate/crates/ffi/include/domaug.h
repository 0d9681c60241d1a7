#ifndef DOMAUG_H
#define DOMAUG_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The non-zero values shared with the CLI use the same
 * numbers as its exit codes.
 */
typedef enum DomaugStatus {
  DOMAUG_STATUS_OK = 0,
  DOMAUG_STATUS_CONFIG = 2,
  DOMAUG_STATUS_DATA = 3,
  DOMAUG_STATUS_TIMEOUT = 4,
  DOMAUG_STATUS_NULL_POINTER = 5,
  DOMAUG_STATUS_INVALID_ARGUMENT = 6,
  DOMAUG_STATUS_PANIC = 7,
} DomaugStatus;

/**
 * Which split a dataset directory plays.
 */
typedef enum DomaugRole {
  DOMAUG_ROLE_SOURCE = 0,
  DOMAUG_ROLE_TARGET = 1,
  DOMAUG_ROLE_AUGMENTED = 2,
} DomaugRole;

/**
 * Opaque pipeline configuration.
 */
typedef struct DomaugConfig DomaugConfig;

/**
 * Opaque loaded dataset split.
 */
typedef struct DomaugDataset DomaugDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next `domaug_*` call on the same thread.
 */
const char *domaug_last_error_message(void);

/**
 * Length of a builtin embedding vector.
 */
size_t domaug_builtin_dim(void);

/**
 * Loads a YOLO-style dataset directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DomaugStatus domaug_dataset_load(const char *path,
                                      enum DomaugRole role,
                                      struct DomaugDataset **out);

/**
 * Number of images in the dataset, 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from `domaug_dataset_load`.
 */
size_t domaug_dataset_len(const struct DomaugDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle from `domaug_dataset_load` that has not
 * been freed.
 */
void domaug_dataset_free(struct DomaugDataset *dataset);

/**
 * Creates a configuration holding the defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DomaugStatus domaug_config_default(struct DomaugConfig **out);

/**
 * Reads a TOML configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DomaugStatus domaug_config_from_file(const char *path, struct DomaugConfig **out);

/**
 * Overrides one key, e.g. `("k", "0.6")` or `("metric", "cosine")`.
 *
 * # Safety
 * `config` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum DomaugStatus domaug_config_set(struct DomaugConfig *config,
                                    const char *key,
                                    const char *value);

/**
 * # Safety
 * `config` must be null or a handle that has not been freed.
 */
void domaug_config_free(struct DomaugConfig *config);

/**
 * Runs the epoch loop into `run_dir`. The config must carry a seed.
 * `out_total_kept` may be null.
 *
 * # Safety
 * Handles must be live; `run_dir` a NUL-terminated string.
 */
enum DomaugStatus domaug_run(const struct DomaugDataset *source,
                             const struct DomaugDataset *target,
                             const struct DomaugConfig *config,
                             const char *run_dir,
                             size_t *out_total_kept);

/**
 * Squared distance between `candidate` (length `dim`) and the mean of the
 * `n_targets × dim` matrix `targets`.
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes; `out` must be valid.
 */
enum DomaugStatus domaug_mmd_sq(const double *candidate,
                                const double *targets,
                                size_t n_targets,
                                size_t dim,
                                double *out);

/**
 * Summed cosine distance from `candidate` to each target row. Zero-norm
 * terms count as distance 1; their number goes to `out_zero_terms` when it
 * is not null.
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes; `out` must be valid.
 */
enum DomaugStatus domaug_cosine_dist(const double *candidate,
                                     const double *targets,
                                     size_t n_targets,
                                     size_t dim,
                                     double *out,
                                     size_t *out_zero_terms);

/**
 * Shrinkage filter over `n` distances. Writes the indices of the kept
 * entries in ascending distance order (ties by lower index) into
 * `out_indices`, which must hold `n` slots, and their count into `out_len`.
 *
 * # Safety
 * `distances` and `out_indices` must hold `n` elements; `out_len` valid.
 */
enum DomaugStatus domaug_filter_top_k(const double *distances,
                                      size_t n,
                                      double k,
                                      size_t *out_indices,
                                      size_t *out_len);

/**
 * Row-major `h × w` Gaussian blend weights for a `w × h` box inside a
 * `image_w × image_h` image. `out` must hold `w * h` values.
 *
 * # Safety
 * `out` must point to `w * h` writable doubles.
 */
enum DomaugStatus domaug_gaussian_weight_map(uint32_t w,
                                             uint32_t h,
                                             uint32_t image_w,
                                             uint32_t image_h,
                                             double *out);

/**
 * Builtin embedding of an interleaved RGB8 image (`width * height * 3`
 * bytes, no row padding). `out` must hold `domaug_builtin_dim()` values.
 *
 * # Safety
 * `rgb` must hold `width * height * 3` bytes; `out` the stated length.
 */
enum DomaugStatus domaug_embed_builtin(const uint8_t *rgb,
                                       uint32_t width,
                                       uint32_t height,
                                       double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DOMAUG_H */
