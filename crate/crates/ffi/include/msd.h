#ifndef MSD_H
#define MSD_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * The concentration constant `e⁻¹/256`.
 */
#define MSD_C0 0.0014370290670759466

/**
 * Result codes.
 */
typedef enum MsdStatus {
  MSD_STATUS_OK = 0,
  MSD_STATUS_INVALID_ARGUMENT = 1,
  MSD_STATUS_DEGENERATE_INPUT = 2,
  MSD_STATUS_CONFIG = 3,
  MSD_STATUS_CALIBRATION = 4,
  MSD_STATUS_PARSE = 5,
  MSD_STATUS_IO = 6,
  MSD_STATUS_NULL_POINTER = 7,
  MSD_STATUS_PANIC = 8,
} MsdStatus;

typedef enum MsdNoiseKind {
  /**
   * `‖η‖ < level`.
   */
  MSD_NOISE_KIND_BOUNDED = 0,
  /**
   * `η ~ N(0, level² I)`.
   */
  MSD_NOISE_KIND_GAUSSIAN = 1,
} MsdNoiseKind;

/**
 * Opaque collection handle.
 */
typedef struct MsdCollection MsdCollection;

/**
 * Threshold parameters. `N` and `d` come from the collection.
 */
typedef struct MsdThresholdParams {
  double alpha;
  size_t active_count;
  double energy_total;
  enum MsdNoiseKind noise_kind;
  double noise_level;
  /**
   * `MSD_C0` for uncalibrated thresholds, 1 for calibrated ones.
   */
  double c0;
  double c1;
} MsdThresholdParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *msd_last_error(void);

/**
 * Samples `count` Haar-distributed `subspace_dim`-dimensional subspaces of
 * `R^ambient_dim`. The same seed yields the same collection as `msd generate`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum MsdStatus msd_collection_sample_haar(size_t count,
                                          size_t ambient_dim,
                                          size_t subspace_dim,
                                          uint64_t seed,
                                          struct MsdCollection **out);

/**
 * Builds a collection from `count` column-major `ambient_dim × subspace_dim`
 * blocks stored back to back. Each block must have orthonormal columns.
 *
 * # Safety
 * `data` must point to `count·ambient_dim·subspace_dim` doubles and `out`
 * must be valid for writes.
 */
enum MsdStatus msd_collection_from_bases(const double *data,
                                         size_t ambient_dim,
                                         size_t subspace_dim,
                                         size_t count,
                                         struct MsdCollection **out);

/**
 * Reads a basis file written by `msd generate` or [`msd_collection_save`].
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writes.
 */
enum MsdStatus msd_collection_load(const char *path, struct MsdCollection **out);

/**
 * # Safety
 * `collection` must come from this library; `path` must be NUL-terminated.
 */
enum MsdStatus msd_collection_save(const struct MsdCollection *collection, const char *path);

/**
 * Releases a collection. Null is ignored.
 *
 * # Safety
 * `collection` must come from this library and not be used afterwards.
 */
void msd_collection_free(struct MsdCollection *collection);

/**
 * # Safety
 * `collection` must come from this library; the outputs may be null.
 */
enum MsdStatus msd_collection_dims(const struct MsdCollection *collection,
                                   size_t *ambient_dim,
                                   size_t *subspace_dim,
                                   size_t *count);

/**
 * Fills per-subspace coherences: local 2-subspace, average mixing and
 * average subspace, `N` entries each, and the worst-case coherence. Any
 * output may be null. Needs `N ≥ 3`.
 *
 * # Safety
 * Non-null array outputs must hold `N` doubles.
 */
enum MsdStatus msd_collection_coherence(const struct MsdCollection *collection,
                                        double *local_two,
                                        double *avg_mixing,
                                        double *avg_subspace,
                                        double *worst_case);

/**
 * Runs the marginal detector on `y`.
 *
 * `active` receives 1 for every detected subspace and 0 otherwise;
 * `statistics` and `thresholds` receive `T_k` and `τ_k` when non-null.
 * `detected` receives the number of detections when non-null.
 *
 * # Safety
 * `y` must hold `y_len` doubles; non-null outputs must hold `N` entries.
 */
enum MsdStatus msd_detect(const struct MsdCollection *collection,
                          const struct MsdThresholdParams *params,
                          const double *y,
                          size_t y_len,
                          uint8_t *active,
                          double *statistics,
                          double *thresholds,
                          size_t *detected);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSD_H */
