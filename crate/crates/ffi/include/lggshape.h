#ifndef LGGSHAPE_H
#define LGGSHAPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

#define LGG_POLICY_MAX_AREA 0

#define LGG_POLICY_MEAN 1

typedef enum LggStatus {
  LGG_STATUS_OK = 0,
  LGG_STATUS_NULL_POINTER = 1,
  LGG_STATUS_IO = 2,
  LGG_STATUS_FORMAT = 3,
  LGG_STATUS_INVALID_ARGUMENT = 4,
  LGG_STATUS_DEGENERATE = 5,
  LGG_STATUS_INSUFFICIENT_DATA = 6,
  LGG_STATUS_PANIC = 7,
} LggStatus;

/**
 * Opaque volume handle.
 */
typedef struct LggVolume LggVolume;

/**
 * Per-case shape features.
 */
typedef struct LggFeatures {
  double asd;
  double bevr;
  double mf;
  size_t slice_used;
  size_t tumor_voxels;
} LggFeatures;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *lgg_last_error(void);

/**
 * Loads a volume file.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum LggStatus lgg_volume_load(const char *path, struct LggVolume **out);

/**
 * Builds a mask from `nz*ny*nx` bytes in z-major order, each 0 or 1.
 *
 * # Safety
 * `data` must point to `nz*ny*nx` bytes, `spacing` to three doubles and
 * `out` must be a valid pointer.
 */
enum LggStatus lgg_mask_new(size_t nz,
                            size_t ny,
                            size_t nx,
                            const double *spacing,
                            const uint8_t *data,
                            struct LggVolume **out);

/**
 * Writes `(nz, ny, nx)` into `dims`.
 *
 * # Safety
 * `volume` must be a live handle and `dims` must point to three `size_t`.
 */
enum LggStatus lgg_volume_dims(const struct LggVolume *volume, size_t *dims);

/**
 * Number of foreground voxels of a mask (nonzero voxels otherwise).
 *
 * # Safety
 * `volume` must be a live handle and `count` a valid pointer.
 */
enum LggStatus lgg_volume_foreground(const struct LggVolume *volume, size_t *count);

/**
 * # Safety
 * `volume` must be a live handle and `path` a nul-terminated string.
 */
enum LggStatus lgg_volume_write(const struct LggVolume *volume, const char *path);

/**
 * Releases a handle; NULL is ignored.
 *
 * # Safety
 * `volume` must be NULL or a handle not yet freed.
 */
void lgg_volume_free(struct LggVolume *volume);

/**
 * Largest 6-connected component of a mask, as a new handle.
 *
 * # Safety
 * `mask` must be a live handle and `out` a valid pointer.
 */
enum LggStatus lgg_keep_largest_component(const struct LggVolume *mask, struct LggVolume **out);

/**
 * ASD, BEVR and MF of a mask. `policy` is `LGG_POLICY_MAX_AREA` or
 * `LGG_POLICY_MEAN`.
 *
 * # Safety
 * `mask` must be a live handle and `out` a valid pointer.
 */
enum LggStatus lgg_extract_features(const struct LggVolume *mask,
                                    uint32_t policy,
                                    struct LggFeatures *out);

/**
 * # Safety
 * `a` and `b` must be live handles and `out` a valid pointer.
 */
enum LggStatus lgg_dice(const struct LggVolume *a, const struct LggVolume *b, double *out);

/**
 * Two-sided Fisher exact test of a `rows x cols` table in row-major order.
 * Large tables fall back to a Monte Carlo estimate seeded by `seed`.
 *
 * # Safety
 * `counts` must point to `rows*cols` values and `p_value` be valid.
 */
enum LggStatus lgg_fisher_exact(const uint64_t *counts,
                                size_t rows,
                                size_t cols,
                                uint64_t seed,
                                double *p_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LGGSHAPE_H */
