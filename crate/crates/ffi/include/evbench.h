#ifndef EVBENCH_H
#define EVBENCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EvbStatus {
  EVB_STATUS_OK = 0,
  EVB_STATUS_NULL_POINTER = 1,
  EVB_STATUS_INVALID_ARGUMENT = 2,
  EVB_STATUS_IO = 3,
  EVB_STATUS_PARSE = 4,
  EVB_STATUS_FORMAT = 5,
  EVB_STATUS_DIMENSION = 6,
  EVB_STATUS_INTERNAL = 7,
} EvbStatus;

// A time-sorted event stream.
typedef struct EvbEventStream EvbEventStream;

// A `bins x height x width` voxel grid of f64, bins-major.
typedef struct EvbVoxelGrid EvbVoxelGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *evb_version(void);

// Message for the last failed call on this thread, or null. Valid until the next call.
const char *evb_last_error_message(void);

// Loads an EVT1 or text event file. `width`/`height` of 0 take the geometry from an
// EVT1 header; text files need both.
//
// # Safety
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum EvbStatus evb_event_stream_load(const char *path,
                                     uint16_t width,
                                     uint16_t height,
                                     struct EvbEventStream **out);

// Builds a stream from parallel arrays of length `count`; events must be time-sorted.
//
// # Safety
// Each array must hold `count` elements (any may be null when `count` is 0) and `out` must be valid.
enum EvbStatus evb_event_stream_from_arrays(uint16_t width,
                                            uint16_t height,
                                            const double *t,
                                            const uint16_t *x,
                                            const uint16_t *y,
                                            const int8_t *p,
                                            size_t count,
                                            struct EvbEventStream **out);

// Number of events, or 0 for a null handle.
//
// # Safety
// `stream` must be null or a live handle.
size_t evb_event_stream_len(const struct EvbEventStream *stream);

// Sensor geometry of a stream.
//
// # Safety
// `stream` must be a live handle; `width` and `height` valid pointers.
enum EvbStatus evb_event_stream_geometry(const struct EvbEventStream *stream,
                                         uint16_t *width,
                                         uint16_t *height);

// Writes a stream as EVT1 (`.evt`, `.evt1`, `.bin`) or text, chosen by extension.
//
// # Safety
// `stream` must be a live handle and `path` a valid NUL-terminated string.
enum EvbStatus evb_event_stream_save(const struct EvbEventStream *stream, const char *path);

// # Safety
// `stream` must be null or a handle not yet freed.
void evb_event_stream_free(struct EvbEventStream *stream);

// Accumulates events `[first, first + count)` over the window `[t_start, t_end]` into `bins` bins.
//
// # Safety
// `stream` must be a live handle and `out` a valid pointer.
enum EvbStatus evb_voxel_grid_build(const struct EvbEventStream *stream,
                                    size_t first,
                                    size_t count,
                                    double t_start,
                                    double t_end,
                                    size_t bins,
                                    struct EvbVoxelGrid **out);

// # Safety
// `grid` must be a live handle; the out pointers must be valid.
enum EvbStatus evb_voxel_grid_dims(const struct EvbVoxelGrid *grid,
                                   size_t *bins,
                                   size_t *height,
                                   size_t *width);

// Pointer to the `bins * height * width` values, valid while the grid lives; null for a null handle.
//
// # Safety
// `grid` must be null or a live handle.
const double *evb_voxel_grid_data(const struct EvbVoxelGrid *grid);

// # Safety
// `grid` must be null or a handle not yet freed.
void evb_voxel_grid_free(struct EvbVoxelGrid *grid);

// Mean squared error of two row-major `height x width` images.
//
// # Safety
// `a` and `b` must each hold `width * height` values; `out` must be valid.
enum EvbStatus evb_mse(const double *a, const double *b, size_t width, size_t height, double *out);

// Gaussian-window SSIM (11x11, sigma 1.5, data range 1) of two row-major images.
//
// # Safety
// `a` and `b` must each hold `width * height` values; `out` must be valid.
enum EvbStatus evb_ssim(const double *a, const double *b, size_t width, size_t height, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EVBENCH_H */
