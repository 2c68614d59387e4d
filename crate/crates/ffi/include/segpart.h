#ifndef SEGPART_H
#define SEGPART_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SegStatus {
  SEG_STATUS_OK = 0,
  SEG_STATUS_NULL_POINTER = 1,
  SEG_STATUS_INVALID_INPUT = 2,
  SEG_STATUS_EMPTY_DOMAIN = 3,
  SEG_STATUS_NO_CONVERGENCE = 4,
  SEG_STATUS_INFEASIBLE_R = 5,
  SEG_STATUS_SQUEEZED_OUT = 6,
  SEG_STATUS_ANNIHILATED = 7,
  SEG_STATUS_CONSTRAINT_VIOLATED = 8,
  SEG_STATUS_BUFFER_TOO_SMALL = 9,
  SEG_STATUS_INTERNAL = 10,
  SEG_STATUS_PANIC = 11,
} SegStatus;

typedef enum SegShape {
  // `p0` = radius.
  SEG_SHAPE_DISK = 0,
  // `p0` x `p1`.
  SEG_SHAPE_RECTANGLE = 1,
  // Side `p0`.
  SEG_SHAPE_SQUARE = 2,
  // Side `p0`.
  SEG_SHAPE_L_SHAPE = 3,
  // Outer radius `p0`, removed ball radius `p1`.
  SEG_SHAPE_DISK_MINUS_BALL = 4,
} SegShape;

// Lattice domain handle.
typedef struct SegDomain SegDomain;

// Optimized partition handle.
typedef struct SegPartition SegPartition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *seg_last_error(void);

// Samples a shape with resolution `n` and stores a new handle in `*out`.
//
// # Safety
// `out` must be NULL or valid for writing one pointer.
enum SegStatus seg_domain_new(enum SegShape shape,
                              double p0,
                              double p1,
                              size_t n,
                              struct SegDomain **out);

// # Safety
// `d` must be NULL or a handle from [`seg_domain_new`] not yet freed.
void seg_domain_free(struct SegDomain *d);

// Lattice dimensions, spacing and number of interior nodes.
//
// # Safety
// `d` must be a live handle; each output pointer must be NULL or writable.
enum SegStatus seg_domain_dims(const struct SegDomain *d,
                               size_t *nx,
                               size_t *ny,
                               double *h,
                               size_t *interior);

// First Dirichlet eigenvalue of the whole domain. When `field` is not NULL
// the normalized eigenfunction is written to it (`len >= nx * ny`).
//
// # Safety
// `d` must be a live handle, `lambda` writable, `field` NULL or valid for
// `len` writes.
enum SegStatus seg_ground_state(const struct SegDomain *d,
                                double tol,
                                double *lambda,
                                double *field,
                                size_t len);

// Optimizes a `k`-partition with pairwise separation `r`.
//
// # Safety
// `d` must be a live handle and `out` valid for writing one pointer.
enum SegStatus seg_partition_solve(const struct SegDomain *d,
                                   size_t k,
                                   double r,
                                   uint64_t seed,
                                   struct SegPartition **out);

// # Safety
// `p` must be NULL or a handle from [`seg_partition_solve`] not yet freed.
void seg_partition_free(struct SegPartition *p);

// Number of components and the objective, the sum of component eigenvalues.
//
// # Safety
// `p` must be a live handle; outputs NULL or writable.
enum SegStatus seg_partition_summary(const struct SegPartition *p, size_t *k, double *c);

// Eigenvalue of component `i` and, when `field` is not NULL, its field.
//
// # Safety
// `p` must be a live handle, `lambda` NULL or writable, `field` NULL or
// valid for `len` writes.
enum SegStatus seg_partition_component(const struct SegPartition *p,
                                       size_t i,
                                       double *lambda,
                                       double *field,
                                       size_t len);

// Support of component `i` as 0/1 bytes (`len >= nx * ny`).
//
// # Safety
// `p` must be a live handle and `mask` valid for `len` writes.
enum SegStatus seg_partition_support(const struct SegPartition *p,
                                     size_t i,
                                     uint8_t *mask,
                                     size_t len);

// Smallest distance between two different supports (`+inf` for `k = 1`).
//
// # Safety
// `p` must be a live handle and `dist` writable.
enum SegStatus seg_partition_min_distance(const struct SegPartition *p, double *dist);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGPART_H */
