#include <math.h>
#include <stdio.h>
#include <stdlib.h>

#include "segpart.h"

#define CHECK(call)                                                           \
    do {                                                                      \
        SegStatus s_ = (call);                                                \
        if (s_ != SEG_STATUS_OK) {                                            \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                 \
                    seg_last_error() ? seg_last_error() : "");                \
            return 1;                                                         \
        }                                                                     \
    } while (0)

int main(void) {
    SegDomain *sq = NULL;
    CHECK(seg_domain_new(SEG_SHAPE_SQUARE, 1.0, 0.0, 32, &sq));
    size_t nx = 0, ny = 0;
    double h = 0.0;
    CHECK(seg_domain_dims(sq, &nx, &ny, &h, NULL));
    double *u = malloc(nx * ny * sizeof(double));
    double lambda = 0.0;
    CHECK(seg_ground_state(sq, 1e-8, &lambda, u, nx * ny));
    double norm = 0.0;
    for (size_t i = 0; i < nx * ny; i++) norm += u[i] * u[i];
    printf("lambda1=%.6f norm=%.6f\n", lambda, h * sqrt(norm));
    free(u);
    seg_domain_free(sq);

    SegDomain *rect = NULL;
    CHECK(seg_domain_new(SEG_SHAPE_RECTANGLE, 2.0, 1.0, 16, &rect));
    SegPartition *part = NULL;
    CHECK(seg_partition_solve(rect, 2, 0.125, 7, &part));
    size_t k = 0;
    double c = 0.0, dist = 0.0;
    CHECK(seg_partition_summary(part, &k, &c));
    CHECK(seg_partition_min_distance(part, &dist));
    printf("k=%zu c=%.4f dist=%.4f\n", k, c, dist);
    seg_partition_free(part);

    SegDomain *bad = NULL;
    SegStatus s = seg_domain_new(SEG_SHAPE_DISK, 0.0, 0.0, 16, &bad);
    printf("empty=%d msg=%s\n", (int)s, seg_last_error());
    s = seg_partition_solve(rect, 2, 5.0, 0, &part);
    printf("infeasible=%d null=%d\n", (int)s, part == NULL);
    seg_domain_free(rect);
    return 0;
}
