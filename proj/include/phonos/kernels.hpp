#pragma once

#include <cstdint>
#include <vector>

namespace phonos::kernels {

// Dense compute kernels for the hot loops. Each kernel exists twice: the
// OpenMP version (default entry point) and a serial reference under
// kernels::serial. The parallel versions split work so that every output
// element is written by exactly one thread with the same inner-loop order
// as the serial code, so both produce bit-identical results for any
// thread count. Tests assert that equality; tools/bench_kernels times it.

namespace serial {

// C[m x n] = A[m x k] * B[k x n], row-major, C overwritten
void matmul(const double* a, const double* b, double* c, int m, int k, int n);

// C[k x n] = A^T * B with A[m x k], B[m x n]
void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n);

// C[m x k] = A * B^T with A[m x n], B[k x n]
void matmul_a_bt(const double* a, const double* b, double* c, int m, int n, int k);

// nearest centroid per row: ids[i] = argmin_j ||p_i - c_j||^2, ties to lower j
void nearest_centroid(const double* points, int n, const double* centroids, int k,
                      int dim, int32_t* ids, double* sq_dists);

// cost[i*m + j] = 1 - cosine(a_i, b_j), clamped to [0, 2];
// zero-norm rows are treated as cosine 0 (cost 1)
void cosine_cost(const double* a, int n, const double* b, int m, int dim,
                 double* cost);

} // namespace serial

void matmul(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n);
void matmul_a_bt(const double* a, const double* b, double* c, int m, int n, int k);
void nearest_centroid(const double* points, int n, const double* centroids, int k,
                      int dim, int32_t* ids, double* sq_dists);
void cosine_cost(const double* a, int n, const double* b, int m, int dim,
                 double* cost);

} // namespace phonos::kernels
