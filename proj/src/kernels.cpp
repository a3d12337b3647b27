#include "phonos/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace phonos::kernels {

namespace serial {

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        const double* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int r = 0; r < k; ++r) {
        double* cr = c + static_cast<size_t>(r) * n;
        std::fill(cr, cr + n, 0.0);
        for (int t = 0; t < m; ++t) {
            const double av = a[static_cast<size_t>(t) * k + r];
            const double* bt = b + static_cast<size_t>(t) * n;
            for (int j = 0; j < n; ++j) cr[j] += av * bt[j];
        }
    }
}

void matmul_a_bt(const double* a, const double* b, double* c, int m, int n, int k) {
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * n;
        double* ci = c + static_cast<size_t>(i) * k;
        for (int r = 0; r < k; ++r) {
            const double* br = b + static_cast<size_t>(r) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += ai[j] * br[j];
            ci[r] = acc;
        }
    }
}

void nearest_centroid(const double* points, int n, const double* centroids, int k,
                      int dim, int32_t* ids, double* sq_dists) {
    for (int i = 0; i < n; ++i) {
        const double* p = points + static_cast<size_t>(i) * dim;
        double best = std::numeric_limits<double>::infinity();
        int32_t best_id = 0;
        for (int j = 0; j < k; ++j) {
            const double* cj = centroids + static_cast<size_t>(j) * dim;
            double d = 0.0;
            for (int t = 0; t < dim; ++t) {
                const double diff = p[t] - cj[t];
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_id = j;
            }
        }
        ids[i] = best_id;
        if (sq_dists) sq_dists[i] = best;
    }
}

void cosine_cost(const double* a, int n, const double* b, int m, int dim,
                 double* cost) {
    for (int i = 0; i < n; ++i) {
        const double* ai = a + static_cast<size_t>(i) * dim;
        double na = 0.0;
        for (int t = 0; t < dim; ++t) na += ai[t] * ai[t];
        na = std::sqrt(na);
        double* row = cost + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) {
            const double* bj = b + static_cast<size_t>(j) * dim;
            double nb = 0.0, dot = 0.0;
            for (int t = 0; t < dim; ++t) {
                nb += bj[t] * bj[t];
                dot += ai[t] * bj[t];
            }
            nb = std::sqrt(nb);
            double cosv = 0.0;
            if (na > 0.0 && nb > 0.0) cosv = dot / (na * nb);
            row[j] = std::clamp(1.0 - cosv, 0.0, 2.0);
        }
    }
}

} // namespace serial

// OpenMP versions. Parallel loops always split over whole output rows so
// every element keeps the serial inner accumulation order.

void matmul(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        double* ci = c + static_cast<size_t>(i) * n;
        std::fill(ci, ci + n, 0.0);
        const double* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void matmul_at_b(const double* a, const double* b, double* c, int m, int k, int n) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < k; ++r) {
        double* cr = c + static_cast<size_t>(r) * n;
        std::fill(cr, cr + n, 0.0);
        for (int t = 0; t < m; ++t) {
            const double av = a[static_cast<size_t>(t) * k + r];
            const double* bt = b + static_cast<size_t>(t) * n;
            for (int j = 0; j < n; ++j) cr[j] += av * bt[j];
        }
    }
}

void matmul_a_bt(const double* a, const double* b, double* c, int m, int n, int k) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) {
        const double* ai = a + static_cast<size_t>(i) * n;
        double* ci = c + static_cast<size_t>(i) * k;
        for (int r = 0; r < k; ++r) {
            const double* br = b + static_cast<size_t>(r) * n;
            double acc = 0.0;
            for (int j = 0; j < n; ++j) acc += ai[j] * br[j];
            ci[r] = acc;
        }
    }
}

void nearest_centroid(const double* points, int n, const double* centroids, int k,
                      int dim, int32_t* ids, double* sq_dists) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        serial::nearest_centroid(points + static_cast<size_t>(i) * dim, 1,
                                 centroids, k, dim, ids + i,
                                 sq_dists ? sq_dists + i : nullptr);
    }
}

void cosine_cost(const double* a, int n, const double* b, int m, int dim,
                 double* cost) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        serial::cosine_cost(a + static_cast<size_t>(i) * dim, 1, b, m, dim,
                            cost + static_cast<size_t>(i) * m);
    }
}

} // namespace phonos::kernels
