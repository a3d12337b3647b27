#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "phonos/kernels.hpp"
#include "phonos/rng.hpp"

#include <cmath>
#include <vector>

using namespace phonos;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v)
        x = rng.uniform(-1.0, 1.0);
    return v;
}

// Straight triple loop, the definitional product.
void naive_matmul(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p)
                s += a[static_cast<size_t>(i) * k + p] * b[static_cast<size_t>(p) * n + j];
            c[static_cast<size_t>(i) * n + j] = s;
        }
    }
}

} // namespace

TEST_CASE("matmul matches a hand-computed 2x3 * 3x2 product") {
    std::vector<double> a = {1, 2, 3, 4, 5, 6};
    std::vector<double> b = {7, 8, 9, 10, 11, 12};
    std::vector<double> c(4);
    kernels::matmul(a.data(), b.data(), c.data(), 2, 3, 2);
    CHECK(c[0] == 58.0);
    CHECK(c[1] == 64.0);
    CHECK(c[2] == 139.0);
    CHECK(c[3] == 154.0);
}

TEST_CASE("matmul variants match the naive oracle") {
    Rng rng(11);
    int m = 7, k = 5, n = 9;
    auto a = random_vec(static_cast<size_t>(m) * k, rng);
    auto b = random_vec(static_cast<size_t>(k) * n, rng);
    std::vector<double> want(static_cast<size_t>(m) * n), got(want.size());
    naive_matmul(a.data(), b.data(), want.data(), m, k, n);
    kernels::matmul(a.data(), b.data(), got.data(), m, k, n);
    for (size_t i = 0; i < want.size(); ++i)
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    // A^T B: transpose a explicitly and reuse the oracle.
    std::vector<double> at(static_cast<size_t>(k) * m);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p)
            at[static_cast<size_t>(p) * m + i] = a[static_cast<size_t>(i) * k + p];
    std::vector<double> want_atb(static_cast<size_t>(k) * n), got_atb(want_atb.size());
    naive_matmul(at.data(), b.data(), want_atb.data(), k, m, n);
    // matmul_at_b takes A as m x k and B as m x n; reuse a as a 7x5 and build b2 7x9.
    auto b2 = random_vec(static_cast<size_t>(m) * n, rng);
    naive_matmul(at.data(), b2.data(), want_atb.data(), k, m, n);
    kernels::matmul_at_b(a.data(), b2.data(), got_atb.data(), m, k, n);
    for (size_t i = 0; i < want_atb.size(); ++i)
        CHECK(got_atb[i] == doctest::Approx(want_atb[i]).epsilon(1e-12));

    // A B^T with A m x n2 and B k2 x n2.
    int n2 = 6, k2 = 8;
    auto a3 = random_vec(static_cast<size_t>(m) * n2, rng);
    auto b3 = random_vec(static_cast<size_t>(k2) * n2, rng);
    std::vector<double> b3t(static_cast<size_t>(n2) * k2);
    for (int i = 0; i < k2; ++i)
        for (int j = 0; j < n2; ++j)
            b3t[static_cast<size_t>(j) * k2 + i] = b3[static_cast<size_t>(i) * n2 + j];
    std::vector<double> want_abt(static_cast<size_t>(m) * k2), got_abt(want_abt.size());
    naive_matmul(a3.data(), b3t.data(), want_abt.data(), m, n2, k2);
    kernels::matmul_a_bt(a3.data(), b3.data(), got_abt.data(), m, n2, k2);
    for (size_t i = 0; i < want_abt.size(); ++i)
        CHECK(got_abt[i] == doctest::Approx(want_abt[i]).epsilon(1e-12));
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
    Rng rng(202);
    int m = 33, k = 17, n = 29;
    auto a = random_vec(static_cast<size_t>(m) * k, rng);
    auto b = random_vec(static_cast<size_t>(k) * n, rng);
    std::vector<double> c1(static_cast<size_t>(m) * n), c2(c1.size());
    kernels::serial::matmul(a.data(), b.data(), c1.data(), m, k, n);
    kernels::matmul(a.data(), b.data(), c2.data(), m, k, n);
    CHECK(c1 == c2);

    std::vector<double> d1(static_cast<size_t>(k) * n), d2(d1.size());
    auto b2 = random_vec(static_cast<size_t>(m) * n, rng);
    kernels::serial::matmul_at_b(a.data(), b2.data(), d1.data(), m, k, n);
    kernels::matmul_at_b(a.data(), b2.data(), d2.data(), m, k, n);
    CHECK(d1 == d2);

    auto a3 = random_vec(static_cast<size_t>(m) * n, rng);
    auto b3 = random_vec(static_cast<size_t>(k) * n, rng);
    std::vector<double> e1(static_cast<size_t>(m) * k), e2(e1.size());
    kernels::serial::matmul_a_bt(a3.data(), b3.data(), e1.data(), m, n, k);
    kernels::matmul_a_bt(a3.data(), b3.data(), e2.data(), m, n, k);
    CHECK(e1 == e2);

    int rows = 101, dim = 13, cents = 7;
    auto pts = random_vec(static_cast<size_t>(rows) * dim, rng);
    auto cen = random_vec(static_cast<size_t>(cents) * dim, rng);
    std::vector<int32_t> id1(rows), id2(rows);
    std::vector<double> q1(rows), q2(rows);
    kernels::serial::nearest_centroid(pts.data(), rows, cen.data(), cents, dim,
                                      id1.data(), q1.data());
    kernels::nearest_centroid(pts.data(), rows, cen.data(), cents, dim, id2.data(),
                              q2.data());
    CHECK(id1 == id2);
    CHECK(q1 == q2);

    std::vector<double> cc1(static_cast<size_t>(rows) * cents), cc2(cc1.size());
    kernels::serial::cosine_cost(pts.data(), rows, cen.data(), cents, dim, cc1.data());
    kernels::cosine_cost(pts.data(), rows, cen.data(), cents, dim, cc2.data());
    CHECK(cc1 == cc2);
}

TEST_CASE("nearest_centroid picks the true argmin with ties to the lower id") {
    Rng rng(7);
    int rows = 64, dim = 5, cents = 9;
    auto pts = random_vec(static_cast<size_t>(rows) * dim, rng);
    auto cen = random_vec(static_cast<size_t>(cents) * dim, rng);
    std::vector<int32_t> ids(rows);
    std::vector<double> d2(rows);
    kernels::nearest_centroid(pts.data(), rows, cen.data(), cents, dim, ids.data(),
                              d2.data());
    for (int i = 0; i < rows; ++i) {
        int want = -1;
        double want_d = 0.0;
        for (int c = 0; c < cents; ++c) {
            double s = 0.0;
            for (int d = 0; d < dim; ++d) {
                double diff = pts[static_cast<size_t>(i) * dim + d] -
                              cen[static_cast<size_t>(c) * dim + d];
                s += diff * diff;
            }
            if (want < 0 || s < want_d) {
                want = c;
                want_d = s;
            }
        }
        CHECK(ids[i] == want);
        CHECK(d2[i] == doctest::Approx(want_d).epsilon(1e-12));
    }

    // Exact tie between centroids 0 and 1: the lower id wins.
    std::vector<double> tie_cen = {1.0, -1.0, 5.0};
    std::vector<double> pt = {0.0};
    int32_t id = -1;
    double q = 0.0;
    kernels::nearest_centroid(pt.data(), 1, tie_cen.data(), 3, 1, &id, &q);
    CHECK(id == 0);
    CHECK(q == 1.0);
}

TEST_CASE("cosine_cost handles aligned, antiparallel, and zero-norm rows") {
    std::vector<double> a = {1.0, 2.0, /*row 1*/ 0.0, 0.0};
    std::vector<double> b = {2.0, 4.0, /*row 1*/ -1.0, -2.0};
    std::vector<double> cost(4);
    kernels::cosine_cost(a.data(), 2, b.data(), 2, 2, cost.data());
    CHECK(cost[0] == doctest::Approx(0.0).epsilon(1e-15)); // parallel
    CHECK(cost[1] == doctest::Approx(2.0).epsilon(1e-15)); // antiparallel
    CHECK(cost[2] == 1.0);     // zero norm vs b0
    CHECK(cost[3] == 1.0);     // zero norm vs b1
}

TEST_CASE("cosine_cost matches the direct formula on a random 3x4 pair") {
    Rng rng(99);
    int n = 3, m = 4, dim = 6;
    auto a = random_vec(static_cast<size_t>(n) * dim, rng);
    auto b = random_vec(static_cast<size_t>(m) * dim, rng);
    std::vector<double> cost(static_cast<size_t>(n) * m);
    kernels::cosine_cost(a.data(), n, b.data(), m, dim, cost.data());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            double dot = 0.0, na = 0.0, nb = 0.0;
            for (int d = 0; d < dim; ++d) {
                double x = a[static_cast<size_t>(i) * dim + d];
                double y = b[static_cast<size_t>(j) * dim + d];
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            double want = 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
            want = std::min(2.0, std::max(0.0, want));
            CHECK(cost[static_cast<size_t>(i) * m + j] ==
                  doctest::Approx(want).epsilon(1e-9));
        }
    }
}
