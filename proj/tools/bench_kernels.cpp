// Times the OpenMP kernels against their serial reference implementations.

#include "phonos/kernels.hpp"
#include "phonos/rng.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i)
        fn();
    auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

} // namespace

int main() {
    using namespace phonos;
    Rng rng(12345);

    const int m = 256, k = 256, n = 256;
    std::vector<double> a(static_cast<size_t>(m) * k), b(static_cast<size_t>(k) * n);
    std::vector<double> c1(static_cast<size_t>(m) * n), c2(c1.size());
    for (double& x : a)
        x = rng.uniform(-1.0, 1.0);
    for (double& x : b)
        x = rng.uniform(-1.0, 1.0);

    const int rows = 4096, dim = 40, cents = 64;
    std::vector<double> pts(static_cast<size_t>(rows) * dim);
    std::vector<double> cen(static_cast<size_t>(cents) * dim);
    for (double& x : pts)
        x = rng.uniform(-1.0, 1.0);
    for (double& x : cen)
        x = rng.uniform(-1.0, 1.0);
    std::vector<int32_t> asg1(rows), asg2(rows);
    std::vector<double> d1(rows), d2(rows);

    struct Row {
        const char* name;
        double serial_ms;
        double parallel_ms;
    };
    std::vector<Row> rows_out;

    rows_out.push_back({"matmul 256x256x256",
                        time_ms([&] { kernels::serial::matmul(a.data(), b.data(),
                                                              c1.data(), m, k, n); },
                                5),
                        time_ms([&] { kernels::matmul(a.data(), b.data(), c2.data(), m,
                                                      k, n); },
                                5)});
    rows_out.push_back(
        {"matmul_at_b 256x256x256",
         time_ms([&] { kernels::serial::matmul_at_b(a.data(), b.data(), c1.data(), m,
                                                    k, n); },
                 5),
         time_ms([&] { kernels::matmul_at_b(a.data(), b.data(), c2.data(), m, k, n); },
                 5)});
    rows_out.push_back(
        {"matmul_a_bt 256x256x256",
         time_ms([&] { kernels::serial::matmul_a_bt(a.data(), b.data(), c1.data(), m,
                                                    n, k); },
                 5),
         time_ms([&] { kernels::matmul_a_bt(a.data(), b.data(), c2.data(), m, n, k); },
                 5)});
    rows_out.push_back(
        {"nearest_centroid 4096x64x40",
         time_ms([&] { kernels::serial::nearest_centroid(pts.data(), rows, cen.data(),
                                                         cents, dim, asg1.data(),
                                                         d1.data()); },
                 5),
         time_ms([&] { kernels::nearest_centroid(pts.data(), rows, cen.data(), cents,
                                                 dim, asg2.data(), d2.data()); },
                 5)});

    std::printf("%-28s %12s %12s %8s\n", "kernel", "serial_ms", "parallel_ms",
                "speedup");
    for (const Row& r : rows_out)
        std::printf("%-28s %12.3f %12.3f %8.2f\n", r.name, r.serial_ms, r.parallel_ms,
                    r.serial_ms / r.parallel_ms);
    return 0;
}
