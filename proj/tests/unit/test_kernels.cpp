#include <omp.h>

#include <vector>

#include "doctest.h"
#include "pkt/core/array.hpp"
#include "pkt/core/kernels.hpp"
#include "pkt/core/random.hpp"

using namespace pkt;
using kernels::Trans;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("parallel gemm agrees with the serial reference for every transpose mode") {
    Rng rng(7);
    const std::size_t m = 37, n = 53, k = 29;
    const auto a = random_vec(rng, m * k);
    const auto b = random_vec(rng, k * n);
    for (auto [ta, tb] : {std::pair{Trans::kNone, Trans::kNone}, std::pair{Trans::kNone, Trans::kTranspose},
                          std::pair{Trans::kTranspose, Trans::kNone}}) {
        for (bool acc : {false, true}) {
            std::vector<double> c_ref(m * n, 0.5), c_par(m * n, 0.5);
            kernels::serial::gemm(ta, tb, m, n, k, a.data(), b.data(), c_ref.data(), acc);
            kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c_par.data(), acc);
            CHECK(max_diff(c_ref, c_par) < 1e-12);
        }
    }
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
    Rng rng(11);
    const std::size_t m = 256, n = 128, k = 64;
    const auto a = random_vec(rng, m * k);
    const auto b = random_vec(rng, k * n);
    const auto x = random_vec(rng, m * n);
    std::vector<double> gamma(n, 1.3), beta(n, -0.2);

    auto run = [&](int threads) {
        omp_set_num_threads(threads);
        std::vector<double> c(m * n), s(m * n), y(m * n), mean(m), rstd(m), dx(m * n, 0.0), dg(n, 0.0), db(n, 0.0);
        kernels::gemm(Trans::kNone, Trans::kNone, m, n, k, a.data(), b.data(), c.data(), false);
        kernels::softmax_rows(x.data(), s.data(), m, n, 3);
        kernels::layer_norm_rows(x.data(), gamma.data(), beta.data(), y.data(), mean.data(), rstd.data(), m, n, 1e-5);
        kernels::layer_norm_rows_backward(x.data(), gamma.data(), mean.data(), rstd.data(), c.data(), dx.data(),
                                          dg.data(), db.data(), m, n);
        c.insert(c.end(), s.begin(), s.end());
        c.insert(c.end(), y.begin(), y.end());
        c.insert(c.end(), dx.begin(), dx.end());
        c.insert(c.end(), dg.begin(), dg.end());
        return c;
    };
    const auto one = run(1);
    const auto four = run(4);
    omp_set_num_threads(omp_get_num_procs());
    CHECK(one == four);
}

TEST_CASE("softmax and layer norm kernels match the serial reference") {
    Rng rng(3);
    const std::size_t m = 9, n = 17;
    const auto x = random_vec(rng, m * n);
    std::vector<double> y1(m * n), y2(m * n);
    kernels::serial::softmax_rows(x.data(), y1.data(), m, n, 4);
    kernels::softmax_rows(x.data(), y2.data(), m, n, 4);
    CHECK(max_diff(y1, y2) == 0.0);
    // Row i sees columns 0..4+i only.
    CHECK(y1[0 * n + 5] == 0.0);
    CHECK(y1[0 * n + 4] > 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += y1[i * n + j];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }

    std::vector<double> dy = random_vec(rng, m * n), dx1(m * n, 0.0), dx2(m * n, 0.0);
    kernels::serial::softmax_rows_backward(y1.data(), dy.data(), dx1.data(), m, n, true);
    kernels::softmax_rows_backward(y1.data(), dy.data(), dx2.data(), m, n, true);
    CHECK(max_diff(dx1, dx2) == 0.0);

    std::vector<double> g(n, 0.7), b(n, 0.1), l1(m * n), l2(m * n), mu1(m), mu2(m), r1(m), r2(m);
    kernels::serial::layer_norm_rows(x.data(), g.data(), b.data(), l1.data(), mu1.data(), r1.data(), m, n, 1e-5);
    kernels::layer_norm_rows(x.data(), g.data(), b.data(), l2.data(), mu2.data(), r2.data(), m, n, 1e-5);
    CHECK(max_diff(l1, l2) == 0.0);
    std::vector<double> d1(m * n, 0.0), d2(m * n, 0.0), g1(n, 0.0), g2(n, 0.0), b1(n, 0.0), b2(n, 0.0);
    kernels::serial::layer_norm_rows_backward(x.data(), g.data(), mu1.data(), r1.data(), dy.data(), d1.data(),
                                              g1.data(), b1.data(), m, n);
    kernels::layer_norm_rows_backward(x.data(), g.data(), mu2.data(), r2.data(), dy.data(), d2.data(), g2.data(),
                                      b2.data(), m, n);
    CHECK(max_diff(d1, d2) < 1e-13);
    CHECK(max_diff(g1, g2) < 1e-13);
    CHECK(max_diff(b1, b2) < 1e-13);
}
