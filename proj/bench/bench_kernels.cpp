#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "pkt/core/kernels.hpp"

namespace k = pkt::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (double& x : v) x = dist(rng);
    return v;
}

template <bool Parallel>
void bm_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
    std::vector<double> c(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::gemm(k::Trans::kNone, k::Trans::kNone, n, n, n, a.data(), b.data(), c.data(), false);
        } else {
            k::serial::gemm(k::Trans::kNone, k::Trans::kNone, n, n, n, a.data(), b.data(), c.data(), false);
        }
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void bm_softmax(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto x = random_vec(n * n, 3);
    std::vector<double> y(n * n);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::softmax_rows(x.data(), y.data(), n, n, 0);
        } else {
            k::serial::softmax_rows(x.data(), y.data(), n, n, 0);
        }
        benchmark::DoNotOptimize(y.data());
    }
}

template <bool Parallel>
void bm_layer_norm(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = 64;
    const auto x = random_vec(rows * cols, 4), g = random_vec(cols, 5), b = random_vec(cols, 6);
    std::vector<double> y(rows * cols), mean(rows), rstd(rows);
    for (auto _ : state) {
        if constexpr (Parallel) {
            k::layer_norm_rows(x.data(), g.data(), b.data(), y.data(), mean.data(), rstd.data(), rows, cols, 1e-5);
        } else {
            k::serial::layer_norm_rows(x.data(), g.data(), b.data(), y.data(), mean.data(), rstd.data(), rows, cols,
                                       1e-5);
        }
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(bm_gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm<true>)->Name("gemm/openmp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_softmax<false>)->Name("softmax_causal/serial")->Arg(128)->Arg(512);
BENCHMARK(bm_softmax<true>)->Name("softmax_causal/openmp")->Arg(128)->Arg(512);
BENCHMARK(bm_layer_norm<false>)->Name("layer_norm/serial")->Arg(128)->Arg(2048);
BENCHMARK(bm_layer_norm<true>)->Name("layer_norm/openmp")->Arg(128)->Arg(2048);

BENCHMARK_MAIN();
