#include "pkt/core/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pkt::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
    const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
    for (long ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
    if (m == 0 || n == 0) return;
    if (ta == Trans::kNone && tb == Trans::kNone) {
        gemm_nn(m, n, k, a, b, c, accumulate);
        return;
    }
    if (ta == Trans::kNone) {
        // B is stored [n,k]; transpose once so the inner loop runs contiguously.
        thread_local std::vector<double> bt;
        bt.resize(k * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
        gemm_nn(m, n, k, a, bt.data(), c, accumulate);
        return;
    }
    if (tb == Trans::kNone) {
        const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
        for (long ii = 0; ii < rows; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            double* crow = c + i * n;
            if (!accumulate) std::fill(crow, crow + n, 0.0);
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[p * m + i];
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
        return;
    }
    serial::gemm(ta, tb, m, n, k, a, b, c, accumulate);
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols, std::size_t causal_offset) {
    const long nrows = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (long ii = 0; ii < nrows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        serial::softmax_rows(x + i * cols, y + i * cols, 1, cols,
                             causal_offset == kNoMask ? kNoMask : causal_offset + i);
    }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows, std::size_t cols,
                           bool accumulate) {
    const long nrows = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (long ii = 0; ii < nrows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        serial::softmax_rows_backward(y + i * cols, dy + i * cols, dx + i * cols, 1, cols, accumulate);
    }
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y, double* mean, double* rstd,
                     std::size_t rows, std::size_t cols, double eps) {
    const long nrows = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
    for (long ii = 0; ii < nrows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        serial::layer_norm_rows(x + i * cols, gamma, beta, y + i * cols, mean + i, rstd + i, 1, cols, eps);
    }
}

void layer_norm_rows_backward(const double* x, const double* gamma, const double* mean, const double* rstd,
                              const double* dy, double* dx, double* dgamma, double* dbeta, std::size_t rows,
                              std::size_t cols) {
    const double inv_n = 1.0 / static_cast<double>(cols);
    const bool parallel = rows * cols > kParallelWork;
    if (dx) {
        const long nrows = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (parallel)
        for (long ii = 0; ii < nrows; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            const double* xr = x + i * cols;
            const double* dyr = dy + i * cols;
            double sum_dxhat = 0.0;
            double sum_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (xr[j] - mean[i]) * rstd[i];
                const double dxhat = dyr[j] * gamma[j];
                sum_dxhat += dxhat;
                sum_dxhat_xhat += dxhat * xhat;
            }
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (xr[j] - mean[i]) * rstd[i];
                const double dxhat = dyr[j] * gamma[j];
                dx[i * cols + j] += rstd[i] * (dxhat - sum_dxhat * inv_n - xhat * sum_dxhat_xhat * inv_n);
            }
        }
    }
    if (!dgamma && !dbeta) return;
    // Column sums: one thread per column keeps the row summation order fixed.
    const long ncols = static_cast<long>(cols);
#pragma omp parallel for schedule(static) if (parallel)
    for (long jj = 0; jj < ncols; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        double dg = 0.0;
        double db = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double xhat = (x[i * cols + j] - mean[i]) * rstd[i];
            dg += dy[i * cols + j] * xhat;
            db += dy[i * cols + j];
        }
        if (dgamma) dgamma[j] += dg;
        if (dbeta) dbeta[j] += db;
    }
}

}  // namespace pkt::kernels
