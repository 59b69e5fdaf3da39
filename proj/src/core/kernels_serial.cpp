#include <algorithm>
#include <cmath>

#include "pkt/core/kernels.hpp"

namespace pkt::kernels::serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = ta == Trans::kNone ? a[i * k + p] : a[p * m + i];
                const double bv = tb == Trans::kNone ? b[p * n + j] : b[j * k + p];
                s += av * bv;
            }
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
    }
}

void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols, std::size_t causal_offset) {
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t visible = causal_offset == kNoMask ? cols : std::min(cols, causal_offset + i + 1);
        const double* xr = x + i * cols;
        double* yr = y + i * cols;
        double mx = xr[0];
        for (std::size_t j = 1; j < visible; ++j) mx = std::max(mx, xr[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < visible; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            sum += yr[j];
        }
        for (std::size_t j = 0; j < visible; ++j) yr[j] /= sum;
        for (std::size_t j = visible; j < cols; ++j) yr[j] = 0.0;
    }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows, std::size_t cols,
                           bool accumulate) {
    for (std::size_t i = 0; i < rows; ++i) {
        const double* yr = y + i * cols;
        const double* dyr = dy + i * cols;
        double* dxr = dx + i * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * dyr[j];
        for (std::size_t j = 0; j < cols; ++j) {
            const double g = yr[j] * (dyr[j] - dot);
            dxr[j] = accumulate ? dxr[j] + g : g;
        }
    }
}

void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y, double* mean, double* rstd,
                     std::size_t rows, std::size_t cols, double eps) {
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const double* xr = x + i * cols;
        double mu = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
        mu *= inv_n;
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var *= inv_n;
        const double rs = 1.0 / std::sqrt(var + eps);
        mean[i] = mu;
        rstd[i] = rs;
        for (std::size_t j = 0; j < cols; ++j) y[i * cols + j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    }
}

void layer_norm_rows_backward(const double* x, const double* gamma, const double* mean, const double* rstd,
                              const double* dy, double* dx, double* dgamma, double* dbeta, std::size_t rows,
                              std::size_t cols) {
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t i = 0; i < rows; ++i) {
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
        if (dx) {
            for (std::size_t j = 0; j < cols; ++j) {
                const double xhat = (xr[j] - mean[i]) * rstd[i];
                const double dxhat = dyr[j] * gamma[j];
                dx[i * cols + j] += rstd[i] * (dxhat - sum_dxhat * inv_n - xhat * sum_dxhat_xhat * inv_n);
            }
        }
    }
    for (std::size_t j = 0; j < cols; ++j) {
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

}  // namespace pkt::kernels::serial
