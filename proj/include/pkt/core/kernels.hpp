#pragma once

#include <cstddef>
#include <limits>

// Dense kernels used by the autodiff graph and the inference path.
//
// Two implementations share one set of signatures:
//   pkt::kernels::serial  - plain loops, kept as the reference for tests
//   pkt::kernels          - OpenMP row-parallel versions used everywhere else
//
// The parallel versions never reduce across threads: every output element is
// written by exactly one thread with a fixed summation order, so results are
// bit-identical for any thread count.

namespace pkt::kernels {

inline constexpr std::size_t kNoMask = std::numeric_limits<std::size_t>::max();

enum class Trans { kNone, kTranspose };

/// C[m,n] (+)= op(A) * op(B), with op(A) of shape [m,k] and op(B) of shape [k,n].
/// A is stored [m,k] (or [k,m] when transposed); B is [k,n] (or [n,k]).
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate);

/// Row softmax with max subtraction. When causal_offset != kNoMask, row i only
/// sees columns j <= causal_offset + i; hidden entries are exactly 0.
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols, std::size_t causal_offset);

/// dx (+)= y * (dy - sum(y * dy)) per row.
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows, std::size_t cols,
                           bool accumulate);

/// y = (x - mean) * rstd * gamma + beta per row; mean/rstd saved for backward.
void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y, double* mean, double* rstd,
                     std::size_t rows, std::size_t cols, double eps);

/// Any of dx, dgamma, dbeta may be null. All outputs accumulate.
void layer_norm_rows_backward(const double* x, const double* gamma, const double* mean, const double* rstd,
                              const double* dy, double* dx, double* dgamma, double* dbeta, std::size_t rows,
                              std::size_t cols);

namespace serial {

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
          double* c, bool accumulate);
void softmax_rows(const double* x, double* y, std::size_t rows, std::size_t cols, std::size_t causal_offset);
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t rows, std::size_t cols,
                           bool accumulate);
void layer_norm_rows(const double* x, const double* gamma, const double* beta, double* y, double* mean, double* rstd,
                     std::size_t rows, std::size_t cols, double eps);
void layer_norm_rows_backward(const double* x, const double* gamma, const double* mean, const double* rstd,
                              const double* dy, double* dx, double* dgamma, double* dbeta, std::size_t rows,
                              std::size_t cols);

}  // namespace serial

}  // namespace pkt::kernels
