#include "csent/kernels.hpp"

#include <cstdint>
#include <vector>

#include "kernel_rows.hpp"

#ifdef CSENT_HAVE_OPENMP
#include <omp.h>
#endif

// Without OpenMP the pragmas are ignored and these run serially, which keeps
// the omp:: entry points usable (and bit-identical) in every build.

namespace csent::inline CSENT_ABI::kernels::omp {

namespace {
using Index = std::int64_t;
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, const real* b, real* c, bool accumulate) {
#pragma omp parallel
  {
    std::vector<double> acc(n + k);
#pragma omp for schedule(static)
    for (Index i = 0; i < static_cast<Index>(m); ++i) {
      rows::gemm_row(static_cast<std::size_t>(i), trans_a, trans_b, m, n, k, a, b, c,
                     accumulate, acc.data());
    }
  }
}

void softmax_rows(std::size_t n_rows, std::size_t cols, const real* in, real* out,
                  const real* key_mask, std::size_t rows_per_mask) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(n_rows); ++r) {
    const auto row = static_cast<std::size_t>(r);
    const real* mask = key_mask ? key_mask + (row / rows_per_mask) * cols : nullptr;
    rows::softmax_row(cols, in + row * cols, out + row * cols, mask);
  }
}

void log_softmax_rows(std::size_t n_rows, std::size_t cols, const real* in, real* out) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(n_rows); ++r) {
    const auto row = static_cast<std::size_t>(r);
    rows::log_softmax_row(cols, in + row * cols, out + row * cols);
  }
}

void layer_norm_rows(std::size_t n_rows, std::size_t cols, const real* x, const real* gamma,
                     const real* beta, real eps, real* out, real* mean, real* rstd) {
#pragma omp parallel for schedule(static)
  for (Index r = 0; r < static_cast<Index>(n_rows); ++r) {
    const auto row = static_cast<std::size_t>(r);
    rows::layer_norm_row(cols, x + row * cols, gamma, beta, eps, out + row * cols, mean + row,
                         rstd + row);
  }
}

void layer_norm_backward_rows(std::size_t n_rows, std::size_t cols, const real* x,
                              const real* gamma, const real* mean, const real* rstd,
                              const real* dy, real* dx, real* dgamma, real* dbeta) {
  if (dx) {
#pragma omp parallel for schedule(static)
    for (Index r = 0; r < static_cast<Index>(n_rows); ++r) {
      const auto row = static_cast<std::size_t>(r);
      rows::layer_norm_backward_row(cols, x + row * cols, gamma, mean[row], rstd[row],
                                    dy + row * cols, dx + row * cols);
    }
  }
  if (dgamma || dbeta) {
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < static_cast<Index>(cols); ++j) {
      rows::layer_norm_param_grad_col(static_cast<std::size_t>(j), n_rows, cols, x, mean, rstd,
                                      dy, dgamma, dbeta);
    }
  }
}

}  // namespace csent::inline CSENT_ABI::kernels::omp
