#include "csent/kernels.hpp"

#include <vector>

#include "kernel_rows.hpp"

namespace csent::inline CSENT_ABI::kernels::serial {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, const real* b, real* c, bool accumulate) {
  std::vector<double> acc(n + k);
  for (std::size_t i = 0; i < m; ++i) {
    rows::gemm_row(i, trans_a, trans_b, m, n, k, a, b, c, accumulate, acc.data());
  }
}

void softmax_rows(std::size_t n_rows, std::size_t cols, const real* in, real* out,
                  const real* key_mask, std::size_t rows_per_mask) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    const real* mask = key_mask ? key_mask + (r / rows_per_mask) * cols : nullptr;
    rows::softmax_row(cols, in + r * cols, out + r * cols, mask);
  }
}

void log_softmax_rows(std::size_t n_rows, std::size_t cols, const real* in, real* out) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    rows::log_softmax_row(cols, in + r * cols, out + r * cols);
  }
}

void layer_norm_rows(std::size_t n_rows, std::size_t cols, const real* x, const real* gamma,
                     const real* beta, real eps, real* out, real* mean, real* rstd) {
  for (std::size_t r = 0; r < n_rows; ++r) {
    rows::layer_norm_row(cols, x + r * cols, gamma, beta, eps, out + r * cols, mean + r,
                         rstd + r);
  }
}

void layer_norm_backward_rows(std::size_t n_rows, std::size_t cols, const real* x,
                              const real* gamma, const real* mean, const real* rstd,
                              const real* dy, real* dx, real* dgamma, real* dbeta) {
  if (dx) {
    for (std::size_t r = 0; r < n_rows; ++r) {
      rows::layer_norm_backward_row(cols, x + r * cols, gamma, mean[r], rstd[r], dy + r * cols,
                                    dx + r * cols);
    }
  }
  if (dgamma || dbeta) {
    for (std::size_t j = 0; j < cols; ++j) {
      rows::layer_norm_param_grad_col(j, n_rows, cols, x, mean, rstd, dy, dgamma, dbeta);
    }
  }
}

}  // namespace csent::inline CSENT_ABI::kernels::serial
