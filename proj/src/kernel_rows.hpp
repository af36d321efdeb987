#pragma once

// Per-row kernel bodies shared by the serial and OpenMP backends. Both
// backends call exactly these functions, one row (or column) at a time, which
// is what makes their outputs bit-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace csent::inline CSENT_ABI::kernels::rows {

// `acc` must hold n + k doubles.
inline void gemm_row(std::size_t i, bool trans_a, bool trans_b, std::size_t m, std::size_t n,
                     std::size_t k, const real* a, const real* b, real* c, bool accumulate,
                     double* acc) {
  double* arow = acc + n;
  if (trans_a) {
    for (std::size_t p = 0; p < k; ++p) arow[p] = a[p * m + i];
  } else {
    const real* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) arow[p] = ai[p];
  }
  if (trans_b) {
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const real* b0 = b + j * k;
      const real* b1 = b0 + k;
      const real* b2 = b1 + k;
      const real* b3 = b2 + k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double ap = arow[p];
        s0 += ap * static_cast<double>(b0[p]);
        s1 += ap * static_cast<double>(b1[p]);
        s2 += ap * static_cast<double>(b2[p]);
        s3 += ap * static_cast<double>(b3[p]);
      }
      acc[j] = s0;
      acc[j + 1] = s1;
      acc[j + 2] = s2;
      acc[j + 3] = s3;
    }
    for (; j < n; ++j) {
      const real* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * static_cast<double>(bj[p]);
      acc[j] = s;
    }
  } else {
    std::fill(acc, acc + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const real* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * static_cast<double>(bp[j]);
    }
  }
  real* ci = c + i * n;
  if (accumulate) {
    for (std::size_t j = 0; j < n; ++j) ci[j] += static_cast<real>(acc[j]);
  } else {
    for (std::size_t j = 0; j < n; ++j) ci[j] = static_cast<real>(acc[j]);
  }
}

inline void softmax_row(std::size_t cols, const real* in, real* out, const real* mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask && mask[j] == 0.0f) continue;
    mx = std::max(mx, static_cast<double>(in[j]));
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask && mask[j] == 0.0f) continue;
    sum += std::exp(static_cast<double>(in[j]) - mx);
  }
  for (std::size_t j = 0; j < cols; ++j) {
    if (mask && mask[j] == 0.0f) {
      out[j] = 0.0f;
    } else {
      out[j] = static_cast<real>(std::exp(static_cast<double>(in[j]) - mx) / sum);
    }
  }
}

inline void log_softmax_row(std::size_t cols, const real* in, real* out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, static_cast<double>(in[j]));
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) sum += std::exp(static_cast<double>(in[j]) - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t j = 0; j < cols; ++j) out[j] = static_cast<real>(in[j] - lse);
}

inline void layer_norm_row(std::size_t cols, const real* x, const real* gamma,
                           const real* beta, real eps, real* out, real* mean_out,
                           real* rstd_out) {
  double mean = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mean += x[j];
  mean /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  const double rstd = 1.0 / std::sqrt(var + eps);
  for (std::size_t j = 0; j < cols; ++j) {
    out[j] = static_cast<real>((x[j] - mean) * rstd * gamma[j] + beta[j]);
  }
  *mean_out = static_cast<real>(mean);
  *rstd_out = static_cast<real>(rstd);
}

inline void layer_norm_backward_row(std::size_t cols, const real* x, const real* gamma,
                                    real mean, real rstd, const real* dy, real* dx) {
  double mean_dxhat = 0.0;
  double mean_dxhat_xhat = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double xhat = (static_cast<double>(x[j]) - mean) * rstd;
    const double dxhat = static_cast<double>(dy[j]) * gamma[j];
    mean_dxhat += dxhat;
    mean_dxhat_xhat += dxhat * xhat;
  }
  mean_dxhat /= static_cast<double>(cols);
  mean_dxhat_xhat /= static_cast<double>(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    const double xhat = (static_cast<double>(x[j]) - mean) * rstd;
    const double dxhat = static_cast<double>(dy[j]) * gamma[j];
    dx[j] += static_cast<real>(rstd * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat));
  }
}

// Reduces column j of the gamma/beta gradients over all rows, rows ascending.
inline void layer_norm_param_grad_col(std::size_t j, std::size_t rows, std::size_t cols,
                                      const real* x, const real* mean, const real* rstd,
                                      const real* dy, real* dgamma, real* dbeta) {
  double g = 0.0;
  double b = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double xhat = (static_cast<double>(x[r * cols + j]) - mean[r]) * rstd[r];
    g += static_cast<double>(dy[r * cols + j]) * xhat;
    b += dy[r * cols + j];
  }
  if (dgamma) dgamma[j] += static_cast<real>(g);
  if (dbeta) dbeta[j] += static_cast<real>(b);
}

}  // namespace csent::inline CSENT_ABI::kernels::rows
