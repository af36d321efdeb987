#include "csent/kernels.hpp"

#ifdef CSENT_HAVE_OPENMP
#include <omp.h>
#endif

namespace csent::inline CSENT_ABI::kernels {

namespace {

#ifdef CSENT_HAVE_OPENMP
Backend g_backend = Backend::openmp;
#else
Backend g_backend = Backend::serial;
#endif

// Below this many multiply-adds the thread fork costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

bool use_omp(std::size_t work) {
  return g_backend == Backend::openmp && work >= kParallelWork;
}

}  // namespace

void set_backend(Backend backend) {
  g_backend = openmp_available() ? backend : Backend::serial;
}

Backend backend() { return g_backend; }

bool openmp_available() {
#ifdef CSENT_HAVE_OPENMP
  return true;
#else
  return false;
#endif
}

void set_num_threads(int threads) {
#ifdef CSENT_HAVE_OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, const real* b, real* c, bool accumulate) {
  if (use_omp(m * n * k) && m > 1) {
    omp::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  } else {
    serial::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  }
}

void softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out,
                  const real* key_mask, std::size_t rows_per_mask) {
  if (use_omp(rows * cols * 8)) {
    omp::softmax_rows(rows, cols, in, out, key_mask, rows_per_mask);
  } else {
    serial::softmax_rows(rows, cols, in, out, key_mask, rows_per_mask);
  }
}

void log_softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out) {
  if (use_omp(rows * cols * 8)) {
    omp::log_softmax_rows(rows, cols, in, out);
  } else {
    serial::log_softmax_rows(rows, cols, in, out);
  }
}

void layer_norm_rows(std::size_t rows, std::size_t cols, const real* x, const real* gamma,
                     const real* beta, real eps, real* out, real* mean, real* rstd) {
  if (use_omp(rows * cols * 4)) {
    omp::layer_norm_rows(rows, cols, x, gamma, beta, eps, out, mean, rstd);
  } else {
    serial::layer_norm_rows(rows, cols, x, gamma, beta, eps, out, mean, rstd);
  }
}

void layer_norm_backward_rows(std::size_t rows, std::size_t cols, const real* x,
                              const real* gamma, const real* mean, const real* rstd,
                              const real* dy, real* dx, real* dgamma, real* dbeta) {
  if (use_omp(rows * cols * 8)) {
    omp::layer_norm_backward_rows(rows, cols, x, gamma, mean, rstd, dy, dx, dgamma, dbeta);
  } else {
    serial::layer_norm_backward_rows(rows, cols, x, gamma, mean, rstd, dy, dx, dgamma, dbeta);
  }
}

}  // namespace csent::inline CSENT_ABI::kernels
