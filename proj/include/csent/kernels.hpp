#pragma once

// Raw row-major real kernels behind the tensor ops.
//
// Every kernel exists twice: a serial reference in `kernels::serial` and an
// OpenMP version in `kernels::omp`. The OpenMP versions only split work over
// independent output rows (or columns for row reductions), so each output
// element is produced by the same sequence of floating-point operations as the
// serial reference and the results are bit-identical.
//
// Inner products and row reductions accumulate in double.

#include "csent/real.hpp"
#include <cstddef>

namespace csent::inline CSENT_ABI::kernels {

enum class Backend { serial, openmp };

/// Selects the backend used by the dispatching functions below. Falls back to
/// serial when the library was built without OpenMP.
void set_backend(Backend backend);
Backend backend();
bool openmp_available();

/// Sets the OpenMP thread count (0 keeps the runtime default).
void set_num_threads(int threads);

namespace serial {

// C[m x n] (+)= op(A) * op(B), op(A) is m x k, op(B) is k x n.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, const real* b, real* c, bool accumulate);

// Softmax over each row of `cols` entries. `key_mask`, when non-null, holds one
// 0/1 row of `cols` entries shared by `rows_per_mask` consecutive rows; masked
// entries are treated as -inf. Every row must keep at least one unmasked entry.
void softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out,
                  const real* key_mask, std::size_t rows_per_mask);

void log_softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out);

// Layer normalisation over each row; writes per-row mean and reciprocal stddev.
void layer_norm_rows(std::size_t rows, std::size_t cols, const real* x, const real* gamma,
                     const real* beta, real eps, real* out, real* mean, real* rstd);

// Accumulates into dx (when non-null), dgamma and dbeta (when non-null).
void layer_norm_backward_rows(std::size_t rows, std::size_t cols, const real* x,
                              const real* gamma, const real* mean, const real* rstd,
                              const real* dy, real* dx, real* dgamma, real* dbeta);

}  // namespace serial

namespace omp {

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, const real* b, real* c, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out,
                  const real* key_mask, std::size_t rows_per_mask);
void log_softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out);
void layer_norm_rows(std::size_t rows, std::size_t cols, const real* x, const real* gamma,
                     const real* beta, real eps, real* out, real* mean, real* rstd);
void layer_norm_backward_rows(std::size_t rows, std::size_t cols, const real* x,
                              const real* gamma, const real* mean, const real* rstd,
                              const real* dy, real* dx, real* dgamma, real* dbeta);

}  // namespace omp

// Dispatch on the selected backend. Small problems always run serially.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const real* a, const real* b, real* c, bool accumulate);
void softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out,
                  const real* key_mask = nullptr, std::size_t rows_per_mask = 1);
void log_softmax_rows(std::size_t rows, std::size_t cols, const real* in, real* out);
void layer_norm_rows(std::size_t rows, std::size_t cols, const real* x, const real* gamma,
                     const real* beta, real eps, real* out, real* mean, real* rstd);
void layer_norm_backward_rows(std::size_t rows, std::size_t cols, const real* x,
                              const real* gamma, const real* mean, const real* rstd,
                              const real* dy, real* dx, real* dgamma, real* dbeta);

}  // namespace csent::inline CSENT_ABI::kernels
