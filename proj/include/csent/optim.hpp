#pragma once

// AdamW with bias correction and decoupled weight decay:
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   w <- w - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * w

#include "csent/real.hpp"
#include <cstddef>
#include <vector>

#include "csent/encoder.hpp"

namespace csent::inline CSENT_ABI {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamW {
 public:
  explicit AdamW(std::vector<NamedTensor> params, AdamWConfig config = {});

  /// Applies one update to every parameter that holds a gradient buffer;
  /// parameters the backward pass never reached are left untouched.
  /// Throws std::domain_error naming the first parameter with a non-finite
  /// gradient, before anything is modified.
  void step(double lr, double weight_decay);
  /// Releases every gradient buffer.
  void zero_grad();

  std::size_t steps() const { return steps_; }
  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<real>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<real>& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<NamedTensor> params_;
  AdamWConfig config_;
  std::vector<std::vector<real>> m_, v_;
  std::size_t steps_ = 0;
};

}  // namespace csent
