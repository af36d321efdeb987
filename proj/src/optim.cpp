#include "csent/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace csent::inline CSENT_ABI {

AdamW::AdamW(std::vector<NamedTensor> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0f);
    v_.emplace_back(p.tensor.numel(), 0.0f);
  }
}

void AdamW::step(double lr, double weight_decay) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (real g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw std::domain_error("adamw: non-finite gradient in " + p.name);
      }
    }
  }
  ++steps_;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor w = params_[i].tensor;
    if (!w.has_grad()) continue;
    auto data = w.data();
    const auto grad = std::as_const(w).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = grad[j];
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<real>(mj);
      v[j] = static_cast<real>(vj);
      const double update = (mj / c1) / (std::sqrt(vj / c2) + config_.eps);
      const double old = data[j];
      data[j] = static_cast<real>(old - lr * update - lr * weight_decay * old);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.tensor.clear_grad();
}

}  // namespace csent
