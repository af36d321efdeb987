#include "csent/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI {

double grad_check(const std::function<Tensor()>& f, Tensor x, double step,
                  std::size_t max_coords, std::uint64_t seed) {
  Tape::current().clear();
  x.set_requires_grad(true);
  x.ensure_grad();
  x.zero_grad();
  Tensor y = f();
  if (y.numel() != 1) {
    throw std::invalid_argument("grad_check: function must return a scalar, got " +
                                shape_str(y.shape()));
  }
  backward(y);
  const std::vector<real> analytic(x.grad().begin(), x.grad().end());

  NoGradGuard no_grad;
  const real base_a = f().item();
  const real base_b = f().item();
  if (std::memcmp(&base_a, &base_b, sizeof(real)) != 0) {
    throw std::runtime_error("grad_check: function is not deterministic at the base point");
  }

  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(max_coords);
  }

  auto values = x.data();
  double worst = 0.0;
  for (std::size_t i : coords) {
    const real orig = values[i];
    const real up = static_cast<real>(orig + step);
    const real down = static_cast<real>(orig - step);
    values[i] = up;
    const double f_up = f().item();
    values[i] = down;
    const double f_down = f().item();
    values[i] = orig;
    const double fd = (f_up - f_down) / (static_cast<double>(up) - static_cast<double>(down));
    const double err = std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace csent
