#pragma once

#include "csent/real.hpp"
#include <cstddef>
#include <cstdint>
#include <functional>

#include "csent/tensor.hpp"

namespace csent::inline CSENT_ABI {

/// Compares the tape gradient of a scalar function against central
/// differences at every coordinate of `x` (or `max_coords` seeded picks).
///
/// Returns max |autodiff - fd| / max(1, |fd|). `f` is evaluated twice at the
/// base point with recording paused and must give bit-identical results, so any
/// dropout inside it must use fixed seeds. The difference quotient divides by
/// the actually representable step, not by 2h.
double grad_check(const std::function<Tensor()>& f, Tensor x, double step = 1e-3,
                  std::size_t max_coords = 0, std::uint64_t seed = 0);

}  // namespace csent
