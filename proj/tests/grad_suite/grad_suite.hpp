#pragma once

// Finite-difference checks over every differentiable op, every loss and the
// assembled classifier. Built in double precision; the interface only uses
// standard types so float-precision binaries can link it too.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace grad_suite {

struct CaseResult {
  std::string name;
  std::size_t instances = 0;
  double worst = 0.0;  // max relative error over all instances
  double tolerance = 0.0;

  bool passed() const { return worst < tolerance; }
};

std::vector<CaseResult> check_ops(std::size_t instances, std::uint64_t seed);
std::vector<CaseResult> check_losses(std::size_t instances, std::uint64_t seed);
/// Encoder (d_model 16) + each head + loss, probed at sampled coordinates of
/// several parameter tensors.
std::vector<CaseResult> check_composite(std::size_t instances, std::uint64_t seed);

}  // namespace grad_suite
