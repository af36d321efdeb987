#include "doctest.h"

#include "grad_suite.hpp"

namespace {

void require_all(const std::vector<grad_suite::CaseResult>& results) {
  for (const auto& r : results) {
    INFO(r.name << ": worst relative error " << r.worst);
    CHECK(r.passed());
  }
}

}  // namespace

TEST_CASE("every op matches finite differences") { require_all(grad_suite::check_ops(3, 1)); }

TEST_CASE("every loss matches finite differences") { require_all(grad_suite::check_losses(3, 1)); }

TEST_CASE("encoder, head and loss together match finite differences") {
  require_all(grad_suite::check_composite(1, 1));
}
