#pragma once

#include "csent/real.hpp"
#include <iosfwd>

namespace csent::inline CSENT_ABI {

/// Entry point of the `csent` tool. Returns the process exit code: 0 when the
/// requested artifact was fully written, 2 for usage errors, 1 otherwise.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csent
