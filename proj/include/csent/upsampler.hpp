#pragma once

// Class rebalancing by fill-mask generation: mask a few tokens of a source
// example and sample replacements from the masked-token head.

#include "csent/real.hpp"
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csent/encoder.hpp"
#include "csent/text.hpp"

namespace csent::inline CSENT_ABI {

struct BalancePlan {
  std::array<std::size_t, 3> current{};
  std::array<std::size_t, 3> target{};
  std::array<std::size_t, 3> deficit{};
  bool operator==(const BalancePlan&) const = default;
};

/// Target defaults to the largest class count. Throws if `target` is below it
/// or the distribution is empty.
BalancePlan make_plan(const ClassDistribution& dist, std::optional<std::size_t> target = {});

struct GenerationConfig {
  double mask_rate = 0.15;
  std::size_t top_k = 5;
  std::size_t max_length = 64;
  std::uint64_t seed = 42;
};

struct SyntheticExample {
  LabeledExample example;
  std::size_t source_id = 0;
  std::vector<std::size_t> changed_positions;  // indices into tokenize(source text)
  bool degenerate = false;  // source had no maskable token
  bool duplicate = false;   // output tokens equal the source tokens
};

/// Only in-vocabulary, non-reserved tokens within `max_length` are maskable.
/// A draw that masks nothing returns the source text verbatim.
SyntheticExample fill_mask_generate(const LabeledExample& example, std::size_t source_id,
                                    const EncoderParams& params, const EncoderConfig& config,
                                    const Vocab& vocab, const GenerationConfig& generation,
                                    std::uint64_t seed);

struct UpsampleResult {
  std::vector<LabeledExample> dataset;  // originals, then synthetic rows
  std::vector<SyntheticExample> synthetic;
  BalancePlan plan;
  std::array<double, 3> synthetic_fraction{};
  std::vector<std::string> warnings;
};

/// Appends deficit-many synthetic rows per class, drawing sources round-robin
/// over a seeded permutation of that class. Synthetic rows are tagged
/// "synthetic"; a class that ends up more than half synthetic is warned about.
UpsampleResult upsample(std::span<const LabeledExample> dataset, const BalancePlan& plan,
                        const EncoderParams& params, const EncoderConfig& config,
                        const Vocab& vocab, const GenerationConfig& generation);

}  // namespace csent
