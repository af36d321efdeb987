#pragma once

#include "csent/real.hpp"
#include <cstdint>
#include <vector>

#include "csent/encoder.hpp"
#include "csent/heads.hpp"
#include "csent/tensor.hpp"
#include "csent/text.hpp"

namespace csent::inline CSENT_ABI {

/// Encoder plus classification head.
struct Classifier {
  EncoderConfig encoder_config;
  EncoderParams encoder;
  HeadConfig head_config;
  HeadParams head;

  /// Encoder parameters first, then head parameters.
  std::vector<NamedTensor> named() const;
  Classifier clone() const;
  /// Logits [b, 3]. `seed` only matters in train mode.
  Tensor logits(const TokenizedBatch& batch, Mode mode, std::uint64_t seed = 0) const;
};

}  // namespace csent
