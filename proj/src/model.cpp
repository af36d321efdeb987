#include "csent/model.hpp"

#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI {

std::vector<NamedTensor> Classifier::named() const {
  auto out = encoder.named();
  for (auto& t : head.named()) out.push_back(std::move(t));
  return out;
}

Classifier Classifier::clone() const {
  return {encoder_config, encoder.clone(), head_config, head.clone()};
}

Tensor Classifier::logits(const TokenizedBatch& batch, Mode mode, std::uint64_t seed) const {
  const EncoderOutput out = encode(batch, encoder, encoder_config, mode, mix_seed(seed, 1));
  return head_forward(out, head_config, head, mode, mix_seed(seed, 2));
}

}  // namespace csent
