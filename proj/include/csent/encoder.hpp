#pragma once

// Small pre-layer-norm transformer encoder with learned positions, a cls (or
// masked-mean) pooled sentence vector and an untied masked-token head.

#include "csent/real.hpp"
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csent/tensor.hpp"
#include "csent/text.hpp"

namespace csent::inline CSENT_ABI {

enum class Mode { train, eval };
enum class Pooling { cls, mean };

struct EncoderConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 0;  // 0 means 4 * d_model
  std::size_t max_length = 64;
  float dropout_p = 0.1f;
  Pooling pooling = Pooling::cls;

  std::size_t ff_dim() const { return d_ff ? d_ff : 4 * d_model; }
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct EncoderLayer {
  Tensor ln1_gamma, ln1_beta;
  Tensor w_qkv, b_qkv;  // [d, 3d], [3d]
  Tensor w_out, b_out;  // [d, d], [d]
  Tensor ln2_gamma, ln2_beta;
  Tensor w_ff1, b_ff1;  // [d, ff], [ff]
  Tensor w_ff2, b_ff2;  // [ff, d], [d]
};

struct EncoderParams {
  Tensor token_embedding;     // [vocab, d]
  Tensor position_embedding;  // [max_length, d]
  std::vector<EncoderLayer> layers;
  Tensor final_gamma, final_beta;
  Tensor mlm_weight, mlm_bias;  // [d, vocab], [vocab]

  static EncoderParams init(const EncoderConfig& config, std::uint64_t seed);
  /// Every trainable tensor in declaration order (the checkpoint order).
  std::vector<NamedTensor> named() const;
  EncoderParams clone() const;
  /// Throws if any tensor disagrees with `config`.
  void check_shapes(const EncoderConfig& config) const;
};

struct EncoderOutput {
  Tensor hidden;    // [b, l, d]
  Tensor pooled;    // [b, d]
  Tensor key_mask;  // [b, l] 0/1, no gradient
};

/// Forward pass. Train mode applies dropout with per-site seeds derived from
/// `seed`, so a pass is exactly replayable; eval mode is deterministic.
EncoderOutput encode(const TokenizedBatch& batch, const EncoderParams& params,
                     const EncoderConfig& config, Mode mode, std::uint64_t seed = 0);

/// [..., d] -> [..., vocab] logits of the masked-token head.
Tensor mlm_logits(const Tensor& hidden, const EncoderParams& params);

/// Rows of hidden [b, l, d] at flat positions b * l + j -> [n, d].
Tensor gather_positions(const Tensor& hidden, std::span<const int> flat_positions);

struct MaskedBatch {
  TokenizedBatch batch;
  std::vector<int> positions;  // flat b * length + l
  std::vector<int> targets;    // original ids at `positions`
};

/// Independently replaces each real non-special token with [mask] with
/// probability `mask_rate`; [cls]/[sep]/[pad] (and other reserved ids) are
/// never selected. Deterministic in `seed`.
MaskedBatch mask_tokens(const TokenizedBatch& batch, double mask_rate, std::uint64_t seed);

}  // namespace csent
