#pragma once

// Three-way classification heads on top of the encoder.
//
//   linear:        dropout(pooled) -> dense -> tanh -> dropout -> final
//   bigru, bilstm: dropout(hidden) -> bidirectional recurrence over real
//                  positions -> [fwd_last ; bwd_first] -> relu -> dropout -> final

#include "csent/real.hpp"
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "csent/encoder.hpp"
#include "csent/tensor.hpp"
#include "csent/text.hpp"

namespace csent::inline CSENT_ABI {

enum class HeadKind { linear, bigru, bilstm };
enum class Activation { tanh, relu };

std::string_view head_kind_name(HeadKind kind);
std::optional<HeadKind> parse_head_kind(std::string_view name);

struct HeadConfig {
  HeadKind kind = HeadKind::linear;
  std::size_t dense_in = 64;
  std::size_t dense_out = 64;  // per direction for recurrent heads
  float dropout_p = 0.1f;
  static constexpr std::size_t final_out = 3;

  /// Dense width follows the encoder width: d_model for the linear head,
  /// max(8, round(d_model / 3)) per direction for recurrent heads (768 -> 256).
  static HeadConfig for_kind(HeadKind kind, std::size_t d_model, float dropout_p = 0.1f);

  Activation activation() const {
    return kind == HeadKind::linear ? Activation::tanh : Activation::relu;
  }
  std::size_t final_in() const { return kind == HeadKind::linear ? dense_out : 2 * dense_out; }
  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

/// One direction of a GRU (gates r|z|n) or LSTM (gates i|f|g|o).
struct RecurrentCell {
  Tensor w_x, b_x;  // [in, G*h], [G*h]
  Tensor w_h, b_h;  // [h, G*h], [G*h]
};

struct HeadParams {
  Tensor dense_w, dense_b;  // linear kind only
  RecurrentCell forward, backward;  // recurrent kinds only
  Tensor final_w, final_b;  // [final_in, 3], [3]

  static HeadParams init(const HeadConfig& config, std::uint64_t seed);
  std::vector<NamedTensor> named() const;
  HeadParams clone() const;
  /// Throws if any tensor disagrees with `config`.
  void check_shapes(const HeadConfig& config) const;
};

/// Raw logits [b, 3].
Tensor head_forward(const EncoderOutput& encoded, const HeadConfig& config,
                    const HeadParams& params, Mode mode, std::uint64_t seed = 0);

/// Final (forward, backward) recurrent states [b, h] each, before activation.
/// Exposed for tests of the bidirectional readout.
std::pair<Tensor, Tensor> recurrent_states(const Tensor& inputs, const Tensor& key_mask,
                                           const HeadConfig& config, const HeadParams& params);

/// Row-wise argmax; ties go to the lowest class index. Throws on NaN.
std::vector<int> predict(const Tensor& logits);

}  // namespace csent
