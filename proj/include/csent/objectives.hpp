#pragma once

// Classification losses, contrastive (InfoNCE) losses and embedding-geometry
// metrics.

#include "csent/real.hpp"
#include <cstddef>
#include <span>

#include "csent/tensor.hpp"

namespace csent::inline CSENT_ABI {

enum class LossKind { cross_entropy, focal };
enum class Reduction { mean, sum };

struct LossConfig {
  LossKind kind = LossKind::cross_entropy;
  float gamma = 3.0f;  // focal only
  Reduction reduction = Reduction::mean;
  float temperature = 0.05f;  // contrastive losses

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

/// Probabilities are floored here before any log.
inline constexpr real kProbFloor = real(1e-12);

/// -log p_t per row of logits [b, c] -> [b].
Tensor cross_entropy_per_example(const Tensor& logits, std::span<const int> gold);
/// -(1 - p_t)^gamma log p_t per row -> [b].
Tensor focal_loss_per_example(const Tensor& logits, std::span<const int> gold, real gamma);

Tensor cross_entropy(const Tensor& logits, std::span<const int> gold,
                     Reduction reduction = Reduction::mean);
Tensor focal_loss(const Tensor& logits, std::span<const int> gold, real gamma,
                  Reduction reduction = Reduction::mean);
/// Dispatches on config.kind.
Tensor classification_loss(const Tensor& logits, std::span<const int> gold,
                           const LossConfig& config);

/// InfoNCE over in-batch negatives with cosine similarity: row i of `a` is
/// scored against every row of `b`, the positive being row i.
Tensor unsup_contrastive_loss(const Tensor& a, const Tensor& b, real temperature);

/// InfoNCE whose candidates for anchor i are all positives and all hard
/// negatives in the batch (2b terms); the target is positive i.
Tensor sup_contrastive_loss(const Tensor& anchor, const Tensor& positive,
                            const Tensor& hard_negative, real temperature);

struct AlignmentUniformity {
  double alignment = 0.0;   // mean ||x_i - y_i||^2
  double uniformity = 0.0;  // log mean_{i<j} exp(-2 ||x_i - x_j||^2)
};

/// Rows of x [n, d] and y [n, d] are unit-norm positive pairs. Uniformity is
/// taken over the x rows and needs n >= 2.
AlignmentUniformity alignment_uniformity(const Tensor& x, const Tensor& y);

}  // namespace csent
