#include "csent/objectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "csent/ops.hpp"

namespace csent::inline CSENT_ABI {

namespace {

Tensor one_hot(std::span<const int> index, std::size_t classes) {
  Tensor t(Shape{index.size(), classes});
  auto d = t.data();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || static_cast<std::size_t>(index[i]) >= classes) {
      throw std::out_of_range("loss: gold label " + std::to_string(index[i]) + " at row " +
                              std::to_string(i) + " outside [0, " + std::to_string(classes) + ")");
    }
    d[i * classes + static_cast<std::size_t>(index[i])] = 1.0f;
  }
  return t;
}

// log p_t per row, floored at log(kProbFloor).
Tensor gold_log_prob(const Tensor& logits, std::span<const int> gold) {
  if (logits.rank() != 2 || logits.size(0) != gold.size()) {
    throw std::invalid_argument("loss: logits " + shape_str(logits.shape()) + " vs " +
                                std::to_string(gold.size()) + " gold labels");
  }
  Tensor logp = ops::log_softmax(logits);
  Tensor picked = ops::sum_last(ops::mul(logp, one_hot(gold, logits.size(1))));
  return ops::clamp_min(picked, std::log(kProbFloor));
}

Tensor reduce(const Tensor& per_example, Reduction reduction) {
  return reduction == Reduction::mean ? ops::mean(per_example) : ops::sum(per_example);
}

Tensor info_nce(const Tensor& logits) {
  const std::size_t n = logits.size(0);
  std::vector<int> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = static_cast<int>(i);
  Tensor logp = ops::log_softmax(logits);
  return ops::scale(ops::mean(ops::sum_last(ops::mul(logp, one_hot(diag, logits.size(1))))),
                    -1.0f);
}

void check_pair(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": expected matching [b, d] inputs, got " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(gamma >= 0.0f)) throw std::invalid_argument("loss config: gamma must be >= 0");
  if (!(temperature > 0.0f)) throw std::invalid_argument("loss config: temperature must be > 0");
}

Tensor cross_entropy_per_example(const Tensor& logits, std::span<const int> gold) {
  return ops::scale(gold_log_prob(logits, gold), -1.0f);
}

Tensor focal_loss_per_example(const Tensor& logits, std::span<const int> gold, real gamma) {
  if (!(gamma >= 0.0f)) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  Tensor logp = gold_log_prob(logits, gold);
  Tensor one_minus_p = ops::add_scalar(ops::scale(ops::exp(logp), -1.0f), 1.0f);
  Tensor modulating = ops::pow(ops::clamp_min(one_minus_p, 0.0f), gamma);
  return ops::scale(ops::mul(modulating, logp), -1.0f);
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> gold, Reduction reduction) {
  return reduce(cross_entropy_per_example(logits, gold), reduction);
}

Tensor focal_loss(const Tensor& logits, std::span<const int> gold, real gamma,
                  Reduction reduction) {
  return reduce(focal_loss_per_example(logits, gold, gamma), reduction);
}

Tensor classification_loss(const Tensor& logits, std::span<const int> gold,
                           const LossConfig& config) {
  return config.kind == LossKind::focal ? focal_loss(logits, gold, config.gamma, config.reduction)
                                        : cross_entropy(logits, gold, config.reduction);
}

Tensor unsup_contrastive_loss(const Tensor& a, const Tensor& b, real temperature) {
  check_pair("unsup_contrastive_loss", a, b);
  if (!(temperature > 0.0f)) throw std::invalid_argument("unsup_contrastive_loss: temperature <= 0");
  Tensor sim = ops::matmul(ops::l2_normalize(a), ops::transpose(ops::l2_normalize(b)));
  return info_nce(ops::scale(sim, 1.0f / temperature));
}

Tensor sup_contrastive_loss(const Tensor& anchor, const Tensor& positive,
                            const Tensor& hard_negative, real temperature) {
  check_pair("sup_contrastive_loss", anchor, positive);
  check_pair("sup_contrastive_loss", anchor, hard_negative);
  if (!(temperature > 0.0f)) throw std::invalid_argument("sup_contrastive_loss: temperature <= 0");
  Tensor an = ops::l2_normalize(anchor);
  Tensor pos = ops::matmul(an, ops::transpose(ops::l2_normalize(positive)));
  Tensor neg = ops::matmul(an, ops::transpose(ops::l2_normalize(hard_negative)));
  const Tensor parts[] = {pos, neg};
  return info_nce(ops::scale(ops::concat(parts), 1.0f / temperature));
}

AlignmentUniformity alignment_uniformity(const Tensor& x, const Tensor& y) {
  check_pair("alignment_uniformity", x, y);
  const std::size_t n = x.size(0);
  const std::size_t d = x.size(1);
  if (n < 2) throw std::invalid_argument("alignment_uniformity: uniformity needs >= 2 points");
  const auto xs = x.data();
  const auto ys = y.data();
  auto sq_dist = [d](std::span<const real> u, std::size_t i, std::span<const real> v,
                     std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = static_cast<double>(u[i * d + k]) - v[j * d + k];
      s += diff * diff;
    }
    return s;
  };
  AlignmentUniformity out;
  for (std::size_t i = 0; i < n; ++i) out.alignment += sq_dist(xs, i, ys, i);
  out.alignment /= static_cast<double>(n);
  double acc = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      acc += std::exp(-2.0 * sq_dist(xs, i, xs, j));
      ++pairs;
    }
  }
  out.uniformity = std::log(acc / static_cast<double>(pairs));
  return out;
}

}  // namespace csent
