#include "csent/upsampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI {

BalancePlan make_plan(const ClassDistribution& dist, std::optional<std::size_t> target) {
  if (dist.total == 0) throw std::invalid_argument("make_plan: empty class distribution");
  BalancePlan plan;
  plan.current = dist.counts;
  const std::size_t largest = *std::max_element(dist.counts.begin(), dist.counts.end());
  const std::size_t goal = target.value_or(largest);
  if (goal < largest) {
    throw std::invalid_argument("make_plan: target " + std::to_string(goal) +
                                " below the largest class count " + std::to_string(largest));
  }
  for (int c = 0; c < kNumClasses; ++c) {
    plan.target[c] = goal;
    plan.deficit[c] = goal - plan.current[c];
  }
  return plan;
}

SyntheticExample fill_mask_generate(const LabeledExample& example, std::size_t source_id,
                                    const EncoderParams& params, const EncoderConfig& config,
                                    const Vocab& vocab, const GenerationConfig& generation,
                                    std::uint64_t seed) {
  if (!(generation.mask_rate >= 0.0 && generation.mask_rate <= 1.0)) {
    throw std::invalid_argument("fill_mask_generate: mask_rate outside [0, 1]");
  }
  if (generation.top_k < 1) throw std::invalid_argument("fill_mask_generate: top_k must be >= 1");
  SyntheticExample out;
  out.example = example;
  out.source_id = source_id;

  const std::string texts[] = {example.text};
  const TokenizedBatch batch = encode_batch(texts, vocab, generation.max_length, true);
  bool maskable = false;
  for (std::size_t l = 0; l < batch.length; ++l) {
    maskable = maskable || (batch.mask(0, l) && !vocab.is_special(batch.id(0, l)));
  }
  if (!maskable) {
    out.degenerate = true;
    out.duplicate = true;
    return out;
  }
  const MaskedBatch masked = mask_tokens(batch, generation.mask_rate, mix_seed(seed, 1));
  if (masked.positions.empty()) {
    out.duplicate = true;
    return out;
  }

  NoGradGuard no_grad;
  const EncoderOutput enc = encode(masked.batch, params, config, Mode::eval);
  const Tensor logits = mlm_logits(gather_positions(enc.hidden, masked.positions), params);
  const std::size_t v = logits.size(1);
  const auto scores = logits.data();

  std::vector<std::string> tokens = tokenize(example.text);
  Rng rng(mix_seed(seed, 2));
  std::vector<int> candidates;
  for (std::size_t i = 0; i < masked.positions.size(); ++i) {
    const int original = masked.targets[i];
    const real* row = scores.data() + i * v;
    candidates.clear();
    for (int id = Vocab::kNumReserved; id < static_cast<int>(v); ++id) {
      if (generation.top_k > 1 && id == original) continue;
      candidates.push_back(id);
    }
    if (candidates.empty()) candidates.push_back(original);
    const std::size_t k = std::min(generation.top_k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k),
                      candidates.end(), [&](int a, int b) {
                        return row[a] > row[b] || (row[a] == row[b] && a < b);
                      });
    std::vector<double> weights(k);
    const double top = row[candidates[0]];
    for (std::size_t j = 0; j < k; ++j) weights[j] = std::exp(row[candidates[j]] - top);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    const int chosen = candidates[pick(rng)];
    // Position l of the batch row holds token l - 1 (after [cls]).
    const std::size_t token_index = static_cast<std::size_t>(masked.positions[i]) - 1;
    tokens.at(token_index) = vocab.token(chosen);
    out.changed_positions.push_back(token_index);
  }
  std::string text;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) text += ' ';
    text += tokens[i];
  }
  out.duplicate = tokens == tokenize(example.text);
  out.example.text = std::move(text);
  return out;
}

UpsampleResult upsample(std::span<const LabeledExample> dataset, const BalancePlan& plan,
                        const EncoderParams& params, const EncoderConfig& config,
                        const Vocab& vocab, const GenerationConfig& generation) {
  const ClassDistribution dist = class_distribution(dataset);
  if (dist.counts != plan.current) {
    throw std::invalid_argument("upsample: plan was not computed from this dataset");
  }
  UpsampleResult result;
  result.plan = plan;
  result.dataset.assign(dataset.begin(), dataset.end());
  std::uint64_t draw = 0;
  for (Label label : kAllLabels) {
    const int c = label_index(label);
    const std::size_t deficit = plan.deficit[c];
    if (deficit == 0) continue;
    std::vector<std::size_t> sources;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      if (dataset[i].label == label) sources.push_back(i);
    }
    if (sources.empty()) {
      throw std::invalid_argument("upsample: class " + std::string(label_name(label)) +
                                  " needs " + std::to_string(deficit) +
                                  " synthetic rows but has no source examples");
    }
    Rng rng(mix_seed(generation.seed, 0x7570 + static_cast<std::uint64_t>(c)));
    std::shuffle(sources.begin(), sources.end(), rng);
    for (std::size_t j = 0; j < deficit; ++j) {
      const std::size_t src = sources[j % sources.size()];
      SyntheticExample s = fill_mask_generate(dataset[src], src, params, config, vocab,
                                              generation, mix_seed(generation.seed, ++draw));
      s.example.source = "synthetic";
      result.dataset.push_back(s.example);
      result.synthetic.push_back(std::move(s));
    }
  }
  for (Label label : kAllLabels) {
    const int c = label_index(label);
    result.synthetic_fraction[c] =
        plan.target[c] == 0 ? 0.0
                            : static_cast<double>(plan.deficit[c]) / static_cast<double>(plan.target[c]);
    if (result.synthetic_fraction[c] > 0.5) {
      result.warnings.push_back("class " + std::string(label_name(label)) + " is " +
                                std::to_string(result.synthetic_fraction[c] * 100.0) +
                                "% synthetic (over 50%); expect overfitting");
    }
  }
  return result;
}

}  // namespace csent
