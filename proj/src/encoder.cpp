#include "csent/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "csent/ops.hpp"
#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI {

namespace {

Tensor normal(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape), true);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<real>(dist(rng));
  return t;
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(Shape{fan_in, fan_out}, true);
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = static_cast<real>(dist(rng));
  return t;
}

Tensor constant(Shape shape, real value) {
  Tensor t = Tensor::full(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

// Dropout sites per layer; site ids only need to be distinct within a pass.
constexpr std::uint64_t kSitesPerLayer = 8;

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(Vocab::kNumReserved)) {
    throw std::invalid_argument("encoder config: vocab_size must exceed the reserved ids");
  }
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw std::invalid_argument("encoder config: d_model " + std::to_string(d_model) +
                                " not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) {
    throw std::invalid_argument("encoder config: dropout_p outside [0, 1)");
  }
  if (max_length < 2) throw std::invalid_argument("encoder config: max_length must be >= 2");
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x656e63));
  const std::size_t d = config.d_model;
  const std::size_t ff = config.ff_dim();
  EncoderParams p;
  p.token_embedding = normal({config.vocab_size, d}, 0.1, rng);
  p.position_embedding = normal({config.max_length, d}, 0.1, rng);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    EncoderLayer layer;
    layer.ln1_gamma = constant({d}, 1.0f);
    layer.ln1_beta = constant({d}, 0.0f);
    layer.w_qkv = xavier(d, 3 * d, rng);
    layer.b_qkv = constant({3 * d}, 0.0f);
    layer.w_out = xavier(d, d, rng);
    layer.b_out = constant({d}, 0.0f);
    layer.ln2_gamma = constant({d}, 1.0f);
    layer.ln2_beta = constant({d}, 0.0f);
    layer.w_ff1 = xavier(d, ff, rng);
    layer.b_ff1 = constant({ff}, 0.0f);
    layer.w_ff2 = xavier(ff, d, rng);
    layer.b_ff2 = constant({d}, 0.0f);
    p.layers.push_back(std::move(layer));
  }
  p.final_gamma = constant({d}, 1.0f);
  p.final_beta = constant({d}, 0.0f);
  p.mlm_weight = xavier(d, config.vocab_size, rng);
  p.mlm_bias = constant({config.vocab_size}, 0.0f);
  return p;
}

std::vector<NamedTensor> EncoderParams::named() const {
  std::vector<NamedTensor> out{{"encoder.token_embedding", token_embedding},
                               {"encoder.position_embedding", position_embedding}};
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string pre = "encoder.layer" + std::to_string(i) + ".";
    out.push_back({pre + "ln1_gamma", l.ln1_gamma});
    out.push_back({pre + "ln1_beta", l.ln1_beta});
    out.push_back({pre + "w_qkv", l.w_qkv});
    out.push_back({pre + "b_qkv", l.b_qkv});
    out.push_back({pre + "w_out", l.w_out});
    out.push_back({pre + "b_out", l.b_out});
    out.push_back({pre + "ln2_gamma", l.ln2_gamma});
    out.push_back({pre + "ln2_beta", l.ln2_beta});
    out.push_back({pre + "w_ff1", l.w_ff1});
    out.push_back({pre + "b_ff1", l.b_ff1});
    out.push_back({pre + "w_ff2", l.w_ff2});
    out.push_back({pre + "b_ff2", l.b_ff2});
  }
  out.push_back({"encoder.final_gamma", final_gamma});
  out.push_back({"encoder.final_beta", final_beta});
  out.push_back({"encoder.mlm_weight", mlm_weight});
  out.push_back({"encoder.mlm_bias", mlm_bias});
  return out;
}

EncoderParams EncoderParams::clone() const {
  EncoderParams p;
  p.token_embedding = token_embedding.clone();
  p.position_embedding = position_embedding.clone();
  for (const auto& l : layers) {
    p.layers.push_back({l.ln1_gamma.clone(), l.ln1_beta.clone(), l.w_qkv.clone(),
                        l.b_qkv.clone(), l.w_out.clone(), l.b_out.clone(), l.ln2_gamma.clone(),
                        l.ln2_beta.clone(), l.w_ff1.clone(), l.b_ff1.clone(), l.w_ff2.clone(),
                        l.b_ff2.clone()});
  }
  p.final_gamma = final_gamma.clone();
  p.final_beta = final_beta.clone();
  p.mlm_weight = mlm_weight.clone();
  p.mlm_bias = mlm_bias.clone();
  return p;
}

void EncoderParams::check_shapes(const EncoderConfig& config) const {
  const EncoderParams ref = init(config, 0);
  const auto want = ref.named();
  const auto have = named();
  if (want.size() != have.size()) {
    throw std::invalid_argument("encoder params: expected " + std::to_string(want.size()) +
                                " tensors, found " + std::to_string(have.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (!have[i].tensor.defined() || have[i].tensor.shape() != want[i].tensor.shape()) {
      throw std::invalid_argument(
          "encoder params: " + want[i].name + " expected " + shape_str(want[i].tensor.shape()) +
          ", found " +
          (have[i].tensor.defined() ? shape_str(have[i].tensor.shape()) : "undefined"));
    }
  }
}

EncoderOutput encode(const TokenizedBatch& batch, const EncoderParams& params,
                     const EncoderConfig& config, Mode mode, std::uint64_t seed) {
  const std::size_t n = batch.batch;
  const std::size_t len = batch.length;
  const std::size_t d = config.d_model;
  if (n == 0 || len == 0) throw std::invalid_argument("encode: empty batch");
  if (len > config.max_length) {
    throw std::invalid_argument("encode: batch length " + std::to_string(len) +
                                " exceeds max_length " + std::to_string(config.max_length));
  }
  for (std::size_t i = 0; i < batch.token_ids.size(); ++i) {
    const int id = batch.token_ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw std::out_of_range("encode: token id " + std::to_string(id) + " at row " +
                              std::to_string(i / len) + ", position " + std::to_string(i % len) +
                              " outside vocab of " + std::to_string(config.vocab_size));
    }
  }
  const bool training = mode == Mode::train;
  const real p = config.dropout_p;
  auto site_seed = [seed](std::uint64_t site) { return mix_seed(seed, site); };

  std::vector<real> mask_values(batch.attention_mask.begin(), batch.attention_mask.end());
  Tensor key_mask(Shape{n, len}, std::move(mask_values));

  Tensor x = ops::embedding(params.token_embedding, batch.token_ids, {n, len});
  x = ops::add(x, ops::slice(params.position_embedding, 0, 0, len));
  x = ops::dropout(x, p, site_seed(0), training);

  const std::size_t heads = config.n_heads;
  const std::size_t dh = d / heads;
  const real inv_sqrt = 1.0f / std::sqrt(static_cast<real>(dh));
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& layer = params.layers[li];
    const std::uint64_t base = 1 + li * kSitesPerLayer;

    Tensor h = ops::layer_norm(x, layer.ln1_gamma, layer.ln1_beta);
    Tensor qkv = ops::add(ops::matmul(h, layer.w_qkv), layer.b_qkv);
    std::vector<Tensor> head_out;
    head_out.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      Tensor q = ops::slice(qkv, -1, hd * dh, dh);
      Tensor k = ops::slice(qkv, -1, d + hd * dh, dh);
      Tensor v = ops::slice(qkv, -1, 2 * d + hd * dh, dh);
      Tensor scores = ops::scale(ops::matmul(q, ops::transpose(k)), inv_sqrt);
      Tensor attn = ops::masked_softmax(scores, key_mask);
      attn = ops::dropout(attn, p, site_seed(base + 0) ^ hd, training);
      head_out.push_back(ops::matmul(attn, v));
    }
    Tensor att = ops::add(ops::matmul(ops::concat(head_out), layer.w_out), layer.b_out);
    x = ops::add(x, ops::dropout(att, p, site_seed(base + 1), training));

    h = ops::layer_norm(x, layer.ln2_gamma, layer.ln2_beta);
    Tensor f = ops::gelu(ops::add(ops::matmul(h, layer.w_ff1), layer.b_ff1));
    f = ops::add(ops::matmul(f, layer.w_ff2), layer.b_ff2);
    x = ops::add(x, ops::dropout(f, p, site_seed(base + 2), training));
  }
  x = ops::layer_norm(x, params.final_gamma, params.final_beta);

  EncoderOutput out;
  out.hidden = x;
  out.pooled = config.pooling == Pooling::cls ? ops::reshape(ops::slice(x, 1, 0, 1), {n, d})
                                              : ops::masked_mean(x, key_mask);
  out.key_mask = key_mask;
  return out;
}

Tensor mlm_logits(const Tensor& hidden, const EncoderParams& params) {
  return ops::add(ops::matmul(hidden, params.mlm_weight), params.mlm_bias);
}

Tensor gather_positions(const Tensor& hidden, std::span<const int> flat_positions) {
  if (hidden.rank() != 3) {
    throw std::invalid_argument("gather_positions: expected [b, l, d], got " +
                                shape_str(hidden.shape()));
  }
  const std::size_t d = hidden.size(2);
  Tensor flat = ops::reshape(hidden, {hidden.size(0) * hidden.size(1), d});
  return ops::embedding(flat, flat_positions, {flat_positions.size()});
}

MaskedBatch mask_tokens(const TokenizedBatch& batch, double mask_rate, std::uint64_t seed) {
  if (!(mask_rate >= 0.0 && mask_rate <= 1.0)) {
    throw std::invalid_argument("mask_tokens: mask_rate outside [0, 1]");
  }
  MaskedBatch out{batch, {}, {}};
  for (std::size_t i = 0; i < batch.token_ids.size(); ++i) {
    const int id = batch.token_ids[i];
    if (batch.attention_mask[i] == 0 || id < Vocab::kNumReserved) continue;
    if (hash_uniform(seed, i) < mask_rate) {
      out.positions.push_back(static_cast<int>(i));
      out.targets.push_back(id);
      out.batch.token_ids[i] = Vocab::kMask;
    }
  }
  return out;
}

}  // namespace csent
