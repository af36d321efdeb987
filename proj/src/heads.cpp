#include "csent/heads.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "csent/ops.hpp"
#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI {

namespace {

Tensor uniform(Shape shape, double limit, Rng& rng) {
  Tensor t(std::move(shape), true);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = static_cast<real>(dist(rng));
  return t;
}

Tensor xavier(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  return uniform({fan_in, fan_out}, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

Tensor zeros(Shape shape) { return Tensor(std::move(shape), true); }

std::size_t gate_count(HeadKind kind) { return kind == HeadKind::bilstm ? 4 : 3; }

RecurrentCell init_cell(std::size_t in, std::size_t hidden, std::size_t gates, Rng& rng) {
  const double limit = 1.0 / std::sqrt(static_cast<double>(hidden));
  return {uniform({in, gates * hidden}, limit, rng), zeros({gates * hidden}),
          uniform({hidden, gates * hidden}, limit, rng), zeros({gates * hidden})};
}

RecurrentCell clone_cell(const RecurrentCell& c) {
  return {c.w_x.clone(), c.b_x.clone(), c.w_h.clone(), c.b_h.clone()};
}

Tensor gate(const Tensor& g, std::size_t index, std::size_t hidden) {
  return ops::slice(g, -1, index * hidden, hidden);
}

// One bidirectional pass direction. `projected` is x W_x + b_x for every
// position, [b, l, G*h]. Rows whose position is padding keep their state.
std::pair<Tensor, Tensor> step(HeadKind kind, const Tensor& gx, const Tensor& h, const Tensor& c,
                               const RecurrentCell& cell, std::size_t hidden) {
  Tensor gh = ops::add(ops::matmul(h, cell.w_h), cell.b_h);
  if (kind == HeadKind::bigru) {
    Tensor r = ops::sigmoid(ops::add(gate(gx, 0, hidden), gate(gh, 0, hidden)));
    Tensor z = ops::sigmoid(ops::add(gate(gx, 1, hidden), gate(gh, 1, hidden)));
    Tensor n = ops::tanh(ops::add(gate(gx, 2, hidden), ops::mul(r, gate(gh, 2, hidden))));
    // h' = (1 - z) * n + z * h
    Tensor next = ops::add(n, ops::mul(z, ops::sub(h, n)));
    return {next, c};
  }
  Tensor g = ops::add(gx, gh);
  Tensor i = ops::sigmoid(gate(g, 0, hidden));
  Tensor f = ops::sigmoid(gate(g, 1, hidden));
  Tensor cand = ops::tanh(gate(g, 2, hidden));
  Tensor o = ops::sigmoid(gate(g, 3, hidden));
  Tensor c_next = ops::add(ops::mul(f, c), ops::mul(i, cand));
  Tensor h_next = ops::mul(o, ops::tanh(c_next));
  return {h_next, c_next};
}

Tensor run_direction(HeadKind kind, const Tensor& inputs, const Tensor& key_mask,
                     const RecurrentCell& cell, std::size_t hidden, bool reverse) {
  const std::size_t n = inputs.size(0);
  const std::size_t len = inputs.size(1);
  const std::size_t width = gate_count(kind) * hidden;
  Tensor projected = ops::add(ops::matmul(inputs, cell.w_x), cell.b_x);
  Tensor h(Shape{n, hidden});
  Tensor c(Shape{n, hidden});
  const auto mask = key_mask.data();
  std::vector<std::uint8_t> live(n);
  for (std::size_t s = 0; s < len; ++s) {
    const std::size_t t = reverse ? len - 1 - s : s;
    bool any = false;
    for (std::size_t b = 0; b < n; ++b) {
      live[b] = mask[b * len + t] != 0.0f;
      any = any || live[b];
    }
    if (!any) continue;
    Tensor gx = ops::reshape(ops::slice(projected, 1, t, 1), {n, width});
    auto [h_next, c_next] = step(kind, gx, h, c, cell, hidden);
    h = ops::select_rows(live, h_next, h);
    if (kind == HeadKind::bilstm) c = ops::select_rows(live, c_next, c);
  }
  return h;
}

}  // namespace

std::string_view head_kind_name(HeadKind kind) {
  switch (kind) {
    case HeadKind::linear:
      return "linear";
    case HeadKind::bigru:
      return "bigru";
    case HeadKind::bilstm:
      return "bilstm";
  }
  return "?";
}

std::optional<HeadKind> parse_head_kind(std::string_view name) {
  if (name == "linear") return HeadKind::linear;
  if (name == "bigru") return HeadKind::bigru;
  if (name == "bilstm") return HeadKind::bilstm;
  return std::nullopt;
}

HeadConfig HeadConfig::for_kind(HeadKind kind, std::size_t d_model, float dropout_p) {
  HeadConfig cfg;
  cfg.kind = kind;
  cfg.dense_in = d_model;
  cfg.dropout_p = dropout_p;
  if (kind == HeadKind::linear) {
    cfg.dense_out = d_model;
  } else {
    const auto third = static_cast<std::size_t>(std::lround(static_cast<double>(d_model) / 3.0));
    cfg.dense_out = std::max<std::size_t>(8, third);
  }
  return cfg;
}

void HeadConfig::validate() const {
  if (dense_in == 0 || dense_out == 0) {
    throw std::invalid_argument("head config: dense sizes must be positive");
  }
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) {
    throw std::invalid_argument("head config: dropout_p outside [0, 1)");
  }
}

HeadParams HeadParams::init(const HeadConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(mix_seed(seed, 0x68656164));
  HeadParams p;
  if (config.kind == HeadKind::linear) {
    p.dense_w = xavier(config.dense_in, config.dense_out, rng);
    p.dense_b = zeros({config.dense_out});
  } else {
    const std::size_t g = gate_count(config.kind);
    p.forward = init_cell(config.dense_in, config.dense_out, g, rng);
    p.backward = init_cell(config.dense_in, config.dense_out, g, rng);
  }
  p.final_w = xavier(config.final_in(), HeadConfig::final_out, rng);
  p.final_b = zeros({HeadConfig::final_out});
  return p;
}

std::vector<NamedTensor> HeadParams::named() const {
  std::vector<NamedTensor> out;
  if (dense_w.defined()) {
    out.push_back({"head.dense_w", dense_w});
    out.push_back({"head.dense_b", dense_b});
  }
  if (forward.w_x.defined()) {
    for (const auto& [dir, cell] : {std::pair{"fwd", &forward}, std::pair{"bwd", &backward}}) {
      const std::string pre = std::string("head.") + dir + ".";
      out.push_back({pre + "w_x", cell->w_x});
      out.push_back({pre + "b_x", cell->b_x});
      out.push_back({pre + "w_h", cell->w_h});
      out.push_back({pre + "b_h", cell->b_h});
    }
  }
  out.push_back({"head.final_w", final_w});
  out.push_back({"head.final_b", final_b});
  return out;
}

HeadParams HeadParams::clone() const {
  HeadParams p;
  if (dense_w.defined()) {
    p.dense_w = dense_w.clone();
    p.dense_b = dense_b.clone();
  }
  if (forward.w_x.defined()) {
    p.forward = clone_cell(forward);
    p.backward = clone_cell(backward);
  }
  p.final_w = final_w.clone();
  p.final_b = final_b.clone();
  return p;
}

void HeadParams::check_shapes(const HeadConfig& config) const {
  const auto want = init(config, 0).named();
  const auto have = named();
  if (want.size() != have.size()) {
    throw std::invalid_argument("head params: expected " + std::to_string(want.size()) +
                                " tensors for a " + std::string(head_kind_name(config.kind)) +
                                " head, found " + std::to_string(have.size()));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (have[i].name != want[i].name || have[i].tensor.shape() != want[i].tensor.shape()) {
      throw std::invalid_argument("head params: " + want[i].name + " expected " +
                                  shape_str(want[i].tensor.shape()) + ", found " +
                                  have[i].name + " " + shape_str(have[i].tensor.shape()));
    }
  }
}

std::pair<Tensor, Tensor> recurrent_states(const Tensor& inputs, const Tensor& key_mask,
                                           const HeadConfig& config, const HeadParams& params) {
  if (config.kind == HeadKind::linear) {
    throw std::invalid_argument("recurrent_states: linear head has no recurrence");
  }
  if (inputs.rank() != 3 || inputs.size(2) != config.dense_in) {
    throw std::invalid_argument("recurrent_states: inputs " + shape_str(inputs.shape()) +
                                " do not match dense_in " + std::to_string(config.dense_in));
  }
  return {run_direction(config.kind, inputs, key_mask, params.forward, config.dense_out, false),
          run_direction(config.kind, inputs, key_mask, params.backward, config.dense_out, true)};
}

Tensor head_forward(const EncoderOutput& encoded, const HeadConfig& config,
                    const HeadParams& params, Mode mode, std::uint64_t seed) {
  params.check_shapes(config);
  const bool training = mode == Mode::train;
  const real p = config.dropout_p;
  Tensor features;
  if (config.kind == HeadKind::linear) {
    if (encoded.pooled.rank() != 2 || encoded.pooled.size(1) != config.dense_in) {
      throw std::invalid_argument("head_forward: pooled " + shape_str(encoded.pooled.shape()) +
                                  " does not match dense_in " + std::to_string(config.dense_in));
    }
    Tensor x = ops::dropout(encoded.pooled, p, mix_seed(seed, 101), training);
    features = ops::tanh(ops::add(ops::matmul(x, params.dense_w), params.dense_b));
  } else {
    Tensor x = ops::dropout(encoded.hidden, p, mix_seed(seed, 101), training);
    auto [fwd, bwd] = recurrent_states(x, encoded.key_mask, config, params);
    const Tensor both[] = {fwd, bwd};
    features = ops::relu(ops::concat(both));
  }
  features = ops::dropout(features, p, mix_seed(seed, 102), training);
  return ops::add(ops::matmul(features, params.final_w), params.final_b);
}

std::vector<int> predict(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("predict: expected [b, c] logits, got " +
                                shape_str(logits.shape()));
  }
  const std::size_t n = logits.size(0);
  const std::size_t c = logits.size(1);
  const auto d = logits.data();
  std::vector<int> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 0; j < c; ++j) {
      const real v = d[r * c + j];
      if (std::isnan(v)) {
        throw std::domain_error("predict: NaN logit at row " + std::to_string(r));
      }
      if (v > d[r * c + best]) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace csent
