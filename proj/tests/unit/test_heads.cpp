#include "doctest.h"

#include <cmath>
#include <limits>

#include "csent/heads.hpp"
#include "csent/ops.hpp"
#include "helpers.hpp"

using namespace csent;
using testing::bit_equal;
using testing::random_tensor;

namespace {

constexpr HeadKind kKinds[] = {HeadKind::linear, HeadKind::bigru, HeadKind::bilstm};

// Encoder-shaped output with `lengths[b]` live positions per row; padded
// positions hold unrelated values that must be ignored.
EncoderOutput fake_encoded(const std::vector<std::size_t>& lengths, std::size_t length,
                           std::size_t d, std::uint64_t seed) {
  const std::size_t b = lengths.size();
  Tensor hidden = random_tensor({b, length, d}, seed, 1.0, false);
  std::vector<real> mask(b * length, 0.0f);
  for (std::size_t r = 0; r < b; ++r) {
    for (std::size_t l = 0; l < lengths[r]; ++l) mask[r * length + l] = 1.0f;
  }
  EncoderOutput out;
  out.hidden = hidden;
  out.pooled = ops::reshape(ops::slice(hidden, 1, 0, 1), {b, d});
  out.key_mask = Tensor(Shape{b, length}, std::move(mask));
  return out;
}

// Same live values as `base`, padded out to `length` with fresh junk.
EncoderOutput repad(const EncoderOutput& base, const std::vector<std::size_t>& lengths,
                    std::size_t length, std::uint64_t seed) {
  EncoderOutput wide = fake_encoded(lengths, length, base.hidden.size(2), seed);
  const std::size_t d = base.hidden.size(2), old_len = base.hidden.size(1);
  auto dst = wide.hidden.data();
  const auto src = base.hidden.data();
  for (std::size_t r = 0; r < lengths.size(); ++r) {
    for (std::size_t l = 0; l < lengths[r]; ++l) {
      for (std::size_t j = 0; j < d; ++j) {
        dst[(r * length + l) * d + j] = src[(r * old_len + l) * d + j];
      }
    }
  }
  wide.pooled = base.pooled;
  return wide;
}

}  // namespace

TEST_CASE("reference-scale head shapes") {
  const auto linear = HeadConfig::for_kind(HeadKind::linear, 768);
  CHECK(linear.dense_in == 768);
  CHECK(linear.dense_out == 768);
  CHECK(linear.final_in() == 768);
  CHECK(linear.activation() == Activation::tanh);
  const auto lp = HeadParams::init(linear, 1);
  CHECK(lp.dense_w.shape() == Shape{768, 768});
  CHECK(lp.final_w.shape() == Shape{768, 3});

  for (HeadKind kind : {HeadKind::bigru, HeadKind::bilstm}) {
    const auto cfg = HeadConfig::for_kind(kind, 768);
    CHECK(cfg.dense_out == 256);
    CHECK(cfg.final_in() == 512);
    CHECK(cfg.activation() == Activation::relu);
    const auto p = HeadParams::init(cfg, 1);
    CHECK(p.final_w.shape() == Shape{512, 3});
    const std::size_t gates = kind == HeadKind::bigru ? 3 : 4;
    CHECK(p.forward.w_x.shape() == Shape{768, gates * 256});
    CHECK(p.backward.w_h.shape() == Shape{256, gates * 256});
  }
}

TEST_CASE("desk-scale recurrent width keeps the one-third ratio") {
  CHECK(HeadConfig::for_kind(HeadKind::bigru, 64).dense_out == 21);
  CHECK(HeadConfig::for_kind(HeadKind::bilstm, 32).dense_out == 11);
  CHECK(HeadConfig::for_kind(HeadKind::bigru, 16).dense_out == 8);
  CHECK(HeadConfig::for_kind(HeadKind::linear, 16).dense_out == 16);
  CHECK(parse_head_kind("bilstm") == HeadKind::bilstm);
  CHECK_FALSE(parse_head_kind("lstm").has_value());
  for (HeadKind k : kKinds) CHECK(parse_head_kind(head_kind_name(k)) == k);
}

TEST_CASE("every head produces [b, 3] logits") {
  for (HeadKind kind : kKinds) {
    const auto cfg = HeadConfig::for_kind(kind, 12);
    const auto params = HeadParams::init(cfg, 2);
    const auto enc = fake_encoded({3, 5, 1, 4, 2}, 6, 12, 3);
    CHECK(head_forward(enc, cfg, params, Mode::eval).shape() == Shape{5, 3});
  }
}

TEST_CASE("heads reject mismatched parameters") {
  const auto cfg = HeadConfig::for_kind(HeadKind::bigru, 12);
  const auto params = HeadParams::init(cfg, 2);
  const auto other = HeadConfig::for_kind(HeadKind::bigru, 24);
  CHECK_THROWS(params.check_shapes(other));
  CHECK_THROWS(head_forward(fake_encoded({2}, 3, 24, 1), other, params, Mode::eval));
  CHECK_THROWS(head_forward(fake_encoded({2}, 3, 12, 1), HeadConfig::for_kind(HeadKind::linear, 12),
                            params, Mode::eval));
}

TEST_CASE("trailing padding never changes logits") {
  const std::vector<std::size_t> lengths = {4, 2, 6};
  for (HeadKind kind : kKinds) {
    const auto cfg = HeadConfig::for_kind(kind, 10);
    const auto params = HeadParams::init(cfg, 4);
    const auto tight = fake_encoded(lengths, 6, 10, 5);
    const auto loose = repad(tight, lengths, 11, 6);
    const Tensor a = head_forward(tight, cfg, params, Mode::eval);
    const Tensor b = head_forward(loose, cfg, params, Mode::eval);
    for (std::size_t i = 0; i < a.numel(); ++i) {
      CHECK(std::abs(a.data()[i] - b.data()[i]) <= 1e-6);
    }
  }
}

TEST_CASE("palindromic inputs give equal forward and backward states") {
  for (HeadKind kind : {HeadKind::bigru, HeadKind::bilstm}) {
    const auto cfg = HeadConfig::for_kind(kind, 9);
    auto params = HeadParams::init(cfg, 7);
    params.backward = params.clone().forward;
    // Row 0: a b c b a; row 1: a b b a plus padding.
    const std::size_t d = 9, len = 5;
    const Tensor t = random_tensor({3, d}, 8, 1.0, false);
    const std::vector<std::size_t> order0 = {0, 1, 2, 1, 0}, order1 = {0, 1, 1, 0};
    std::vector<real> values(2 * len * d, 0.0f);
    std::vector<real> mask(2 * len, 0.0f);
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t j = 0; j < d; ++j) values[l * d + j] = t.data()[order0[l] * d + j];
      mask[l] = 1.0f;
    }
    for (std::size_t l = 0; l < order1.size(); ++l) {
      for (std::size_t j = 0; j < d; ++j) values[(len + l) * d + j] = t.data()[order1[l] * d + j];
      mask[len + l] = 1.0f;
    }
    values[(2 * len - 1) * d] = 42.0f;  // padding junk
    const auto [fwd, bwd] = recurrent_states(Tensor(Shape{2, len, d}, values),
                                             Tensor(Shape{2, len}, mask), cfg, params);
    REQUIRE(fwd.shape() == Shape{2, cfg.dense_out});
    for (std::size_t i = 0; i < fwd.numel(); ++i) {
      CHECK(std::abs(fwd.data()[i] - bwd.data()[i]) <= 1e-6);
    }
  }
}

TEST_CASE("eval is deterministic and train mode replays by seed") {
  for (HeadKind kind : kKinds) {
    const auto cfg = HeadConfig::for_kind(kind, 12);
    const auto params = HeadParams::init(cfg, 9);
    const auto enc = fake_encoded({4, 3}, 4, 12, 10);
    CHECK(bit_equal(head_forward(enc, cfg, params, Mode::eval),
                    head_forward(enc, cfg, params, Mode::eval)));
    const Tensor t1 = head_forward(enc, cfg, params, Mode::train, 5);
    CHECK(bit_equal(t1, head_forward(enc, cfg, params, Mode::train, 5)));
    CHECK_FALSE(bit_equal(t1, head_forward(enc, cfg, params, Mode::train, 6)));
  }
}

TEST_CASE("predict takes the argmax with ties to the lowest index") {
  const Tensor logits(Shape{3, 3}, {0.1f, 0.9f, 0.2f, 0.5f, 0.5f, 0.1f, -1.0f, -2.0f, 3.0f});
  CHECK(predict(logits) == std::vector<int>{1, 0, 2});
  std::vector<real> shifted(logits.data().begin(), logits.data().end());
  const real shift[] = {5.0f, -3.0f, 100.0f};
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += shift[i / 3];
  CHECK(predict(Tensor(Shape{3, 3}, shifted)) == std::vector<int>{1, 0, 2});
  const Tensor nan(Shape{1, 3}, {0.0f, std::numeric_limits<real>::quiet_NaN(), 1.0f});
  CHECK_THROWS_AS(predict(nan), std::domain_error);
}
