#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "csent/checkpoint.hpp"
#include "helpers.hpp"

using namespace csent;
using testing::bit_equal;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("csent_ckpt_" + name);
}

Checkpoint sample(HeadKind kind) {
  Checkpoint c;
  c.encoder_config.vocab_size = 30;
  c.encoder_config.d_model = 8;
  c.encoder_config.n_heads = 2;
  c.encoder_config.n_layers = 1;
  c.encoder_config.max_length = 12;
  c.encoder = EncoderParams::init(c.encoder_config, 1);
  c.head_config = HeadConfig::for_kind(kind, 8);
  c.head = HeadParams::init(*c.head_config, 2);
  TrainConfig t;
  t.head = kind;
  c.train_config = t.to_map();
  c.vocab_hash = 0x0123456789abcdefULL;
  return c;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_all(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

TokenizedBatch batch() {
  TokenizedBatch b;
  b.batch = 2;
  b.length = 5;
  b.token_ids = {2, 7, 9, 3, 0, 2, 11, 12, 13, 3};
  b.attention_mask = {1, 1, 1, 1, 0, 1, 1, 1, 1, 1};
  return b;
}

}  // namespace

TEST_CASE("save then load is bit exact") {
  for (HeadKind kind : {HeadKind::linear, HeadKind::bigru, HeadKind::bilstm}) {
    const Checkpoint c = sample(kind);
    const auto path = temp_path("roundtrip.bin");
    save_checkpoint(c, path);
    const Checkpoint back = load_checkpoint(path, c.vocab_hash);
    CHECK(back.encoder_config == c.encoder_config);
    CHECK(back.head_config == c.head_config);
    CHECK(back.train_config == c.train_config);
    CHECK(back.vocab_hash == c.vocab_hash);
    const auto a = c.classifier().named(), b = back.classifier().named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].name == b[i].name);
      CHECK(bit_equal(a[i].tensor, b[i].tensor));
    }
    CHECK(bit_equal(c.classifier().logits(batch(), Mode::eval),
                    back.classifier().logits(batch(), Mode::eval)));
    CHECK(checkpoint_fingerprint(back) == checkpoint_fingerprint(c));
    // Saving the loaded copy reproduces the file byte for byte.
    const auto again = temp_path("roundtrip2.bin");
    save_checkpoint(back, again);
    CHECK(read_all(path) == read_all(again));
    std::filesystem::remove(path);
    std::filesystem::remove(again);
  }
}

TEST_CASE("encoder-only checkpoints") {
  Checkpoint c = sample(HeadKind::linear);
  c.head_config.reset();
  c.head = HeadParams{};
  const auto path = temp_path("encoder_only.bin");
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK_FALSE(back.head_config.has_value());
  CHECK_THROWS(back.classifier());
  CHECK(bit_equal(back.encoder.mlm_weight, c.encoder.mlm_weight));
}

TEST_CASE("load failures are explicit") {
  const Checkpoint c = sample(HeadKind::bigru);
  const auto path = temp_path("bad.bin");
  save_checkpoint(c, path);
  const std::string bytes = read_all(path);

  try {
    load_checkpoint(path, 0x1111ULL);
    FAIL("expected a vocab hash mismatch");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("vocab") != std::string::npos);
  }

  std::string bumped = bytes;
  bumped.replace(bumped.find("version 1"), 9, "version 7");
  write_all(path, bumped);
  try {
    load_checkpoint(path);
    FAIL("expected a version mismatch");
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    CHECK(what.find('7') != std::string::npos);
    CHECK(what.find('1') != std::string::npos);
  }

  write_all(path, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  write_all(path, bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  write_all(path, "not a checkpoint\n");
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
}

TEST_CASE("fingerprints follow parameters and configuration") {
  const Checkpoint a = sample(HeadKind::linear);
  Checkpoint b = sample(HeadKind::linear);
  CHECK(checkpoint_fingerprint(a) == checkpoint_fingerprint(b));
  b.head.final_b.data()[0] += 1e-3f;
  CHECK(checkpoint_fingerprint(a) != checkpoint_fingerprint(b));
  Checkpoint c = sample(HeadKind::linear);
  c.train_config.set("epochs", "5");
  CHECK(checkpoint_fingerprint(a) != checkpoint_fingerprint(c));
  CHECK(vocab_sidecar("out/model.ckpt") == std::filesystem::path("out/model.ckpt.vocab"));
}
