#include "doctest.h"

#include "csent/config.hpp"

using namespace csent;

TEST_CASE("config text parsing") {
  const auto m = ConfigMap::parse("# comment\n\nepochs = 7\nhead=bigru\n  lr_note=a=b\n");
  CHECK(m.at("epochs") == "7");
  CHECK(m.at("head") == "bigru");
  CHECK(m.at("lr_note") == "a=b");
  CHECK_THROWS_AS(m.at("missing"), std::out_of_range);
  CHECK_THROWS_AS(ConfigMap::parse("epochs 7\n"), std::invalid_argument);
}

TEST_CASE("canonical text is sorted and fingerprints follow content") {
  auto a = ConfigMap::parse("b=2\na=1\n");
  auto b = ConfigMap::parse("a=1\nb=2\n");
  CHECK(a.canonical_text() == "a=1\nb=2\n");
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.fingerprint().size() == 16);
  b.set("b", "3");
  CHECK(a.fingerprint() != b.fingerprint());
  a.merge(b);
  CHECK(a.at("b") == "3");
}

TEST_CASE("numbers print in shortest round-trip form") {
  CHECK(format_number(1e-5) == "1e-05");
  CHECK(format_number(0.01) == "0.01");
  CHECK(format_number(0.1f) == "0.1");
  CHECK(format_number(3.0) == "3");
}

TEST_CASE("training defaults follow the tuned hyper-parameters") {
  const TrainConfig c;
  CHECK(c.batch_size == 32);
  CHECK(c.epochs == 4);
  CHECK(c.learning_rate == 1e-5);
  CHECK(c.weight_decay == 0.01);
  CHECK(c.max_length == 64);
  CHECK(c.dropout_p == 0.1f);
  CHECK(c.loss.gamma == 3.0f);
  CHECK(c.loss.reduction == Reduction::mean);
  CHECK(c.seed == 42);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("train config round trips through its map") {
  TrainConfig c;
  c.head = HeadKind::bilstm;
  c.loss.kind = LossKind::focal;
  c.loss.gamma = 2.0f;
  c.objective = Objective::sup_cse;
  c.learning_rate = 3e-4;
  c.pooling = Pooling::mean;
  c.freeze_encoder = true;
  c.seed = 123456789012345ULL;
  CHECK(TrainConfig::from_map(c.to_map()) == c);

  const auto over = TrainConfig::from_map(ConfigMap::parse("epochs=9\nloss=focal\n"), c);
  CHECK(over.epochs == 9);
  CHECK(over.head == HeadKind::bilstm);
  CHECK_THROWS_AS(TrainConfig::from_map(ConfigMap::parse("epoch=9\n")), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_map(ConfigMap::parse("epochs=many\n")), std::invalid_argument);
  CHECK_THROWS_AS(TrainConfig::from_map(ConfigMap::parse("head=cnn\n")), std::invalid_argument);
}

TEST_CASE("invalid training configs are rejected") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.weight_decay = -1.0;
  CHECK_THROWS(c.validate());
  c = TrainConfig{};
  c.loss.gamma = -1.0f;
  CHECK_THROWS(c.validate());
}

TEST_CASE("derived model configs") {
  TrainConfig c;
  c.d_model = 48;
  c.head = HeadKind::bigru;
  const auto enc = c.encoder_config(300);
  CHECK(enc.vocab_size == 300);
  CHECK(enc.d_model == 48);
  CHECK(enc.max_length == c.max_positions);
  const auto head = c.head_config();
  CHECK(head.dense_in == 48);
  CHECK(head.dense_out == 16);
  CHECK(encoder_config_from_map(encoder_config_map(enc)) == enc);
  CHECK(head_config_from_map(head_config_map(head)) == head);
  CHECK(parse_objective("unsup-cse") == Objective::unsup_cse);
  CHECK(parse_objective("sup-cse") == Objective::sup_cse);
  CHECK_FALSE(parse_objective("mlm").has_value());
}
