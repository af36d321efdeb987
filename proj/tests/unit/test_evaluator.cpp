#include "doctest.h"

#include <cmath>
#include <random>

#include "csent/evaluator.hpp"
#include "csent/model.hpp"

using namespace csent;

namespace {

const std::filesystem::path kFixtures = CSENT_FIXTURES;

constexpr int N = 0, U = 1, P = 2;

struct Oracle {
  double precision[3], recall[3], f1[3], macro, accuracy;
};

// Counts straight from the paired label lists.
Oracle brute_force(const std::vector<int>& gold, const std::vector<int>& pred) {
  Oracle o{};
  double correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
  o.accuracy = gold.empty() ? 0.0 : correct / static_cast<double>(gold.size());
  o.macro = 0.0;
  for (int c = 0; c < 3; ++c) {
    double tp = 0, predicted = 0, actual = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      tp += gold[i] == c && pred[i] == c;
      predicted += pred[i] == c;
      actual += gold[i] == c;
    }
    o.precision[c] = predicted > 0 ? tp / predicted : 0.0;
    o.recall[c] = actual > 0 ? tp / actual : 0.0;
    const double s = o.precision[c] + o.recall[c];
    o.f1[c] = s > 0 ? 2 * o.precision[c] * o.recall[c] / s : 0.0;
    o.macro += o.f1[c] / 3.0;
  }
  return o;
}

Classifier tiny_model(std::size_t vocab_size) {
  Classifier m;
  m.encoder_config.vocab_size = vocab_size;
  m.encoder_config.d_model = 8;
  m.encoder_config.n_heads = 2;
  m.encoder_config.n_layers = 1;
  m.encoder = EncoderParams::init(m.encoder_config, 3);
  m.head_config = HeadConfig::for_kind(HeadKind::bilstm, 8);
  m.head = HeadParams::init(m.head_config, 4);
  return m;
}

}  // namespace

TEST_CASE("worked example") {
  const std::vector<int> gold = {P, P, N, N, U, U};
  const std::vector<int> pred = {P, N, N, N, U, P};
  const auto r = report_from_confusion(confusion_from(gold, pred));
  CHECK(r[Label::positive].f1 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(r[Label::negative].f1 == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(r[Label::neutral].f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(std::abs(r.macro_f1 - 0.65556) <= 1e-5);
  CHECK(std::abs(r.accuracy - 4.0 / 6.0) <= 1e-12);
  CHECK(r.confusion.counts[P][N] == 1);
  CHECK(r.confusion.total() == 6);
  CHECK(r.confusion.trace() == 4);
}

TEST_CASE("perfect and degenerate predictions") {
  const std::vector<int> gold = {N, U, P, P};
  const auto perfect = report_from_confusion(confusion_from(gold, gold));
  CHECK(perfect.macro_f1 == 1.0);
  CHECK(perfect.accuracy == 1.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (i != j) CHECK(perfect.confusion.counts[i][j] == 0);
    }
  }
  // Neutral never occurs: its F1 is 0 and still counts in the average.
  const std::vector<int> g2 = {N, P}, p2 = {N, P};
  const auto absent = report_from_confusion(confusion_from(g2, p2));
  CHECK(absent[Label::neutral].f1 == 0.0);
  CHECK(absent.macro_f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK_THROWS(confusion_from(g2, std::vector<int>{N}));
  ConfusionMatrix m;
  CHECK_THROWS(m.add(3, 0));
}

TEST_CASE("metrics match a brute-force recount on random confusion matrices") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> cell(0, 12);
  std::bernoulli_distribution empty(0.15);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> gold, pred;
    for (int g = 0; g < 3; ++g) {
      for (int p = 0; p < 3; ++p) {
        const int n = empty(rng) ? 0 : cell(rng);
        for (int k = 0; k < n; ++k) {
          gold.push_back(g);
          pred.push_back(p);
        }
      }
    }
    if (gold.empty()) continue;
    // Shuffle the pairs: the report must not depend on order.
    std::vector<std::size_t> order(gold.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<int> gs, ps;
    for (std::size_t i : order) {
      gs.push_back(gold[i]);
      ps.push_back(pred[i]);
    }
    const auto r = report_from_confusion(confusion_from(gs, ps));
    const auto o = brute_force(gold, pred);
    for (int c = 0; c < 3; ++c) {
      worst = std::max({worst, std::abs(r.per_class[c].precision - o.precision[c]),
                        std::abs(r.per_class[c].recall - o.recall[c]),
                        std::abs(r.per_class[c].f1 - o.f1[c])});
    }
    worst = std::max({worst, std::abs(r.macro_f1 - o.macro), std::abs(r.accuracy - o.accuracy)});
    CHECK(r.accuracy == static_cast<double>(r.confusion.trace()) / r.confusion.total());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("json rendering round trips and follows the schema") {
  auto a = report_from_confusion(confusion_from(std::vector<int>{P, P, N, N, U, U},
                                                std::vector<int>{P, N, N, N, U, P}),
                                 "dynasent-r1", "abc123");
  auto b = report_from_confusion(confusion_from(std::vector<int>{N, U, P}, std::vector<int>{U, U, P}),
                                 "sst3", "abc123");
  const std::vector<EvalReport> reports = {a, b};
  const std::string text = render_reports(reports, ReportFormat::json);
  CHECK(parse_reports_json(text) == reports);
  const auto keys = {"\"dataset\"", "\"model_fingerprint\"", "\"accuracy\"", "\"macro_f1\"",
                     "\"per_class\"", "\"confusion\""};
  std::size_t last = 0;
  for (const char* k : keys) {
    const auto at = text.find(k);
    REQUIRE(at != std::string::npos);
    CHECK(at >= last);
    last = at;
  }
  CHECK(render_reports({}, ReportFormat::json).find("[]") != std::string::npos);
  CHECK(parse_reports_json("[]").empty());
}

TEST_CASE("markdown rendering rounds to four decimals") {
  EvalReport r;
  r.dataset = "dynasent-r1";
  r.macro_f1 = 0.8143;
  r.accuracy = 0.81426;
  const std::vector<EvalReport> reports = {r};
  const std::string md = render_reports(reports, ReportFormat::markdown);
  CHECK(md.find("0.8143") != std::string::npos);
  CHECK(md.find("0.81426") == std::string::npos);
  CHECK(md.find("| macro |") != std::string::npos);
  const std::string empty = render_reports({}, ReportFormat::markdown);
  CHECK(empty.find("| dataset |") != std::string::npos);
}

TEST_CASE("evaluate and the transfer suite") {
  std::vector<TaggedDataset> suite;
  std::vector<LabeledExample> all;
  for (const char* name : {"r1-sample", "r2-sample", "sst3-sample"}) {
    auto rows = load_dataset(kFixtures / (std::string(name) + ".jsonl"), DatasetFormat::jsonl).examples;
    all.insert(all.end(), rows.begin(), rows.end());
    suite.push_back({name, std::move(rows)});
  }
  const Vocab vocab = Vocab::build(all);
  const Classifier model = tiny_model(vocab.size());

  const auto reports = transfer_suite(model, vocab, suite, 64, "fp");
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].dataset == "r1-sample");
  CHECK(reports[2].dataset == "sst3-sample");
  CHECK(reports[1].model_fingerprint == "fp");
  CHECK(reports[0] == evaluate(model, vocab, suite[0].examples, 64, "r1-sample", "fp"));

  const TaggedDataset twice[] = {suite[1], suite[1]};
  const auto same = transfer_suite(model, vocab, twice, 64);
  CHECK(same[0] == same[1]);

  CHECK_THROWS_AS(evaluate(model, vocab, std::vector<LabeledExample>{}, 64), std::invalid_argument);
  CHECK(predict_dataset(model, vocab, suite[0].examples, 64, 5) ==
        predict_dataset(model, vocab, suite[0].examples, 64, 64));
}
