// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any
// fails. Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "corpora.hpp"
#include "csent/checkpoint.hpp"
#include "csent/evaluator.hpp"
#include "csent/objectives.hpp"
#include "csent/rng.hpp"
#include "csent/trainer.hpp"
#include "csent/upsampler.hpp"
#include "grad_suite.hpp"

using namespace csent;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<grad_suite::CaseResult> all;
  for (auto& r : grad_suite::check_ops(20, 1)) all.push_back(r);
  for (auto& r : grad_suite::check_losses(20, 2)) all.push_back(r);
  const auto composite = grad_suite::check_composite(20, 3);
  const double elapsed = seconds_since(t0);

  bool pass = elapsed < 60.0;
  double worst_kernel = 0.0, worst_composite = 0.0;
  std::string failures;
  for (const auto& r : all) {
    worst_kernel = std::max(worst_kernel, r.worst);
    if (!r.passed() || r.tolerance > 1e-4 || r.instances < 20) {
      pass = false;
      failures += " " + r.name;
    }
  }
  for (const auto& r : composite) {
    worst_composite = std::max(worst_composite, r.worst);
    if (!r.passed() || r.tolerance > 1e-3 || r.instances < 20) {
      pass = false;
      failures += " " + r.name;
    }
  }
  return {pass, fmt("%zu kernel/loss cases worst %.2e (< 1e-4), %zu composites worst %.2e "
                    "(< 1e-3), %.1f s (< 60)%s%s",
                    all.size(), worst_kernel, composite.size(), worst_composite, elapsed,
                    failures.empty() ? "" : "; failed:", failures.c_str())};
}

// 2 ---------------------------------------------------------------------------

Outcome loss_identities() {
  Rng rng(2);
  std::normal_distribution<double> normal(0.0, 3.0);
  const std::size_t n = 10000;
  std::vector<real> values(n * 3);
  std::vector<int> gold(n);
  for (auto& v : values) v = static_cast<real>(normal(rng));
  for (auto& g : gold) g = static_cast<int>(rng() % 3);
  const Tensor logits(Shape{n, 3}, values);
  const Tensor ce = cross_entropy_per_example(logits, gold);
  const Tensor focal0 = focal_loss_per_example(logits, gold, 0.0f);
  double worst_gap = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    worst_gap = std::max(worst_gap, std::abs(double(ce.data()[i]) - double(focal0.data()[i])));
  }

  // p_t = 0.9 exactly in the softmax.
  const std::vector<int> first = {0};
  const Tensor p09(Shape{1, 3}, {real(std::log(0.9)), real(std::log(0.05)), real(std::log(0.05))});
  const double focal3 = focal_loss_per_example(p09, first, 3.0f).data()[0];
  const double focal3_expected = std::pow(0.1, 3) * -std::log(0.9);

  const double uniform = cross_entropy(Tensor(Shape{1, 3}, {0.0f, 0.0f, 0.0f}), first).item();
  const double perfect = cross_entropy(Tensor(Shape{1, 3}, {100.0f, 0.0f, 0.0f}), first).item();

  const bool pass = worst_gap <= 1e-7 && std::abs(focal3 - 1.05361e-4) <= 1e-9 &&
                    std::abs(uniform - std::log(3.0)) <= 1e-6 && std::abs(perfect) <= 1e-6;
  return {pass, fmt("focal(0) vs CE max gap %.2e over 1e4 (<= 1e-7); focal(3) at p_t 0.9 = %.6e "
                    "(exact %.6e, target 1.05361e-4 +- 1e-9); uniform CE - ln3 = %.1e; "
                    "p_t=1 CE = %.1e",
                    worst_gap, focal3, focal3_expected, uniform - std::log(3.0), perfect)};
}

// 3 ---------------------------------------------------------------------------

Outcome metric_oracle() {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> cell(0, 20);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> gold, pred;
    for (int g = 0; g < 3; ++g) {
      for (int p = 0; p < 3; ++p) {
        for (int k = cell(rng); k > 0; --k) {
          gold.push_back(g);
          pred.push_back(p);
        }
      }
    }
    if (gold.empty()) continue;
    const auto r = report_from_confusion(confusion_from(gold, pred));
    double correct = 0, macro = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) correct += gold[i] == pred[i];
    for (int c = 0; c < 3; ++c) {
      double tp = 0, predicted = 0, actual = 0;
      for (std::size_t i = 0; i < gold.size(); ++i) {
        tp += gold[i] == c && pred[i] == c;
        predicted += pred[i] == c;
        actual += gold[i] == c;
      }
      const double p = predicted > 0 ? tp / predicted : 0.0;
      const double rc = actual > 0 ? tp / actual : 0.0;
      const double f1 = p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0;
      macro += f1 / 3.0;
      worst = std::max({worst, std::abs(r.per_class[c].precision - p),
                        std::abs(r.per_class[c].recall - rc), std::abs(r.per_class[c].f1 - f1)});
    }
    worst = std::max({worst, std::abs(r.macro_f1 - macro),
                      std::abs(r.accuracy - correct / static_cast<double>(gold.size()))});
  }
  constexpr int N = 0, U = 1, P = 2;
  const std::vector<int> gold = {P, P, N, N, U, U}, pred = {P, N, N, N, U, P};
  const double worked = report_from_confusion(confusion_from(gold, pred)).macro_f1;
  const bool pass = worst <= 1e-12 && std::abs(worked - 0.65556) <= 1e-5;
  return {pass, fmt("1000 random matrices max deviation %.1e (<= 1e-12); worked example "
                    "macro-F1 %.6f (0.65556 +- 1e-5)",
                    worst, worked)};
}

// 4 ---------------------------------------------------------------------------

Outcome remap() {
  const Label expected[] = {Label::negative, Label::negative, Label::neutral, Label::positive,
                            Label::positive};
  bool pass = true;
  std::string got;
  for (int stars = 1; stars <= 5; ++stars) {
    const Label l = remap_stars(stars);
    pass = pass && l == expected[stars - 1];
    got += fmt(" %d->%s", stars, std::string(label_name(l)).c_str());
  }
  return {pass, "remap" + got};
}

// 5 ---------------------------------------------------------------------------

Outcome contrastive() {
  const auto sentences = corpora::toy_sentences(200, 7);
  const Vocab vocab = Vocab::build(sentences);
  TrainConfig tc;
  tc.d_model = 32;
  tc.epochs = 30;
  tc.seed = 42;
  const auto ec = tc.encoder_config(vocab.size());
  const auto r = pretrain({sentences, {}}, vocab, ec, tc);
  const double before = r.initial.alignment, after = r.log.back().geometry.alignment;

  const Tensor a(Shape{2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  const double nce = unsup_contrastive_loss(a, a, 1.0f).item();
  const double expected = std::log1p(std::exp(-1.0));
  const bool pass = after < before && std::abs(nce - expected) <= 1e-6;
  return {pass, fmt("alignment %.4f -> %.4f after 30 epochs on 200 sentences; orthogonal "
                    "InfoNCE %.8f (log(1+e^-1) = %.8f)",
                    before, after, nce, expected)};
}

// 6 ---------------------------------------------------------------------------

// Pipeline settings for the templated experiment; both arms share them.
TrainConfig experiment_config(std::uint64_t seed) {
  TrainConfig tc;
  tc.d_model = 32;
  tc.pooling = Pooling::mean;
  tc.pretrain_learning_rate = 2e-3;
  tc.learning_rate = 1e-3;
  tc.seed = seed;
  return tc;
}
constexpr std::size_t kPretrainEpochs = 15;
constexpr std::size_t kFinetuneEpochs = 4;

Outcome end_to_end() {
  const auto t0 = std::chrono::steady_clock::now();
  double pre_sum = 0.0, rand_sum = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto c = corpora::templated(2000, 300, 500, 2000, 0.3, 100 + seed);
    std::vector<std::string> texts = c.unlabeled;
    for (const auto& e : c.train) texts.push_back(e.text);
    const Vocab vocab = Vocab::build(texts);
    TrainConfig tc = experiment_config(seed);
    const auto ec = tc.encoder_config(vocab.size());
    tc.epochs = kPretrainEpochs;
    const auto pre = pretrain({c.unlabeled, {}}, vocab, ec, tc);
    tc.epochs = kFinetuneEpochs;
    const auto with = finetune(c.train, c.dev, vocab, pre.params, ec, tc);
    const auto without = finetune(c.train, c.dev, vocab,
                                  EncoderParams::init(ec, encoder_init_seed(seed)), ec, tc);
    const double f_pre = evaluate(with.model, vocab, c.test, 64).macro_f1;
    const double f_rand = evaluate(without.model, vocab, c.test, 64).macro_f1;
    pre_sum += f_pre;
    rand_sum += f_rand;
    per_seed += fmt(" [seed %d: %.4f vs %.4f]", static_cast<int>(seed), f_pre, f_rand);
  }
  const double pre = pre_sum / 3.0, rand = rand_sum / 3.0;
  const double elapsed = seconds_since(t0);
  const bool pass = pre >= 0.90 && pre - rand >= 0.02 && elapsed < 600.0;
  return {pass, fmt("mean test macro-F1 pretrained %.4f (>= 0.90), random init %.4f, gap %.1f "
                    "points (>= 2), %.0f s (< 600);%s",
                    pre, rand, 100.0 * (pre - rand), elapsed, per_seed.c_str())};
}

// 7 ---------------------------------------------------------------------------

// Share of cue words typical of the other class.
constexpr double kCrossover = 0.2;

Outcome focal_vs_ce() {
  double recall_gain = 0.0, f1_change = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto train = corpora::imbalanced(2000, 10, kCrossover, 200 + seed);
    const auto dev = corpora::imbalanced(1000, 10, kCrossover, 300 + seed);
    const auto test = corpora::imbalanced_eval(250, kCrossover, 400 + seed);
    const Vocab vocab = Vocab::build(train);
    TrainConfig tc;
    tc.d_model = 32;
    tc.learning_rate = 1e-3;
    tc.epochs = 4;
    tc.seed = seed;
    const auto ec = tc.encoder_config(vocab.size());
    const auto init = EncoderParams::init(ec, encoder_init_seed(seed));
    EvalReport reports[2];
    for (int arm = 0; arm < 2; ++arm) {
      tc.loss.kind = arm == 0 ? LossKind::cross_entropy : LossKind::focal;
      tc.loss.gamma = 3.0f;
      const auto r = finetune(train, dev, vocab, init, ec, tc);
      reports[arm] = evaluate(r.model, vocab, test, 64);
    }
    const double ce_recall = reports[0][Label::negative].recall;
    const double focal_recall = reports[1][Label::negative].recall;
    recall_gain += (focal_recall - ce_recall) / 5.0;
    f1_change += (reports[1].macro_f1 - reports[0].macro_f1) / 5.0;
    per_seed += fmt(" [seed %d: recall %.3f vs %.3f]", static_cast<int>(seed), focal_recall,
                    ce_recall);
  }
  const bool pass = recall_gain >= 0.01 && f1_change >= -0.01;
  return {pass, fmt("minority recall focal - CE %+.1f points (>= +1), macro-F1 change %+.1f "
                    "points (>= -1);%s",
                    100.0 * recall_gain, 100.0 * f1_change, per_seed.c_str())};
}

// 8 ---------------------------------------------------------------------------

bool differs_only_at(const std::string& a, const std::string& b,
                     const std::vector<std::size_t>& changed) {
  const auto ta = tokenize(a), tb = tokenize(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i] != tb[i] && std::find(changed.begin(), changed.end(), i) == changed.end()) {
      return false;
    }
  }
  return true;
}

Outcome upsampler_contract() {
  const auto c = corpora::templated(300, 10, 10, 600, 0.3, 8);
  // Skew the classes: keep every negative row, half the neutral, a fifth of the positive.
  std::vector<LabeledExample> skewed;
  std::array<std::size_t, 3> seen{};
  for (const auto& e : c.train) {
    const std::size_t k = seen[label_index(e.label)]++;
    if (e.label == Label::negative || (e.label == Label::neutral && k % 2 == 0) ||
        (e.label == Label::positive && k % 5 == 0)) {
      skewed.push_back(e);
    }
  }
  std::vector<std::string> texts = c.unlabeled;
  for (const auto& e : skewed) texts.push_back(e.text);
  const Vocab vocab = Vocab::build(texts);
  TrainConfig tc;
  tc.d_model = 32;
  tc.epochs = 2;
  const auto ec = tc.encoder_config(vocab.size());
  const auto encoder = pretrain({c.unlabeled, {}}, vocab, ec, tc).params;

  bool pass = true;
  std::size_t synthetic = 0, changed_rows = 0, checked_plans = 0;
  const ClassDistribution dist = class_distribution(skewed);
  for (std::optional<std::size_t> target : {std::optional<std::size_t>{}, std::optional<std::size_t>{150}}) {
    const BalancePlan plan = make_plan(dist, target);
    GenerationConfig gen;
    const auto r = upsample(skewed, plan, encoder, ec, vocab, gen);
    pass = pass && class_distribution(r.dataset).counts == plan.target;
    pass = pass && std::equal(skewed.begin(), skewed.end(), r.dataset.begin());
    for (const auto& s : r.synthetic) {
      const auto& source = skewed.at(s.source_id);
      pass = pass && s.example.label == source.label && s.example.source == "synthetic" &&
             differs_only_at(source.text, s.example.text, s.changed_positions);
      changed_rows += !s.changed_positions.empty();
    }
    for (int k = 0; k < 3; ++k) {
      pass = pass && r.synthetic_fraction[k] ==
                         static_cast<double>(plan.deficit[k]) / static_cast<double>(plan.target[k]);
    }
    synthetic += r.synthetic.size();
    ++checked_plans;

    gen.mask_rate = 0.0;
    const auto identity = upsample(skewed, plan, encoder, ec, vocab, gen);
    for (const auto& s : identity.synthetic) {
      pass = pass && s.example.text == skewed[s.source_id].text && s.changed_positions.empty();
    }
    pass = pass && class_distribution(identity.dataset).counts == plan.target;
  }
  pass = pass && changed_rows > 0;
  return {pass, fmt("counts {%zu, %zu, %zu}: %zu plans met exactly, %zu synthetic rows (%zu with "
                    "edits) differ only at masked positions, mask_rate 0 reproduces sources",
                    dist.counts[0], dist.counts[1], dist.counts[2], checked_plans, synthetic,
                    changed_rows)};
}

// 9 ---------------------------------------------------------------------------

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct PipelineArtifacts {
  std::string checkpoint, report, pretrain_log, finetune_log;
  std::vector<real> test_logits;  // from the in-memory model
};

TokenizedBatch test_batch(const corpora::Templated& c, const Vocab& vocab) {
  std::vector<std::string> texts;
  for (const auto& e : c.test) texts.push_back(e.text);
  return encode_batch(texts, vocab, 64, true);
}

bool bit_equal(std::span<const real> x, std::span<const real> y) {
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size_bytes()) == 0;
}

PipelineArtifacts run_pipeline(const std::filesystem::path& dir) {
  const auto c = corpora::templated(200, 60, 90, 300, 0.3, 9);
  std::vector<std::string> texts = c.unlabeled;
  for (const auto& e : c.train) texts.push_back(e.text);
  const Vocab vocab = Vocab::build(texts);
  TrainConfig tc;
  tc.d_model = 16;
  tc.n_heads = 2;
  tc.epochs = 2;
  tc.learning_rate = 1e-3;
  tc.head = HeadKind::bilstm;
  tc.seed = 9;
  const auto ec = tc.encoder_config(vocab.size());
  std::ostringstream pre_log, ft_log;
  const auto pre = pretrain({c.unlabeled, {}}, vocab, ec, tc, &pre_log);
  const auto ft = finetune(c.train, c.dev, vocab, pre.params, ec, tc, &ft_log);

  Checkpoint ckpt;
  ckpt.encoder_config = ft.model.encoder_config;
  ckpt.encoder = ft.model.encoder;
  ckpt.head_config = ft.model.head_config;
  ckpt.head = ft.model.head;
  ckpt.train_config = tc.to_map();
  ckpt.vocab_hash = vocab.hash();
  std::filesystem::create_directories(dir);
  save_checkpoint(ckpt, dir / "model.ckpt");
  const std::string fp = checkpoint_fingerprint(ckpt);
  const TaggedDataset suite[] = {{"dev", c.dev}, {"test", c.test}};
  const auto reports = transfer_suite(ft.model, vocab, suite, 64, fp);
  const Tensor logits = ft.model.logits(test_batch(c, vocab), Mode::eval);
  return {slurp(dir / "model.ckpt"), render_reports(reports, ReportFormat::json), pre_log.str(),
          ft_log.str(), {logits.data().begin(), logits.data().end()}};
}

Outcome determinism() {
  const auto root = std::filesystem::temp_directory_path() / "csent_acceptance";
  std::filesystem::remove_all(root);
  const auto a = run_pipeline(root / "a");
  const auto b = run_pipeline(root / "b");
  const bool same = a.checkpoint == b.checkpoint && a.report == b.report &&
                    a.pretrain_log == b.pretrain_log && a.finetune_log == b.finetune_log;

  // Reload and compare logits against the model that was saved.
  const auto c = corpora::templated(200, 60, 90, 300, 0.3, 9);
  std::vector<std::string> texts = c.unlabeled;
  for (const auto& e : c.train) texts.push_back(e.text);
  const Vocab vocab = Vocab::build(texts);
  const Checkpoint loaded = load_checkpoint(root / "a" / "model.ckpt", vocab.hash());
  const Classifier model = loaded.classifier();
  const Tensor reloaded = model.logits(test_batch(c, vocab), Mode::eval);
  const bool bit_exact = bit_equal(reloaded.data(), a.test_logits) &&
                         bit_equal(a.test_logits, b.test_logits);
  // Re-saving the loaded checkpoint reproduces the file.
  save_checkpoint(loaded, root / "resaved.ckpt");
  const bool resave = slurp(root / "resaved.ckpt") == a.checkpoint;
  const std::string report_again = render_reports(
      std::vector<EvalReport>{evaluate(model, vocab, c.dev, 64, "dev", checkpoint_fingerprint(loaded)),
                              evaluate(model, vocab, c.test, 64, "test", checkpoint_fingerprint(loaded))},
      ReportFormat::json);
  std::filesystem::remove_all(root);
  const bool pass = same && bit_exact && resave && report_again == a.report;
  return {pass, fmt("two runs: checkpoints %s (%zu bytes), reports %s, logs %s; reload logits "
                    "%s, re-save %s, reloaded report %s",
                    a.checkpoint == b.checkpoint ? "identical" : "DIFFER", a.checkpoint.size(),
                    a.report == b.report ? "identical" : "DIFFER",
                    a.pretrain_log == b.pretrain_log && a.finetune_log == b.finetune_log ? "identical" : "DIFFER",
                    bit_exact ? "bit-exact" : "DIFFER", resave ? "identical" : "DIFFERS",
                    report_again == a.report ? "identical" : "DIFFERS")};
}

// 10 --------------------------------------------------------------------------

Outcome overfit() {
  const auto rows = corpora::overfit_set(10);
  const Vocab vocab = Vocab::build(rows);
  bool pass = true;
  std::string detail;
  for (HeadKind kind : {HeadKind::linear, HeadKind::bigru, HeadKind::bilstm}) {
    TrainConfig tc;
    tc.d_model = 32;
    tc.head = kind;
    tc.learning_rate = 1e-3;
    tc.epochs = 200;
    tc.seed = 10;
    const auto ec = tc.encoder_config(vocab.size());
    const auto r = finetune(rows, rows, vocab, EncoderParams::init(ec, encoder_init_seed(10)), ec, tc);
    std::size_t first = 0;
    for (const auto& e : r.log) {
      if (e.dev_accuracy >= 0.99) {
        first = e.epoch;
        break;
      }
    }
    pass = pass && r.dev_report.accuracy >= 0.99;
    detail += fmt(" %s %.4f (first >= 0.99 at epoch %zu);",
                  std::string(head_kind_name(kind)).c_str(), r.dev_report.accuracy, first);
  }
  return {pass, "32 rows, train = dev, lr 1e-3, 200 epochs:" + detail};
}

struct Criterion {
  int number;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", gradients},
      {2, "loss identities", loss_identities},
      {3, "metric oracle", metric_oracle},
      {4, "remap exactness", remap},
      {5, "contrastive behavior", contrastive},
      {6, "end-to-end templated experiment", end_to_end},
      {7, "focal vs cross-entropy under imbalance", focal_vs_ce},
      {8, "upsampler contract", upsampler_contract},
      {9, "determinism and persistence", determinism},
      {10, "overfit sanity", overfit},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.number, c.name,
                seconds_since(t0), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
