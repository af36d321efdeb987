#include "csent/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "csent/ops.hpp"
#include "csent/optim.hpp"
#include "csent/rng.hpp"

namespace csent::inline CSENT_ABI {

namespace {

enum Stream : std::uint64_t {
  kInit = 1,
  kHeadInit = 2,
  kShuffle = 3,
  kStep = 4,
  kGeometry = 5,
};

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

void check_finite(double loss, const char* phase, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error(std::string(phase) + ": non-finite loss " + std::to_string(loss) +
                             " at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
  }
}

// Masked-token loss on an independently masked copy of the batch; a batch in
// which nothing was selected contributes no term.
Tensor mlm_term(const TokenizedBatch& batch, const EncoderParams& params,
                const EncoderConfig& config, double mask_rate, std::uint64_t seed) {
  const MaskedBatch masked = mask_tokens(batch, mask_rate, mix_seed(seed, 1));
  if (masked.positions.empty()) return {};
  const EncoderOutput out = encode(masked.batch, params, config, Mode::train, mix_seed(seed, 2));
  const Tensor logits = mlm_logits(gather_positions(out.hidden, masked.positions), params);
  return cross_entropy(logits, masked.targets);
}

template <typename T>
std::vector<T> gather(std::span<const T> rows, std::span<const std::size_t> order,
                      std::size_t begin, std::size_t end) {
  std::vector<T> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(rows[order[i]]);
  return out;
}

}  // namespace

std::uint64_t encoder_init_seed(std::uint64_t seed) { return mix_seed(seed, kInit); }

std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                             std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch_ranges: batch_size must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(start, std::min(n, start + batch_size));
  }
  if (out.size() > 1 && out.back().second - out.back().first == 1) out.pop_back();
  return out;
}

AlignmentUniformity pair_geometry(const EncoderParams& params, const EncoderConfig& config,
                                  const Vocab& vocab, std::span<const std::string> first,
                                  std::span<const std::string> second, bool dropout_views,
                                  std::size_t max_length, std::uint64_t seed) {
  NoGradGuard no_grad;
  const Mode mode = dropout_views ? Mode::train : Mode::eval;
  const auto a = encode(encode_batch(first, vocab, max_length, true), params, config, mode,
                        mix_seed(seed, 1));
  const auto b = encode(encode_batch(second, vocab, max_length, true), params, config, mode,
                        mix_seed(seed, 2));
  return alignment_uniformity(ops::l2_normalize(a.pooled), ops::l2_normalize(b.pooled));
}

PretrainResult pretrain(const PretrainData& data, const Vocab& vocab,
                        const EncoderConfig& config, const TrainConfig& train, std::ostream* log) {
  train.validate();
  config.validate();
  if (config.vocab_size != vocab.size()) {
    throw std::invalid_argument("pretrain: encoder vocab_size " +
                                std::to_string(config.vocab_size) + " != vocab size " +
                                std::to_string(vocab.size()));
  }
  PretrainResult result;
  result.params = EncoderParams::init(config, encoder_init_seed(train.seed));
  if (train.objective == Objective::none) return result;

  const bool sup = train.objective == Objective::sup_cse;
  const std::size_t n = sup ? data.triples.size() : data.sentences.size();
  if (n == 0) {
    throw std::invalid_argument(sup ? "pretrain: sup-cse needs at least one triple"
                                    : "pretrain: empty sentence corpus");
  }
  const std::size_t held = n >= 20 ? std::min(train.pair_sample, n / 10) : 0;
  const std::size_t n_train = n - held;
  if (n_train < 2) throw std::invalid_argument("pretrain: contrastive batches need >= 2 rows");

  std::vector<std::string> first, second;
  for (std::size_t i = n_train; i < n; ++i) {
    first.push_back(sup ? data.triples[i].anchor : data.sentences[i]);
    second.push_back(sup ? data.triples[i].entailment : data.sentences[i]);
  }
  const std::uint64_t geometry_seed = mix_seed(train.seed, kGeometry);
  auto geometry = [&] {
    if (held < 2) return AlignmentUniformity{};
    return pair_geometry(result.params, config, vocab, first, second, !sup, train.max_length,
                         geometry_seed);
  };
  result.initial = geometry();

  AdamW optimizer(result.params.named());
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    const auto order = shuffled(n_train, mix_seed(mix_seed(train.seed, kShuffle), epoch));
    double total = 0.0, contrastive = 0.0, mlm = 0.0;
    std::size_t rows = 0;
    for (const auto& [begin, end] : batch_ranges(n_train, train.batch_size)) {
      if (end - begin < 2) continue;
      const std::uint64_t s = mix_seed(mix_seed(train.seed, kStep), step);
      Tensor loss_c;
      TokenizedBatch anchors;
      if (sup) {
        const auto rows_t = gather<NliTriple>(data.triples, order, begin, end);
        std::vector<std::string> a, e, c;
        for (const auto& t : rows_t) {
          a.push_back(t.anchor);
          e.push_back(t.entailment);
          c.push_back(t.contradiction);
        }
        anchors = encode_batch(a, vocab, train.max_length, true);
        const auto ha = encode(anchors, result.params, config, Mode::train, mix_seed(s, 10));
        const auto he = encode(encode_batch(e, vocab, train.max_length, true), result.params,
                               config, Mode::train, mix_seed(s, 11));
        const auto hc = encode(encode_batch(c, vocab, train.max_length, true), result.params,
                               config, Mode::train, mix_seed(s, 12));
        loss_c = sup_contrastive_loss(ha.pooled, he.pooled, hc.pooled, train.loss.temperature);
      } else {
        const auto texts = gather<std::string>(data.sentences, order, begin, end);
        anchors = encode_batch(texts, vocab, train.max_length, true);
        const auto v1 = encode(anchors, result.params, config, Mode::train, mix_seed(s, 10));
        const auto v2 = encode(anchors, result.params, config, Mode::train, mix_seed(s, 11));
        loss_c = unsup_contrastive_loss(v1.pooled, v2.pooled, train.loss.temperature);
      }
      Tensor loss = loss_c;
      double mlm_value = 0.0;
      if (train.mlm_weight > 0.0 && train.mlm_mask_rate > 0.0) {
        Tensor m = mlm_term(anchors, result.params, config, train.mlm_mask_rate, mix_seed(s, 20));
        if (m.defined()) {
          mlm_value = m.item();
          loss = ops::add(loss, ops::scale(m, static_cast<real>(train.mlm_weight)));
        }
      }
      check_finite(loss.item(), "pretrain", epoch, step);
      optimizer.zero_grad();
      backward(loss);
      optimizer.step(train.pretrain_learning_rate, train.weight_decay);
      const std::size_t b = end - begin;
      total += loss.item() * b;
      contrastive += loss_c.item() * b;
      mlm += mlm_value * b;
      rows += b;
      ++step;
    }
    optimizer.zero_grad();
    PretrainEpochLog entry;
    entry.epoch = epoch;
    entry.loss = rows ? total / rows : 0.0;
    entry.contrastive_loss = rows ? contrastive / rows : 0.0;
    entry.mlm_loss = rows ? mlm / rows : 0.0;
    entry.geometry = geometry();
    result.log.push_back(entry);
    if (log) {
      nlohmann::ordered_json j = {{"epoch", entry.epoch},
                                  {"loss", entry.loss},
                                  {"contrastive_loss", entry.contrastive_loss},
                                  {"mlm_loss", entry.mlm_loss}};
      if (held >= 2) {
        j["alignment"] = entry.geometry.alignment;
        j["uniformity"] = entry.geometry.uniformity;
      }
      *log << j.dump() << '\n';
    }
  }
  return result;
}

FinetuneResult finetune(std::span<const LabeledExample> train,
                        std::span<const LabeledExample> dev, const Vocab& vocab,
                        const EncoderParams& encoder_init, const EncoderConfig& encoder_config,
                        const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (train.empty()) throw std::invalid_argument("finetune: empty training set");
  if (dev.empty()) throw std::invalid_argument("finetune: empty dev set");
  if (encoder_config.vocab_size != vocab.size()) {
    throw std::invalid_argument("finetune: encoder vocab_size " +
                                std::to_string(encoder_config.vocab_size) + " != vocab size " +
                                std::to_string(vocab.size()));
  }
  encoder_init.check_shapes(encoder_config);

  Classifier model;
  model.encoder_config = encoder_config;
  model.encoder = encoder_init.clone();
  model.head_config = HeadConfig::for_kind(config.head, encoder_config.d_model, config.dropout_p);
  model.head = HeadParams::init(model.head_config, mix_seed(config.seed, kHeadInit));

  std::vector<NamedTensor> trainable =
      config.freeze_encoder ? model.head.named() : model.named();
  AdamW optimizer(trainable);

  FinetuneResult result;
  double best = -1.0;
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto order = shuffled(train.size(), mix_seed(mix_seed(config.seed, kShuffle), epoch));
    double total = 0.0;
    std::size_t rows = 0;
    for (const auto& [begin, end] : batch_ranges(train.size(), config.batch_size)) {
      const auto examples = gather<LabeledExample>(train, order, begin, end);
      const TokenizedBatch batch = encode_batch(examples, vocab, config.max_length, true);
      const std::uint64_t s = mix_seed(mix_seed(config.seed, kStep), step);
      Tensor loss =
          classification_loss(model.logits(batch, Mode::train, s), batch.labels, config.loss);
      check_finite(loss.item(), "finetune", epoch, step);
      optimizer.zero_grad();
      backward(loss);
      optimizer.step(config.learning_rate, config.weight_decay);
      const std::size_t b = end - begin;
      total += static_cast<double>(loss.item()) * (config.loss.reduction == Reduction::mean ? b : 1);
      rows += b;
      ++step;
    }
    optimizer.zero_grad();
    const EvalReport report = evaluate(model, vocab, dev, config.max_length, "dev");
    EpochLog entry{epoch, rows ? total / rows : 0.0, report.macro_f1, report.accuracy};
    result.log.push_back(entry);
    if (log) {
      nlohmann::ordered_json j = {{"epoch", entry.epoch},
                                  {"train_loss", entry.train_loss},
                                  {"dev_macro_f1", entry.dev_macro_f1},
                                  {"dev_accuracy", entry.dev_accuracy}};
      *log << j.dump() << '\n';
    }
    if (report.macro_f1 > best) {
      best = report.macro_f1;
      result.best_epoch = epoch;
      result.model = model.clone();
      result.dev_report = report;
    }
  }
  return result;
}

}  // namespace csent
