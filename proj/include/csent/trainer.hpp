#pragma once

// Contrastive pretraining with an auxiliary masked-token loss, and end-to-end
// fine-tuning with best-dev-epoch selection.

#include "csent/real.hpp"
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "csent/config.hpp"
#include "csent/encoder.hpp"
#include "csent/evaluator.hpp"
#include "csent/model.hpp"
#include "csent/objectives.hpp"
#include "csent/text.hpp"

namespace csent::inline CSENT_ABI {

/// Seed of the encoder initialisation shared by pretraining and random-init
/// fine-tuning.
std::uint64_t encoder_init_seed(std::uint64_t seed);

struct PretrainData {
  std::vector<std::string> sentences;  // unsup-cse
  std::vector<NliTriple> triples;      // sup-cse
};

struct PretrainEpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double contrastive_loss = 0.0;
  double mlm_loss = 0.0;
  AlignmentUniformity geometry;
};

struct PretrainResult {
  EncoderParams params;
  AlignmentUniformity initial;
  std::vector<PretrainEpochLog> log;
};

/// Alignment/uniformity of the pooled embeddings of the held-out pairs.
/// Unsupervised pairs are two train-mode dropout views of one sentence under
/// fixed seeds; supervised pairs are (anchor, entailment) in eval mode.
AlignmentUniformity pair_geometry(const EncoderParams& params, const EncoderConfig& config,
                                  const Vocab& vocab, std::span<const std::string> first,
                                  std::span<const std::string> second, bool dropout_views,
                                  std::size_t max_length, std::uint64_t seed);

/// Trains from EncoderParams::init(config, encoder_init_seed(train.seed)).
/// Objective none returns that initialisation untouched. The last
/// min(pair_sample, n / 10) rows are held out for the geometry log when the
/// corpus has at least 20 rows. One JSON object per epoch goes to `log`; the
/// geometry keys appear only when rows were held out.
PretrainResult pretrain(const PretrainData& data, const Vocab& vocab,
                        const EncoderConfig& config, const TrainConfig& train,
                        std::ostream* log = nullptr);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_macro_f1 = 0.0;
  double dev_accuracy = 0.0;
};

struct FinetuneResult {
  Classifier model;  // best-dev-epoch snapshot
  EvalReport dev_report;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> log;
};

FinetuneResult finetune(std::span<const LabeledExample> train,
                        std::span<const LabeledExample> dev, const Vocab& vocab,
                        const EncoderParams& encoder_init, const EncoderConfig& encoder_config,
                        const TrainConfig& config, std::ostream* log = nullptr);

/// Batch start offsets for one epoch over `n` shuffled rows; a trailing batch
/// of a single row is dropped unless it is the only batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                             std::size_t batch_size);

}  // namespace csent
