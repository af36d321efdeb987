#pragma once

// Classification metrics, transfer evaluation and report rendering.

#include "csent/real.hpp"
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "csent/model.hpp"
#include "csent/text.hpp"

namespace csent::inline CSENT_ABI {

/// Rows are gold labels, columns predictions, both in class-index order.
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, 3>, 3> counts{};

  void add(int gold, int predicted);
  std::int64_t total() const;
  std::int64_t trace() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion_from(std::span<const int> gold, std::span<const int> predicted);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool operator==(const ClassMetrics&) const = default;
};

struct EvalReport {
  std::string dataset;
  std::string model_fingerprint;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<ClassMetrics, 3> per_class{};
  ConfusionMatrix confusion;

  const ClassMetrics& operator[](Label label) const { return per_class[label_index(label)]; }
  bool operator==(const EvalReport&) const = default;
};

/// Precision, recall and F1 are 0 whenever their denominator is 0; macro-F1
/// always averages all three classes.
EvalReport report_from_confusion(const ConfusionMatrix& confusion, std::string dataset = "",
                                 std::string model_fingerprint = "");

/// Eval-mode predictions, in dataset order.
std::vector<int> predict_dataset(const Classifier& model, const Vocab& vocab,
                                 std::span<const LabeledExample> examples,
                                 std::size_t max_length, std::size_t batch_size = 64);

/// Throws std::invalid_argument on an empty dataset.
EvalReport evaluate(const Classifier& model, const Vocab& vocab,
                    std::span<const LabeledExample> examples, std::size_t max_length,
                    std::string dataset = "", std::string model_fingerprint = "");

struct TaggedDataset {
  std::string tag;
  std::vector<LabeledExample> examples;
};

std::vector<EvalReport> transfer_suite(const Classifier& model, const Vocab& vocab,
                                       std::span<const TaggedDataset> datasets,
                                       std::size_t max_length,
                                       const std::string& model_fingerprint = "");

enum class ReportFormat { json, markdown };

/// json: array of report objects with keys in schema order. markdown: one
/// per-class table (metrics to 4 decimals) followed by a dataset comparison.
std::string render_reports(std::span<const EvalReport> reports, ReportFormat format);
/// Inverse of the json rendering.
std::vector<EvalReport> parse_reports_json(std::string_view text);

}  // namespace csent
