#include "csent/evaluator.hpp"

#include <cstdio>
#include <stdexcept>

#include "json.hpp"

namespace csent::inline CSENT_ABI {

namespace {

using ojson = nlohmann::ordered_json;

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

void ConfusionMatrix::add(int gold, int predicted) {
  if (gold < 0 || gold >= kNumClasses || predicted < 0 || predicted >= kNumClasses) {
    throw std::out_of_range("confusion matrix: label pair (" + std::to_string(gold) + ", " +
                            std::to_string(predicted) + ") outside {0,1,2}");
  }
  ++counts[gold][predicted];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts) {
    for (auto v : row) n += v;
  }
  return n;
}

std::int64_t ConfusionMatrix::trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

ConfusionMatrix confusion_from(std::span<const int> gold, std::span<const int> predicted) {
  if (gold.size() != predicted.size()) {
    throw std::invalid_argument("confusion_from: " + std::to_string(gold.size()) + " gold vs " +
                                std::to_string(predicted.size()) + " predicted labels");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < gold.size(); ++i) cm.add(gold[i], predicted[i]);
  return cm;
}

EvalReport report_from_confusion(const ConfusionMatrix& cm, std::string dataset,
                                 std::string model_fingerprint) {
  EvalReport r;
  r.dataset = std::move(dataset);
  r.model_fingerprint = std::move(model_fingerprint);
  r.confusion = cm;
  double f1_sum = 0.0;
  for (int c = 0; c < kNumClasses; ++c) {
    std::int64_t predicted = 0;
    std::int64_t actual = 0;
    for (int k = 0; k < kNumClasses; ++k) {
      predicted += cm.counts[k][c];
      actual += cm.counts[c][k];
    }
    auto& m = r.per_class[c];
    m.precision = ratio(cm.counts[c][c], predicted);
    m.recall = ratio(cm.counts[c][c], actual);
    const double denom = m.precision + m.recall;
    m.f1 = denom == 0.0 ? 0.0 : 2.0 * m.precision * m.recall / denom;
    f1_sum += m.f1;
  }
  r.macro_f1 = f1_sum / kNumClasses;
  r.accuracy = ratio(cm.trace(), cm.total());
  return r;
}

std::vector<int> predict_dataset(const Classifier& model, const Vocab& vocab,
                                 std::span<const LabeledExample> examples,
                                 std::size_t max_length, std::size_t batch_size) {
  NoGradGuard no_grad;
  std::vector<int> out;
  out.reserve(examples.size());
  for (std::size_t start = 0; start < examples.size(); start += batch_size) {
    const auto chunk = examples.subspan(start, std::min(batch_size, examples.size() - start));
    const TokenizedBatch batch = encode_batch(chunk, vocab, max_length, true);
    for (int p : predict(model.logits(batch, Mode::eval))) out.push_back(p);
  }
  return out;
}

EvalReport evaluate(const Classifier& model, const Vocab& vocab,
                    std::span<const LabeledExample> examples, std::size_t max_length,
                    std::string dataset, std::string model_fingerprint) {
  if (examples.empty()) throw std::invalid_argument("evaluate: empty dataset " + dataset);
  const auto predicted = predict_dataset(model, vocab, examples, max_length);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    cm.add(label_index(examples[i].label), predicted[i]);
  }
  return report_from_confusion(cm, std::move(dataset), std::move(model_fingerprint));
}

std::vector<EvalReport> transfer_suite(const Classifier& model, const Vocab& vocab,
                                       std::span<const TaggedDataset> datasets,
                                       std::size_t max_length,
                                       const std::string& model_fingerprint) {
  if (datasets.empty()) throw std::invalid_argument("transfer_suite: no datasets");
  std::vector<EvalReport> out;
  for (const auto& d : datasets) {
    out.push_back(evaluate(model, vocab, d.examples, max_length, d.tag, model_fingerprint));
  }
  return out;
}

std::string render_reports(std::span<const EvalReport> reports, ReportFormat format) {
  if (format == ReportFormat::json) {
    ojson arr = ojson::array();
    for (const auto& r : reports) {
      ojson per_class = ojson::object();
      for (Label l : kAllLabels) {
        const auto& m = r[l];
        per_class[std::string(label_name(l))] = {
            {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
      }
      ojson confusion = ojson::array();
      for (const auto& row : r.confusion.counts) confusion.push_back(row);
      arr.push_back({{"dataset", r.dataset},
                     {"model_fingerprint", r.model_fingerprint},
                     {"accuracy", r.accuracy},
                     {"macro_f1", r.macro_f1},
                     {"per_class", per_class},
                     {"confusion", confusion}});
    }
    return arr.dump(2) + "\n";
  }
  std::string out = "| dataset | class | precision | recall | f1 |\n|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    double p = 0.0;
    double rc = 0.0;
    for (Label l : kAllLabels) {
      const auto& m = r[l];
      p += m.precision / kNumClasses;
      rc += m.recall / kNumClasses;
      out += "| " + r.dataset + " | " + std::string(label_name(l)) + " | " +
             fixed4(m.precision) + " | " + fixed4(m.recall) + " | " + fixed4(m.f1) + " |\n";
    }
    out += "| " + r.dataset + " | macro | " + fixed4(p) + " | " + fixed4(rc) + " | " +
           fixed4(r.macro_f1) + " |\n";
  }
  out += "\n| dataset | accuracy | macro_f1 |\n|---|---|---|\n";
  for (const auto& r : reports) {
    out += "| " + r.dataset + " | " + fixed4(r.accuracy) + " | " + fixed4(r.macro_f1) + " |\n";
  }
  return out;
}

std::vector<EvalReport> parse_reports_json(std::string_view text) {
  const auto arr = nlohmann::json::parse(text);
  if (!arr.is_array()) throw std::invalid_argument("report json: expected an array");
  std::vector<EvalReport> out;
  for (const auto& o : arr) {
    EvalReport r;
    r.dataset = o.at("dataset").get<std::string>();
    r.model_fingerprint = o.at("model_fingerprint").get<std::string>();
    r.accuracy = o.at("accuracy").get<double>();
    r.macro_f1 = o.at("macro_f1").get<double>();
    for (Label l : kAllLabels) {
      const auto& m = o.at("per_class").at(std::string(label_name(l)));
      r.per_class[label_index(l)] = {m.at("precision").get<double>(), m.at("recall").get<double>(),
                                     m.at("f1").get<double>()};
    }
    const auto& cm = o.at("confusion");
    for (int g = 0; g < kNumClasses; ++g) {
      for (int p = 0; p < kNumClasses; ++p) {
        r.confusion.counts[g][p] = cm.at(g).at(p).get<std::int64_t>();
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace csent
