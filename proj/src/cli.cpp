#include "csent/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "csent/checkpoint.hpp"
#include "csent/config.hpp"
#include "csent/evaluator.hpp"
#include "csent/trainer.hpp"
#include "csent/upsampler.hpp"

namespace csent::inline CSENT_ABI {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flags are captured as text and merged over the config file, so every value
// goes through the same parser whichever way it was supplied.
class FlagSet {
 public:
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option(flag, values_[key], help);
  }
  void set_flag(const std::string& key, bool on) {
    if (on) values_[key] = "true";
  }
  ConfigMap overrides() const {
    ConfigMap m;
    for (const auto& [k, v] : values_) {
      if (!v.empty()) m.set(k, v);
    }
    return m;
  }

 private:
  std::map<std::string, std::string> values_;
};

ConfigMap layered(const std::string& config_path, const ConfigMap& flags) {
  ConfigMap m = config_path.empty() ? ConfigMap{} : ConfigMap::load(config_path);
  m.merge(flags);
  return m;
}

// Keeps only `keys` from `map`; config files may be shared between subcommands.
ConfigMap restrict(const ConfigMap& map, const ConfigMap& defaults) {
  ConfigMap out = defaults;
  for (const auto& [k, v] : map.values()) {
    if (defaults.contains(k)) out.set(k, v);
  }
  return out;
}

void echo(std::ostream& err, const std::string& command, const ConfigMap& config) {
  err << "csent " << command << " effective config (fingerprint " << config.fingerprint()
      << "):\n";
  for (const auto& [k, v] : config.values()) err << "  " << k << "=" << v << '\n';
}

// Writes through a temporary sibling so a failed run never leaves a partial
// artifact at `path`.
template <typename Fn>
void write_atomically(const fs::path& path, Fn&& write) {
  const fs::path tmp = path.string() + ".tmp";
  try {
    write(tmp);
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  write_atomically(path, [&](const fs::path& tmp) {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    f.flush();
    if (!f) throw std::runtime_error("failed writing " + path.string());
  });
}

void save_with_vocab(const Checkpoint& ckpt, const Vocab& vocab, const fs::path& path) {
  write_atomically(path, [&](const fs::path& tmp) { save_checkpoint(ckpt, tmp); });
  write_atomically(vocab_sidecar(path), [&](const fs::path& tmp) { vocab.save(tmp); });
}

std::vector<LabeledExample> load_examples(const fs::path& path, std::ostream& err) {
  LoadedDataset d = load_dataset(path, format_for_path(path), path.stem().string());
  for (const auto& w : d.warnings) err << "warning: " << path.string() << ": " << w << '\n';
  return std::move(d.examples);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw UsageError("config: cannot parse " + key + "=" + value);
  }
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::logic_error&) {
    throw UsageError("config: cannot parse " + key + "=" + value);
  }
}

ReportFormat parse_format(const std::string& value) {
  if (value == "json") return ReportFormat::json;
  if (value == "markdown") return ReportFormat::markdown;
  throw UsageError("--format must be json or markdown, got " + value);
}

// Bad keys or values from flags or the config file are usage errors.
TrainConfig resolve_train_config(const ConfigMap& merged) {
  try {
    TrainConfig tc = TrainConfig::from_map(merged);
    tc.validate();
    return tc;
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

struct PretrainArgs {
  std::string corpus, out, config, log;
  std::vector<std::string> extra_vocab;
  std::size_t min_count = 1;
  FlagSet flags;
};

int cmd_pretrain(PretrainArgs& a, std::ostream& out, std::ostream& err) {
  ConfigMap merged = layered(a.config, a.flags.overrides());
  const TrainConfig tc = resolve_train_config(merged);
  if (tc.objective == Objective::none) throw UsageError("pretrain needs --objective unsup-cse or sup-cse");
  const ConfigMap effective = tc.to_map();
  echo(err, "pretrain", effective);

  PretrainData data;
  std::vector<std::string> vocab_texts;
  if (tc.objective == Objective::sup_cse) {
    data.triples = load_triples(a.corpus).triples;
    for (const auto& t : data.triples) {
      vocab_texts.push_back(t.anchor);
      vocab_texts.push_back(t.entailment);
      vocab_texts.push_back(t.contradiction);
    }
  } else {
    data.sentences = load_sentences(a.corpus);
    vocab_texts = data.sentences;
  }
  for (const auto& extra : a.extra_vocab) {
    for (auto& s : load_sentences(extra)) vocab_texts.push_back(std::move(s));
  }
  const Vocab vocab = Vocab::build(vocab_texts, a.min_count);
  const EncoderConfig ec = tc.encoder_config(vocab.size());

  const fs::path log_path = a.log.empty() ? fs::path(a.out + ".log") : fs::path(a.log);
  std::ostringstream log;
  const PretrainResult result = pretrain(data, vocab, ec, tc, &log);

  Checkpoint ckpt;
  ckpt.encoder_config = ec;
  ckpt.encoder = result.params;
  ckpt.train_config = effective;
  ckpt.vocab_hash = vocab.hash();
  save_with_vocab(ckpt, vocab, a.out);
  write_text(log_path, log.str());
  out << log.str();
  out << "wrote " << a.out << " (vocab " << vocab.size() << ", fingerprint "
      << checkpoint_fingerprint(ckpt) << ")\n";
  return 0;
}

struct FinetuneArgs {
  std::string train, dev, init, out, config, report, log;
  bool random_init = false;
  bool freeze_encoder = false;
  std::size_t min_count = 1;
  FlagSet flags;
};

int cmd_finetune(FinetuneArgs& a, std::ostream& out, std::ostream& err) {
  if (a.init.empty() == !a.random_init) {
    throw UsageError("finetune needs exactly one of --init CKPT or --random-init");
  }
  a.flags.set_flag("freeze_encoder", a.freeze_encoder);
  ConfigMap merged = layered(a.config, a.flags.overrides());
  TrainConfig tc = resolve_train_config(merged);

  const auto train = load_examples(a.train, err);
  const auto dev = load_examples(a.dev, err);

  Vocab vocab;
  EncoderConfig ec;
  EncoderParams init;
  if (a.random_init) {
    tc.objective = Objective::none;
    tc.validate();
    vocab = Vocab::build(train, a.min_count);
    ec = tc.encoder_config(vocab.size());
    init = EncoderParams::init(ec, encoder_init_seed(tc.seed));
  } else {
    vocab = Vocab::load(vocab_sidecar(a.init));
    Checkpoint base = load_checkpoint(a.init, vocab.hash());
    ec = base.encoder_config;
    tc.d_model = ec.d_model;
    tc.n_layers = ec.n_layers;
    tc.n_heads = ec.n_heads;
    tc.d_ff = ec.d_ff;
    tc.max_positions = ec.max_length;
    tc.pooling = ec.pooling;
    ec.dropout_p = tc.dropout_p;
    if (base.train_config.contains("objective")) {
      tc.objective = *parse_objective(base.train_config.at("objective"));
    }
    tc.validate();
    init = base.encoder;
  }
  const ConfigMap effective = tc.to_map();
  echo(err, "finetune", effective);

  std::ostringstream log;
  FinetuneResult result = finetune(train, dev, vocab, init, ec, tc, &log);

  Checkpoint ckpt;
  ckpt.encoder_config = result.model.encoder_config;
  ckpt.encoder = result.model.encoder;
  ckpt.head_config = result.model.head_config;
  ckpt.head = result.model.head;
  ckpt.train_config = effective;
  ckpt.vocab_hash = vocab.hash();
  result.dev_report.dataset = fs::path(a.dev).stem().string();
  result.dev_report.model_fingerprint = checkpoint_fingerprint(ckpt);

  save_with_vocab(ckpt, vocab, a.out);
  const EvalReport reports[] = {result.dev_report};
  write_text(a.report.empty() ? a.out + ".report.json" : a.report,
             render_reports(reports, ReportFormat::json));
  write_text(a.log.empty() ? a.out + ".log" : a.log, log.str());
  out << log.str() << "best epoch " << result.best_epoch << "\n"
      << render_reports(reports, ReportFormat::markdown);
  return 0;
}

struct EvaluateArgs {
  std::string ckpt, vocab, out, config;
  std::vector<std::string> datasets;
  FlagSet flags;
};

int cmd_evaluate(EvaluateArgs& a, std::ostream& out, std::ostream& err) {
  ConfigMap defaults;
  defaults.set("max_length", "64");
  defaults.set("format", "json");
  const ConfigMap effective = restrict(layered(a.config, a.flags.overrides()), defaults);
  const std::size_t max_length = parse_size("max_length", effective.at("max_length"));
  const ReportFormat format = parse_format(effective.at("format"));
  echo(err, "evaluate", effective);

  const Vocab vocab = Vocab::load(a.vocab.empty() ? vocab_sidecar(a.ckpt) : fs::path(a.vocab));
  const Checkpoint ckpt = load_checkpoint(a.ckpt, vocab.hash());
  const Classifier model = ckpt.classifier();
  std::vector<TaggedDataset> sets;
  for (const auto& path : a.datasets) {
    sets.push_back({fs::path(path).stem().string(), load_examples(path, err)});
  }
  const auto reports = transfer_suite(model, vocab, sets, max_length, checkpoint_fingerprint(ckpt));
  const std::string text = render_reports(reports, format);
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return 0;
}

struct UpsampleArgs {
  std::string dataset, ckpt, vocab, out, config;
  FlagSet flags;
};

int cmd_upsample(UpsampleArgs& a, std::ostream& out, std::ostream& err) {
  ConfigMap defaults;
  defaults.set("mask_rate", "0.15");
  defaults.set("top_k", "5");
  defaults.set("max_length", "64");
  defaults.set("seed", "42");
  defaults.set("target", "max");
  const ConfigMap effective = restrict(layered(a.config, a.flags.overrides()), defaults);
  GenerationConfig gen;
  gen.mask_rate = parse_double("mask_rate", effective.at("mask_rate"));
  gen.top_k = parse_size("top_k", effective.at("top_k"));
  gen.max_length = parse_size("max_length", effective.at("max_length"));
  gen.seed = parse_size("seed", effective.at("seed"));
  std::optional<std::size_t> target;
  if (effective.at("target") != "max") target = parse_size("target", effective.at("target"));
  echo(err, "upsample", effective);

  const auto examples = load_examples(a.dataset, err);
  const Vocab vocab = Vocab::load(a.vocab.empty() ? vocab_sidecar(a.ckpt) : fs::path(a.vocab));
  const Checkpoint ckpt = load_checkpoint(a.ckpt, vocab.hash());
  const BalancePlan plan = make_plan(class_distribution(examples), target);
  const UpsampleResult result =
      upsample(examples, plan, ckpt.encoder, ckpt.encoder_config, vocab, gen);

  std::ostringstream jsonl;
  write_jsonl(jsonl, result.dataset);
  write_text(a.out, jsonl.str());
  std::size_t duplicates = 0;
  for (const auto& s : result.synthetic) duplicates += s.duplicate;
  for (Label l : kAllLabels) {
    const int c = label_index(l);
    out << label_name(l) << ": current " << plan.current[c] << ", target " << plan.target[c]
        << ", synthetic " << plan.deficit[c] << " (" << result.synthetic_fraction[c] * 100.0
        << "%)\n";
  }
  out << "duplicates flagged: " << duplicates << "\nwrote " << a.out << '\n';
  for (const auto& w : result.warnings) err << "warning: " << w << '\n';
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "markdown";
  std::string out;
};

int cmd_report(ReportArgs& a, std::ostream& out) {
  std::vector<EvalReport> all;
  for (const auto& path : a.inputs) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    for (auto& r : parse_reports_json(ss.str())) all.push_back(std::move(r));
  }
  const std::string text = render_reports(all, parse_format(a.format));
  if (a.out.empty()) {
    out << text;
  } else {
    write_text(a.out, text);
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive sentence encoders and sentiment classification"};
  app.require_subcommand(1);

  PretrainArgs pre;
  auto* p = app.add_subcommand("pretrain", "Contrastive pretraining of the encoder");
  p->add_option("corpus", pre.corpus, "Sentences (unsup-cse) or JSONL triples (sup-cse)")
      ->required();
  p->add_option("--out", pre.out, "Checkpoint path")->required();
  p->add_option("--config", pre.config, "key=value config file");
  p->add_option("--log", pre.log, "Epoch log path (default <out>.log)");
  p->add_option("--extra-vocab", pre.extra_vocab, "Extra text files for the vocabulary");
  p->add_option("--min-count", pre.min_count, "Vocabulary frequency cutoff");
  pre.flags.add(p, "--objective", "objective", "unsup-cse | sup-cse (default unsup-cse)");
  pre.flags.add(p, "--epochs", "epochs", "default 4");
  pre.flags.add(p, "--lr", "pretrain_learning_rate", "default 1e-3");
  pre.flags.add(p, "--batch-size", "batch_size", "default 32");
  pre.flags.add(p, "--weight-decay", "weight_decay", "default 0.01");
  pre.flags.add(p, "--max-length", "max_length", "default 64");
  pre.flags.add(p, "--temperature", "temperature", "default 0.05");
  pre.flags.add(p, "--mlm-weight", "mlm_weight", "default 1");
  pre.flags.add(p, "--d-model", "d_model", "default 64");
  pre.flags.add(p, "--layers", "n_layers", "default 2");
  pre.flags.add(p, "--heads", "n_heads", "default 4");
  pre.flags.add(p, "--seed", "seed", "default 42");

  FinetuneArgs ft;
  auto* f = app.add_subcommand("finetune", "Fine-tune encoder and classification head");
  f->add_option("train", ft.train, "Training set (.jsonl or star .csv)")->required();
  f->add_option("dev", ft.dev, "Dev set")->required();
  f->add_option("--init", ft.init, "Pretrained checkpoint");
  f->add_flag("--random-init", ft.random_init, "Start from a random encoder");
  f->add_option("--out", ft.out, "Checkpoint path")->required();
  f->add_option("--config", ft.config, "key=value config file");
  f->add_option("--report", ft.report, "Dev report path (default <out>.report.json)");
  f->add_option("--log", ft.log, "Epoch log path (default <out>.log)");
  f->add_option("--min-count", ft.min_count, "Vocabulary cutoff with --random-init");
  f->add_flag("--freeze-encoder", ft.freeze_encoder, "Train the head only");
  ft.flags.add(f, "--head", "head", "linear | bigru | bilstm (default linear)");
  ft.flags.add(f, "--loss", "loss", "ce | focal (default ce)");
  ft.flags.add(f, "--gamma", "gamma", "focal gamma (default 3)");
  ft.flags.add(f, "--batch-size", "batch_size", "default 32");
  ft.flags.add(f, "--epochs", "epochs", "default 4");
  ft.flags.add(f, "--lr", "learning_rate", "default 1e-5");
  ft.flags.add(f, "--weight-decay", "weight_decay", "default 0.01");
  ft.flags.add(f, "--max-length", "max_length", "default 64");
  ft.flags.add(f, "--dropout", "dropout_p", "default 0.1");
  ft.flags.add(f, "--d-model", "d_model", "default 64 (random init only)");
  ft.flags.add(f, "--layers", "n_layers", "default 2 (random init only)");
  ft.flags.add(f, "--heads", "n_heads", "default 4 (random init only)");
  ft.flags.add(f, "--seed", "seed", "default 42");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "Evaluate a fine-tuned checkpoint");
  e->add_option("checkpoint", ev.ckpt, "Fine-tuned checkpoint")->required();
  e->add_option("datasets", ev.datasets, "One or more datasets")->required();
  e->add_option("--vocab", ev.vocab, "Vocabulary (default <checkpoint>.vocab)");
  e->add_option("--out", ev.out, "Write reports here instead of stdout");
  e->add_option("--config", ev.config, "key=value config file");
  ev.flags.add(e, "--max-length", "max_length", "default 64");
  ev.flags.add(e, "--format", "format", "json | markdown (default json)");

  UpsampleArgs up;
  auto* u = app.add_subcommand("upsample", "Balance classes with fill-mask synthetic rows");
  u->add_option("dataset", up.dataset, "Dataset to balance")->required();
  u->add_option("--ckpt", up.ckpt, "Checkpoint with a trained masked-token head")->required();
  u->add_option("--vocab", up.vocab, "Vocabulary (default <ckpt>.vocab)");
  u->add_option("--out", up.out, "Output JSONL")->required();
  u->add_option("--config", up.config, "key=value config file");
  up.flags.add(u, "--mask-rate", "mask_rate", "default 0.15");
  up.flags.add(u, "--top-k", "top_k", "default 5");
  up.flags.add(u, "--target", "target", "per-class target (default: largest class)");
  up.flags.add(u, "--max-length", "max_length", "default 64");
  up.flags.add(u, "--seed", "seed", "default 42");

  ReportArgs rep;
  auto* r = app.add_subcommand("report", "Render JSON reports as a table");
  r->add_option("reports", rep.inputs, "JSON report files")->required();
  r->add_option("--format", rep.format, "markdown | json");
  r->add_option("--out", rep.out, "Output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? 0 : 2;
  }
  try {
    if (p->parsed()) return cmd_pretrain(pre, out, err);
    if (f->parsed()) return cmd_finetune(ft, out, err);
    if (e->parsed()) return cmd_evaluate(ev, out, err);
    if (u->parsed()) return cmd_upsample(up, out, err);
    if (r->parsed()) return cmd_report(rep, out);
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace csent
