#include "csent/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csent::inline CSENT_ABI {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  throw std::invalid_argument("config: cannot parse " + key + "=" + value);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) bad_value(key, value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

template <typename T>
std::string shortest(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_number failed");
  return std::string(buf, ptr);
}

std::string_view pooling_name(Pooling p) { return p == Pooling::cls ? "cls" : "mean"; }

Pooling parse_pooling(const std::string& key, const std::string& value) {
  if (value == "cls") return Pooling::cls;
  if (value == "mean") return Pooling::mean;
  bad_value(key, value);
}

std::string_view loss_name(LossKind kind) { return kind == LossKind::focal ? "focal" : "ce"; }

LossKind parse_loss(const std::string& key, const std::string& value) {
  if (value == "ce" || value == "cross_entropy") return LossKind::cross_entropy;
  if (value == "focal") return LossKind::focal;
  bad_value(key, value);
}

Reduction parse_reduction(const std::string& key, const std::string& value) {
  if (value == "mean") return Reduction::mean;
  if (value == "sum") return Reduction::sum;
  bad_value(key, value);
}

}  // namespace

std::string format_number(double value) { return shortest(value); }
std::string format_number(float value) { return shortest(value); }

ConfigMap ConfigMap::parse(std::string_view text) {
  ConfigMap out;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string_view raw = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos || trim(line.substr(0, eq)).empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key=value, got '" + std::string(line) + "'");
    }
    out.set(std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))));
  }
  return out;
}

ConfigMap ConfigMap::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

const std::string& ConfigMap::at(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw std::out_of_range("config: missing key " + key);
  return it->second;
}

void ConfigMap::merge(const ConfigMap& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string ConfigMap::canonical_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::string ConfigMap::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

std::string_view objective_name(Objective objective) {
  switch (objective) {
    case Objective::none:
      return "none";
    case Objective::unsup_cse:
      return "unsup-cse";
    case Objective::sup_cse:
      return "sup-cse";
  }
  return "?";
}

std::optional<Objective> parse_objective(std::string_view name) {
  if (name == "none") return Objective::none;
  if (name == "unsup-cse" || name == "unsup_cse") return Objective::unsup_cse;
  if (name == "sup-cse" || name == "sup_cse") return Objective::sup_cse;
  return std::nullopt;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(pretrain_learning_rate > 0.0)) fail("pretrain_learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (max_length < 2) fail("max_length must be >= 2");
  if (max_length > max_positions) fail("max_length exceeds max_positions");
  if (!(mlm_weight >= 0.0)) fail("mlm_weight must be >= 0");
  if (!(mlm_mask_rate >= 0.0 && mlm_mask_rate <= 1.0)) fail("mlm_mask_rate outside [0, 1]");
  loss.validate();
  encoder_config(Vocab::kNumReserved + 1).validate();
  head_config().validate();
}

EncoderConfig TrainConfig::encoder_config(std::size_t vocab_size) const {
  EncoderConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = d_model;
  cfg.n_layers = n_layers;
  cfg.n_heads = n_heads;
  cfg.d_ff = d_ff;
  cfg.max_length = max_positions;
  cfg.dropout_p = dropout_p;
  cfg.pooling = pooling;
  return cfg;
}

HeadConfig TrainConfig::head_config() const { return HeadConfig::for_kind(head, d_model, dropout_p); }

ConfigMap TrainConfig::to_map() const {
  ConfigMap m;
  m.set("batch_size", std::to_string(batch_size));
  m.set("epochs", std::to_string(epochs));
  m.set("learning_rate", format_number(learning_rate));
  m.set("pretrain_learning_rate", format_number(pretrain_learning_rate));
  m.set("weight_decay", format_number(weight_decay));
  m.set("max_length", std::to_string(max_length));
  m.set("loss", std::string(loss_name(loss.kind)));
  m.set("gamma", format_number(loss.gamma));
  m.set("reduction", loss.reduction == Reduction::mean ? "mean" : "sum");
  m.set("temperature", format_number(loss.temperature));
  m.set("head", std::string(head_kind_name(head)));
  m.set("objective", std::string(objective_name(objective)));
  m.set("seed", std::to_string(seed));
  m.set("dropout_p", format_number(dropout_p));
  m.set("mlm_weight", format_number(mlm_weight));
  m.set("mlm_mask_rate", format_number(mlm_mask_rate));
  m.set("freeze_encoder", freeze_encoder ? "true" : "false");
  m.set("pair_sample", std::to_string(pair_sample));
  m.set("d_model", std::to_string(d_model));
  m.set("n_layers", std::to_string(n_layers));
  m.set("n_heads", std::to_string(n_heads));
  m.set("d_ff", std::to_string(d_ff));
  m.set("max_positions", std::to_string(max_positions));
  m.set("pooling", std::string(pooling_name(pooling)));
  return m;
}

TrainConfig TrainConfig::from_map(const ConfigMap& map, TrainConfig c) {
  for (const auto& [key, v] : map.values()) {
    if (key == "batch_size") c.batch_size = parse_number<std::size_t>(key, v);
    else if (key == "epochs") c.epochs = parse_number<std::size_t>(key, v);
    else if (key == "learning_rate") c.learning_rate = parse_number<double>(key, v);
    else if (key == "pretrain_learning_rate") c.pretrain_learning_rate = parse_number<double>(key, v);
    else if (key == "weight_decay") c.weight_decay = parse_number<double>(key, v);
    else if (key == "max_length") c.max_length = parse_number<std::size_t>(key, v);
    else if (key == "loss") c.loss.kind = parse_loss(key, v);
    else if (key == "gamma") c.loss.gamma = parse_number<float>(key, v);
    else if (key == "reduction") c.loss.reduction = parse_reduction(key, v);
    else if (key == "temperature") c.loss.temperature = parse_number<float>(key, v);
    else if (key == "head") {
      const auto kind = parse_head_kind(v);
      if (!kind) bad_value(key, v);
      c.head = *kind;
    } else if (key == "objective") {
      const auto obj = parse_objective(v);
      if (!obj) bad_value(key, v);
      c.objective = *obj;
    }
    else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, v);
    else if (key == "dropout_p") c.dropout_p = parse_number<float>(key, v);
    else if (key == "mlm_weight") c.mlm_weight = parse_number<double>(key, v);
    else if (key == "mlm_mask_rate") c.mlm_mask_rate = parse_number<double>(key, v);
    else if (key == "freeze_encoder") c.freeze_encoder = parse_bool(key, v);
    else if (key == "pair_sample") c.pair_sample = parse_number<std::size_t>(key, v);
    else if (key == "d_model") c.d_model = parse_number<std::size_t>(key, v);
    else if (key == "n_layers") c.n_layers = parse_number<std::size_t>(key, v);
    else if (key == "n_heads") c.n_heads = parse_number<std::size_t>(key, v);
    else if (key == "d_ff") c.d_ff = parse_number<std::size_t>(key, v);
    else if (key == "max_positions") c.max_positions = parse_number<std::size_t>(key, v);
    else if (key == "pooling") c.pooling = parse_pooling(key, v);
    else throw std::invalid_argument("config: unknown key " + key);
  }
  return c;
}

TrainConfig TrainConfig::from_map(const ConfigMap& map) { return from_map(map, TrainConfig{}); }

ConfigMap encoder_config_map(const EncoderConfig& cfg) {
  ConfigMap m;
  m.set("vocab_size", std::to_string(cfg.vocab_size));
  m.set("d_model", std::to_string(cfg.d_model));
  m.set("n_layers", std::to_string(cfg.n_layers));
  m.set("n_heads", std::to_string(cfg.n_heads));
  m.set("d_ff", std::to_string(cfg.d_ff));
  m.set("max_length", std::to_string(cfg.max_length));
  m.set("dropout_p", format_number(cfg.dropout_p));
  m.set("pooling", std::string(pooling_name(cfg.pooling)));
  return m;
}

EncoderConfig encoder_config_from_map(const ConfigMap& m) {
  EncoderConfig cfg;
  cfg.vocab_size = parse_number<std::size_t>("vocab_size", m.at("vocab_size"));
  cfg.d_model = parse_number<std::size_t>("d_model", m.at("d_model"));
  cfg.n_layers = parse_number<std::size_t>("n_layers", m.at("n_layers"));
  cfg.n_heads = parse_number<std::size_t>("n_heads", m.at("n_heads"));
  cfg.d_ff = parse_number<std::size_t>("d_ff", m.at("d_ff"));
  cfg.max_length = parse_number<std::size_t>("max_length", m.at("max_length"));
  cfg.dropout_p = parse_number<float>("dropout_p", m.at("dropout_p"));
  cfg.pooling = parse_pooling("pooling", m.at("pooling"));
  cfg.validate();
  return cfg;
}

ConfigMap head_config_map(const HeadConfig& cfg) {
  ConfigMap m;
  m.set("kind", std::string(head_kind_name(cfg.kind)));
  m.set("dense_in", std::to_string(cfg.dense_in));
  m.set("dense_out", std::to_string(cfg.dense_out));
  m.set("dropout_p", format_number(cfg.dropout_p));
  return m;
}

HeadConfig head_config_from_map(const ConfigMap& m) {
  HeadConfig cfg;
  const auto kind = parse_head_kind(m.at("kind"));
  if (!kind) bad_value("kind", m.at("kind"));
  cfg.kind = *kind;
  cfg.dense_in = parse_number<std::size_t>("dense_in", m.at("dense_in"));
  cfg.dense_out = parse_number<std::size_t>("dense_out", m.at("dense_out"));
  cfg.dropout_p = parse_number<float>("dropout_p", m.at("dropout_p"));
  cfg.validate();
  return cfg;
}

}  // namespace csent
