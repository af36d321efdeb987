#pragma once

// Line-oriented key=value configuration and the training configuration built
// on it. Canonical text lists keys in sorted order, one per line, with
// numbers printed in their shortest round-trip form.

#include "csent/real.hpp"
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "csent/encoder.hpp"
#include "csent/heads.hpp"
#include "csent/objectives.hpp"

namespace csent::inline CSENT_ABI {

class ConfigMap {
 public:
  /// Blank lines and lines starting with '#' are ignored. Throws
  /// std::invalid_argument naming the line for anything else without '='.
  static ConfigMap parse(std::string_view text);
  static ConfigMap load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& at(const std::string& key) const;
  /// Later values win.
  void merge(const ConfigMap& other);

  const std::map<std::string, std::string>& values() const { return values_; }
  std::string canonical_text() const;
  std::string fingerprint() const;

  bool operator==(const ConfigMap&) const = default;

 private:
  std::map<std::string, std::string> values_;
};

std::string format_number(double value);
std::string format_number(float value);

enum class Objective { none, unsup_cse, sup_cse };
std::string_view objective_name(Objective objective);
std::optional<Objective> parse_objective(std::string_view name);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 4;
  double learning_rate = 1e-5;
  double pretrain_learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t max_length = 64;
  LossConfig loss;
  HeadKind head = HeadKind::linear;
  Objective objective = Objective::unsup_cse;
  std::uint64_t seed = 42;
  float dropout_p = 0.1f;
  double mlm_weight = 1.0;
  double mlm_mask_rate = 0.15;
  bool freeze_encoder = false;
  std::size_t pair_sample = 64;  // held-out pretraining pairs for alignment/uniformity

  // Encoder architecture.
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 0;
  std::size_t max_positions = 256;
  Pooling pooling = Pooling::cls;

  void validate() const;
  EncoderConfig encoder_config(std::size_t vocab_size) const;
  HeadConfig head_config() const;

  ConfigMap to_map() const;
  /// Starts from `base` and overrides every key present in `map`. Unknown
  /// keys and unparsable values throw std::invalid_argument naming the key.
  static TrainConfig from_map(const ConfigMap& map, TrainConfig base);
  static TrainConfig from_map(const ConfigMap& map);

  bool operator==(const TrainConfig&) const = default;
};

ConfigMap encoder_config_map(const EncoderConfig& config);
EncoderConfig encoder_config_from_map(const ConfigMap& map);
ConfigMap head_config_map(const HeadConfig& config);
HeadConfig head_config_from_map(const ConfigMap& map);

}  // namespace csent
