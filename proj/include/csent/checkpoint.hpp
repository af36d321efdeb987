#pragma once

// Checkpoint file:
//
//   csent-checkpoint
//   version 1
//   vocab_hash <16 hex digits>
//   section encoder <n>     followed by n key=value lines
//   section head <n>        (n = 0 for an encoder-only checkpoint)
//   section train <n>
//   tensors <count>
//   tensor <name> <rank> <dims...>
//   <numel little-endian float32 values>
//   ...
//   end

#include "csent/real.hpp"
#include <cstdint>
#include <filesystem>
#include <optional>

#include "csent/config.hpp"
#include "csent/encoder.hpp"
#include "csent/heads.hpp"
#include "csent/model.hpp"

namespace csent::inline CSENT_ABI {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  EncoderConfig encoder_config;
  EncoderParams encoder;
  std::optional<HeadConfig> head_config;
  HeadParams head;
  ConfigMap train_config;
  std::uint64_t vocab_hash = 0;

  /// Throws if the checkpoint carries no head.
  Classifier classifier() const;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);

/// Throws std::runtime_error on a bad magic line, a version mismatch (naming
/// both versions), truncation, a vocab hash different from `expected_vocab_hash`
/// or tensors that disagree with the stored configuration.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_hash = std::nullopt);

/// FNV-1a over the configuration sections, the vocab hash and every
/// parameter value.
std::string checkpoint_fingerprint(const Checkpoint& checkpoint);

/// `<checkpoint>.vocab`
std::filesystem::path vocab_sidecar(const std::filesystem::path& checkpoint);

}  // namespace csent
