#pragma once

// Dataset ingestion, labels, word-level vocabulary and batching.

#include "csent/real.hpp"
#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csent::inline CSENT_ABI {

/// Class indices are fixed everywhere: negative=0, neutral=1, positive=2.
enum class Label : int { negative = 0, neutral = 1, positive = 2 };
inline constexpr int kNumClasses = 3;
inline constexpr std::array<Label, 3> kAllLabels = {Label::negative, Label::neutral,
                                                    Label::positive};

std::string_view label_name(Label label);
std::optional<Label> parse_label(std::string_view name);
Label label_from_index(int index);
constexpr int label_index(Label label) { return static_cast<int>(label); }

struct LabeledExample {
  std::string text;
  Label label = Label::neutral;
  std::string source;  // dynasent-r1, sst3, yelp, synthetic, ...

  bool operator==(const LabeledExample&) const = default;
};

/// 1-2 stars -> negative, 3 -> neutral, 4-5 -> positive. Throws
/// std::out_of_range naming `record_index` for anything else.
Label remap_stars(int stars, std::size_t record_index = 0);

enum class DatasetFormat { jsonl, star_csv };

/// star_csv for *.csv, jsonl otherwise.
DatasetFormat format_for_path(const std::filesystem::path& path);

struct LoadedDataset {
  std::vector<LabeledExample> examples;
  std::size_t malformed = 0;
  std::vector<std::string> warnings;
};

/// Malformed rows are skipped and counted; more than 10% malformed rows
/// (or an unreadable file) throws. `source` tags rows that carry none.
LoadedDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                           const std::string& source = "");
LoadedDataset parse_jsonl(std::istream& in, const std::string& source = "");
LoadedDataset parse_star_csv(std::istream& in, const std::string& source = "");

/// Writes one {"label", "source", "text"} object per line.
void write_jsonl(std::ostream& out, std::span<const LabeledExample> examples);

/// Unlabelled corpus: one sentence per non-blank line; lines that are JSON
/// objects contribute their "text" field.
std::vector<std::string> load_sentences(const std::filesystem::path& path);

struct NliTriple {
  std::string anchor;
  std::string entailment;
  std::string contradiction;
};

struct LoadedTriples {
  std::vector<NliTriple> triples;
  std::size_t malformed = 0;
};

/// JSONL rows with string fields "anchor", "entailment", "contradiction".
/// Rows missing a field are rejected; more than 10% rejected rows throws.
LoadedTriples load_triples(const std::filesystem::path& path);

/// Lowercased split on whitespace; ASCII punctuation characters become
/// single-character tokens.
std::vector<std::string> tokenize(std::string_view text);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kNumReserved = 5;

  Vocab();

  /// Keeps tokens seen at least `min_count` times, ordered by frequency
  /// (descending) then lexicographically.
  static Vocab build(std::span<const std::string> texts, std::size_t min_count = 1);
  static Vocab build(std::span<const LabeledExample> examples, std::size_t min_count = 1);
  /// Full token list in id order, reserved tokens first.
  static Vocab from_tokens(std::vector<std::string> tokens);

  int id(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool is_special(int id) const { return id >= 0 && id < kNumReserved; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the token list in id order.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  /// One token per line in id order.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  explicit Vocab(std::vector<std::string> tokens);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

std::string hex64(std::uint64_t value);

/// Row-major [batch x length] token ids and 0/1 attention mask. Row b starts
/// with [cls]; the last real token is [sep]; padding has id [pad] and mask 0.
struct TokenizedBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<int> token_ids;
  std::vector<int> attention_mask;
  std::vector<int> labels;  // empty for unlabelled batches

  int id(std::size_t b, std::size_t l) const { return token_ids[b * length + l]; }
  int mask(std::size_t b, std::size_t l) const { return attention_mask[b * length + l]; }
  std::size_t real_length(std::size_t b) const;

  bool operator==(const TokenizedBatch&) const = default;
};

/// Pads every row to `max_length`, or to the longest row when `pad_to_longest`.
TokenizedBatch encode_batch(std::span<const std::string> texts, const Vocab& vocab,
                            std::size_t max_length, bool pad_to_longest = false);
TokenizedBatch encode_batch(std::span<const LabeledExample> examples, const Vocab& vocab,
                            std::size_t max_length, bool pad_to_longest = false);

struct ClassDistribution {
  std::array<std::size_t, 3> counts{};
  std::size_t total = 0;

  std::size_t operator[](Label label) const { return counts[label_index(label)]; }
  bool operator==(const ClassDistribution&) const = default;
};

ClassDistribution class_distribution(std::span<const LabeledExample> examples);

}  // namespace csent
