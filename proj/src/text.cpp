#include "csent/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace csent::inline CSENT_ABI {

namespace {

using json = nlohmann::json;

constexpr double kMaxMalformedFraction = 0.10;

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n\f\v");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n\f\v");
  return s.substr(first, last - first + 1);
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

void check_malformed(const std::string& what, std::size_t malformed, std::size_t good) {
  const std::size_t total = malformed + good;
  if (total > 0 && static_cast<double>(malformed) > kMaxMalformedFraction * total) {
    throw std::runtime_error(what + ": " + std::to_string(malformed) + " of " +
                             std::to_string(total) +
                             " rows malformed (over 10%, wrong format?)");
  }
}

void finish_load(LoadedDataset& out, const std::string& what) {
  check_malformed(what, out.malformed, out.examples.size());
  if (out.malformed > 0) {
    out.warnings.push_back(what + ": skipped " + std::to_string(out.malformed) +
                           " malformed rows");
  }
  if (out.examples.empty() && out.malformed == 0) out.warnings.push_back(what + ": empty dataset");
}

}  // namespace

std::string_view label_name(Label label) {
  switch (label) {
    case Label::negative:
      return "negative";
    case Label::neutral:
      return "neutral";
    case Label::positive:
      return "positive";
  }
  return "?";
}

std::optional<Label> parse_label(std::string_view name) {
  if (name == "negative") return Label::negative;
  if (name == "neutral") return Label::neutral;
  if (name == "positive") return Label::positive;
  return std::nullopt;
}

Label label_from_index(int index) {
  if (index < 0 || index >= kNumClasses) {
    throw std::out_of_range("label index " + std::to_string(index) + " outside {0,1,2}");
  }
  return static_cast<Label>(index);
}

Label remap_stars(int stars, std::size_t record_index) {
  switch (stars) {
    case 1:
    case 2:
      return Label::negative;
    case 3:
      return Label::neutral;
    case 4:
    case 5:
      return Label::positive;
    default:
      throw std::out_of_range("record " + std::to_string(record_index) + ": star rating " +
                              std::to_string(stars) + " outside 1..5");
  }
}

DatasetFormat format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::star_csv : DatasetFormat::jsonl;
}

LoadedDataset parse_jsonl(std::istream& in, const std::string& source) {
  LoadedDataset out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json row = json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object()) {
      ++out.malformed;
      continue;
    }
    const auto text = row.find("text");
    const auto label = row.find("label");
    if (text == row.end() || label == row.end() || !text->is_string() || !label->is_string()) {
      ++out.malformed;
      continue;
    }
    const auto parsed = parse_label(label->get_ref<const std::string&>());
    const auto& body = text->get_ref<const std::string&>();
    if (!parsed || trim(body).empty()) {
      ++out.malformed;
      continue;
    }
    std::string tag = source;
    if (const auto src = row.find("source"); src != row.end() && src->is_string()) {
      tag = src->get<std::string>();
    }
    out.examples.push_back({body, *parsed, tag});
  }
  finish_load(out, "jsonl");
  return out;
}

namespace {

// RFC 4180 records: quoted fields may hold commas, newlines and "" escapes.
// Returns false at end of input.
bool read_csv_record(std::istream& in, std::vector<std::string>& fields, bool& well_formed) {
  fields.clear();
  well_formed = true;
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  char c;
  while (in.get(c)) {
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      if (!field.empty() || field_was_quoted) well_formed = false;
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else if (c == '\n') {
      break;
    } else if (c == '\r') {
      if (in.peek() == '\n') in.get(c);
      break;
    } else {
      if (field_was_quoted) well_formed = false;
      field.push_back(c);
    }
  }
  if (quoted) well_formed = false;
  fields.push_back(std::move(field));
  return true;
}

}  // namespace

LoadedDataset parse_star_csv(std::istream& in, const std::string& source) {
  LoadedDataset out;
  std::vector<std::string> fields;
  bool ok = true;
  if (!read_csv_record(in, fields, ok)) {
    out.warnings.push_back("star_csv: empty dataset");
    return out;
  }
  if (fields.size() != 2 || trim(fields[0]) != "stars" || trim(fields[1]) != "text") {
    throw std::runtime_error("star_csv: expected header \"stars,text\"");
  }
  std::size_t record = 0;
  while (read_csv_record(in, fields, ok)) {
    ++record;
    if (fields.size() == 1 && trim(fields[0]).empty()) continue;
    if (!ok || fields.size() != 2 || trim(fields[1]).empty()) {
      ++out.malformed;
      continue;
    }
    int stars = 0;
    try {
      std::size_t used = 0;
      const std::string s(trim(fields[0]));
      stars = std::stoi(s, &used);
      if (used != s.size()) throw std::invalid_argument("trailing characters");
      out.examples.push_back({fields[1], remap_stars(stars, record), source});
    } catch (const std::exception&) {
      ++out.malformed;
    }
  }
  finish_load(out, "star_csv");
  return out;
}

LoadedDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                           const std::string& source) {
  auto in = open_input(path);
  try {
    return format == DatasetFormat::jsonl ? parse_jsonl(in, source) : parse_star_csv(in, source);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_jsonl(std::ostream& out, std::span<const LabeledExample> examples) {
  for (const auto& ex : examples) {
    json row = {{"text", ex.text}, {"label", std::string(label_name(ex.label))}};
    if (!ex.source.empty()) row["source"] = ex.source;
    out << row.dump() << '\n';
  }
}

std::vector<std::string> load_sentences(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto t = trim(line);
    if (t.empty()) continue;
    if (t.front() == '{') {
      const json row = json::parse(t, nullptr, false);
      if (!row.is_discarded() && row.is_object()) {
        const auto text = row.find("text");
        if (text != row.end() && text->is_string() && !trim(text->get<std::string>()).empty()) {
          out.push_back(text->get<std::string>());
        }
        continue;
      }
    }
    out.emplace_back(t);
  }
  return out;
}

LoadedTriples load_triples(const std::filesystem::path& path) {
  auto in = open_input(path);
  LoadedTriples out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json row = json::parse(line, nullptr, false);
    auto field = [&](const char* key) -> const std::string* {
      if (row.is_discarded() || !row.is_object()) return nullptr;
      const auto it = row.find(key);
      if (it == row.end() || !it->is_string() || trim(it->get_ref<const std::string&>()).empty()) {
        return nullptr;
      }
      return &it->get_ref<const std::string&>();
    };
    const auto* a = field("anchor");
    const auto* e = field("entailment");
    const auto* c = field("contradiction");
    if (!a || !e || !c) {
      ++out.malformed;
      continue;
    }
    out.triples.push_back({*a, *e, *c});
  }
  check_malformed(path.string() + " (triples)", out.malformed, out.triples.size());
  if (out.triples.empty()) {
    throw std::runtime_error(path.string() + ": no (anchor, entailment, contradiction) triples");
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : text) {
    const auto u = static_cast<unsigned char>(ch);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      flush();
      tokens.emplace_back(1, ch);
    } else {
      cur.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : ch);
    }
  }
  flush();
  return tokens;
}

Vocab::Vocab() : Vocab(std::vector<std::string>{"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) {}

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kNumReserved) {
    throw std::invalid_argument("vocab: fewer tokens than the reserved set");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) {
      throw std::invalid_argument("vocab: duplicate token '" + tokens_[i] + "'");
    }
  }
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) { return Vocab(std::move(tokens)); }

Vocab Vocab::build(std::span<const std::string> texts, std::size_t min_count) {
  std::map<std::string, std::size_t> freq;
  for (const auto& t : texts) {
    for (auto& tok : tokenize(t)) ++freq[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab base;
  std::vector<std::string> tokens = base.tokens_;
  for (auto& [tok, n] : kept) tokens.push_back(tok);
  return from_tokens(std::move(tokens));
}

Vocab Vocab::build(std::span<const LabeledExample> examples, std::size_t min_count) {
  std::vector<std::string> texts;
  texts.reserve(examples.size());
  for (const auto& ex : examples) texts.push_back(ex.text);
  return build(texts, min_count);
}

int Vocab::id(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocab: id " + std::to_string(id) + " outside [0, " +
                            std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0x0a;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[value & 0xf];
    value >>= 4;
  }
  return s;
}

std::string Vocab::hash_hex() const { return hex64(hash()); }

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(std::move(tokens));
}

std::size_t TokenizedBatch::real_length(std::size_t b) const {
  std::size_t n = 0;
  for (std::size_t l = 0; l < length; ++l) n += attention_mask[b * length + l] != 0;
  return n;
}

TokenizedBatch encode_batch(std::span<const std::string> texts, const Vocab& vocab,
                            std::size_t max_length, bool pad_to_longest) {
  if (max_length < 2) throw std::invalid_argument("encode_batch: max_length must be >= 2");
  std::vector<std::vector<int>> rows;
  rows.reserve(texts.size());
  std::size_t longest = 2;
  for (const auto& text : texts) {
    std::vector<int> row{Vocab::kCls};
    for (const auto& tok : tokenize(text)) {
      if (row.size() + 1 >= max_length) break;
      row.push_back(vocab.id(tok));
    }
    row.push_back(Vocab::kSep);
    longest = std::max(longest, row.size());
    rows.push_back(std::move(row));
  }
  TokenizedBatch batch;
  batch.batch = rows.size();
  batch.length = pad_to_longest ? longest : max_length;
  batch.token_ids.assign(batch.batch * batch.length, Vocab::kPad);
  batch.attention_mask.assign(batch.batch * batch.length, 0);
  for (std::size_t b = 0; b < rows.size(); ++b) {
    for (std::size_t l = 0; l < rows[b].size(); ++l) {
      batch.token_ids[b * batch.length + l] = rows[b][l];
      batch.attention_mask[b * batch.length + l] = 1;
    }
  }
  return batch;
}

TokenizedBatch encode_batch(std::span<const LabeledExample> examples, const Vocab& vocab,
                            std::size_t max_length, bool pad_to_longest) {
  std::vector<std::string> texts;
  texts.reserve(examples.size());
  for (const auto& ex : examples) texts.push_back(ex.text);
  TokenizedBatch batch = encode_batch(texts, vocab, max_length, pad_to_longest);
  batch.labels.reserve(examples.size());
  for (const auto& ex : examples) batch.labels.push_back(label_index(ex.label));
  return batch;
}

ClassDistribution class_distribution(std::span<const LabeledExample> examples) {
  ClassDistribution dist;
  for (const auto& ex : examples) ++dist.counts[label_index(ex.label)];
  dist.total = examples.size();
  return dist;
}

}  // namespace csent
