#include "csent/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace csent::inline CSENT_ABI {

namespace {

constexpr const char* kMagic = "csent-checkpoint";

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + what);
}

void write_section(std::ostream& out, const char* name, const ConfigMap& map) {
  out << "section " << name << ' ' << map.values().size() << '\n' << map.canonical_text();
}

void write_floats(std::ostream& out, std::span<const real> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

class Reader {
 public:
  Reader(std::istream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  std::string line() {
    std::string s;
    if (!std::getline(in_, s)) fail(path_, "truncated file");
    return s;
  }

  std::vector<std::string> words() {
    std::istringstream ss(line());
    std::vector<std::string> out;
    for (std::string w; ss >> w;) out.push_back(w);
    return out;
  }

  std::size_t count(const std::string& s) {
    try {
      std::size_t used = 0;
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      fail(path_, "bad number '" + s + "'");
    }
  }

  ConfigMap section(const std::string& name) {
    const auto w = words();
    if (w.size() != 3 || w[0] != "section" || w[1] != name) {
      fail(path_, "expected section " + name);
    }
    const std::size_t n = count(w[2]);
    std::string text;
    for (std::size_t i = 0; i < n; ++i) text += line() + "\n";
    return ConfigMap::parse(text);
  }

  void floats(std::span<real> out) {
    std::string bytes(out.size() * 4, '\0');
    if (!in_.read(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
      fail(path_, "truncated tensor data");
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
      }
      out[i] = static_cast<real>(std::bit_cast<float>(bits));
    }
  }

 private:
  std::istream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

Classifier Checkpoint::classifier() const {
  if (!head_config) throw std::runtime_error("checkpoint holds no classification head");
  return {encoder_config, encoder, *head_config, head};
}

std::string checkpoint_fingerprint(const Checkpoint& ckpt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view bytes) {
    for (unsigned char c : bytes) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  mix(encoder_config_map(ckpt.encoder_config).canonical_text());
  if (ckpt.head_config) mix(head_config_map(*ckpt.head_config).canonical_text());
  mix(ckpt.train_config.canonical_text());
  mix(hex64(ckpt.vocab_hash));
  std::vector<NamedTensor> tensors = ckpt.encoder.named();
  if (ckpt.head_config) {
    for (auto& t : ckpt.head.named()) tensors.push_back(std::move(t));
  }
  for (const auto& [name, t] : tensors) {
    mix(name);
    const auto values = t.data();
    mix({reinterpret_cast<const char*>(values.data()), values.size() * sizeof(real)});
  }
  return hex64(h);
}

std::filesystem::path vocab_sidecar(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".vocab");
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  ckpt.encoder.check_shapes(ckpt.encoder_config);
  if (ckpt.head_config) ckpt.head.check_shapes(*ckpt.head_config);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << kMagic << '\n' << "version " << kCheckpointVersion << '\n'
      << "vocab_hash " << hex64(ckpt.vocab_hash) << '\n';
  write_section(out, "encoder", encoder_config_map(ckpt.encoder_config));
  write_section(out, "head", ckpt.head_config ? head_config_map(*ckpt.head_config) : ConfigMap{});
  write_section(out, "train", ckpt.train_config);
  auto tensors = ckpt.encoder.named();
  if (ckpt.head_config) {
    for (auto& t : ckpt.head.named()) tensors.push_back(std::move(t));
  }
  out << "tensors " << tensors.size() << '\n';
  for (const auto& [name, t] : tensors) {
    out << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    write_floats(out, t.data());
    out << '\n';
  }
  out << "end\n";
  out.flush();
  if (!out) fail(path, "write failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path,
                           std::optional<std::uint64_t> expected_vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  Reader r(in, path);
  if (r.line() != kMagic) fail(path, "not a checkpoint file");
  const auto version = r.words();
  if (version.size() != 2 || version[0] != "version") fail(path, "missing version line");
  if (version[1] != std::to_string(kCheckpointVersion)) {
    fail(path, "format version " + version[1] + " but this build reads version " +
                   std::to_string(kCheckpointVersion));
  }
  const auto hash = r.words();
  if (hash.size() != 2 || hash[0] != "vocab_hash" || hash[1].size() != 16) {
    fail(path, "missing vocab_hash line");
  }
  Checkpoint ckpt;
  ckpt.vocab_hash = std::stoull(hash[1], nullptr, 16);
  if (expected_vocab_hash && *expected_vocab_hash != ckpt.vocab_hash) {
    fail(path, "vocab hash mismatch: checkpoint " + hex64(ckpt.vocab_hash) + ", vocab " +
                   hex64(*expected_vocab_hash));
  }
  try {
    ckpt.encoder_config = encoder_config_from_map(r.section("encoder"));
    const ConfigMap head = r.section("head");
    if (!head.values().empty()) ckpt.head_config = head_config_from_map(head);
  } catch (const std::logic_error& e) {
    fail(path, e.what());
  }
  ckpt.train_config = r.section("train");
  ckpt.encoder = EncoderParams::init(ckpt.encoder_config, 0);
  auto expected = ckpt.encoder.named();
  if (ckpt.head_config) {
    ckpt.head = HeadParams::init(*ckpt.head_config, 0);
    for (auto& t : ckpt.head.named()) expected.push_back(std::move(t));
  }
  const auto count = r.words();
  if (count.size() != 2 || count[0] != "tensors") fail(path, "missing tensors line");
  if (r.count(count[1]) != expected.size()) {
    fail(path, "expected " + std::to_string(expected.size()) + " tensors, found " + count[1]);
  }
  for (auto& [name, t] : expected) {
    const auto w = r.words();
    if (w.size() < 3 || w[0] != "tensor" || w[1] != name) fail(path, "expected tensor " + name);
    const std::size_t rank = r.count(w[2]);
    Shape shape;
    for (std::size_t i = 0; i < rank && 3 + i < w.size(); ++i) shape.push_back(r.count(w[3 + i]));
    if (shape != t.shape() || w.size() != 3 + rank) {
      fail(path, name + " has shape " + shape_str(shape) + ", configuration implies " +
                     shape_str(t.shape()));
    }
    r.floats(t.data());
    if (!r.line().empty()) fail(path, "corrupt record after " + name);
  }
  if (r.line() != "end") fail(path, "missing end marker");
  return ckpt;
}

}  // namespace csent
