#include "rclm/checkpoint.h"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace rclm {

namespace {

constexpr std::array<char, 4> kMagic = {'R', 'C', 'L', 'M'};
// Guards against allocating absurd sizes from a corrupted header.
constexpr std::uint32_t kMaxMetadataBytes = 1u << 20;
constexpr std::uint32_t kMaxNameBytes = 256;
constexpr std::uint32_t kMaxRank = 8;

using Kind = CheckpointError::Kind;

void put_u32(std::ostream& out, std::uint32_t v) {
  const char bytes[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                         static_cast<char>((v >> 16) & 0xff),
                         static_cast<char>((v >> 24) & 0xff)};
  out.write(bytes, 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) return false;
  v = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
      (static_cast<std::uint32_t>(bytes[2]) << 16) |
      (static_cast<std::uint32_t>(bytes[3]) << 24);
  return true;
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(in, v)) {
    throw CheckpointError(Kind::kTruncated, std::string("checkpoint truncated while reading ") + what);
  }
  return v;
}

std::string format_real(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(dims[i]);
  }
  return s + "]";
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  checkpoint.params.validate();
  // Non-topic variants carry M = 0 in their parameters.
  ModelDims expected = checkpoint.config.dims();
  if (!uses_topics(checkpoint.config.variant)) expected.topics = 0;
  if (expected != checkpoint.params.dims) {
    throw CheckpointError(Kind::kInconsistent, "config dims do not match parameters");
  }
  if (checkpoint.config.variant != checkpoint.params.variant) {
    throw CheckpointError(Kind::kInconsistent, "config variant does not match parameters");
  }

  std::string metadata;
  for (const auto& [key, value] : checkpoint.config.to_key_values()) {
    metadata += key + "=" + value + "\n";
  }
  metadata += "epoch=" + std::to_string(checkpoint.epoch) + "\n";
  metadata += "dev_ppl=" + format_real(checkpoint.dev_perplexity) + "\n";
  metadata += "vocab_ref=" + checkpoint.vocab_ref + "\n";

  out.write(kMagic.data(), kMagic.size());
  put_u32(out, checkpoint.version);
  put_u32(out, static_cast<std::uint32_t>(metadata.size()));
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));

  checkpoint.params.for_each([&](std::string_view name, const Tensor<float>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.dims()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  });
  if (!out) throw CheckpointError(Kind::kIo, "checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
    throw CheckpointError(Kind::kBadMagic, "bad magic: not an RCLM checkpoint");
  }
  Checkpoint cp;
  cp.version = read_u32(in, "version");
  if (cp.version != Checkpoint::kFormatVersion) {
    throw CheckpointError(Kind::kVersionMismatch,
                          "checkpoint version " + std::to_string(cp.version) +
                              " is not supported (expected " +
                              std::to_string(Checkpoint::kFormatVersion) + ")");
  }
  const std::uint32_t meta_len = read_u32(in, "metadata length");
  if (meta_len > kMaxMetadataBytes) {
    throw CheckpointError(Kind::kInconsistent, "metadata block too large");
  }
  std::string metadata(meta_len, '\0');
  if (!in.read(metadata.data(), meta_len)) {
    throw CheckpointError(Kind::kTruncated, "checkpoint truncated in metadata");
  }

  std::map<std::string, std::string> kv;
  std::istringstream lines(metadata);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw CheckpointError(Kind::kInconsistent, "malformed metadata line: " + line);
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  try {
    cp.config = TrainConfig::from_key_values(kv);
    cp.epoch = std::stoi(kv.at("epoch"));
    cp.dev_perplexity = std::stod(kv.at("dev_ppl"));
    cp.vocab_ref = kv.count("vocab_ref") ? kv.at("vocab_ref") : std::string();
    cp.params = ModelParams<float>::zeros(cp.config.variant, cp.config.dims());
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(Kind::kInconsistent,
                          std::string("invalid checkpoint metadata: ") + e.what());
  }

  std::map<std::string, Tensor<float>*, std::less<>> expected;
  cp.params.for_each(
      [&](std::string_view name, Tensor<float>& t) { expected[std::string(name)] = &t; });
  std::set<std::string> seen;
  while (true) {
    std::uint32_t name_len = 0;
    if (!get_u32(in, name_len)) {
      if (in.gcount() == 0) break;
      throw CheckpointError(Kind::kTruncated, "checkpoint truncated in tensor header");
    }
    if (name_len == 0 || name_len > kMaxNameBytes) {
      throw CheckpointError(Kind::kInconsistent, "invalid tensor name length");
    }
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) {
      throw CheckpointError(Kind::kTruncated, "checkpoint truncated in tensor name");
    }
    auto it = expected.find(name);
    if (it == expected.end()) {
      throw CheckpointError(Kind::kInconsistent,
                            "unexpected tensor \"" + name + "\" for variant " +
                                std::string(variant_name(cp.config.variant)));
    }
    if (!seen.insert(name).second) {
      throw CheckpointError(Kind::kInconsistent, "duplicate tensor \"" + name + "\"");
    }
    const std::uint32_t rank = read_u32(in, "tensor rank");
    if (rank == 0 || rank > kMaxRank) {
      throw CheckpointError(Kind::kInconsistent, "invalid rank for tensor \"" + name + "\"");
    }
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) d = read_u32(in, "tensor dims");
    Tensor<float>& target = *it->second;
    if (dims != target.dims()) {
      throw CheckpointError(Kind::kInconsistent,
                            "tensor \"" + name + "\" has dims " + dims_string(dims) +
                                " but the config implies " +
                                dims_string(target.dims()));
    }
    for (float& v : target.values()) {
      v = std::bit_cast<float>(read_u32(in, "tensor values"));
    }
  }
  if (seen.size() != expected.size()) {
    throw CheckpointError(Kind::kInconsistent, "checkpoint is missing tensors");
  }
  return cp;
}

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw CheckpointError(Kind::kIo, "cannot write checkpoint: " + path.string());
  }
  write_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CheckpointError(Kind::kIo, "cannot open checkpoint: " + path.string());
  }
  return read_checkpoint(in);
}

}  // namespace rclm
