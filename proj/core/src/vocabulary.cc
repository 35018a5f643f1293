#include "rclm/vocabulary.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace rclm {

Vocabulary::Vocabulary() {
  add(std::string(kUnknownToken));
  add(std::string(kBeginTurnToken));
  add(std::string(kEndTurnToken));
}

void Vocabulary::add(std::string token) {
  const auto id = static_cast<TokenId>(tokens_.size());
  auto [it, inserted] = ids_.emplace(token, id);
  if (!inserted) throw std::invalid_argument("duplicate token: " + token);
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(std::span<const Conversation> conversations,
                             std::size_t max_size) {
  if (max_size == 0) throw std::invalid_argument("max_size must be >= 1");
  std::unordered_map<std::string, std::size_t> counts;
  for (const Conversation& conv : conversations) {
    for (const Turn& turn : conv.turns) {
      for (const std::string& tok : turn.tokens) ++counts[tok];
    }
  }
  if (counts.empty()) throw std::invalid_argument("cannot build vocabulary from an empty corpus");

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  const std::size_t keep = std::min(max_size, ranked.size());
  auto by_count = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + keep, ranked.end(),
                    by_count);
  Vocabulary vocab;
  for (std::size_t i = 0; i < keep; ++i) {
    // Reserved spellings cannot come out of tokenize(); skip if fed directly.
    if (vocab.contains(ranked[i].first)) continue;
    vocab.add(std::move(ranked[i].first));
  }
  return vocab;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary vocab;
  for (std::string& t : tokens) vocab.add(std::move(t));
  return vocab;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.contains(token);
}

TokenId Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnknown : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

void Vocabulary::write(std::ostream& out) const {
  out << kFileHeader << '\n';
  for (const std::string& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::read(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kFileHeader) {
    throw std::runtime_error("vocabulary file lacks \"" +
                             std::string(kFileHeader) + "\" header");
  }
  std::vector<std::string> tokens;
  while (std::getline(in, line)) tokens.push_back(line);
  if (tokens.size() < kReservedCount || tokens[kUnknown] != kUnknownToken ||
      tokens[kBeginTurn] != kBeginTurnToken || tokens[kEndTurn] != kEndTurnToken) {
    throw std::runtime_error("vocabulary file does not start with reserved tokens");
  }
  tokens.erase(tokens.begin(), tokens.begin() + kReservedCount);
  return from_tokens(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary: " + path.string());
  write(out);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open vocabulary: " + path.string());
  return read(in);
}

}  // namespace rclm
