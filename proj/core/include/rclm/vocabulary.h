#ifndef RCLM_VOCABULARY_H_
#define RCLM_VOCABULARY_H_

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rclm/corpus.h"

namespace rclm {

// Bidirectional token <-> id map. Ids 0..2 are reserved for the unknown
// token and the turn delimiters; ordinary tokens follow by descending count.
class Vocabulary {
 public:
  static constexpr TokenId kUnknown = 0;
  static constexpr TokenId kBeginTurn = 1;
  static constexpr TokenId kEndTurn = 2;
  static constexpr std::size_t kReservedCount = 3;
  static constexpr std::string_view kUnknownToken = "<unk>";
  static constexpr std::string_view kBeginTurnToken = "<bot>";
  static constexpr std::string_view kEndTurnToken = "<eot>";
  static constexpr std::string_view kFileHeader = "RCLM-VOCAB 1";

  // Vocabulary holding only the reserved tokens.
  Vocabulary();

  // Keeps the max_size most frequent tokens; ties broken lexicographically.
  // Throws std::invalid_argument for max_size == 0 or an empty corpus.
  static Vocabulary build(std::span<const Conversation> conversations,
                          std::size_t max_size);
  // Builds from ordinary tokens given in id order (after the reserved ids).
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const;
  // Unknown id for out-of-vocabulary tokens.
  TokenId id(const std::string& token) const;
  const std::string& token(TokenId id) const;
  std::span<const std::string> tokens() const { return tokens_; }

  static bool is_reserved(TokenId id) { return id < kReservedCount; }

  void write(std::ostream& out) const;
  static Vocabulary read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  void add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace rclm

#endif  // RCLM_VOCABULARY_H_
