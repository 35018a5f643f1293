#ifndef RCLM_CORPUS_H_
#define RCLM_CORPUS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rclm {

using TokenId = std::uint32_t;

// Poster opens the conversation with a problem; Responder tries to help.
enum class Role : std::uint8_t { kPoster = 0, kResponder = 1 };
inline constexpr std::size_t kNumRoles = 2;

std::string_view role_name(Role role);
// Accepts "poster" / "responder"; nullopt otherwise.
std::optional<Role> parse_role(std::string_view name);

struct Turn {
  Role role = Role::kPoster;
  std::vector<std::string> tokens;
};

struct Conversation {
  std::string id;
  std::vector<Turn> turns;
};

// Turn ids are framed as [BOT, w_1, ..., w_n, EOT].
struct EncodedTurn {
  Role role = Role::kPoster;
  std::vector<TokenId> ids;

  // Number of words between the BOT/EOT frame.
  std::size_t word_count() const { return ids.size() < 2 ? 0 : ids.size() - 2; }
};

struct EncodedConversation {
  std::string id;
  std::vector<EncodedTurn> turns;
};

class Vocabulary;

// Emoticons kept intact by tokenize().
std::span<const std::string_view> emoticons();

// Lowercases, splits on whitespace, keeps word-internal apostrophes and
// maximal punctuation runs as single tokens, and preserves emoticons.
std::vector<std::string> tokenize(std::string_view text);

struct SkippedRecord {
  std::size_t line = 0;
  std::string reason;
};

struct IngestResult {
  std::vector<Conversation> conversations;
  std::vector<SkippedRecord> skipped;  // malformed records
  std::size_t filtered_out = 0;        // outside [min_turns, max_turns]
  std::size_t dropped_turns = 0;       // turns that tokenized to nothing
};

// Parses one conversation record; throws std::invalid_argument when malformed.
Conversation parse_conversation_record(std::string_view json_line);

// Reads the line-delimited JSON corpus format. Malformed records are skipped
// and reported (with line numbers) on stderr and in the result. Throws
// std::runtime_error if the file cannot be opened.
IngestResult ingest(const std::filesystem::path& path, std::size_t min_turns,
                    std::size_t max_turns);
IngestResult ingest(std::istream& in, std::size_t min_turns,
                    std::size_t max_turns);

EncodedConversation encode(const Conversation& conversation,
                           const Vocabulary& vocab);
std::vector<EncodedConversation> encode_all(
    std::span<const Conversation> conversations, const Vocabulary& vocab);
Conversation decode(const EncodedConversation& conversation,
                    const Vocabulary& vocab);

// Encoded corpus file: header "RCLM-CORPUS 1 <vocab_size>", then one JSON
// record per line: {"id": ..., "turns": [{"role": ..., "ids": [...]}, ...]}.
struct EncodedCorpus {
  std::size_t vocab_size = 0;
  std::vector<EncodedConversation> conversations;
};
void save_encoded_corpus(const EncodedCorpus& corpus,
                         const std::filesystem::path& path);
EncodedCorpus load_encoded_corpus(const std::filesystem::path& path);

struct RatioEntry {
  std::string word;
  double ratio = 0;  // p(w|Poster) / p(w|Responder) for both lists
  std::size_t count = 0;
};

struct RoleWordLists {
  std::vector<RatioEntry> poster;     // highest p(w|P)/p(w|R) first
  std::vector<RatioEntry> responder;  // highest p(w|R)/p(w|P) first
  std::vector<RatioEntry> all;        // every word passing min_count
};

// Role likelihood-ratio analysis over add-one smoothed per-role unigram
// distributions. Only words with total count > min_count are ranked; the
// poster list holds words with ratio > 1, the responder list words with
// ratio < 1. Throws std::invalid_argument on an empty corpus or when no word
// passes min_count.
RoleWordLists role_likelihood_ratio(std::span<const Conversation> conversations,
                                    std::size_t min_count, std::size_t top_n);

}  // namespace rclm

#endif  // RCLM_CORPUS_H_
