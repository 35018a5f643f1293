#include "rclm/corpus.h"

#include <algorithm>
#include <array>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"
#include "rclm/vocabulary.h"

namespace rclm {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, 6> kEmoticons = {":)", ":(", ";)",
                                                        ":D", ":P", "^^"};
constexpr std::string_view kCorpusHeader = "RCLM-CORPUS 1";

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

// Non-ASCII bytes belong to words so UTF-8 sequences are never split.
bool is_word(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
         (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
}

char lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

// Length of an emoticon starting at `pos`, or 0.
std::size_t match_emoticon(std::string_view text, std::size_t pos) {
  for (std::string_view e : kEmoticons) {
    if (text.substr(pos, e.size()) != e) continue;
    const std::size_t end = pos + e.size();
    if (end < text.size() && is_word(static_cast<unsigned char>(text[end])) &&
        is_word(static_cast<unsigned char>(e.back()))) {
      continue;  // ":Document" is not an emoticon
    }
    return e.size();
  }
  return 0;
}

Turn parse_turn(const json& j, std::size_t index) {
  const std::string where = "turn " + std::to_string(index);
  if (!j.is_object()) throw std::invalid_argument(where + " is not an object");
  auto role_it = j.find("role");
  if (role_it == j.end()) {
    throw std::invalid_argument(where + " missing \"role\" field");
  }
  if (!role_it->is_string()) {
    throw std::invalid_argument(where + " \"role\" is not a string");
  }
  auto role = parse_role(role_it->get<std::string>());
  if (!role) {
    throw std::invalid_argument(where + " has unknown role \"" +
                                role_it->get<std::string>() + "\"");
  }
  auto text_it = j.find("text");
  if (text_it == j.end() || !text_it->is_string()) {
    throw std::invalid_argument(where + " missing \"text\" string");
  }
  return Turn{*role, tokenize(text_it->get<std::string>())};
}

}  // namespace

std::string_view role_name(Role role) {
  return role == Role::kPoster ? "poster" : "responder";
}

std::optional<Role> parse_role(std::string_view name) {
  if (name == "poster") return Role::kPoster;
  if (name == "responder") return Role::kResponder;
  return std::nullopt;
}

std::span<const std::string_view> emoticons() { return kEmoticons; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto byte = [&](std::size_t k) { return static_cast<unsigned char>(text[k]); };
  while (i < n) {
    if (is_space(byte(i))) {
      ++i;
      continue;
    }
    if (is_word(byte(i))) {
      std::string word;
      while (i < n) {
        if (is_word(byte(i))) {
          word.push_back(lower(text[i]));
          ++i;
        } else if (text[i] == '\'' && i + 1 < n && is_word(byte(i + 1))) {
          word.push_back('\'');
          ++i;
        } else {
          break;
        }
      }
      tokens.push_back(std::move(word));
      continue;
    }
    if (std::size_t len = match_emoticon(text, i)) {
      tokens.emplace_back(text.substr(i, len));
      i += len;
      continue;
    }
    const std::size_t start = i;
    while (i < n && !is_space(byte(i)) && !is_word(byte(i))) ++i;
    tokens.emplace_back(text.substr(start, i - start));
  }
  return tokens;
}

Conversation parse_conversation_record(std::string_view json_line) {
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("record is not an object");
  Conversation conv;
  auto id_it = j.find("id");
  if (id_it == j.end()) throw std::invalid_argument("missing \"id\" field");
  if (id_it->is_string()) {
    conv.id = id_it->get<std::string>();
  } else if (id_it->is_number_integer()) {
    conv.id = std::to_string(id_it->get<long long>());
  } else {
    throw std::invalid_argument("\"id\" is not a string");
  }
  auto turns_it = j.find("turns");
  if (turns_it == j.end() || !turns_it->is_array()) {
    throw std::invalid_argument("missing \"turns\" array");
  }
  conv.turns.reserve(turns_it->size());
  for (std::size_t t = 0; t < turns_it->size(); ++t) {
    conv.turns.push_back(parse_turn((*turns_it)[t], t + 1));
  }
  return conv;
}

IngestResult ingest(std::istream& in, std::size_t min_turns,
                    std::size_t max_turns) {
  if (min_turns > max_turns) {
    throw std::invalid_argument("min_turns exceeds max_turns");
  }
  IngestResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Conversation conv;
    try {
      conv = parse_conversation_record(line);
    } catch (const std::invalid_argument& e) {
      std::cerr << "warning: line " << line_no << ": " << e.what()
                << "; record skipped\n";
      result.skipped.push_back({line_no, e.what()});
      continue;
    }
    const std::size_t before = conv.turns.size();
    std::erase_if(conv.turns, [](const Turn& t) { return t.tokens.empty(); });
    if (conv.turns.size() != before) {
      std::cerr << "warning: line " << line_no << ": dropped "
                << before - conv.turns.size() << " empty turn(s)\n";
      result.dropped_turns += before - conv.turns.size();
    }
    if (conv.turns.size() < min_turns || conv.turns.size() > max_turns) {
      ++result.filtered_out;
      continue;
    }
    result.conversations.push_back(std::move(conv));
  }
  if (!result.skipped.empty()) {
    std::cerr << "warning: skipped " << result.skipped.size()
              << " malformed record(s)\n";
  }
  return result;
}

IngestResult ingest(const std::filesystem::path& path, std::size_t min_turns,
                    std::size_t max_turns) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
  return ingest(in, min_turns, max_turns);
}

EncodedConversation encode(const Conversation& conversation,
                           const Vocabulary& vocab) {
  EncodedConversation out;
  out.id = conversation.id;
  out.turns.reserve(conversation.turns.size());
  for (const Turn& turn : conversation.turns) {
    EncodedTurn et;
    et.role = turn.role;
    et.ids.reserve(turn.tokens.size() + 2);
    et.ids.push_back(Vocabulary::kBeginTurn);
    for (const std::string& tok : turn.tokens) et.ids.push_back(vocab.id(tok));
    et.ids.push_back(Vocabulary::kEndTurn);
    out.turns.push_back(std::move(et));
  }
  return out;
}

std::vector<EncodedConversation> encode_all(
    std::span<const Conversation> conversations, const Vocabulary& vocab) {
  std::vector<EncodedConversation> out;
  out.reserve(conversations.size());
  for (const Conversation& c : conversations) out.push_back(encode(c, vocab));
  return out;
}

Conversation decode(const EncodedConversation& conversation,
                    const Vocabulary& vocab) {
  Conversation out;
  out.id = conversation.id;
  for (const EncodedTurn& et : conversation.turns) {
    Turn turn;
    turn.role = et.role;
    for (TokenId id : et.ids) {
      if (id == Vocabulary::kBeginTurn || id == Vocabulary::kEndTurn) continue;
      turn.tokens.push_back(vocab.token(id));
    }
    out.turns.push_back(std::move(turn));
  }
  return out;
}

void save_encoded_corpus(const EncodedCorpus& corpus,
                         const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path.string());
  out << kCorpusHeader << ' ' << corpus.vocab_size << '\n';
  for (const EncodedConversation& conv : corpus.conversations) {
    json j;
    j["id"] = conv.id;
    json turns = json::array();
    for (const EncodedTurn& t : conv.turns) {
      turns.push_back({{"role", role_name(t.role)}, {"ids", t.ids}});
    }
    j["turns"] = std::move(turns);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EncodedCorpus load_encoded_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
  std::string line;
  EncodedCorpus corpus;
  if (!std::getline(in, line) || !line.starts_with(kCorpusHeader)) {
    throw std::runtime_error(path.string() + ": missing \"" +
                             std::string(kCorpusHeader) + "\" header");
  }
  corpus.vocab_size = std::stoul(line.substr(kCorpusHeader.size()));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      EncodedConversation conv;
      conv.id = j.at("id").get<std::string>();
      for (const json& t : j.at("turns")) {
        auto role = parse_role(t.at("role").get<std::string>());
        if (!role) throw std::invalid_argument("unknown role");
        EncodedTurn et{*role, t.at("ids").get<std::vector<TokenId>>()};
        for (TokenId id : et.ids) {
          if (id >= corpus.vocab_size) throw std::invalid_argument("id out of range");
        }
        if (et.ids.size() < 2 || et.ids.front() != Vocabulary::kBeginTurn ||
            et.ids.back() != Vocabulary::kEndTurn) {
          throw std::invalid_argument("turn is not framed by BOT/EOT");
        }
        conv.turns.push_back(std::move(et));
      }
      corpus.conversations.push_back(std::move(conv));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": " + e.what());
    }
  }
  return corpus;
}

RoleWordLists role_likelihood_ratio(std::span<const Conversation> conversations,
                                    std::size_t min_count, std::size_t top_n) {
  if (conversations.empty()) throw std::invalid_argument("empty corpus");
  // Ordered map keeps iteration (and thus tie order) deterministic.
  std::map<std::string, std::array<std::size_t, kNumRoles>> counts;
  std::array<std::size_t, kNumRoles> totals{};
  for (const Conversation& conv : conversations) {
    for (const Turn& turn : conv.turns) {
      const auto r = static_cast<std::size_t>(turn.role);
      for (const std::string& tok : turn.tokens) {
        ++counts[tok][r];
        ++totals[r];
      }
    }
  }
  if (counts.empty()) throw std::invalid_argument("empty corpus");
  const double vocab = static_cast<double>(counts.size());
  const double poster_denom = static_cast<double>(totals[0]) + vocab;
  const double responder_denom = static_cast<double>(totals[1]) + vocab;

  RoleWordLists lists;
  for (const auto& [word, c] : counts) {
    const std::size_t total = c[0] + c[1];
    if (total <= min_count) continue;
    const double p_poster = (static_cast<double>(c[0]) + 1.0) / poster_denom;
    const double p_responder =
        (static_cast<double>(c[1]) + 1.0) / responder_denom;
    lists.all.push_back({word, p_poster / p_responder, total});
  }
  if (lists.all.empty()) {
    throw std::invalid_argument("no word has count above " +
                                std::to_string(min_count));
  }
  for (const RatioEntry& e : lists.all) {
    if (e.ratio > 1.0) lists.poster.push_back(e);
    if (e.ratio < 1.0) lists.responder.push_back(e);
  }
  std::stable_sort(lists.poster.begin(), lists.poster.end(),
                   [](const RatioEntry& a, const RatioEntry& b) {
                     return a.ratio > b.ratio;
                   });
  std::stable_sort(lists.responder.begin(), lists.responder.end(),
                   [](const RatioEntry& a, const RatioEntry& b) {
                     return a.ratio < b.ratio;
                   });
  if (lists.poster.size() > top_n) lists.poster.resize(top_n);
  if (lists.responder.size() > top_n) lists.responder.resize(top_n);
  return lists;
}

}  // namespace rclm
