#include "synthetic.h"

#include <atomic>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace rclm::testing {

namespace {

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::vector<Conversation> role_corpus(const RoleCorpusOptions& o) {
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Conversation> out;
  out.reserve(o.conversations);
  for (std::size_t c = 0; c < o.conversations; ++c) {
    Conversation conv;
    conv.id = "syn" + std::to_string(c);
    const std::size_t topic = o.topics > 0 ? uniform_index(rng, o.topics) : 0;
    const std::size_t turns = o.min_turns + uniform_index(rng, o.max_turns - o.min_turns + 1);
    for (std::size_t t = 0; t < turns; ++t) {
      Turn turn;
      turn.role = (t == 0 || unit(rng) < 0.5) ? Role::kPoster : Role::kResponder;
      const std::size_t words = o.min_words + uniform_index(rng, o.max_words - o.min_words + 1);
      for (std::size_t i = 0; i < words; ++i) {
        const double u = unit(rng);
        if (u < o.topic_share && o.topics > 0) {
          turn.tokens.push_back("t" + std::to_string(topic) + "w" +
                                std::to_string(uniform_index(rng, o.topic_words)));
        } else if (u < o.topic_share + (1 - o.topic_share) * o.role_share) {
          const char* prefix = turn.role == Role::kPoster ? "p" : "r";
          turn.tokens.push_back(prefix + std::to_string(uniform_index(rng, o.role_words)));
        } else {
          turn.tokens.push_back("s" + std::to_string(uniform_index(rng, o.shared_words)));
        }
      }
      conv.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(conv));
  }
  return out;
}

std::vector<Conversation> marker_corpus(std::size_t conversations, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Conversation> out;
  for (std::size_t c = 0; c < conversations; ++c) {
    Conversation conv;
    conv.id = "mark" + std::to_string(c);
    const std::size_t turns = 6 + uniform_index(rng, 3);
    for (std::size_t t = 0; t < turns; ++t) {
      Turn turn;
      turn.role = (t == 0 || unit(rng) < 0.5) ? Role::kPoster : Role::kResponder;
      turn.tokens.push_back(turn.role == Role::kPoster ? "q!" : "a!");
      const std::size_t words = 1 + uniform_index(rng, 3);
      for (std::size_t i = 0; i < words; ++i) {
        turn.tokens.push_back("w" + std::to_string(uniform_index(rng, 15)));
      }
      conv.turns.push_back(std::move(turn));
    }
    out.push_back(std::move(conv));
  }
  return out;
}

PlantedDocuments planted_documents(std::size_t topics, std::size_t words_per_topic,
                                   std::size_t documents, std::size_t doc_length,
                                   double purity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PlantedDocuments out;
  out.offset = 3;
  out.words_per_topic = words_per_topic;
  out.vocab_size = out.offset + topics * words_per_topic;
  for (std::size_t d = 0; d < documents; ++d) {
    const std::size_t dominant = uniform_index(rng, topics);
    std::vector<TokenId> doc;
    for (std::size_t i = 0; i < doc_length; ++i) {
      std::size_t k = dominant;
      if (topics > 1 && unit(rng) >= purity) {
        k = (dominant + 1 + uniform_index(rng, topics - 1)) % topics;
      }
      doc.push_back(static_cast<TokenId>(out.offset + k * words_per_topic +
                                         uniform_index(rng, words_per_topic)));
    }
    out.documents.push_back(std::move(doc));
    out.dominant.push_back(dominant);
  }
  return out;
}

EncodedConversation random_conversation(std::mt19937_64& rng, std::size_t vocab,
                                        std::size_t turns, std::size_t max_words) {
  EncodedConversation conv;
  conv.id = "rand";
  for (std::size_t t = 0; t < turns; ++t) {
    EncodedTurn turn;
    turn.role = uniform_index(rng, 2) == 0 ? Role::kPoster : Role::kResponder;
    turn.ids.push_back(1);
    const std::size_t words = 1 + uniform_index(rng, max_words);
    for (std::size_t i = 0; i < words; ++i) {
      turn.ids.push_back(static_cast<TokenId>(3 + uniform_index(rng, vocab - 3)));
    }
    turn.ids.push_back(2);
    conv.turns.push_back(std::move(turn));
  }
  return conv;
}

std::vector<TopicVector> random_topics(std::mt19937_64& rng, std::size_t turns,
                                       std::size_t topics) {
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::vector<TopicVector> out;
  for (std::size_t t = 0; t < turns; ++t) {
    std::vector<double> v(topics);
    double total = 0;
    for (double& x : v) total += x = unit(rng);
    for (double& x : v) x /= total;
    out.emplace_back(std::move(v));
  }
  return out;
}

void write_corpus(const std::vector<Conversation>& conversations,
                  const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& conv : conversations) {
    nlohmann::json record;
    record["id"] = conv.id;
    record["turns"] = nlohmann::json::array();
    for (const auto& turn : conv.turns) {
      std::string text;
      for (const auto& tok : turn.tokens) {
        if (!text.empty()) text += ' ';
        text += tok;
      }
      record["turns"].push_back({{"role", std::string(role_name(turn.role))}, {"text", text}});
    }
    out << record.dump() << "\n";
  }
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = std::filesystem::temp_directory_path() /
          ("rclm-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace rclm::testing
