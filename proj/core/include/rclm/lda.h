#ifndef RCLM_LDA_H_
#define RCLM_LDA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rclm/corpus.h"
#include "rclm/numerics.h"

namespace rclm {

// Length-M point on the probability simplex.
class TopicVector {
 public:
  TopicVector() = default;
  // Throws std::invalid_argument unless values are non-negative and sum to 1
  // within 1e-6.
  explicit TopicVector(std::vector<double> values);
  static TopicVector uniform(std::size_t topics);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const TopicVector&, const TopicVector&) = default;

 private:
  std::vector<double> values_;
};

struct LdaOptions {
  std::size_t topics = 50;
  int iterations = 200;
  double alpha = -1;  // <= 0 selects 50 / topics
  double beta = 0.01;
  std::uint64_t seed = 1;
};

inline constexpr int kDefaultInferenceSweeps = 50;

// Trained topic-word distributions phi (topics x vocab, rows on the simplex).
class TopicModel {
 public:
  static constexpr std::string_view kFileHeader = "RCLM-LDA 1";

  TopicModel() = default;
  TopicModel(Tensor<double> phi, double alpha, double beta, std::uint64_t seed);

  std::size_t topics() const { return phi_.rows(); }
  std::size_t vocab_size() const { return phi_.cols(); }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  std::uint64_t seed() const { return seed_; }
  const Tensor<double>& phi() const { return phi_; }
  double phi(std::size_t topic, TokenId word) const { return phi_.at(topic, word); }

  // Same model with topic k relabelled as permutation[k].
  TopicModel permuted(std::span<const std::size_t> permutation) const;

  void write(std::ostream& out) const;
  static TopicModel read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static TopicModel load(const std::filesystem::path& path);

 private:
  Tensor<double> phi_;
  double alpha_ = 0;
  double beta_ = 0;
  std::uint64_t seed_ = 0;
};

// Token ids of a turn that take part in topic modelling: reserved ids
// (unknown, BOT, EOT) are excluded.
std::vector<TokenId> topic_bag(const EncodedTurn& turn);
std::vector<TokenId> topic_bag(const EncodedConversation& conversation);

// Collapsed Gibbs sampling over per-document token bags.
// Throws std::invalid_argument if topics == 0, iterations < 1, the corpus has
// no tokens, or topics exceeds the number of distinct tokens.
TopicModel train_lda(std::span<const std::vector<TokenId>> documents,
                     std::size_t vocab_size, const LdaOptions& options);
// Each conversation is one document.
TopicModel train_lda(std::span<const EncodedConversation> conversations,
                     std::size_t vocab_size, const LdaOptions& options);

// Gibbs sampling with phi fixed; returns the smoothed document-topic
// proportions averaged over the final 20% of sweeps. Empty bag -> uniform.
TopicVector infer_topic(const TopicModel& model, std::span<const TokenId> bag,
                        int sweeps = kDefaultInferenceSweeps,
                        std::uint64_t seed = 1);

// Entry t is inferred from turns 1..t-1 only; entry 1 is uniform.
std::vector<TopicVector> context_topic_vectors(
    const EncodedConversation& conversation, const TopicModel& model,
    int sweeps = kDefaultInferenceSweeps, std::uint64_t seed = 1);

// Topic vector summarising a whole turn prefix (used for ranking and
// generation contexts); matches entry t of context_topic_vectors when
// `history` holds turns 1..t-1.
TopicVector history_topic_vector(std::span<const EncodedTurn> history,
                                 const TopicModel& model,
                                 int sweeps = kDefaultInferenceSweeps,
                                 std::uint64_t seed = 1);

// Cached per-turn topic vectors keyed by conversation id.
// File: header "RCLM-TOPICS 1 <M>", then lines "<id>\t<turn>\t<v_1> ... <v_M>".
class TopicCache {
 public:
  static constexpr std::string_view kFileHeader = "RCLM-TOPICS 1";

  explicit TopicCache(std::size_t topics = 0) : topics_(topics) {}

  static TopicCache build(std::span<const EncodedConversation> conversations,
                          const TopicModel& model,
                          int sweeps = kDefaultInferenceSweeps,
                          std::uint64_t seed = 1);

  std::size_t topics() const { return topics_; }
  std::size_t size() const { return entries_.size(); }
  void put(const std::string& conversation_id, std::vector<TopicVector> vectors);
  // Throws std::out_of_range for an unknown id.
  const std::vector<TopicVector>& at(const std::string& conversation_id) const;
  bool contains(const std::string& conversation_id) const {
    return entries_.contains(conversation_id);
  }

  void save(const std::filesystem::path& path) const;
  static TopicCache load(const std::filesystem::path& path);

 private:
  std::size_t topics_;
  std::map<std::string, std::vector<TopicVector>> entries_;
};

}  // namespace rclm

#endif  // RCLM_LDA_H_
