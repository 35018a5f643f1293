#ifndef RCLM_EVALUATION_H_
#define RCLM_EVALUATION_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rclm/corpus.h"
#include "rclm/lda.h"
#include "rclm/model.h"
#include "rclm/training.h"

namespace rclm {

// exp(total cross-entropy / predicted tokens) over the set. Throws
// std::invalid_argument for an empty set.
template <typename Real>
double perplexity(const ModelParams<Real>& params, const Dataset& data);
double perplexity(const Checkpoint& checkpoint, const Dataset& data);

inline constexpr std::size_t kRankingCandidates = 10;
inline constexpr std::size_t kRankingNegatives = kRankingCandidates - 1;
inline constexpr std::size_t kLengthTolerance = 2;

struct TurnRef {
  std::size_t conversation = 0;  // index into the evaluation set
  std::size_t turn = 0;          // 0-based

  friend bool operator==(const TurnRef&, const TurnRef&) = default;
};

// Context is turns [0, turn) of `conversation`; the truth is turn `turn`.
// Every candidate is scored under the truth's role.
struct RankingInstance {
  std::size_t conversation = 0;
  std::size_t turn = 0;  // 0-based, >= 1
  std::array<TurnRef, kRankingCandidates> candidates{};
  std::size_t truth_index = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const RankingInstance&, const RankingInstance&) = default;
};

struct RankingSet {
  std::vector<RankingInstance> instances;
  std::size_t skipped = 0;  // too few length-matched negatives
  std::uint64_t seed = 0;
};

// One instance per turn t >= 2 of every conversation. Negatives are drawn
// uniformly without replacement from turns of other conversations whose
// word count is within +/-2 of the truth. Throws std::invalid_argument when
// fewer than two conversations are given.
RankingSet build_ranking_set(std::span<const EncodedConversation> conversations,
                             std::uint64_t seed);

// Line-delimited JSON cache:
// {"conversation": id, "t": t, "candidates": [[id, turn], ...],
//  "truth_index": i, "seed": s}; t and turn are 1-based.
void save_ranking_set(const RankingSet& set,
                      std::span<const EncodedConversation> conversations,
                      const std::filesystem::path& path);
RankingSet load_ranking_set(std::span<const EncodedConversation> conversations,
                            const std::filesystem::path& path);

// Log-probability of the candidate's predicted tokens (EOT included) after
// running the model over `context`. Throws std::invalid_argument for an
// empty candidate.
template <typename Real>
double score_candidate(const ModelParams<Real>& params,
                       std::span<const EncodedTurn> context,
                       const EncodedTurn& candidate, Role role,
                       const TopicVector* context_topic);

struct ScoredInstance {
  std::vector<double> scores;
  std::size_t truth_index = 0;
};

// Scores candidate `index` of an instance.
using CandidateScorer =
    std::function<double(const RankingInstance&, std::size_t index)>;

std::vector<ScoredInstance> score_instances(
    std::span<const RankingInstance> instances, const CandidateScorer& scorer);

// Model scores for every instance; the context topic vector is inferred once
// per instance for topic variants.
template <typename Real>
std::vector<ScoredInstance> score_ranking_set(
    const ModelParams<Real>& params,
    std::span<const EncodedConversation> conversations,
    std::span<const RankingInstance> instances, const TopicModel* topic_model,
    int sweeps = kDefaultInferenceSweeps, std::uint64_t lda_seed = 1);

// Fraction of instances whose truth ranks in the top k. Ties are broken by
// candidate index. Throws std::invalid_argument for k outside [1, 10] or an
// empty list.
double recall_at_k(std::span<const ScoredInstance> scored, std::size_t k);

struct RecallRow {
  std::string model;
  std::size_t k = 0;
  double recall = 0;
  std::size_t instances = 0;
  std::size_t skipped = 0;
};

// Tab-separated: model, K, recall, n_instances, n_skipped.
void write_recall_table(std::ostream& out, std::span<const RecallRow> rows);

}  // namespace rclm

#endif  // RCLM_EVALUATION_H_
