#ifndef RCLM_GENERATION_H_
#define RCLM_GENERATION_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rclm/corpus.h"
#include "rclm/lda.h"
#include "rclm/model.h"
#include "rclm/vocabulary.h"

namespace rclm {

enum class DecodeStrategy { kGreedy, kSample };

std::optional<DecodeStrategy> parse_strategy(std::string_view name);

struct GenerateOptions {
  DecodeStrategy strategy = DecodeStrategy::kGreedy;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  std::size_t max_len = 40;
  // Topic inference over the context, topic variants only.
  int lda_sweeps = kDefaultInferenceSweeps;
  std::uint64_t lda_seed = 1;
};

template <typename Real>
struct Generation {
  std::vector<TokenId> tokens;  // never contains BOT or EOT
  bool terminated = false;      // EOT was produced before max_len
  // State after the generated turn has been fed back, closed by EOT.
  LstmState<Real> state;
};

// Generates one turn for `role` after the context. Role variants require a
// role; topic variants require a topic model. BOT is never emitted.
template <typename Real>
Generation<Real> generate(const ModelParams<Real>& params,
                          std::span<const EncodedTurn> context,
                          std::optional<Role> role,
                          const GenerateOptions& options,
                          const TopicModel* topic_model = nullptr);

// Continues from an explicit state with an explicit topic vector.
template <typename Real>
Generation<Real> generate_from_state(const ModelParams<Real>& params,
                                     const LstmState<Real>& state,
                                     std::optional<Role> role,
                                     const TopicVector* topic,
                                     const GenerateOptions& options);

// Space-joined tokens; punctuation-run tokens attach to the previous token.
std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);

}  // namespace rclm

#endif  // RCLM_GENERATION_H_
