#include "rclm/generation.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace rclm {

namespace {

bool is_punctuation_run(const std::string& token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(), [](char ch) {
    const auto c = static_cast<unsigned char>(ch);
    const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
    return !word && c != ' ';
  });
}

}  // namespace

std::optional<DecodeStrategy> parse_strategy(std::string_view name) {
  if (name == "greedy") return DecodeStrategy::kGreedy;
  if (name == "sample") return DecodeStrategy::kSample;
  return std::nullopt;
}

template <typename Real>
Generation<Real> generate_from_state(const ModelParams<Real>& params,
                                     const LstmState<Real>& start,
                                     std::optional<Role> role,
                                     const TopicVector* topic,
                                     const GenerateOptions& options) {
  if (options.max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (options.strategy == DecodeStrategy::kSample && !(options.temperature > 0)) {
    throw std::invalid_argument("temperature must be positive");
  }
  const std::string name(variant_name(params.variant));
  if (uses_roles(params.variant) && !role) {
    throw std::invalid_argument(name + " generation requires a role");
  }
  if (uses_topics(params.variant) && topic == nullptr) {
    throw std::invalid_argument(name + " generation requires a topic model");
  }
  const std::optional<Role> out_role = uses_roles(params.variant) ? role : std::nullopt;
  const TopicVector* out_topic = uses_topics(params.variant) ? topic : nullptr;

  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Generation<Real> gen;
  LstmState<Real> state = lstm_step(params, Vocabulary::kBeginTurn, start);
  std::vector<double> weights(params.dims.vocab);
  for (std::size_t step = 0; step < options.max_len; ++step) {
    const ProbVector<Real> dist = output_distribution(params, std::span<const Real>(state.h),
                                                      out_topic, out_role);
    TokenId next = 0;
    if (options.strategy == DecodeStrategy::kGreedy) {
      double best = -1;
      for (std::size_t i = 0; i < dist.dimension(); ++i) {
        if (i == Vocabulary::kBeginTurn) continue;
        if (dist[i] > best) {
          best = dist[i];
          next = static_cast<TokenId>(i);
        }
      }
    } else {
      // p^(1/T), renormalised in log space; BOT is excluded.
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < dist.dimension(); ++i) {
        const double p = static_cast<double>(dist[i]);
        weights[i] = (i == Vocabulary::kBeginTurn || p <= 0)
                         ? -std::numeric_limits<double>::infinity()
                         : std::log(p) / options.temperature;
        top = std::max(top, weights[i]);
      }
      double total = 0;
      for (double& w : weights) {
        w = std::isinf(w) ? 0.0 : std::exp(w - top);
        total += w;
      }
      double u = uniform(rng) * total;
      next = static_cast<TokenId>(dist.dimension() - 1);
      for (std::size_t i = 0; i < dist.dimension(); ++i) {
        if (weights[i] == 0) continue;
        u -= weights[i];
        next = static_cast<TokenId>(i);
        if (u < 0) break;
      }
    }
    state = lstm_step(params, next, state);
    if (next == Vocabulary::kEndTurn) {
      gen.terminated = true;
      break;
    }
    gen.tokens.push_back(next);
  }
  if (!gen.terminated) state = lstm_step(params, Vocabulary::kEndTurn, state);
  gen.state = std::move(state);
  return gen;
}

template <typename Real>
Generation<Real> generate(const ModelParams<Real>& params,
                          std::span<const EncodedTurn> context,
                          std::optional<Role> role,
                          const GenerateOptions& options,
                          const TopicModel* topic_model) {
  if (uses_topics(params.variant) && topic_model == nullptr) {
    throw std::invalid_argument(std::string(variant_name(params.variant)) +
                                " generation requires a topic model");
  }
  const LstmState<Real> state =
      run_turns(params, context, LstmState<Real>::zero(params.dims.hidden));
  std::optional<TopicVector> topic;
  if (uses_topics(params.variant)) {
    topic = history_topic_vector(context, *topic_model, options.lda_sweeps,
                                 options.lda_seed);
  }
  return generate_from_state(params, state, role, topic ? &*topic : nullptr, options);
}

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : tokens) {
    const std::string& tok = vocab.token(id);
    if (!out.empty() && !is_punctuation_run(tok)) out.push_back(' ');
    out += tok;
  }
  return out;
}

#define RCLM_INSTANTIATE(Real)                                                   \
  template Generation<Real> generate_from_state<Real>(                           \
      const ModelParams<Real>&, const LstmState<Real>&, std::optional<Role>,     \
      const TopicVector*, const GenerateOptions&);                               \
  template Generation<Real> generate<Real>(const ModelParams<Real>&,             \
                                           std::span<const EncodedTurn>,         \
                                           std::optional<Role>,                  \
                                           const GenerateOptions&,               \
                                           const TopicModel*);

RCLM_INSTANTIATE(float)
RCLM_INSTANTIATE(double)

#undef RCLM_INSTANTIATE

}  // namespace rclm
