#ifndef RCLM_MODEL_H_
#define RCLM_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rclm/corpus.h"
#include "rclm/lda.h"
#include "rclm/numerics.h"

namespace rclm {

enum class Variant : std::uint8_t { kBaseline, kRConv, kLdaConv, kRLdaConv };

constexpr bool uses_roles(Variant v) {
  return v == Variant::kRConv || v == Variant::kRLdaConv;
}
constexpr bool uses_topics(Variant v) {
  return v == Variant::kLdaConv || v == Variant::kRLdaConv;
}
// "baseline", "rconv", "ldaconv", "rldaconv".
std::string_view variant_name(Variant v);
std::optional<Variant> parse_variant(std::string_view name);

struct ModelDims {
  std::size_t vocab = 0;      // V
  std::size_t embedding = 0;  // K
  std::size_t hidden = 0;     // H
  std::size_t topics = 0;     // M, used only by topic variants

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// Gate rows of the stacked LSTM weights, in order.
enum class Gate : std::size_t { kInput = 0, kForget = 1, kOutput = 2, kCandidate = 3 };

template <typename Real>
struct ModelParams {
  Variant variant = Variant::kBaseline;
  ModelDims dims;
  Tensor<Real> embedding;     // V x K
  Tensor<Real> gate_weights;  // 4H x (K + H), gate blocks ordered as Gate
  Tensor<Real> gate_bias;     // 4H
  Tensor<Real> output;        // V x D, the shared output matrix
  Tensor<Real> role_poster;     // D x D, role variants only
  Tensor<Real> role_responder;  // D x D, role variants only

  // D: H, or H + M for topic variants.
  std::size_t output_input_dim() const {
    return dims.hidden + (uses_topics(variant) ? dims.topics : 0);
  }

  // Correctly shaped, all-zero parameters.
  static ModelParams zeros(Variant variant, ModelDims dims);
  // Uniform(-scale, scale) weights, forget-gate bias 1, identity role
  // matrices.
  static ModelParams initialized(Variant variant, ModelDims dims,
                                 std::uint64_t seed, double scale = 0.08);

  const Tensor<Real>& role_matrix(Role role) const {
    return role == Role::kPoster ? role_poster : role_responder;
  }
  Tensor<Real>& role_matrix(Role role) {
    return role == Role::kPoster ? role_poster : role_responder;
  }

  // Visits (name, tensor) for every parameter tensor present in the variant.
  template <typename F>
  void for_each(F&& f) {
    f("embedding", embedding);
    f("gate_weights", gate_weights);
    f("gate_bias", gate_bias);
    f("output", output);
    if (uses_roles(variant)) {
      f("role_poster", role_poster);
      f("role_responder", role_responder);
    }
  }
  template <typename F>
  void for_each(F&& f) const {
    f("embedding", embedding);
    f("gate_weights", gate_weights);
    f("gate_bias", gate_bias);
    f("output", output);
    if (uses_roles(variant)) {
      f("role_poster", role_poster);
      f("role_responder", role_responder);
    }
  }

  std::size_t parameter_count() const;
  bool all_finite() const;
  // Throws std::invalid_argument if a tensor shape disagrees with dims.
  void validate() const;

  template <typename Other>
  ModelParams<Other> cast() const {
    ModelParams<Other> out;
    out.variant = variant;
    out.dims = dims;
    out.embedding = embedding.template cast<Other>();
    out.gate_weights = gate_weights.template cast<Other>();
    out.gate_bias = gate_bias.template cast<Other>();
    out.output = output.template cast<Other>();
    if (uses_roles(variant)) {
      out.role_poster = role_poster.template cast<Other>();
      out.role_responder = role_responder.template cast<Other>();
    }
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

template <typename Real>
using Gradients = ModelParams<Real>;

template <typename Real>
struct LstmState {
  std::vector<Real> h;
  std::vector<Real> c;

  static LstmState zero(std::size_t hidden) {
    return {std::vector<Real>(hidden, Real(0)), std::vector<Real>(hidden, Real(0))};
  }
};

// One LSTM step (forget gate, no peepholes). Throws std::out_of_range if
// x_id >= V.
template <typename Real>
LstmState<Real> lstm_step(const ModelParams<Real>& params, TokenId x_id,
                          const LstmState<Real>& state);

// softmax(W_out * u) with u = z or W_role * z and z = h or [h; s].
// Throws std::invalid_argument when the topic vector or role presence does not
// match the variant, or on a dimension mismatch.
template <typename Real>
ProbVector<Real> output_distribution(const ModelParams<Real>& params,
                                     std::span<const Real> h,
                                     const TopicVector* topic,
                                     std::optional<Role> role);

template <typename Real>
struct ForwardResult {
  // One entry per predicted position, in order (every token but BOT).
  std::vector<ProbVector<Real>> distributions;
  double loss = 0;
  std::size_t predicted = 0;
};

template <typename Real>
struct BackwardResult {
  Gradients<Real> gradients;
  double loss = 0;
  std::size_t predicted = 0;
};

// `topics` must hold one vector per turn for topic variants and is ignored
// otherwise.
template <typename Real>
ForwardResult<Real> forward_conversation(
    const ModelParams<Real>& params, const EncodedConversation& conversation,
    std::span<const TopicVector> topics = {});

// Summed cross-entropy and predicted-token count without storing
// distributions.
template <typename Real>
std::pair<double, std::size_t> conversation_loss(
    const ModelParams<Real>& params, const EncodedConversation& conversation,
    std::span<const TopicVector> topics = {});

// Full BPTT over the conversation. Topic vectors are constants.
template <typename Real>
BackwardResult<Real> backward_conversation(
    const ModelParams<Real>& params, const EncodedConversation& conversation,
    std::span<const TopicVector> topics = {});

// Runs the LSTM over whole turns (every token, EOT included) and returns the
// carried state.
template <typename Real>
LstmState<Real> run_turns(const ModelParams<Real>& params,
                          std::span<const EncodedTurn> turns,
                          LstmState<Real> state);

// Sum of log-probabilities of the predicted tokens of `turn` (all but BOT),
// starting from `state`, under `role` and `topic`. The state after feeding the
// turn is written to `end_state` when non-null.
template <typename Real>
double turn_log_probability(const ModelParams<Real>& params,
                            const LstmState<Real>& state,
                            std::span<const TokenId> turn, Role role,
                            const TopicVector* topic,
                            LstmState<Real>* end_state = nullptr);

// Reusable workspace for the training loop: computes loss and accumulates
// gradients into `grads` (which must be zero-shaped like params).
template <typename Real>
class ConversationTrainer {
 public:
  explicit ConversationTrainer(const ModelParams<Real>& params);

  // Returns (loss, predicted count); grads are overwritten.
  std::pair<double, std::size_t> compute(const ModelParams<Real>& params,
                                         const EncodedConversation& conversation,
                                         std::span<const TopicVector> topics,
                                         Gradients<Real>& grads);
  // Embedding rows touched by the last compute() call.
  std::span<const std::size_t> touched_rows() const { return touched_; }

 private:
  struct Step {
    TokenId x = 0;
    bool predicts = false;
    std::vector<Real> input;   // [E[x]; h_prev]
    std::vector<Real> gates;   // activated i, f, o, g
    std::vector<Real> c_prev;
    std::vector<Real> tanh_c;
    std::vector<Real> dh_out;  // gradient reaching h from the output layer
  };
  std::vector<Step> steps_;
  std::vector<std::size_t> touched_;
  std::vector<char> touched_mask_;
  std::vector<Real> scratch_;
};

}  // namespace rclm

#endif  // RCLM_MODEL_H_
