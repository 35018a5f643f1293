#include "rclm/model.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "rclm/vocabulary.h"

namespace rclm {

namespace {

template <typename Real>
Real sigmoid(Real x) {
  return Real(1) / (Real(1) + std::exp(-x));
}

template <typename Real>
void check_token(const ModelParams<Real>& params, TokenId id) {
  if (id >= params.dims.vocab) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " out of range for vocabulary of size " +
                            std::to_string(params.dims.vocab));
  }
}

template <typename Real>
void check_topics(const ModelParams<Real>& params,
                  const EncodedConversation& conversation,
                  std::span<const TopicVector> topics) {
  if (!uses_topics(params.variant)) return;
  if (topics.size() != conversation.turns.size()) {
    throw std::invalid_argument(
        std::string(variant_name(params.variant)) + " needs one topic vector per turn (" +
        std::to_string(conversation.turns.size()) + " turns, " +
        std::to_string(topics.size()) + " vectors)");
  }
  for (const TopicVector& s : topics) {
    if (s.size() != params.dims.topics) {
      throw std::invalid_argument("topic vector has dimension " +
                                  std::to_string(s.size()) + ", model expects " +
                                  std::to_string(params.dims.topics));
    }
  }
}

// LSTM forward kernel. `input` receives [E[x]; h_prev]; `gates` the activated
// i, f, o, g blocks. Writes c and h.
template <typename Real>
void lstm_forward(const ModelParams<Real>& params, TokenId x,
                  std::span<const Real> h_prev, std::span<const Real> c_prev,
                  std::span<Real> input, std::span<Real> gates,
                  std::span<Real> c, std::span<Real> tanh_c, std::span<Real> h) {
  const std::size_t k = params.dims.embedding;
  const std::size_t hd = params.dims.hidden;
  auto emb = params.embedding.row(x);
  std::copy(emb.begin(), emb.end(), input.begin());
  std::copy(h_prev.begin(), h_prev.end(), input.begin() + k);
  linalg::matvec<Real>(params.gate_weights.values(), 4 * hd, k + hd, input, gates);
  auto bias = params.gate_bias.values();
  for (std::size_t j = 0; j < 4 * hd; ++j) gates[j] += bias[j];
  for (std::size_t j = 0; j < 3 * hd; ++j) gates[j] = sigmoid(gates[j]);
  for (std::size_t j = 3 * hd; j < 4 * hd; ++j) gates[j] = std::tanh(gates[j]);
  for (std::size_t j = 0; j < hd; ++j) {
    const Real i = gates[j], f = gates[hd + j], o = gates[2 * hd + j],
               g = gates[3 * hd + j];
    c[j] = f * c_prev[j] + i * g;
    tanh_c[j] = std::tanh(c[j]);
    h[j] = o * tanh_c[j];
  }
}

// Buffers for one output-layer evaluation.
template <typename Real>
struct OutputBuffers {
  std::vector<Real> z;       // [h; s]
  std::vector<Real> u;       // W_role z, or z
  std::vector<Real> probs;   // V

  explicit OutputBuffers(const ModelParams<Real>& params)
      : z(params.output_input_dim()),
        u(params.output_input_dim()),
        probs(params.dims.vocab) {}
};

// Leaves the logits W_out u in buf.probs. `role` is ignored by non-role
// variants and `topic` by non-topic variants.
template <typename Real>
void output_logits(const ModelParams<Real>& params, std::span<const Real> h,
                   const TopicVector* topic, Role role,
                   OutputBuffers<Real>& buf) {
  const std::size_t hd = params.dims.hidden;
  const std::size_t d = params.output_input_dim();
  std::copy(h.begin(), h.end(), buf.z.begin());
  if (uses_topics(params.variant)) {
    for (std::size_t m = 0; m < params.dims.topics; ++m) {
      buf.z[hd + m] = static_cast<Real>((*topic)[m]);
    }
  }
  if (uses_roles(params.variant)) {
    linalg::matvec<Real>(params.role_matrix(role).values(), d, d, buf.z, buf.u);
  } else {
    std::copy(buf.z.begin(), buf.z.end(), buf.u.begin());
  }
  linalg::matvec<Real>(params.output.values(), params.dims.vocab, d, buf.u,
                       buf.probs);
}

template <typename Real>
void output_forward(const ModelParams<Real>& params, std::span<const Real> h,
                    const TopicVector* topic, Role role,
                    OutputBuffers<Real>& buf) {
  output_logits(params, h, topic, role, buf);
  softmax_inplace<Real>(buf.probs);
}

const TopicVector* topic_for_turn(Variant variant,
                                  std::span<const TopicVector> topics,
                                  std::size_t t) {
  return uses_topics(variant) ? &topics[t] : nullptr;
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline:
      return "baseline";
    case Variant::kRConv:
      return "rconv";
    case Variant::kLdaConv:
      return "ldaconv";
    case Variant::kRLdaConv:
      return "rldaconv";
  }
  return "unknown";
}

std::optional<Variant> parse_variant(std::string_view name) {
  for (Variant v : {Variant::kBaseline, Variant::kRConv, Variant::kLdaConv,
                    Variant::kRLdaConv}) {
    if (variant_name(v) == name) return v;
  }
  return std::nullopt;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::zeros(Variant variant, ModelDims dims) {
  if (dims.vocab == 0 || dims.embedding == 0 || dims.hidden == 0) {
    throw std::invalid_argument("V, K and H must be >= 1");
  }
  if (uses_topics(variant) && dims.topics == 0) {
    throw std::invalid_argument("topic variants need M >= 1");
  }
  if (!uses_topics(variant)) dims.topics = 0;
  ModelParams p;
  p.variant = variant;
  p.dims = dims;
  const std::size_t d = p.output_input_dim();
  p.embedding = Tensor<Real>({dims.vocab, dims.embedding});
  p.gate_weights = Tensor<Real>({4 * dims.hidden, dims.embedding + dims.hidden});
  p.gate_bias = Tensor<Real>({4 * dims.hidden});
  p.output = Tensor<Real>({dims.vocab, d});
  if (uses_roles(variant)) {
    p.role_poster = Tensor<Real>({d, d});
    p.role_responder = Tensor<Real>({d, d});
  }
  return p;
}

template <typename Real>
ModelParams<Real> ModelParams<Real>::initialized(Variant variant, ModelDims dims,
                                                 std::uint64_t seed,
                                                 double scale) {
  ModelParams p = zeros(variant, dims);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(-scale, scale);
  for (Tensor<Real>* t : {&p.embedding, &p.gate_weights, &p.gate_bias, &p.output}) {
    for (Real& x : t->values()) x = static_cast<Real>(uniform(rng));
  }
  const std::size_t hd = dims.hidden;
  for (std::size_t j = hd; j < 2 * hd; ++j) p.gate_bias[j] = Real(1);
  if (uses_roles(variant)) {
    const std::size_t d = p.output_input_dim();
    for (std::size_t i = 0; i < d; ++i) {
      p.role_poster.at(i, i) = Real(1);
      p.role_responder.at(i, i) = Real(1);
    }
  }
  return p;
}

template <typename Real>
std::size_t ModelParams<Real>::parameter_count() const {
  std::size_t n = 0;
  for_each([&](std::string_view, const Tensor<Real>& t) { n += t.size(); });
  return n;
}

template <typename Real>
bool ModelParams<Real>::all_finite() const {
  bool ok = true;
  for_each([&](std::string_view, const Tensor<Real>& t) { ok = ok && t.all_finite(); });
  return ok;
}

template <typename Real>
void ModelParams<Real>::validate() const {
  const ModelParams expected = zeros(variant, dims);
  for_each([&](std::string_view name, const Tensor<Real>& t) {
    const Tensor<Real>* want = nullptr;
    expected.for_each([&](std::string_view n, const Tensor<Real>& e) {
      if (n == name) want = &e;
    });
    if (want == nullptr || !t.same_shape(*want)) {
      throw std::invalid_argument("tensor \"" + std::string(name) +
                                  "\" does not match model dimensions");
    }
  });
}

template <typename Real>
LstmState<Real> lstm_step(const ModelParams<Real>& params, TokenId x_id,
                          const LstmState<Real>& state) {
  check_token(params, x_id);
  const std::size_t hd = params.dims.hidden;
  if (state.h.size() != hd || state.c.size() != hd) {
    throw std::invalid_argument("LSTM state does not match hidden size");
  }
  std::vector<Real> input(params.dims.embedding + hd), gates(4 * hd), tanh_c(hd);
  LstmState<Real> next = LstmState<Real>::zero(hd);
  lstm_forward<Real>(params, x_id, state.h, state.c, input, gates, next.c, tanh_c,
                     next.h);
  return next;
}

template <typename Real>
ProbVector<Real> output_distribution(const ModelParams<Real>& params,
                                     std::span<const Real> h,
                                     const TopicVector* topic,
                                     std::optional<Role> role) {
  const std::string name(variant_name(params.variant));
  if (uses_topics(params.variant) != (topic != nullptr)) {
    throw std::invalid_argument(
        uses_topics(params.variant) ? name + " requires a topic vector"
                                    : name + " does not take a topic vector");
  }
  if (uses_roles(params.variant) != role.has_value()) {
    throw std::invalid_argument(uses_roles(params.variant)
                                    ? name + " requires a role"
                                    : name + " does not take a role");
  }
  if (h.size() != params.dims.hidden) {
    throw std::invalid_argument("hidden vector has wrong dimension");
  }
  if (topic != nullptr && topic->size() != params.dims.topics) {
    throw std::invalid_argument("topic vector has wrong dimension");
  }
  OutputBuffers<Real> buf(params);
  output_logits<Real>(params, h, topic, role.value_or(Role::kPoster), buf);
  return softmax<Real>(std::span<const Real>(buf.probs));
}

template <typename Real>
ForwardResult<Real> forward_conversation(const ModelParams<Real>& params,
                                         const EncodedConversation& conversation,
                                         std::span<const TopicVector> topics) {
  check_topics(params, conversation, topics);
  ForwardResult<Real> result;
  const std::size_t hd = params.dims.hidden;
  std::vector<Real> input(params.dims.embedding + hd), gates(4 * hd), tanh_c(hd);
  LstmState<Real> state = LstmState<Real>::zero(hd), next = state;
  OutputBuffers<Real> buf(params);
  for (std::size_t t = 0; t < conversation.turns.size(); ++t) {
    const EncodedTurn& turn = conversation.turns[t];
    const TopicVector* topic = topic_for_turn(params.variant, topics, t);
    for (std::size_t i = 0; i < turn.ids.size(); ++i) {
      check_token(params, turn.ids[i]);
      lstm_forward<Real>(params, turn.ids[i], state.h, state.c, input, gates,
                         next.c, tanh_c, next.h);
      std::swap(state, next);
      if (i + 1 == turn.ids.size()) break;
      const TokenId target = turn.ids[i + 1];
      check_token(params, target);
      output_forward<Real>(params, state.h, topic, turn.role, buf);
      result.loss += cross_entropy<Real>(std::span<const Real>(buf.probs), target);
      ++result.predicted;
      result.distributions.push_back(ProbVector<Real>(buf.probs));
    }
  }
  return result;
}

template <typename Real>
std::pair<double, std::size_t> conversation_loss(
    const ModelParams<Real>& params, const EncodedConversation& conversation,
    std::span<const TopicVector> topics) {
  check_topics(params, conversation, topics);
  LstmState<Real> state = LstmState<Real>::zero(params.dims.hidden);
  double loss = 0;
  std::size_t predicted = 0;
  for (std::size_t t = 0; t < conversation.turns.size(); ++t) {
    const EncodedTurn& turn = conversation.turns[t];
    loss -= turn_log_probability<Real>(params, state, turn.ids, turn.role,
                                       topic_for_turn(params.variant, topics, t),
                                       &state);
    predicted += turn.ids.empty() ? 0 : turn.ids.size() - 1;
  }
  return {loss, predicted};
}

template <typename Real>
LstmState<Real> run_turns(const ModelParams<Real>& params,
                          std::span<const EncodedTurn> turns,
                          LstmState<Real> state) {
  const std::size_t hd = params.dims.hidden;
  std::vector<Real> input(params.dims.embedding + hd), gates(4 * hd), tanh_c(hd);
  LstmState<Real> next = state;
  for (const EncodedTurn& turn : turns) {
    for (TokenId x : turn.ids) {
      check_token(params, x);
      lstm_forward<Real>(params, x, state.h, state.c, input, gates, next.c,
                         tanh_c, next.h);
      std::swap(state, next);
    }
  }
  return state;
}

template <typename Real>
double turn_log_probability(const ModelParams<Real>& params,
                            const LstmState<Real>& start,
                            std::span<const TokenId> turn, Role role,
                            const TopicVector* topic,
                            LstmState<Real>* end_state) {
  if (uses_topics(params.variant)) {
    if (topic == nullptr) {
      throw std::invalid_argument(std::string(variant_name(params.variant)) +
                                  " requires a topic vector");
    }
    if (topic->size() != params.dims.topics) {
      throw std::invalid_argument("topic vector has wrong dimension");
    }
  }
  const std::size_t hd = params.dims.hidden;
  std::vector<Real> input(params.dims.embedding + hd), gates(4 * hd), tanh_c(hd);
  LstmState<Real> state = start, next = start;
  OutputBuffers<Real> buf(params);
  double log_prob = 0;
  for (std::size_t i = 0; i < turn.size(); ++i) {
    check_token(params, turn[i]);
    lstm_forward<Real>(params, turn[i], state.h, state.c, input, gates, next.c,
                       tanh_c, next.h);
    std::swap(state, next);
    if (i + 1 == turn.size()) break;
    const TokenId target = turn[i + 1];
    check_token(params, target);
    output_forward<Real>(params, state.h, topic, role, buf);
    log_prob -= cross_entropy<Real>(std::span<const Real>(buf.probs), target);
  }
  if (end_state != nullptr) *end_state = std::move(state);
  return log_prob;
}

template <typename Real>
ConversationTrainer<Real>::ConversationTrainer(const ModelParams<Real>& params)
    : touched_mask_(params.dims.vocab, 0) {}

template <typename Real>
std::pair<double, std::size_t> ConversationTrainer<Real>::compute(
    const ModelParams<Real>& params, const EncodedConversation& conversation,
    std::span<const TopicVector> topics, Gradients<Real>& grads) {
  check_topics(params, conversation, topics);
  const std::size_t k = params.dims.embedding;
  const std::size_t hd = params.dims.hidden;
  const std::size_t v = params.dims.vocab;
  const std::size_t d = params.output_input_dim();
  const bool roles = uses_roles(params.variant);

  grads.for_each([](std::string_view, Tensor<Real>& t) { t.fill(Real(0)); });
  for (std::size_t r : touched_) touched_mask_[r] = 0;
  touched_.clear();
  if (touched_mask_.size() != v) touched_mask_.assign(v, 0);

  std::size_t positions = 0;
  for (const EncodedTurn& turn : conversation.turns) positions += turn.ids.size();
  if (steps_.size() < positions) steps_.resize(positions);

  OutputBuffers<Real> buf(params);
  std::vector<Real> du(d), dz(d), h(hd), c(hd, Real(0)), h_prev(hd, Real(0));
  double loss = 0;
  std::size_t predicted = 0;

  // Forward pass; the output layer is differentiated immediately since it
  // does not depend on later positions.
  std::size_t p = 0;
  for (std::size_t t = 0; t < conversation.turns.size(); ++t) {
    const EncodedTurn& turn = conversation.turns[t];
    const TopicVector* topic = topic_for_turn(params.variant, topics, t);
    for (std::size_t i = 0; i < turn.ids.size(); ++i, ++p) {
      Step& s = steps_[p];
      s.x = turn.ids[i];
      check_token(params, s.x);
      s.input.resize(k + hd);
      s.gates.resize(4 * hd);
      s.c_prev.assign(c.begin(), c.end());
      s.tanh_c.resize(hd);
      s.dh_out.assign(hd, Real(0));
      lstm_forward<Real>(params, s.x, h_prev, s.c_prev, s.input, s.gates, c,
                         s.tanh_c, h);
      std::copy(h.begin(), h.end(), h_prev.begin());
      if (!touched_mask_[s.x]) {
        touched_mask_[s.x] = 1;
        touched_.push_back(s.x);
      }
      s.predicts = i + 1 < turn.ids.size();
      if (!s.predicts) continue;

      const TokenId target = turn.ids[i + 1];
      check_token(params, target);
      output_forward<Real>(params, h, topic, turn.role, buf);
      loss += cross_entropy<Real>(std::span<const Real>(buf.probs), target);
      ++predicted;

      // d logits = p - onehot(target)
      buf.probs[target] -= Real(1);
      linalg::add_outer<Real>(grads.output.values(), v, d, buf.probs, buf.u);
      std::fill(du.begin(), du.end(), Real(0));
      linalg::matvec_transposed_add<Real>(params.output.values(), v, d,
                                          buf.probs, du);
      if (roles) {
        linalg::add_outer<Real>(grads.role_matrix(turn.role).values(), d, d, du,
                                buf.z);
        std::fill(dz.begin(), dz.end(), Real(0));
        linalg::matvec_transposed_add<Real>(
            params.role_matrix(turn.role).values(), d, d, du, dz);
        std::copy(dz.begin(), dz.begin() + hd, s.dh_out.begin());
      } else {
        std::copy(du.begin(), du.begin() + hd, s.dh_out.begin());
      }
    }
  }

  // Backward through time over every position.
  std::vector<Real> dh_next(hd, Real(0)), dc_next(hd, Real(0)), da(4 * hd),
      dinput(k + hd);
  for (std::size_t q = positions; q-- > 0;) {
    const Step& s = steps_[q];
    for (std::size_t j = 0; j < hd; ++j) {
      const Real i = s.gates[j], f = s.gates[hd + j], o = s.gates[2 * hd + j],
                 g = s.gates[3 * hd + j];
      const Real dh = s.dh_out[j] + dh_next[j];
      const Real dc = dc_next[j] + dh * o * (Real(1) - s.tanh_c[j] * s.tanh_c[j]);
      da[j] = dc * g * i * (Real(1) - i);
      da[hd + j] = dc * s.c_prev[j] * f * (Real(1) - f);
      da[2 * hd + j] = dh * s.tanh_c[j] * o * (Real(1) - o);
      da[3 * hd + j] = dc * i * (Real(1) - g * g);
      dc_next[j] = dc * f;
    }
    linalg::add_outer<Real>(grads.gate_weights.values(), 4 * hd, k + hd, da,
                            s.input);
    auto db = grads.gate_bias.values();
    for (std::size_t j = 0; j < 4 * hd; ++j) db[j] += da[j];
    std::fill(dinput.begin(), dinput.end(), Real(0));
    linalg::matvec_transposed_add<Real>(params.gate_weights.values(), 4 * hd,
                                        k + hd, da, dinput);
    auto de = grads.embedding.row(s.x);
    for (std::size_t j = 0; j < k; ++j) de[j] += dinput[j];
    std::copy(dinput.begin() + k, dinput.end(), dh_next.begin());
  }
  return {loss, predicted};
}

template <typename Real>
BackwardResult<Real> backward_conversation(
    const ModelParams<Real>& params, const EncodedConversation& conversation,
    std::span<const TopicVector> topics) {
  BackwardResult<Real> result{Gradients<Real>::zeros(params.variant, params.dims)};
  ConversationTrainer<Real> trainer(params);
  std::tie(result.loss, result.predicted) =
      trainer.compute(params, conversation, topics, result.gradients);
  return result;
}

#define RCLM_INSTANTIATE(Real)                                                 \
  template struct ModelParams<Real>;                                           \
  template class ConversationTrainer<Real>;                                    \
  template LstmState<Real> lstm_step<Real>(const ModelParams<Real>&, TokenId,  \
                                           const LstmState<Real>&);            \
  template ProbVector<Real> output_distribution<Real>(                         \
      const ModelParams<Real>&, std::span<const Real>, const TopicVector*,     \
      std::optional<Role>);                                                    \
  template ForwardResult<Real> forward_conversation<Real>(                     \
      const ModelParams<Real>&, const EncodedConversation&,                    \
      std::span<const TopicVector>);                                           \
  template std::pair<double, std::size_t> conversation_loss<Real>(             \
      const ModelParams<Real>&, const EncodedConversation&,                    \
      std::span<const TopicVector>);                                           \
  template BackwardResult<Real> backward_conversation<Real>(                   \
      const ModelParams<Real>&, const EncodedConversation&,                    \
      std::span<const TopicVector>);                                           \
  template LstmState<Real> run_turns<Real>(                                    \
      const ModelParams<Real>&, std::span<const EncodedTurn>, LstmState<Real>); \
  template double turn_log_probability<Real>(                                  \
      const ModelParams<Real>&, const LstmState<Real>&,                        \
      std::span<const TokenId>, Role, const TopicVector*, LstmState<Real>*);

RCLM_INSTANTIATE(float)
RCLM_INSTANTIATE(double)

#undef RCLM_INSTANTIATE

}  // namespace rclm
