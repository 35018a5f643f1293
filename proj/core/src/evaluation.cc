#include "rclm/evaluation.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "json.hpp"

namespace rclm {

namespace {

using json = nlohmann::json;

constexpr std::string_view kRankingHeader = "RCLM-RANKING 1";

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::unordered_map<std::string, std::size_t> index_by_id(
    std::span<const EncodedConversation> conversations) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < conversations.size(); ++i) {
    if (!index.emplace(conversations[i].id, i).second) {
      throw std::invalid_argument("duplicate conversation id " + conversations[i].id);
    }
  }
  return index;
}

}  // namespace

template <typename Real>
double perplexity(const ModelParams<Real>& params, const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("empty evaluation set");
  double loss = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    auto [l, n] = conversation_loss(params, data.conversations[i], data.topics_for(i));
    loss += l;
    count += n;
  }
  if (count == 0) throw std::invalid_argument("evaluation set has no predicted tokens");
  return std::exp(loss / static_cast<double>(count));
}

double perplexity(const Checkpoint& checkpoint, const Dataset& data) {
  return perplexity(checkpoint.params, data);
}

RankingSet build_ranking_set(std::span<const EncodedConversation> conversations,
                             std::uint64_t seed) {
  if (conversations.size() < 2) {
    throw std::invalid_argument(
        "empty pool: ranking needs at least two conversations");
  }
  std::map<std::size_t, std::vector<TurnRef>> by_length;
  for (std::size_t c = 0; c < conversations.size(); ++c) {
    for (std::size_t t = 0; t < conversations[c].turns.size(); ++t) {
      by_length[conversations[c].turns[t].word_count()].push_back({c, t});
    }
  }

  RankingSet set;
  set.seed = seed;
  std::vector<const std::vector<TurnRef>*> window;
  std::vector<TurnRef> chosen;
  for (std::size_t c = 0; c < conversations.size(); ++c) {
    const auto& turns = conversations[c].turns;
    for (std::size_t t = 1; t < turns.size(); ++t) {
      const std::size_t len = turns[t].word_count();
      const std::size_t lo = len > kLengthTolerance ? len - kLengthTolerance : 0;
      const std::size_t hi = len + kLengthTolerance;

      window.clear();
      std::size_t pool = 0;
      for (auto it = by_length.lower_bound(lo); it != by_length.end() && it->first <= hi; ++it) {
        window.push_back(&it->second);
        pool += it->second.size();
      }
      std::size_t own = 0;
      for (const EncodedTurn& turn : turns) {
        const std::size_t w = turn.word_count();
        if (w >= lo && w <= hi) ++own;
      }
      if (pool - own < kRankingNegatives) {
        ++set.skipped;
        continue;
      }

      RankingInstance inst;
      inst.conversation = c;
      inst.turn = t;
      inst.seed = mix(mix(seed, c), t);
      std::mt19937_64 rng(inst.seed);
      std::uniform_int_distribution<std::size_t> pick(0, pool - 1);
      chosen.clear();
      while (chosen.size() < kRankingNegatives) {
        std::size_t r = pick(rng);
        const std::vector<TurnRef>* bucket = nullptr;
        for (const auto* b : window) {
          if (r < b->size()) {
            bucket = b;
            break;
          }
          r -= b->size();
        }
        const TurnRef ref = (*bucket)[r];
        if (ref.conversation == c) continue;
        if (std::find(chosen.begin(), chosen.end(), ref) != chosen.end()) continue;
        chosen.push_back(ref);
      }
      chosen.push_back({c, t});
      std::shuffle(chosen.begin(), chosen.end(), rng);
      for (std::size_t i = 0; i < kRankingCandidates; ++i) {
        inst.candidates[i] = chosen[i];
        if (chosen[i] == TurnRef{c, t}) inst.truth_index = i;
      }
      set.instances.push_back(inst);
    }
  }
  return set;
}

void save_ranking_set(const RankingSet& set,
                      std::span<const EncodedConversation> conversations,
                      const std::filesystem::path& path) {
  index_by_id(conversations);  // rejects duplicate ids
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write ranking set: " + path.string());
  out << kRankingHeader << ' ' << set.seed << ' ' << set.skipped << '\n';
  for (const RankingInstance& inst : set.instances) {
    json candidates = json::array();
    for (const TurnRef& ref : inst.candidates) {
      candidates.push_back(json::array({conversations[ref.conversation].id, ref.turn + 1}));
    }
    json j = {{"conversation", conversations[inst.conversation].id},
              {"t", inst.turn + 1},
              {"candidates", std::move(candidates)},
              {"truth_index", inst.truth_index},
              {"seed", inst.seed}};
    out << j.dump() << '\n';
  }
}

RankingSet load_ranking_set(std::span<const EncodedConversation> conversations,
                            const std::filesystem::path& path) {
  const auto index = index_by_id(conversations);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open ranking set: " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with(kRankingHeader)) {
    throw std::runtime_error(path.string() + ": missing \"" +
                             std::string(kRankingHeader) + "\" header");
  }
  RankingSet set;
  {
    std::istringstream header(line.substr(kRankingHeader.size()));
    if (!(header >> set.seed >> set.skipped)) {
      throw std::runtime_error(path.string() + ": malformed header");
    }
  }
  auto resolve = [&](const std::string& id, std::size_t turn_1based) {
    auto it = index.find(id);
    if (it == index.end()) throw std::invalid_argument("unknown conversation " + id);
    if (turn_1based == 0 || turn_1based > conversations[it->second].turns.size()) {
      throw std::invalid_argument("turn index out of range for " + id);
    }
    return TurnRef{it->second, turn_1based - 1};
  };
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      RankingInstance inst;
      const TurnRef truth =
          resolve(j.at("conversation").get<std::string>(), j.at("t").get<std::size_t>());
      inst.conversation = truth.conversation;
      inst.turn = truth.turn;
      const auto& cands = j.at("candidates");
      if (cands.size() != kRankingCandidates) {
        throw std::invalid_argument("expected 10 candidates");
      }
      for (std::size_t i = 0; i < kRankingCandidates; ++i) {
        inst.candidates[i] = resolve(cands[i].at(0).get<std::string>(),
                                     cands[i].at(1).get<std::size_t>());
      }
      inst.truth_index = j.at("truth_index").get<std::size_t>();
      if (inst.truth_index >= kRankingCandidates ||
          inst.candidates[inst.truth_index] != truth) {
        throw std::invalid_argument("truth_index does not point at the true turn");
      }
      inst.seed = j.at("seed").get<std::uint64_t>();
      set.instances.push_back(inst);
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return set;
}

template <typename Real>
double score_candidate(const ModelParams<Real>& params,
                       std::span<const EncodedTurn> context,
                       const EncodedTurn& candidate, Role role,
                       const TopicVector* context_topic) {
  if (candidate.ids.size() < 2 || candidate.word_count() == 0) {
    throw std::invalid_argument("empty candidate turn");
  }
  const LstmState<Real> state =
      run_turns(params, context, LstmState<Real>::zero(params.dims.hidden));
  return turn_log_probability(params, state, candidate.ids, role, context_topic);
}

std::vector<ScoredInstance> score_instances(std::span<const RankingInstance> instances,
                                            const CandidateScorer& scorer) {
  std::vector<ScoredInstance> out;
  out.reserve(instances.size());
  for (const RankingInstance& inst : instances) {
    ScoredInstance s;
    s.truth_index = inst.truth_index;
    s.scores.reserve(kRankingCandidates);
    for (std::size_t i = 0; i < kRankingCandidates; ++i) s.scores.push_back(scorer(inst, i));
    out.push_back(std::move(s));
  }
  return out;
}

template <typename Real>
std::vector<ScoredInstance> score_ranking_set(
    const ModelParams<Real>& params,
    std::span<const EncodedConversation> conversations,
    std::span<const RankingInstance> instances, const TopicModel* topic_model,
    int sweeps, std::uint64_t lda_seed) {
  if (uses_topics(params.variant) && topic_model == nullptr) {
    throw std::invalid_argument(std::string(variant_name(params.variant)) +
                                " requires a topic model for ranking");
  }
  std::vector<ScoredInstance> out;
  out.reserve(instances.size());
  for (const RankingInstance& inst : instances) {
    const auto& turns = conversations[inst.conversation].turns;
    std::span<const EncodedTurn> context(turns.data(), inst.turn);
    const Role role = turns[inst.turn].role;
    const LstmState<Real> state =
        run_turns(params, context, LstmState<Real>::zero(params.dims.hidden));
    std::optional<TopicVector> topic;
    if (uses_topics(params.variant)) {
      topic = history_topic_vector(context, *topic_model, sweeps, lda_seed);
    }
    ScoredInstance s;
    s.truth_index = inst.truth_index;
    for (const TurnRef& ref : inst.candidates) {
      const EncodedTurn& cand = conversations[ref.conversation].turns[ref.turn];
      s.scores.push_back(turn_log_probability(params, state, cand.ids, role,
                                              topic ? &*topic : nullptr));
    }
    out.push_back(std::move(s));
  }
  return out;
}

double recall_at_k(std::span<const ScoredInstance> scored, std::size_t k) {
  if (k < 1 || k > kRankingCandidates) {
    throw std::invalid_argument("K must lie in [1, 10]");
  }
  if (scored.empty()) throw std::invalid_argument("empty instance list");
  std::size_t hits = 0;
  for (const ScoredInstance& s : scored) {
    const double truth = s.scores.at(s.truth_index);
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (j == s.truth_index) continue;
      if (s.scores[j] > truth || (s.scores[j] == truth && j < s.truth_index)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(scored.size());
}

void write_recall_table(std::ostream& out, std::span<const RecallRow> rows) {
  out << "model\tK\trecall\tn_instances\tn_skipped\n";
  for (const RecallRow& r : rows) {
    out << r.model << '\t' << r.k << '\t' << std::fixed << std::setprecision(4)
        << r.recall << std::defaultfloat << '\t' << r.instances << '\t' << r.skipped
        << '\n';
  }
}

#define RCLM_INSTANTIATE(Real)                                                  \
  template double perplexity<Real>(const ModelParams<Real>&, const Dataset&);   \
  template double score_candidate<Real>(const ModelParams<Real>&,               \
                                        std::span<const EncodedTurn>,           \
                                        const EncodedTurn&, Role,               \
                                        const TopicVector*);                    \
  template std::vector<ScoredInstance> score_ranking_set<Real>(                 \
      const ModelParams<Real>&, std::span<const EncodedConversation>,           \
      std::span<const RankingInstance>, const TopicModel*, int, std::uint64_t);

RCLM_INSTANTIATE(float)
RCLM_INSTANTIATE(double)

#undef RCLM_INSTANTIATE

}  // namespace rclm
