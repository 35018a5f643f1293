#include "rclm/lda.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "rclm/vocabulary.h"

namespace rclm {

namespace {

constexpr double kSimplexTolerance = 1e-6;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Draws k with probability weights[k] / sum(weights).
std::size_t sample_index(std::span<const double> weights, double total,
                         std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.0, total);
  double u = uniform(rng);
  for (std::size_t k = 0; k + 1 < weights.size(); ++k) {
    u -= weights[k];
    if (u < 0) return k;
  }
  return weights.size() - 1;
}

void write_real(std::ostream& out, double v) {
  out << std::setprecision(17) << v;
}

}  // namespace

TopicVector::TopicVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw std::invalid_argument("empty topic vector");
  double sum = 0;
  for (double v : values_) {
    if (!(v >= 0)) throw std::invalid_argument("negative topic proportion");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance) {
    throw std::invalid_argument("topic vector sums to " + std::to_string(sum));
  }
}

TopicVector TopicVector::uniform(std::size_t topics) {
  if (topics == 0) throw std::invalid_argument("topic count must be >= 1");
  return TopicVector(std::vector<double>(topics, 1.0 / static_cast<double>(topics)));
}

TopicModel::TopicModel(Tensor<double> phi, double alpha, double beta,
                       std::uint64_t seed)
    : phi_(std::move(phi)), alpha_(alpha), beta_(beta), seed_(seed) {
  if (phi_.rank() != 2) throw std::invalid_argument("phi must be a matrix");
  for (std::size_t k = 0; k < phi_.rows(); ++k) {
    double sum = 0;
    for (double v : phi_.row(k)) {
      if (!(v > 0)) throw std::invalid_argument("phi entries must be positive");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance) {
      throw std::invalid_argument("phi row " + std::to_string(k) +
                                  " does not sum to 1");
    }
  }
  if (!(alpha_ > 0) || !(beta_ > 0)) {
    throw std::invalid_argument("alpha and beta must be positive");
  }
}

TopicModel TopicModel::permuted(std::span<const std::size_t> permutation) const {
  if (permutation.size() != topics()) {
    throw std::invalid_argument("permutation size mismatch");
  }
  Tensor<double> phi(phi_.dims());
  for (std::size_t k = 0; k < topics(); ++k) {
    auto src = phi_.row(k);
    std::copy(src.begin(), src.end(), phi.row(permutation[k]).begin());
  }
  return TopicModel(std::move(phi), alpha_, beta_, seed_);
}

void TopicModel::write(std::ostream& out) const {
  out << kFileHeader << '\n';
  out << topics() << '\n' << vocab_size() << '\n';
  write_real(out, alpha_);
  out << '\n';
  write_real(out, beta_);
  out << '\n' << seed_ << '\n';
  for (std::size_t k = 0; k < topics(); ++k) {
    auto row = phi_.row(k);
    for (std::size_t w = 0; w < row.size(); ++w) {
      if (w) out << ' ';
      write_real(out, row[w]);
    }
    out << '\n';
  }
}

TopicModel TopicModel::read(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header != kFileHeader) {
    throw std::runtime_error("topic model lacks \"" + std::string(kFileHeader) +
                             "\" header");
  }
  std::size_t m = 0, v = 0;
  double alpha = 0, beta = 0;
  std::uint64_t seed = 0;
  if (!(in >> m >> v >> alpha >> beta >> seed) || m == 0 || v == 0) {
    throw std::runtime_error("malformed topic model header fields");
  }
  std::vector<double> data(m * v);
  for (double& x : data) {
    if (!(in >> x)) throw std::runtime_error("truncated topic model");
  }
  return TopicModel(Tensor<double>({m, v}, std::move(data)), alpha, beta, seed);
}

void TopicModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write topic model: " + path.string());
  write(out);
}

TopicModel TopicModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open topic model: " + path.string());
  return read(in);
}

std::vector<TokenId> topic_bag(const EncodedTurn& turn) {
  std::vector<TokenId> bag;
  bag.reserve(turn.ids.size());
  for (TokenId id : turn.ids) {
    if (!Vocabulary::is_reserved(id)) bag.push_back(id);
  }
  return bag;
}

std::vector<TokenId> topic_bag(const EncodedConversation& conversation) {
  std::vector<TokenId> bag;
  for (const EncodedTurn& turn : conversation.turns) {
    auto part = topic_bag(turn);
    bag.insert(bag.end(), part.begin(), part.end());
  }
  return bag;
}

TopicModel train_lda(std::span<const std::vector<TokenId>> documents,
                     std::size_t vocab_size, const LdaOptions& options) {
  const std::size_t m = options.topics;
  if (m == 0) throw std::invalid_argument("topic count must be >= 1");
  if (options.iterations < 1) throw std::invalid_argument("iterations must be >= 1");
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be >= 1");
  const double alpha =
      options.alpha > 0 ? options.alpha : 50.0 / static_cast<double>(m);
  const double beta = options.beta;
  if (!(beta > 0)) throw std::invalid_argument("beta must be positive");

  std::unordered_set<TokenId> distinct;
  std::size_t total_tokens = 0;
  for (const auto& doc : documents) {
    for (TokenId w : doc) {
      if (w >= vocab_size) throw std::invalid_argument("token id out of range");
      distinct.insert(w);
    }
    total_tokens += doc.size();
  }
  if (total_tokens == 0) throw std::invalid_argument("corpus has no tokens");
  if (m > distinct.size()) {
    throw std::invalid_argument("topic count " + std::to_string(m) +
                                " exceeds distinct token count " +
                                std::to_string(distinct.size()));
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick_topic(0, m - 1);
  // word_topic is word-major so the per-token loop over topics is contiguous.
  std::vector<std::uint32_t> word_topic(vocab_size * m, 0);
  std::vector<std::uint32_t> topic_total(m, 0);
  std::vector<std::vector<std::uint32_t>> doc_topic(documents.size(),
                                                    std::vector<std::uint32_t>(m, 0));
  std::vector<std::vector<std::uint32_t>> assignment(documents.size());
  for (std::size_t d = 0; d < documents.size(); ++d) {
    assignment[d].resize(documents[d].size());
    for (std::size_t i = 0; i < documents[d].size(); ++i) {
      const std::size_t k = pick_topic(rng);
      assignment[d][i] = static_cast<std::uint32_t>(k);
      ++word_topic[documents[d][i] * m + k];
      ++topic_total[k];
      ++doc_topic[d][k];
    }
  }

  const double vbeta = static_cast<double>(vocab_size) * beta;
  std::vector<double> weights(m);
  for (int sweep = 0; sweep < options.iterations; ++sweep) {
    for (std::size_t d = 0; d < documents.size(); ++d) {
      auto& nd = doc_topic[d];
      for (std::size_t i = 0; i < documents[d].size(); ++i) {
        const TokenId w = documents[d][i];
        std::uint32_t* nw = &word_topic[w * m];
        std::size_t k = assignment[d][i];
        --nw[k];
        --topic_total[k];
        --nd[k];
        double total = 0;
        for (std::size_t j = 0; j < m; ++j) {
          weights[j] = (nd[j] + alpha) * (nw[j] + beta) / (topic_total[j] + vbeta);
          total += weights[j];
        }
        k = sample_index(weights, total, rng);
        assignment[d][i] = static_cast<std::uint32_t>(k);
        ++nw[k];
        ++topic_total[k];
        ++nd[k];
      }
    }
  }

  Tensor<double> phi({m, vocab_size});
  for (std::size_t k = 0; k < m; ++k) {
    const double denom = topic_total[k] + vbeta;
    for (std::size_t w = 0; w < vocab_size; ++w) {
      phi.at(k, w) = (word_topic[w * m + k] + beta) / denom;
    }
  }
  return TopicModel(std::move(phi), alpha, beta, options.seed);
}

TopicModel train_lda(std::span<const EncodedConversation> conversations,
                     std::size_t vocab_size, const LdaOptions& options) {
  std::vector<std::vector<TokenId>> documents;
  documents.reserve(conversations.size());
  for (const auto& conv : conversations) documents.push_back(topic_bag(conv));
  return train_lda(documents, vocab_size, options);
}

TopicVector infer_topic(const TopicModel& model, std::span<const TokenId> bag,
                        int sweeps, std::uint64_t seed) {
  const std::size_t m = model.topics();
  if (bag.empty()) return TopicVector::uniform(m);
  if (sweeps < 1) sweeps = 1;
  const double alpha = model.alpha();

  // phi columns for the bag, token-major.
  std::vector<double> phi_cols(bag.size() * m);
  for (std::size_t i = 0; i < bag.size(); ++i) {
    if (bag[i] >= model.vocab_size()) {
      throw std::out_of_range("token id outside topic model vocabulary");
    }
    for (std::size_t k = 0; k < m; ++k) phi_cols[i * m + k] = model.phi(k, bag[i]);
  }

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_topic(0, m - 1);
  std::vector<std::uint32_t> assignment(bag.size());
  std::vector<std::uint32_t> counts(m, 0);
  for (auto& z : assignment) {
    z = static_cast<std::uint32_t>(pick_topic(rng));
    ++counts[z];
  }

  const int averaged = std::max(1, sweeps / 5);
  const double denom = static_cast<double>(bag.size()) + static_cast<double>(m) * alpha;
  std::vector<double> weights(m);
  std::vector<double> mean(m, 0.0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    for (std::size_t i = 0; i < bag.size(); ++i) {
      --counts[assignment[i]];
      double total = 0;
      for (std::size_t k = 0; k < m; ++k) {
        weights[k] = phi_cols[i * m + k] * (counts[k] + alpha);
        total += weights[k];
      }
      const std::size_t k = sample_index(weights, total, rng);
      assignment[i] = static_cast<std::uint32_t>(k);
      ++counts[k];
    }
    if (sweep >= sweeps - averaged) {
      for (std::size_t k = 0; k < m; ++k) mean[k] += (counts[k] + alpha) / denom;
    }
  }
  double sum = 0;
  for (double& v : mean) {
    v /= averaged;
    sum += v;
  }
  for (double& v : mean) v /= sum;
  return TopicVector(std::move(mean));
}

TopicVector history_topic_vector(std::span<const EncodedTurn> history,
                                 const TopicModel& model, int sweeps,
                                 std::uint64_t seed) {
  std::vector<TokenId> bag;
  for (const EncodedTurn& turn : history) {
    for (TokenId id : turn.ids) {
      if (!Vocabulary::is_reserved(id)) bag.push_back(id);
    }
  }
  return infer_topic(model, bag, sweeps, splitmix64(seed ^ history.size()));
}

std::vector<TopicVector> context_topic_vectors(
    const EncodedConversation& conversation, const TopicModel& model,
    int sweeps, std::uint64_t seed) {
  std::vector<TopicVector> out;
  out.reserve(conversation.turns.size());
  std::span<const EncodedTurn> turns(conversation.turns);
  for (std::size_t t = 0; t < turns.size(); ++t) {
    out.push_back(history_topic_vector(turns.first(t), model, sweeps, seed));
  }
  return out;
}

TopicCache TopicCache::build(std::span<const EncodedConversation> conversations,
                             const TopicModel& model, int sweeps,
                             std::uint64_t seed) {
  TopicCache cache(model.topics());
  for (const auto& conv : conversations) {
    cache.put(conv.id, context_topic_vectors(conv, model, sweeps, seed));
  }
  return cache;
}

void TopicCache::put(const std::string& conversation_id,
                     std::vector<TopicVector> vectors) {
  for (const auto& v : vectors) {
    if (v.size() != topics_) throw std::invalid_argument("topic vector size mismatch");
  }
  if (conversation_id.find_first_of("\t\n") != std::string::npos) {
    throw std::invalid_argument("conversation id contains tab or newline");
  }
  entries_[conversation_id] = std::move(vectors);
}

const std::vector<TopicVector>& TopicCache::at(
    const std::string& conversation_id) const {
  auto it = entries_.find(conversation_id);
  if (it == entries_.end()) {
    throw std::out_of_range("no cached topic vectors for conversation " +
                            conversation_id);
  }
  return it->second;
}

void TopicCache::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write topic cache: " + path.string());
  out << kFileHeader << ' ' << topics_ << '\n';
  for (const auto& [id, vectors] : entries_) {
    for (std::size_t t = 0; t < vectors.size(); ++t) {
      out << id << '\t' << t + 1 << '\t';
      for (std::size_t k = 0; k < topics_; ++k) {
        if (k) out << ' ';
        write_real(out, vectors[t][k]);
      }
      out << '\n';
    }
  }
}

TopicCache TopicCache::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open topic cache: " + path.string());
  std::string line;
  if (!std::getline(in, line) || !line.starts_with(kFileHeader)) {
    throw std::runtime_error(path.string() + ": missing \"" +
                             std::string(kFileHeader) + "\" header");
  }
  TopicCache cache(std::stoul(line.substr(kFileHeader.size())));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab1 = line.find('\t');
    const auto tab2 = tab1 == std::string::npos ? tab1 : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": malformed topic cache line");
    }
    const std::string id = line.substr(0, tab1);
    const std::size_t turn = std::stoul(line.substr(tab1 + 1, tab2 - tab1 - 1));
    std::istringstream values(line.substr(tab2 + 1));
    std::vector<double> v(cache.topics_);
    for (double& x : v) {
      if (!(values >> x)) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": truncated topic vector");
      }
    }
    auto& vectors = cache.entries_[id];
    if (turn != vectors.size() + 1) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": turn indices out of order");
    }
    vectors.emplace_back(std::move(v));
  }
  return cache;
}

}  // namespace rclm
