#include "rclm/training.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#include "rclm/evaluation.h"

namespace rclm {

namespace {

std::string format_real(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

const std::string& require(const std::map<std::string, std::string>& kv,
                           const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    throw std::invalid_argument("missing config key \"" + key + "\"");
  }
  return it->second;
}

std::string optional_value(const std::map<std::string, std::string>& kv,
                           const std::string& key) {
  auto it = kv.find(key);
  return it == kv.end() ? std::string() : it->second;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key \"" + key + "\" is not an integer: " + value);
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key \"" + key + "\" is not a number: " + value);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (vocab_size == 0) throw std::invalid_argument("vocabulary size must be >= 1");
  if (embedding == 0 || hidden == 0) throw std::invalid_argument("K and H must be >= 1");
  if (uses_topics(variant) && topics == 0) {
    throw std::invalid_argument(std::string(variant_name(variant)) +
                                " requires M >= 1");
  }
  if (!(lr > 0)) throw std::invalid_argument("learning rate must be positive");
  if (!(clip > 0)) throw std::invalid_argument("clip must be positive");
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("patience must be >= 1");
  if (!(init_scale > 0)) throw std::invalid_argument("init_scale must be positive");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_key_values() const {
  return {
      {"variant", std::string(variant_name(variant))},
      {"vocab_size", std::to_string(vocab_size)},
      {"k", std::to_string(embedding)},
      {"h", std::to_string(hidden)},
      {"m", std::to_string(topics)},
      {"lr", format_real(lr)},
      {"lr_halving", lr_halving ? "1" : "0"},
      {"clip", format_real(clip)},
      {"max_epochs", std::to_string(max_epochs)},
      {"patience", std::to_string(patience)},
      {"seed", std::to_string(seed)},
      {"init_scale", format_real(init_scale)},
      {"lda_sweeps", std::to_string(lda_sweeps)},
      {"lda_seed", std::to_string(lda_seed)},
      {"train", train_path},
      {"dev", dev_path},
      {"vocab", vocab_path},
      {"lda", lda_path},
  };
}

TrainConfig TrainConfig::from_key_values(
    const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  auto variant = parse_variant(require(kv, "variant"));
  if (!variant) throw std::invalid_argument("unknown variant " + require(kv, "variant"));
  c.variant = *variant;
  c.vocab_size = parse_u64("vocab_size", require(kv, "vocab_size"));
  c.embedding = parse_u64("k", require(kv, "k"));
  c.hidden = parse_u64("h", require(kv, "h"));
  c.topics = parse_u64("m", require(kv, "m"));
  c.lr = parse_real("lr", require(kv, "lr"));
  c.lr_halving = parse_u64("lr_halving", require(kv, "lr_halving")) != 0;
  c.clip = parse_real("clip", require(kv, "clip"));
  c.max_epochs = static_cast<int>(parse_u64("max_epochs", require(kv, "max_epochs")));
  c.patience = static_cast<int>(parse_u64("patience", require(kv, "patience")));
  c.seed = parse_u64("seed", require(kv, "seed"));
  c.init_scale = parse_real("init_scale", require(kv, "init_scale"));
  c.lda_sweeps = static_cast<int>(parse_u64("lda_sweeps", require(kv, "lda_sweeps")));
  c.lda_seed = parse_u64("lda_seed", require(kv, "lda_seed"));
  c.train_path = optional_value(kv, "train");
  c.dev_path = optional_value(kv, "dev");
  c.vocab_path = optional_value(kv, "vocab");
  c.lda_path = optional_value(kv, "lda");
  return c;
}

Dataset make_dataset(std::vector<EncodedConversation> conversations) {
  Dataset d;
  d.conversations = std::move(conversations);
  return d;
}

Dataset make_dataset(std::vector<EncodedConversation> conversations,
                     const TopicModel& model, int sweeps, std::uint64_t seed) {
  Dataset d;
  d.conversations = std::move(conversations);
  d.topics.reserve(d.conversations.size());
  for (const auto& conv : d.conversations) {
    d.topics.push_back(context_topic_vectors(conv, model, sweeps, seed));
  }
  return d;
}

Dataset make_dataset(std::vector<EncodedConversation> conversations,
                     const TopicCache& cache) {
  Dataset d;
  d.conversations = std::move(conversations);
  d.topics.reserve(d.conversations.size());
  for (const auto& conv : d.conversations) {
    const auto& vectors = cache.at(conv.id);
    if (vectors.size() != conv.turns.size()) {
      throw std::invalid_argument("topic cache entry for " + conv.id +
                                  " does not match its turn count");
    }
    d.topics.push_back(vectors);
  }
  return d;
}

TrainResult train_model(const TrainConfig& config, const Dataset& train,
                        const Dataset& dev, std::ostream* progress) {
  config.validate();
  if (train.size() == 0) throw std::invalid_argument("empty training set");
  if (dev.size() == 0) throw std::invalid_argument("empty development set");
  if (uses_topics(config.variant) && (!train.has_topics() || !dev.has_topics())) {
    throw std::invalid_argument(std::string(variant_name(config.variant)) +
                                " needs precomputed topic vectors");
  }

  ModelParams<float> params = ModelParams<float>::initialized(
      config.variant, config.dims(), config.seed, config.init_scale);
  Gradients<float> grads = Gradients<float>::zeros(config.variant, config.dims());
  ConversationTrainer<float> trainer(params);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 shuffle_rng(config.seed ^ 0x5deece66dULL);

  TrainResult result;
  result.best.config = config;
  result.best.vocab_ref = config.vocab_path;
  double lr = config.lr;
  int bad_epochs = 0;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0;
    std::size_t epoch_tokens = 0;
    for (std::size_t idx : order) {
      const auto& conv = train.conversations[idx];
      auto [loss, predicted] = trainer.compute(params, conv, train.topics_for(idx), grads);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                               " on conversation " + conv.id +
                               " (lr=" + format_real(lr) + ")");
      }
      epoch_loss += loss;
      epoch_tokens += predicted;
      sgd_update_rows(params.embedding, grads.embedding, trainer.touched_rows(),
                      lr, config.clip);
      sgd_update(params.gate_weights, grads.gate_weights, lr, config.clip);
      sgd_update(params.gate_bias, grads.gate_bias, lr, config.clip);
      sgd_update(params.output, grads.output, lr, config.clip);
      if (uses_roles(config.variant)) {
        sgd_update(params.role_poster, grads.role_poster, lr, config.clip);
        sgd_update(params.role_responder, grads.role_responder, lr, config.clip);
      }
    }
    if (!params.all_finite()) {
      throw TrainingDiverged("non-finite parameters after epoch " +
                             std::to_string(epoch));
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = lr;
    entry.train_perplexity =
        std::exp(epoch_loss / static_cast<double>(std::max<std::size_t>(epoch_tokens, 1)));
    entry.dev_perplexity = perplexity(params, dev);
    if (!std::isfinite(entry.dev_perplexity)) {
      throw TrainingDiverged("non-finite dev perplexity at epoch " +
                             std::to_string(epoch));
    }
    entry.improved = entry.dev_perplexity < result.best.dev_perplexity;
    if (entry.improved) {
      result.best.params = params;
      result.best.epoch = epoch;
      result.best.dev_perplexity = entry.dev_perplexity;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (config.lr_halving) lr /= 2;
    }
    result.log.push_back(entry);
    if (progress != nullptr) {
      *progress << variant_name(config.variant) << " epoch " << epoch
                << " lr " << entry.lr << " train_ppl " << entry.train_perplexity
                << " dev_ppl " << entry.dev_perplexity
                << (entry.improved ? " *" : "") << '\n';
    }
    if (bad_epochs >= config.patience) break;
  }
  return result;
}

GridResult grid_search(const TrainConfig& base, const GridSpec& grid,
                       const DatasetProvider& data, int jobs,
                       std::ostream* progress) {
  if (grid.embedding.empty() || grid.hidden.empty()) {
    throw std::invalid_argument("K and H grids must be non-empty");
  }
  std::vector<std::size_t> topic_values = {0};
  if (uses_topics(base.variant)) {
    if (grid.topics.empty()) throw std::invalid_argument("M grid must be non-empty");
    topic_values = grid.topics;
  }

  GridResult result;
  for (std::size_t k : grid.embedding) {
    for (std::size_t h : grid.hidden) {
      for (std::size_t m : topic_values) {
        GridRow row;
        row.embedding = k;
        row.hidden = h;
        row.topics = m;
        result.rows.push_back(row);
      }
    }
  }

  // Datasets are resolved up front, in grid order, so the provider is never
  // called concurrently.
  std::map<std::size_t, const DatasetPair*> datasets;
  std::map<std::size_t, std::string> dataset_errors;
  for (std::size_t m : topic_values) {
    try {
      datasets[m] = &data(m);
    } catch (const std::exception& e) {
      dataset_errors[m] = e.what();
    }
  }

  std::vector<std::optional<Checkpoint>> checkpoints(result.rows.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < result.rows.size(); i = next++) {
      GridRow& row = result.rows[i];
      TrainConfig config = base;
      config.embedding = row.embedding;
      config.hidden = row.hidden;
      config.topics = row.topics;
      try {
        if (auto err = dataset_errors.find(row.topics); err != dataset_errors.end()) {
          throw std::runtime_error(err->second);
        }
        const DatasetPair& pair = *datasets.at(row.topics);
        TrainResult run = train_model(config, pair.train, pair.dev);
        row.dev_perplexity = run.best.dev_perplexity;
        row.epochs = static_cast<int>(run.log.size());
        row.parameter_count = run.best.params.parameter_count();
        checkpoints[i] = std::move(run.best);
      } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
      }
      if (progress != nullptr) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        *progress << "grid K=" << row.embedding << " H=" << row.hidden
                  << " M=" << row.topics << ": "
                  << (row.failed ? "failed (" + row.error + ")"
                                 : "dev_ppl " + format_real(row.dev_perplexity))
                  << '\n';
      }
    }
  };
  const int threads = std::max(1, jobs);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    const GridRow& row = result.rows[i];
    if (row.failed) continue;
    if (!best) {
      best = i;
      continue;
    }
    const GridRow& cur = result.rows[*best];
    if (row.dev_perplexity < cur.dev_perplexity ||
        (row.dev_perplexity == cur.dev_perplexity &&
         row.parameter_count < cur.parameter_count)) {
      best = i;
    }
  }
  if (best) result.best = std::move(checkpoints[*best]);
  return result;
}

void write_grid_report(std::ostream& out, const GridResult& result) {
  out << "K\tH\tM\tdev_ppl\tepochs\n";
  for (const GridRow& row : result.rows) {
    out << row.embedding << '\t' << row.hidden << '\t';
    if (row.topics == 0) {
      out << '-';
    } else {
      out << row.topics;
    }
    out << '\t';
    if (row.failed) {
      out << "failed";
    } else {
      out << std::fixed << std::setprecision(4) << row.dev_perplexity
          << std::defaultfloat;
    }
    out << '\t' << row.epochs << '\n';
  }
}

}  // namespace rclm
