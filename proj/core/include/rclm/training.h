#ifndef RCLM_TRAINING_H_
#define RCLM_TRAINING_H_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rclm/corpus.h"
#include "rclm/lda.h"
#include "rclm/model.h"

namespace rclm {

struct TrainConfig {
  Variant variant = Variant::kBaseline;
  std::size_t vocab_size = 0;  // V
  std::size_t embedding = 32;  // K
  std::size_t hidden = 32;     // H
  std::size_t topics = 0;      // M, topic variants only
  double lr = 0.1;
  bool lr_halving = true;
  double clip = 5.0;
  int max_epochs = 20;
  int patience = 3;
  std::uint64_t seed = 1;
  double init_scale = 0.08;
  // Topic inference settings used to precompute topic vectors.
  int lda_sweeps = kDefaultInferenceSweeps;
  std::uint64_t lda_seed = 1;
  std::string train_path;
  std::string dev_path;
  std::string vocab_path;
  std::string lda_path;

  ModelDims dims() const { return {vocab_size, embedding, hidden, topics}; }
  // Throws std::invalid_argument when a field is out of range.
  void validate() const;

  // Flat key=value form used in checkpoint metadata.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
  static TrainConfig from_key_values(const std::map<std::string, std::string>& kv);

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelParams<float> params;
  TrainConfig config;
  int epoch = 0;
  double dev_perplexity = std::numeric_limits<double>::infinity();
  std::string vocab_ref;
  std::uint32_t version = kFormatVersion;
};

// Encoded conversations plus, for topic variants, one topic vector per turn.
struct Dataset {
  std::vector<EncodedConversation> conversations;
  std::vector<std::vector<TopicVector>> topics;  // empty or aligned

  std::size_t size() const { return conversations.size(); }
  bool has_topics() const { return !topics.empty(); }
  std::span<const TopicVector> topics_for(std::size_t i) const {
    return topics.empty() ? std::span<const TopicVector>{} : topics[i];
  }
};

Dataset make_dataset(std::vector<EncodedConversation> conversations);
// Infers per-turn topic vectors with the given model.
Dataset make_dataset(std::vector<EncodedConversation> conversations,
                     const TopicModel& model, int sweeps, std::uint64_t seed);
// Looks topic vectors up by conversation id; throws std::out_of_range if one
// is missing.
Dataset make_dataset(std::vector<EncodedConversation> conversations,
                     const TopicCache& cache);

struct EpochLog {
  int epoch = 0;
  double lr = 0;
  double train_perplexity = 0;
  double dev_perplexity = 0;
  bool improved = false;
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// SGD with one update per conversation (full-conversation BPTT), seeded
// shuffling each epoch, dev-perplexity learning-rate halving and patience
// stopping. Returns the best-dev checkpoint. Throws std::invalid_argument for
// an empty training or dev set and TrainingDiverged on a non-finite loss.
TrainResult train_model(const TrainConfig& config, const Dataset& train,
                        const Dataset& dev, std::ostream* progress = nullptr);

struct GridSpec {
  std::vector<std::size_t> embedding;  // K values
  std::vector<std::size_t> hidden;     // H values
  std::vector<std::size_t> topics;     // M values, topic variants only
};

struct GridRow {
  std::size_t embedding = 0;
  std::size_t hidden = 0;
  std::size_t topics = 0;  // 0 for non-topic variants
  double dev_perplexity = std::numeric_limits<double>::infinity();
  int epochs = 0;
  std::size_t parameter_count = 0;
  bool failed = false;
  std::string error;
};

struct GridResult {
  std::optional<Checkpoint> best;
  std::vector<GridRow> rows;  // ordered by (K, H, M)
};

struct DatasetPair {
  Dataset train;
  Dataset dev;
};
// Supplies train/dev data for a topic count (0 for non-topic variants).
using DatasetProvider = std::function<const DatasetPair&(std::size_t topics)>;

// Trains every grid point (optionally on `jobs` threads); failed points are
// recorded and skipped. Ties in dev perplexity go to the smaller model.
GridResult grid_search(const TrainConfig& base, const GridSpec& grid,
                       const DatasetProvider& data, int jobs = 1,
                       std::ostream* progress = nullptr);

// Tab-separated report with header K, H, M, dev_ppl, epochs.
void write_grid_report(std::ostream& out, const GridResult& result);

}  // namespace rclm

#endif  // RCLM_TRAINING_H_
