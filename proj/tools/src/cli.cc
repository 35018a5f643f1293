#include "rclm_cli/cli.h"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "rclm/checkpoint.h"
#include "rclm/corpus.h"
#include "rclm/evaluation.h"
#include "rclm/generation.h"
#include "rclm/lda.h"
#include "rclm/training.h"
#include "rclm/vocabulary.h"

namespace rclm::cli {

namespace {

const std::vector<std::string> kVariantNames = {"baseline", "rconv", "ldaconv", "rldaconv"};
const std::vector<std::string> kRoleNames = {"poster", "responder"};

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Flat key=value lines; '#' starts a comment line.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    while (!key.empty() && key[0] == '-') key.erase(0, 1);
    entries.emplace_back(key, trim(line.substr(eq + 1)));
  }
  return entries;
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].starts_with("--config=")) return args[i].substr(9);
  }
  return std::nullopt;
}

bool flag_given(const std::vector<std::string>& args, const std::string& name) {
  for (const auto& a : args) {
    if (a == name || a.starts_with(name + "=")) return true;
  }
  return false;
}

// Appends config-file values for flags not given on the command line.
std::vector<std::string> merge_config(CLI::App& app, std::vector<std::string> args) {
  const auto path = find_config_path(args);
  if (!path || args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (sub == nullptr) return args;
  for (const auto& [key, value] : read_config_file(*path)) {
    const std::string flag = "--" + key;
    if (key == "config") continue;
    if (sub->get_option_no_throw(flag) == nullptr) {
      throw CLI::ExtrasError(args[0] + ": config key \"" + key + "\" is not an option",
                             CLI::ExitCodes::ExtrasError);
    }
    if (!flag_given(args, flag)) args.push_back(flag + "=" + value);
  }
  return args;
}

EncodedCorpus load_corpus_checked(const std::string& path, std::size_t vocab_size) {
  EncodedCorpus corpus = load_encoded_corpus(path);
  if (vocab_size != 0 && corpus.vocab_size != vocab_size) {
    throw std::invalid_argument(path + ": corpus vocabulary size " +
                                std::to_string(corpus.vocab_size) +
                                " does not match the model (" +
                                std::to_string(vocab_size) + ")");
  }
  return corpus;
}

// Topic data for a variant: explicit cache, else a topic model file.
struct TopicSource {
  std::string lda_path;
  std::string cache_path;
};

Dataset dataset_for(const TrainConfig& config, std::vector<EncodedConversation> convs,
                    const TopicSource& source, const TopicModel* model) {
  if (!uses_topics(config.variant)) return make_dataset(std::move(convs));
  if (!source.cache_path.empty()) {
    TopicCache cache = TopicCache::load(source.cache_path);
    if (cache.topics() != config.topics) {
      throw std::invalid_argument(source.cache_path + ": topic cache has M=" +
                                  std::to_string(cache.topics()) + ", model expects M=" +
                                  std::to_string(config.topics));
    }
    return make_dataset(std::move(convs), cache);
  }
  if (model == nullptr) {
    throw std::invalid_argument(std::string(variant_name(config.variant)) +
                                " needs --lda or topic caches");
  }
  return make_dataset(std::move(convs), *model, config.lda_sweeps, config.lda_seed);
}

std::optional<TopicModel> load_topic_model(const std::string& path, std::size_t topics,
                                           std::size_t vocab_size) {
  if (path.empty()) return std::nullopt;
  TopicModel model = TopicModel::load(path);
  if (topics != 0 && model.topics() != topics) {
    throw std::invalid_argument(path + ": topic model has M=" + std::to_string(model.topics()) +
                                ", expected M=" + std::to_string(topics));
  }
  if (model.vocab_size() != vocab_size) {
    throw std::invalid_argument(path + ": topic model vocabulary size " +
                                std::to_string(model.vocab_size()) + " does not match " +
                                std::to_string(vocab_size));
  }
  return model;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

// ---- prepare ----

struct PrepareArgs {
  std::string input;
  std::string output;
  std::string vocab_out;
  std::string vocab_in;
  std::size_t min_turns = 6;
  std::size_t max_turns = 20;
  std::size_t vocab_size = 20000;
};

void add_prepare(CLI::App& app, PrepareArgs& a) {
  auto* sub = app.add_subcommand("prepare", "Ingest, filter, build vocabulary and encode a corpus");
  sub->add_option("--input", a.input, "Corpus file (one JSON conversation per line)")->required();
  sub->add_option("--output", a.output, "Encoded corpus output")->required();
  sub->add_option("--vocab-out", a.vocab_out, "Vocabulary output (default <output>.vocab)");
  sub->add_option("--vocab", a.vocab_in, "Encode with an existing vocabulary instead of building one")
      ->check(CLI::ExistingFile);
  sub->add_option("--min-turns", a.min_turns, "Minimum turns per conversation")->capture_default_str();
  sub->add_option("--max-turns", a.max_turns, "Maximum turns per conversation")->capture_default_str();
  sub->add_option("--vocab-size", a.vocab_size, "Most frequent tokens kept")->capture_default_str();
}

void run_prepare(const PrepareArgs& a, std::ostream& err) {
  IngestResult ingested = ingest(a.input, a.min_turns, a.max_turns);
  Vocabulary vocab;
  if (a.vocab_in.empty()) {
    vocab = Vocabulary::build(ingested.conversations, a.vocab_size);
    vocab.save(a.vocab_out.empty() ? a.output + ".vocab" : a.vocab_out);
  } else {
    vocab = Vocabulary::load(a.vocab_in);
  }
  EncodedCorpus corpus{vocab.size(), encode_all(ingested.conversations, vocab)};
  save_encoded_corpus(corpus, a.output);
  err << "prepare: kept " << corpus.conversations.size() << " conversations, filtered "
      << ingested.filtered_out << ", skipped " << ingested.skipped.size()
      << " malformed, dropped " << ingested.dropped_turns << " empty turns; vocabulary "
      << vocab.size() << "\n";
}

// ---- lda-train / lda-cache ----

struct LdaTrainArgs {
  std::string input;
  std::string output;
  std::size_t topics = 50;
  int iterations = 200;
  double alpha = -1;
  double beta = 0.01;
  std::uint64_t seed = 1;
};

void add_lda_train(CLI::App& app, LdaTrainArgs& a) {
  auto* sub = app.add_subcommand("lda-train", "Train a topic model (collapsed Gibbs sampling)");
  sub->add_option("--input", a.input, "Encoded corpus")->required();
  sub->add_option("--output", a.output, "Topic model output")->required();
  sub->add_option("--topics", a.topics, "Number of topics M")->capture_default_str();
  sub->add_option("--iterations", a.iterations, "Gibbs sweeps")->capture_default_str();
  sub->add_option("--alpha", a.alpha, "Doc-topic prior (<= 0 means 50/M)")->capture_default_str();
  sub->add_option("--beta", a.beta, "Topic-word prior")->capture_default_str();
  sub->add_option("--seed", a.seed, "Sampler seed")->capture_default_str();
}

void run_lda_train(const LdaTrainArgs& a, std::ostream& err) {
  const EncodedCorpus corpus = load_corpus_checked(a.input, 0);
  LdaOptions options{a.topics, a.iterations, a.alpha, a.beta, a.seed};
  const TopicModel model = train_lda(corpus.conversations, corpus.vocab_size, options);
  model.save(a.output);
  err << "lda-train: M=" << model.topics() << " V=" << model.vocab_size() << " over "
      << corpus.conversations.size() << " conversations\n";
}

struct LdaCacheArgs {
  std::string input;
  std::string model;
  std::string output;
  int sweeps = kDefaultInferenceSweeps;
  std::uint64_t seed = 1;
};

void add_lda_cache(CLI::App& app, LdaCacheArgs& a) {
  auto* sub = app.add_subcommand("lda-cache", "Precompute per-turn topic vectors");
  sub->add_option("--input", a.input, "Encoded corpus")->required();
  sub->add_option("--model", a.model, "Topic model")->required();
  sub->add_option("--output", a.output, "Topic cache output")->required();
  sub->add_option("--sweeps", a.sweeps, "Inference sweeps")->capture_default_str();
  sub->add_option("--seed", a.seed, "Inference seed")->capture_default_str();
}

void run_lda_cache(const LdaCacheArgs& a, std::ostream& err) {
  const EncodedCorpus corpus = load_corpus_checked(a.input, 0);
  const auto model = load_topic_model(a.model, 0, corpus.vocab_size);
  const TopicCache cache = TopicCache::build(corpus.conversations, *model, a.sweeps, a.seed);
  cache.save(a.output);
  err << "lda-cache: " << cache.size() << " conversations\n";
}

// ---- train / grid ----

struct TrainingArgs {
  std::string variant = "baseline";
  std::string train;
  std::string dev;
  std::string vocab;
  std::string out;
  double lr = 0.1;
  bool no_lr_halving = false;
  double clip = 5.0;
  int epochs = 20;
  int patience = 3;
  std::uint64_t seed = 1;
  double init_scale = 0.08;
  int lda_sweeps = kDefaultInferenceSweeps;
  std::uint64_t lda_seed = 1;
};

void add_training_options(CLI::App* sub, TrainingArgs& a) {
  sub->add_option("--variant", a.variant, "Model variant")
      ->check(CLI::IsMember(kVariantNames))
      ->capture_default_str();
  sub->add_option("--train", a.train, "Encoded training corpus")->required();
  sub->add_option("--dev", a.dev, "Encoded development corpus")->required();
  sub->add_option("--vocab", a.vocab, "Vocabulary file recorded in the checkpoint");
  sub->add_option("--out", a.out, "Checkpoint output")->required();
  sub->add_option("--lr", a.lr, "Initial learning rate")->capture_default_str();
  sub->add_flag("--no-lr-halving", a.no_lr_halving, "Keep the learning rate fixed");
  sub->add_option("--clip", a.clip, "Element-wise gradient clip")->capture_default_str();
  sub->add_option("--epochs", a.epochs, "Maximum epochs")->capture_default_str();
  sub->add_option("--patience", a.patience, "Non-improving epochs before stopping")
      ->capture_default_str();
  sub->add_option("--seed", a.seed, "Initialization and shuffling seed")->capture_default_str();
  sub->add_option("--init-scale", a.init_scale, "Uniform initialization range")
      ->capture_default_str();
  sub->add_option("--lda-sweeps", a.lda_sweeps, "Topic inference sweeps")->capture_default_str();
  sub->add_option("--lda-seed", a.lda_seed, "Topic inference seed")->capture_default_str();
}

TrainConfig config_from(const TrainingArgs& a) {
  TrainConfig c;
  c.variant = *parse_variant(a.variant);
  c.lr = a.lr;
  c.lr_halving = !a.no_lr_halving;
  c.clip = a.clip;
  c.max_epochs = a.epochs;
  c.patience = a.patience;
  c.seed = a.seed;
  c.init_scale = a.init_scale;
  c.lda_sweeps = a.lda_sweeps;
  c.lda_seed = a.lda_seed;
  c.train_path = a.train;
  c.dev_path = a.dev;
  c.vocab_path = a.vocab;
  return c;
}

struct TrainArgs {
  TrainingArgs common;
  std::size_t k = 32;
  std::size_t h = 32;
  std::size_t m = 0;
  std::string lda;
  std::string train_topics;
  std::string dev_topics;
  std::string log;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* sub = app.add_subcommand("train", "Train one model");
  add_training_options(sub, a.common);
  sub->add_option("--k", a.k, "Embedding size K")->capture_default_str();
  sub->add_option("--h", a.h, "Hidden size H")->capture_default_str();
  sub->add_option("--m", a.m, "Topic count M (topic variants; default from --lda)");
  sub->add_option("--lda", a.lda, "Topic model used to infer topic vectors");
  sub->add_option("--train-topics", a.train_topics, "Topic cache for the training corpus");
  sub->add_option("--dev-topics", a.dev_topics, "Topic cache for the development corpus");
  sub->add_option("--log", a.log, "Per-epoch log output (tab-separated)");
}

void run_train(const TrainArgs& a, std::ostream& err) {
  TrainConfig config = config_from(a.common);
  config.embedding = a.k;
  config.hidden = a.h;
  EncodedCorpus train = load_corpus_checked(a.common.train, 0);
  EncodedCorpus dev = load_corpus_checked(a.common.dev, train.vocab_size);
  config.vocab_size = train.vocab_size;

  std::optional<TopicModel> model;
  if (uses_topics(config.variant)) {
    const bool cached = !a.train_topics.empty() || !a.dev_topics.empty();
    if (cached && (a.train_topics.empty() || a.dev_topics.empty())) {
      throw std::invalid_argument("--train-topics and --dev-topics must be given together");
    }
    if (!cached && a.lda.empty()) {
      throw std::invalid_argument(a.common.variant + " needs --lda or --train-topics/--dev-topics");
    }
    model = load_topic_model(a.lda, a.m, train.vocab_size);
    config.topics = a.m != 0 ? a.m : (model ? model->topics() : 0);
    if (config.topics == 0) throw std::invalid_argument("--m is required with topic caches");
    config.lda_path = a.lda;
  }
  config.validate();
  const Dataset train_set = dataset_for(config, std::move(train.conversations),
                                        {a.lda, a.train_topics}, model ? &*model : nullptr);
  const Dataset dev_set = dataset_for(config, std::move(dev.conversations),
                                      {a.lda, a.dev_topics}, model ? &*model : nullptr);
  const TrainResult result = train_model(config, train_set, dev_set, &err);
  save_checkpoint(result.best, a.common.out);
  if (!a.log.empty()) {
    std::ostringstream log;
    log << "epoch\tlr\ttrain_ppl\tdev_ppl\timproved\n";
    for (const auto& e : result.log) {
      log << e.epoch << "\t" << e.lr << "\t" << format_double(e.train_perplexity) << "\t"
          << format_double(e.dev_perplexity) << "\t" << (e.improved ? 1 : 0) << "\n";
    }
    write_text_file(a.log, log.str());
  }
  err << "train: best epoch " << result.best.epoch << " dev perplexity "
      << format_double(result.best.dev_perplexity) << "\n";
}

struct GridArgs {
  TrainingArgs common;
  std::vector<std::size_t> k_grid{16, 32, 64, 128, 256};
  std::vector<std::size_t> h_grid{16, 32, 64, 128, 256};
  std::vector<std::size_t> m_grid{50, 100};
  int jobs = 1;
  std::string report;
  int lda_iterations = 200;
  double lda_alpha = -1;
  double lda_beta = 0.01;
};

void add_grid(CLI::App& app, GridArgs& a) {
  auto* sub = app.add_subcommand("grid", "Grid search over K, H (and M) by dev perplexity");
  add_training_options(sub, a.common);
  sub->add_option("--k-grid", a.k_grid, "Comma-separated K values")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--h-grid", a.h_grid, "Comma-separated H values")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--m-grid", a.m_grid, "Comma-separated M values (topic variants)")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--jobs", a.jobs, "Grid points trained in parallel")->capture_default_str();
  sub->add_option("--report", a.report, "Report output (default <out>.grid.tsv)");
  sub->add_option("--lda-iterations", a.lda_iterations, "Gibbs sweeps per topic model")
      ->capture_default_str();
  sub->add_option("--lda-alpha", a.lda_alpha, "Doc-topic prior (<= 0 means 50/M)")
      ->capture_default_str();
  sub->add_option("--lda-beta", a.lda_beta, "Topic-word prior")->capture_default_str();
}

void run_grid(const GridArgs& a, std::ostream& out, std::ostream& err) {
  TrainConfig base = config_from(a.common);
  const EncodedCorpus train = load_corpus_checked(a.common.train, 0);
  const EncodedCorpus dev = load_corpus_checked(a.common.dev, train.vocab_size);
  base.vocab_size = train.vocab_size;

  GridSpec grid{a.k_grid, a.h_grid, {}};
  // Topic models and datasets are prepared up front, one per M.
  std::map<std::size_t, DatasetPair> data;
  std::map<std::size_t, TopicModel> models;
  if (uses_topics(base.variant)) {
    grid.topics = a.m_grid;
    for (std::size_t m : a.m_grid) {
      if (models.contains(m)) continue;
      err << "grid: training topic model M=" << m << "\n";
      LdaOptions options{m, a.lda_iterations, a.lda_alpha, a.lda_beta, base.lda_seed};
      models.emplace(m, train_lda(train.conversations, train.vocab_size, options));
      const TopicModel& model = models.at(m);
      data.emplace(m, DatasetPair{
                          make_dataset(train.conversations, model, base.lda_sweeps, base.lda_seed),
                          make_dataset(dev.conversations, model, base.lda_sweeps, base.lda_seed)});
    }
  } else {
    data.emplace(0, DatasetPair{make_dataset(train.conversations), make_dataset(dev.conversations)});
  }
  const DatasetProvider provider = [&data](std::size_t m) -> const DatasetPair& {
    return data.at(m);
  };
  GridResult result = grid_search(base, grid, provider, a.jobs, &err);

  std::ostringstream report;
  write_grid_report(report, result);
  write_text_file(a.report.empty() ? a.common.out + ".grid.tsv" : a.report, report.str());
  out << report.str();
  if (!result.best) throw std::runtime_error("every grid point failed");
  if (uses_topics(base.variant)) {
    const std::string lda_path = a.common.out + ".lda";
    models.at(result.best->config.topics).save(lda_path);
    result.best->config.lda_path = lda_path;
  }
  save_checkpoint(*result.best, a.common.out);
  err << "grid: best K=" << result.best->config.embedding << " H=" << result.best->config.hidden;
  if (uses_topics(base.variant)) err << " M=" << result.best->config.topics;
  err << " dev perplexity " << format_double(result.best->dev_perplexity) << "\n";
}

// ---- evaluation ----

struct EvalArgs {
  std::string checkpoint;
  std::string test;
  std::string lda;
  std::string topics;
};

void add_eval_options(CLI::App* sub, EvalArgs& a) {
  sub->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required();
  sub->add_option("--test", a.test, "Encoded evaluation corpus")->required();
  sub->add_option("--lda", a.lda, "Topic model (default: the one recorded in the checkpoint)");
}

std::optional<TopicModel> checkpoint_topic_model(const Checkpoint& cp, const std::string& flag) {
  if (!uses_topics(cp.config.variant)) return std::nullopt;
  const std::string path = flag.empty() ? cp.config.lda_path : flag;
  if (path.empty()) {
    throw std::invalid_argument(std::string(variant_name(cp.config.variant)) +
                                " checkpoint needs --lda");
  }
  return load_topic_model(path, cp.config.topics, cp.config.vocab_size);
}

void add_eval_ppl(CLI::App& app, EvalArgs& a) {
  auto* sub = app.add_subcommand("eval-ppl", "Test-set perplexity");
  add_eval_options(sub, a);
  sub->add_option("--topics", a.topics, "Topic cache for the evaluation corpus");
}

void run_eval_ppl(const EvalArgs& a, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(a.checkpoint);
  EncodedCorpus test = load_corpus_checked(a.test, cp.config.vocab_size);
  std::optional<TopicModel> model;
  if (a.topics.empty()) model = checkpoint_topic_model(cp, a.lda);
  const std::size_t n = test.conversations.size();
  const Dataset data = dataset_for(cp.config, std::move(test.conversations), {a.lda, a.topics},
                                   model ? &*model : nullptr);
  out << "model\tperplexity\tn_conversations\n"
      << variant_name(cp.config.variant) << "\t" << format_double(perplexity(cp, data)) << "\t"
      << n << "\n";
}

struct EvalRankArgs {
  EvalArgs common;
  std::vector<std::size_t> ks{1, 2};
  std::uint64_t seed = 1;
  std::string ranking_in;
  std::string ranking_out;
  std::string results;
  std::string name;
};

void add_eval_rank(CLI::App& app, EvalRankArgs& a) {
  auto* sub = app.add_subcommand("eval-rank", "Recall@K response ranking");
  add_eval_options(sub, a.common);
  sub->add_option("--k", a.ks, "Comma-separated K values")->delimiter(',')->capture_default_str();
  sub->add_option("--seed", a.seed, "Negative sampling seed")->capture_default_str();
  sub->add_option("--ranking-in", a.ranking_in, "Reuse a saved ranking set")
      ->check(CLI::ExistingFile);
  sub->add_option("--ranking-out", a.ranking_out, "Save the ranking set");
  sub->add_option("--results", a.results, "Results table output (tab-separated)");
  sub->add_option("--name", a.name, "Model name in the results table (default: variant)");
}

void run_eval_rank(const EvalRankArgs& a, std::ostream& out, std::ostream& err) {
  const Checkpoint cp = load_checkpoint(a.common.checkpoint);
  const EncodedCorpus test = load_corpus_checked(a.common.test, cp.config.vocab_size);
  const std::optional<TopicModel> model = checkpoint_topic_model(cp, a.common.lda);
  const RankingSet set = a.ranking_in.empty()
                             ? build_ranking_set(test.conversations, a.seed)
                             : load_ranking_set(test.conversations, a.ranking_in);
  if (!a.ranking_out.empty()) save_ranking_set(set, test.conversations, a.ranking_out);
  err << "eval-rank: " << set.instances.size() << " instances, " << set.skipped << " skipped\n";
  const auto scored = score_ranking_set(cp.params, test.conversations, set.instances,
                                        model ? &*model : nullptr, cp.config.lda_sweeps,
                                        cp.config.lda_seed);
  std::vector<RecallRow> rows;
  const std::string name = a.name.empty() ? std::string(variant_name(cp.config.variant)) : a.name;
  for (std::size_t k : a.ks) {
    rows.push_back({name, k, recall_at_k(scored, k), set.instances.size(), set.skipped});
  }
  std::ostringstream table;
  write_recall_table(table, rows);
  if (!a.results.empty()) write_text_file(a.results, table.str());
  out << table.str();
}

// ---- analyze-roles ----

struct AnalyzeArgs {
  std::string input;
  std::size_t min_count = 6000;
  std::size_t top = 15;
  std::size_t min_turns = 6;
  std::size_t max_turns = 20;
};

void add_analyze(CLI::App& app, AnalyzeArgs& a) {
  auto* sub = app.add_subcommand("analyze-roles", "Role likelihood-ratio word lists");
  sub->add_option("--input", a.input, "Corpus file (one JSON conversation per line)")->required();
  sub->add_option("--min-count", a.min_count, "Only words with a larger total count")
      ->capture_default_str();
  sub->add_option("--top", a.top, "Words per role")->capture_default_str();
  sub->add_option("--min-turns", a.min_turns, "Minimum turns per conversation")
      ->capture_default_str();
  sub->add_option("--max-turns", a.max_turns, "Maximum turns per conversation")
      ->capture_default_str();
}

void run_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const IngestResult ingested = ingest(a.input, a.min_turns, a.max_turns);
  const RoleWordLists lists = role_likelihood_ratio(ingested.conversations, a.min_count, a.top);
  out << "role\trank\tword\tratio\tcount\n";
  std::size_t rank = 0;
  for (const auto& e : lists.poster) {
    out << "poster\t" << ++rank << "\t" << e.word << "\t" << format_double(e.ratio) << "\t"
        << e.count << "\n";
  }
  rank = 0;
  for (const auto& e : lists.responder) {
    out << "responder\t" << ++rank << "\t" << e.word << "\t" << format_double(1.0 / e.ratio)
        << "\t" << e.count << "\n";
  }
}

// ---- generate ----

struct GenerateArgs {
  std::string checkpoint;
  std::string context_file;
  std::string vocab;
  std::string lda;
  std::string role;
  std::string strategy = "greedy";
  double temperature = 1.0;
  std::size_t max_len = 40;
  std::uint64_t seed = 1;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* sub = app.add_subcommand("generate", "Generate the next turn for a role");
  sub->add_option("--checkpoint", a.checkpoint, "Model checkpoint")->required();
  sub->add_option("--context-file", a.context_file,
                  "One conversation record (JSON) holding the context turns")
      ->required();
  sub->add_option("--vocab", a.vocab, "Vocabulary (default: the one recorded in the checkpoint)");
  sub->add_option("--lda", a.lda, "Topic model (default: the one recorded in the checkpoint)");
  sub->add_option("--role", a.role, "Role of the generated turn")->check(CLI::IsMember(kRoleNames));
  sub->add_option("--strategy", a.strategy, "Decoding strategy")
      ->check(CLI::IsMember({"greedy", "sample"}))
      ->capture_default_str();
  sub->add_option("--temperature", a.temperature, "Sampling temperature")->capture_default_str();
  sub->add_option("--max-len", a.max_len, "Maximum generated tokens")->capture_default_str();
  sub->add_option("--seed", a.seed, "Sampling seed")->capture_default_str();
}

void run_generate(const GenerateArgs& a, std::ostream& out) {
  const Checkpoint cp = load_checkpoint(a.checkpoint);
  const std::string vocab_path = a.vocab.empty() ? cp.vocab_ref : a.vocab;
  if (vocab_path.empty()) throw std::invalid_argument("checkpoint records no vocabulary; pass --vocab");
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  if (vocab.size() != cp.config.vocab_size) {
    throw std::invalid_argument(vocab_path + ": vocabulary size does not match the checkpoint");
  }
  const std::optional<TopicModel> model = checkpoint_topic_model(cp, a.lda);
  const Conversation context = parse_conversation_record(trim(read_text_file(a.context_file)));
  const EncodedConversation encoded = encode(context, vocab);

  GenerateOptions options;
  options.strategy = *parse_strategy(a.strategy);
  options.temperature = a.temperature;
  options.max_len = a.max_len;
  options.seed = a.seed;
  options.lda_sweeps = cp.config.lda_sweeps;
  options.lda_seed = cp.config.lda_seed;
  std::optional<Role> role;
  if (!a.role.empty()) role = parse_role(a.role);
  const auto gen = generate(cp.params, std::span<const EncodedTurn>(encoded.turns), role, options,
                            model ? &*model : nullptr);
  out << detokenize(gen.tokens, vocab) << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Role- and topic-conditioned conversation language models", "rclm"};
  // "--h" is the hidden-size flag, so help is long-form only.
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  PrepareArgs prepare;
  LdaTrainArgs lda_train;
  LdaCacheArgs lda_cache;
  TrainArgs train;
  GridArgs grid;
  EvalArgs eval_ppl;
  EvalRankArgs eval_rank;
  AnalyzeArgs analyze;
  GenerateArgs gen;
  add_prepare(app, prepare);
  add_lda_train(app, lda_train);
  add_lda_cache(app, lda_cache);
  add_train(app, train);
  add_grid(app, grid);
  add_eval_ppl(app, eval_ppl);
  add_eval_rank(app, eval_rank);
  add_analyze(app, analyze);
  add_generate(app, gen);
  std::string config_path;
  for (CLI::App* sub : app.get_subcommands({})) {
    sub->add_option("--config", config_path, "Flat key=value file supplying any flag");
  }

  if (!args.empty() && !args[0].starts_with("-") &&
      app.get_subcommand_no_throw(args[0]) == nullptr) {
    err << "error: unknown subcommand \"" << args[0] << "\"\n" << app.help();
    return static_cast<int>(CLI::ExitCodes::ExtrasError);
  }
  try {
    std::vector<std::string> merged = merge_config(app, args);
    // CLI11 consumes the vector from the back.
    std::reverse(merged.begin(), merged.end());
    app.parse(merged);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand("prepare")) run_prepare(prepare, err);
    else if (app.got_subcommand("lda-train")) run_lda_train(lda_train, err);
    else if (app.got_subcommand("lda-cache")) run_lda_cache(lda_cache, err);
    else if (app.got_subcommand("train")) run_train(train, err);
    else if (app.got_subcommand("grid")) run_grid(grid, out, err);
    else if (app.got_subcommand("eval-ppl")) run_eval_ppl(eval_ppl, out);
    else if (app.got_subcommand("eval-rank")) run_eval_rank(eval_rank, out, err);
    else if (app.got_subcommand("analyze-roles")) run_analyze(analyze, out);
    else if (app.got_subcommand("generate")) run_generate(gen, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace rclm::cli
