#include "rclm/lda.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "synthetic.h"

namespace rclm {
namespace {

double simplex_gap(std::span<const double> v) {
  return std::abs(std::accumulate(v.begin(), v.end(), 0.0) - 1.0);
}

// Fraction of the top-`n` words of each recovered topic that belong to its
// best-matching planted block.
double purity(const TopicModel& model, const testing::PlantedDocuments& docs, std::size_t n) {
  double worst = 1.0;
  for (std::size_t k = 0; k < model.topics(); ++k) {
    std::vector<TokenId> ids(model.vocab_size());
    std::iota(ids.begin(), ids.end(), 0);
    std::partial_sort(ids.begin(), ids.begin() + n, ids.end(), [&](TokenId a, TokenId b) {
      return model.phi(k, a) > model.phi(k, b);
    });
    std::vector<std::size_t> hits(model.topics(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (ids[i] >= docs.offset) ++hits[docs.topic_of(ids[i])];
    }
    worst = std::min(worst, static_cast<double>(*std::max_element(hits.begin(), hits.end())) / n);
  }
  return worst;
}

TEST(TopicVector, Validation) {
  EXPECT_NO_THROW(TopicVector({0.5, 0.5}));
  EXPECT_THROW(TopicVector({0.5, 0.6}), std::invalid_argument);
  EXPECT_THROW(TopicVector({1.2, -0.2}), std::invalid_argument);
  const TopicVector u = TopicVector::uniform(4);
  for (double v : u.values()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(TrainLda, SingleTopicEqualsSmoothedUnigram) {
  const auto docs = testing::planted_documents(3, 10, 40, 30, 0.7, 3);
  LdaOptions o;
  o.topics = 1;
  o.iterations = 5;
  const TopicModel model = train_lda(docs.documents, docs.vocab_size, o);
  std::vector<double> counts(docs.vocab_size, 0);
  double n = 0;
  for (const auto& d : docs.documents) {
    for (TokenId w : d) counts[w] += 1, n += 1;
  }
  const double v = static_cast<double>(docs.vocab_size);
  for (std::size_t w = 0; w < docs.vocab_size; ++w) {
    EXPECT_NEAR(model.phi(0, static_cast<TokenId>(w)), (counts[w] + o.beta) / (n + v * o.beta),
                1e-12);
  }
}

TEST(TrainLda, RecoversPlantedTopics) {
  const auto docs = testing::planted_documents(2, 50, 500, 40, 0.9, 11);
  LdaOptions o;
  o.topics = 2;
  o.iterations = 200;
  o.alpha = 0.1;
  o.seed = 3;
  const TopicModel model = train_lda(docs.documents, docs.vocab_size, o);
  EXPECT_GE(purity(model, docs, 50), 0.9);
}

TEST(TrainLda, Errors) {
  const std::vector<std::vector<TokenId>> docs{{3, 4}, {4, 5}};
  LdaOptions o;
  o.topics = 0;
  EXPECT_THROW(train_lda(docs, 6, o), std::invalid_argument);
  o.topics = 4;  // only 3 distinct tokens
  EXPECT_THROW(train_lda(docs, 6, o), std::invalid_argument);
  o.topics = 2;
  o.iterations = 0;
  EXPECT_THROW(train_lda(docs, 6, o), std::invalid_argument);
  o.iterations = 5;
  EXPECT_THROW(train_lda(std::vector<std::vector<TokenId>>{{}, {}}, 6, o), std::invalid_argument);
}

TEST(TrainLdaProperty, RowsOnSimplexAndBitReproducible) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto docs = testing::planted_documents(3, 8, 30, 20, 0.8, seed);
    LdaOptions o;
    o.topics = 1 + seed % 4;
    o.iterations = 20;
    o.seed = seed;
    const TopicModel a = train_lda(docs.documents, docs.vocab_size, o);
    const TopicModel b = train_lda(docs.documents, docs.vocab_size, o);
    EXPECT_EQ(a.phi(), b.phi());
    for (std::size_t k = 0; k < a.topics(); ++k) {
      EXPECT_LT(simplex_gap(a.phi().row(k)), 1e-6);
      for (double v : a.phi().row(k)) EXPECT_GT(v, 0.0);
    }
    const auto bag = docs.documents[0];
    EXPECT_EQ(infer_topic(a, bag, 30, seed), infer_topic(b, bag, 30, seed));
  }
}

class PlantedModel : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    docs_ = new testing::PlantedDocuments(testing::planted_documents(2, 50, 500, 40, 0.9, 11));
    LdaOptions o;
    o.topics = 2;
    o.alpha = 0.1;
    o.seed = 3;
    model_ = new TopicModel(train_lda(docs_->documents, docs_->vocab_size, o));
  }
  static void TearDownTestSuite() {
    delete docs_;
    delete model_;
  }
  // Recovered topic whose top word lies in planted block `planted`.
  static std::size_t recovered(std::size_t planted) {
    for (std::size_t k = 0; k < model_->topics(); ++k) {
      auto row = model_->phi().row(k);
      const auto top = static_cast<TokenId>(std::max_element(row.begin(), row.end()) - row.begin());
      if (docs_->topic_of(top) == planted) return k;
    }
    return 0;
  }
  static std::vector<TokenId> block_bag(std::size_t planted, std::size_t n) {
    std::vector<TokenId> bag;
    for (std::size_t i = 0; i < n; ++i) {
      bag.push_back(static_cast<TokenId>(docs_->offset + planted * docs_->words_per_topic +
                                         (i * 7) % docs_->words_per_topic));
    }
    return bag;
  }
  static testing::PlantedDocuments* docs_;
  static TopicModel* model_;
};
testing::PlantedDocuments* PlantedModel::docs_ = nullptr;
TopicModel* PlantedModel::model_ = nullptr;

TEST_F(PlantedModel, InferenceSpecExamples) {
  const TopicVector empty = infer_topic(*model_, {}, 50, 1);
  EXPECT_EQ(empty, TopicVector::uniform(2));
  const TopicVector s = infer_topic(*model_, block_bag(1, 20), 50, 1);
  EXPECT_GE(s[recovered(1)], 0.9);
  EXPECT_LT(simplex_gap(s.values()), 1e-6);
}

TEST_F(PlantedModel, ContextVectorsAreCausal) {
  EncodedConversation conv;
  auto turn_of = [](std::vector<TokenId> words) {
    EncodedTurn t;
    t.ids.push_back(1);
    t.ids.insert(t.ids.end(), words.begin(), words.end());
    t.ids.push_back(2);
    return t;
  };
  conv.turns.push_back(turn_of(block_bag(1, 10)));
  conv.turns.push_back(turn_of(block_bag(1, 10)));
  conv.turns.push_back(turn_of(block_bag(0, 10)));
  const auto vectors = context_topic_vectors(conv, *model_, 50, 5);
  ASSERT_EQ(vectors.size(), 3u);
  EXPECT_EQ(vectors[0], TopicVector::uniform(2));
  EXPECT_GE(vectors[2][recovered(1)], 0.9);

  // Changing the last turn leaves every entry unchanged.
  EncodedConversation changed = conv;
  changed.turns[2] = turn_of(block_bag(1, 3));
  EXPECT_EQ(context_topic_vectors(changed, *model_, 50, 5), vectors);

  // Entry t equals the history vector of turns [0, t).
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_EQ(history_topic_vector(std::span(conv.turns).first(t), *model_, 50, 5), vectors[t]);
  }

  EncodedConversation single;
  single.turns.push_back(conv.turns[0]);
  EXPECT_EQ(context_topic_vectors(single, *model_),
            std::vector<TopicVector>{TopicVector::uniform(2)});
}

// Sampling order follows topic labels, so relabelled output agrees with the
// permuted original only up to sampling noise.
TEST_F(PlantedModel, LabelPermutationSymmetry) {
  const std::vector<std::size_t> perm{1, 0};
  const TopicModel swapped = model_->permuted(perm);
  std::vector<TokenId> bag = block_bag(0, 12);
  const auto more = block_bag(1, 6);
  bag.insert(bag.end(), more.begin(), more.end());
  const TopicVector a = infer_topic(*model_, bag, 500, 2);
  const TopicVector b = infer_topic(swapped, bag, 500, 2);
  for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(a[k], b[perm[k]], 0.05);
}

TEST_F(PlantedModel, FileRoundTrip) {
  std::stringstream buf;
  model_->write(buf);
  EXPECT_EQ(buf.str().rfind("RCLM-LDA 1\n2\n", 0), 0u);
  const TopicModel back = TopicModel::read(buf);
  EXPECT_EQ(back.phi(), model_->phi());
  EXPECT_EQ(back.alpha(), model_->alpha());
  EXPECT_EQ(back.beta(), model_->beta());
  EXPECT_EQ(back.seed(), model_->seed());
  std::stringstream bad("RCLM-LDA 2\n");
  EXPECT_THROW(TopicModel::read(bad), std::runtime_error);
}

TEST_F(PlantedModel, TopicCacheRoundTrip) {
  testing::TempDir dir;
  std::mt19937_64 rng(4);
  std::vector<EncodedConversation> convs;
  for (int i = 0; i < 3; ++i) {
    convs.push_back(testing::random_conversation(rng, docs_->vocab_size, 4, 5));
    convs.back().id = "c" + std::to_string(i);
  }
  const TopicCache cache = TopicCache::build(convs, *model_, 20, 9);
  cache.save(dir.file("t.cache"));
  const TopicCache back = TopicCache::load(dir.file("t.cache"));
  EXPECT_EQ(back.topics(), 2u);
  for (const auto& c : convs) {
    EXPECT_EQ(back.at(c.id), context_topic_vectors(c, *model_, 20, 9));
  }
  EXPECT_THROW(back.at("nope"), std::out_of_range);
  TopicCache bad(2);
  EXPECT_THROW(bad.put("a\tb", {TopicVector::uniform(2)}), std::invalid_argument);
}

TEST(TopicBag, ExcludesReservedIds) {
  EncodedTurn t{Role::kPoster, {1, 0, 5, 7, 0, 2}};
  EXPECT_EQ(topic_bag(t), (std::vector<TokenId>{5, 7}));
}

}  // namespace
}  // namespace rclm
