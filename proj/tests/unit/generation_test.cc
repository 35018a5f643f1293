#include "rclm/generation.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "synthetic.h"

namespace rclm {
namespace {

constexpr ModelDims kTiny{20, 8, 8, 4};

std::vector<EncodedTurn> context(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return testing::random_conversation(rng, 20, 3, 4).turns;
}

TEST(Generate, GreedyIsDeterministic) {
  const auto p = testing::randomized_params<float>(Variant::kRConv, kTiny, 1, 1.0);
  const auto ctx = context(1);
  GenerateOptions o;
  o.max_len = 15;
  const auto a = generate<float>(p, ctx, Role::kResponder, o);
  const auto b = generate<float>(p, ctx, Role::kResponder, o);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.terminated, b.terminated);
}

TEST(Generate, ForcedEndOfTurnGivesEmptyResponse) {
  auto p = ModelParams<float>::zeros(Variant::kBaseline, kTiny);
  for (std::size_t j = 0; j < 8; ++j) {
    p.gate_bias[j] = 30;
    p.gate_bias[16 + j] = 30;
    p.gate_bias[24 + j] = 30;
    p.output.at(Vocabulary::kEndTurn, j) = 10;
  }
  const auto g = generate<float>(p, context(2), std::nullopt, GenerateOptions{});
  EXPECT_TRUE(g.tokens.empty());
  EXPECT_TRUE(g.terminated);
}

TEST(GenerateProperty, BoundedLengthAndNoBeginToken) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto p = testing::randomized_params<float>(Variant::kRLdaConv, kTiny, seed, 2.0);
    // Make BOT the most likely token everywhere; it must still never appear.
    for (std::size_t j = 0; j < 12; ++j) p.output.at(Vocabulary::kBeginTurn, j) = 50;
    GenerateOptions o;
    o.strategy = seed % 2 ? DecodeStrategy::kSample : DecodeStrategy::kGreedy;
    o.max_len = 1 + seed % 7;
    o.seed = seed;
    const TopicVector s = TopicVector::uniform(4);
    const auto g = generate_from_state<float>(p, LstmState<float>::zero(8), Role::kPoster, &s, o);
    ASSERT_LE(g.tokens.size(), o.max_len);
    ASSERT_EQ(std::count(g.tokens.begin(), g.tokens.end(), Vocabulary::kBeginTurn), 0);
    ASSERT_EQ(std::count(g.tokens.begin(), g.tokens.end(), Vocabulary::kEndTurn), 0);
  }
}

TEST(Generate, SamplingReproducibleBySeed) {
  const auto p = testing::randomized_params<float>(Variant::kBaseline, kTiny, 3, 0.5);
  const auto ctx = context(3);
  GenerateOptions o;
  o.strategy = DecodeStrategy::kSample;
  o.temperature = 1.5;
  o.max_len = 30;
  o.seed = 77;
  const auto a = generate<float>(p, ctx, std::nullopt, o);
  EXPECT_EQ(a.tokens, generate<float>(p, ctx, std::nullopt, o).tokens);
  bool any_differs = false;
  for (std::uint64_t s = 1; s <= 5 && !any_differs; ++s) {
    o.seed = s;
    any_differs = generate<float>(p, ctx, std::nullopt, o).tokens != a.tokens;
  }
  EXPECT_TRUE(any_differs);
}

TEST(Generate, LowTemperatureApproachesGreedy) {
  const auto p = testing::randomized_params<double>(Variant::kBaseline, kTiny, 4, 1.5);
  const auto ctx = context(4);
  GenerateOptions greedy;
  greedy.max_len = 10;
  GenerateOptions cold = greedy;
  cold.strategy = DecodeStrategy::kSample;
  cold.temperature = 1e-3;
  EXPECT_EQ(generate<double>(p, ctx, std::nullopt, cold).tokens,
            generate<double>(p, ctx, std::nullopt, greedy).tokens);
}

TEST(Generate, RoleChangesFirstStepDistribution) {
  const auto p = testing::randomized_params<double>(Variant::kRConv, kTiny, 5, 0.5);
  ASSERT_NE(p.role_poster, p.role_responder);
  const auto state = run_turns<double>(p, context(5), LstmState<double>::zero(8));
  const auto after_bot = lstm_step(p, Vocabulary::kBeginTurn, state);
  const auto a = output_distribution<double>(p, after_bot.h, nullptr, Role::kPoster);
  const auto b = output_distribution<double>(p, after_bot.h, nullptr, Role::kResponder);
  EXPECT_FALSE(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
}

TEST(Generate, StateContinuesThroughGeneratedTurn) {
  const auto p = testing::randomized_params<double>(Variant::kRConv, kTiny, 6, 1.0);
  const auto ctx = context(6);
  GenerateOptions o;
  o.max_len = 3;
  const auto g = generate<double>(p, ctx, Role::kPoster, o);
  std::vector<EncodedTurn> full = ctx;
  EncodedTurn turn{Role::kPoster, {Vocabulary::kBeginTurn}};
  turn.ids.insert(turn.ids.end(), g.tokens.begin(), g.tokens.end());
  turn.ids.push_back(Vocabulary::kEndTurn);
  full.push_back(turn);
  const auto expected = run_turns(p, std::span(full), LstmState<double>::zero(8));
  EXPECT_EQ(g.state.h, expected.h);
  EXPECT_EQ(g.state.c, expected.c);
}

TEST(Generate, Errors) {
  const auto rconv = ModelParams<float>::initialized(Variant::kRConv, kTiny, 1);
  const auto lda = ModelParams<float>::initialized(Variant::kLdaConv, kTiny, 1);
  const auto ctx = context(7);
  EXPECT_THROW(generate<float>(rconv, ctx, std::nullopt, {}), std::invalid_argument);
  EXPECT_THROW(generate<float>(lda, ctx, std::nullopt, {}), std::invalid_argument);
  GenerateOptions zero;
  zero.max_len = 0;
  EXPECT_THROW(generate<float>(rconv, ctx, Role::kPoster, zero), std::invalid_argument);
  GenerateOptions cold;
  cold.strategy = DecodeStrategy::kSample;
  cold.temperature = 0;
  EXPECT_THROW(generate<float>(rconv, ctx, Role::kPoster, cold), std::invalid_argument);
}

TEST(Generate, TopicVariantUsesContextTopic) {
  const auto docs = testing::planted_documents(2, 8, 60, 20, 0.9, 1);
  LdaOptions lo;
  lo.topics = 4;
  lo.iterations = 10;
  const TopicModel model = train_lda(docs.documents, 20, lo);
  const auto p = testing::randomized_params<float>(Variant::kRLdaConv, kTiny, 8, 1.0);
  const auto ctx = context(8);
  GenerateOptions o;
  o.max_len = 12;
  const auto g = generate<float>(p, ctx, Role::kResponder, o, &model);
  const TopicVector s = history_topic_vector(ctx, model, o.lda_sweeps, o.lda_seed);
  const auto state = run_turns(p, std::span(ctx), LstmState<float>::zero(8));
  EXPECT_EQ(g.tokens, generate_from_state<float>(p, state, Role::kResponder, &s, o).tokens);
}

TEST(Detokenize, AttachesPunctuationRuns) {
  const Vocabulary v = Vocabulary::from_tokens({"how", "??", "you're", "right", ":)", "a"});
  const std::vector<TokenId> ids{v.id("how"), v.id("??"), v.id("you're"), v.id("right"),
                                 v.id(":)"), v.id("a")};
  EXPECT_EQ(detokenize(ids, v), "how?? you're right:) a");
  EXPECT_EQ(detokenize({}, v), "");
}

TEST(Strategy, Parse) {
  EXPECT_EQ(parse_strategy("greedy"), DecodeStrategy::kGreedy);
  EXPECT_EQ(parse_strategy("sample"), DecodeStrategy::kSample);
  EXPECT_EQ(parse_strategy("beam"), std::nullopt);
}

}  // namespace
}  // namespace rclm
