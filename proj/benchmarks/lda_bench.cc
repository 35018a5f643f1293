#include <benchmark/benchmark.h>

#include <random>

#include "rclm/lda.h"

namespace rclm {
namespace {

std::vector<std::vector<TokenId>> random_documents(std::size_t docs, std::size_t length,
                                                   std::size_t vocab) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<TokenId> id(3, static_cast<TokenId>(vocab - 1));
  std::vector<std::vector<TokenId>> out(docs);
  for (auto& d : out) {
    for (std::size_t i = 0; i < length; ++i) d.push_back(id(rng));
  }
  return out;
}

void BM_TrainLda(benchmark::State& state) {
  const auto docs = random_documents(500, 80, 5000);
  LdaOptions o;
  o.topics = static_cast<std::size_t>(state.range(0));
  o.iterations = 10;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_lda(docs, 5000, o));
  }
  // Token visits across all sweeps.
  state.SetItemsProcessed(state.iterations() * 500 * 80 * o.iterations);
}
BENCHMARK(BM_TrainLda)->Arg(50)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_InferTopic(benchmark::State& state) {
  const auto docs = random_documents(200, 80, 5000);
  LdaOptions o;
  o.topics = static_cast<std::size_t>(state.range(0));
  o.iterations = 5;
  const TopicModel model = train_lda(docs, 5000, o);
  const auto bag = random_documents(1, 60, 5000).front();
  for (auto _ : state) {
    benchmark::DoNotOptimize(infer_topic(model, bag));
  }
}
BENCHMARK(BM_InferTopic)->Arg(50)->Arg(100)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace rclm
