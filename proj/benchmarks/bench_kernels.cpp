#include <benchmark/benchmark.h>

#include <random>

#include "ecnet/ops.hpp"
#include "ecnet/synthetic.hpp"
#include "ecnet/trainer.hpp"

namespace {

using namespace ecnet;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  std::normal_distribution<double> dist(0.0, 0.5);
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void BM_Conv1dForward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(1);
  auto x = random_tensor({8, 32, d}, rng);
  auto w = random_tensor({d, d, 3}, rng);
  auto b = random_tensor({d}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv1d(x, w, b).data().data());
  state.SetItemsProcessed(state.iterations() * 8 * 32);
}
BENCHMARK(BM_Conv1dForward)->Arg(16)->Arg(64)->Arg(128);

void BM_Conv1dBackward(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  auto x = random_tensor({8, 32, d}, rng, true);
  auto w = random_tensor({d, d, 3}, rng, true);
  auto b = random_tensor({d}, rng, true);
  for (auto _ : state) {
    ops::sum(ops::conv1d(x, w, b)).backward();
  }
}
BENCHMARK(BM_Conv1dBackward)->Arg(16)->Arg(64);

void BM_Attention(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  auto q = random_tensor({8, t, 64}, rng);
  auto k = random_tensor({8, t, 64}, rng);
  auto v = random_tensor({8, t, 64}, rng);
  std::vector<std::uint8_t> mask(8 * t, 1);
  for (auto _ : state) benchmark::DoNotOptimize(ops::attention(q, k, v, 4, mask).data().data());
}
BENCHMARK(BM_Attention)->Arg(12)->Arg(32)->Arg(64);

void BM_DeskTrainStep(benchmark::State& state) {
  const auto corpus = make_synthetic_corpus();
  auto cfg = ModelConfig::desk();
  cfg.classes = corpus.labels.names();
  EcNet model(cfg, std::make_shared<const WordTable>(corpus.vectors));
  Adam adam(cfg.optim);
  std::mt19937_64 rng(4);
  const auto batches = make_batches(corpus.train, cfg.optim.batch_size, 5);
  std::size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(model, adam, batches[i++ % batches.size()], corpus.train,
                                        cfg.optim.lr, rng));
  }
}
BENCHMARK(BM_DeskTrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
