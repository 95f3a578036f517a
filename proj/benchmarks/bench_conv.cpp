#include <benchmark/benchmark.h>

#include "gunet/model.hpp"
#include "gunet/ops.hpp"
#include "gunet/rng.hpp"
#include "gunet/train.hpp"

using namespace gunet;

namespace {

template <typename T>
Tensor<T> random_tensor(std::vector<std::int64_t> dims, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> t(std::move(dims));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(rng.normal());
  return t;
}

template <typename T>
void BM_correlate2d(benchmark::State& state) {
  const std::int64_t c = state.range(0), h = state.range(1);
  auto x = random_tensor<T>({c, h, h}, 1);
  auto w = random_tensor<T>({c, c, 3, 3}, 2);
  for (auto _ : state) {
    auto y = correlate2d(x, w, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * c * c * 9 * h * h);
}
BENCHMARK_TEMPLATE(BM_correlate2d, float)->Args({32, 33})->Args({64, 33})->Args({48, 97});
BENCHMARK_TEMPLATE(BM_correlate2d, double)->Args({32, 33})->Args({48, 97});

template <typename T>
void BM_group_conv(benchmark::State& state) {
  const std::int64_t c = state.range(0), h = state.range(1);
  auto spec = GroupSpec::p4m();
  auto f = make_group_feature_map(random_tensor<T>({1, c, 8, h, h}, 3), spec);
  auto bank = make_group_bank<T>(spec, c, c, 3);
  Rng rng(4);
  for (std::int64_t i = 0; i < bank.weights.size(); ++i) {
    bank.weights[i] = static_cast<T>(rng.normal());
  }
  for (auto _ : state) {
    auto y = group_conv_forward(f, bank, 1, 1);
    benchmark::DoNotOptimize(y.data.data());
  }
  state.SetItemsProcessed(state.iterations() * c * 8 * c * 8 * 9 * h * h);
}
BENCHMARK_TEMPLATE(BM_group_conv, float)->Args({6, 33})->Args({6, 97});
BENCHMARK_TEMPLATE(BM_group_conv, double)->Args({6, 33});

template <typename T>
void BM_model_forward(benchmark::State& state) {
  ArchitectureConfig cfg;
  cfg.group = GroupKind::p4m;
  cfg.depth = static_cast<int>(state.range(0));
  cfg.base_width = 16;
  auto model = GUNet<T>::build(cfg, 5);
  const std::int64_t size = state.range(1);
  auto x = random_tensor<T>({1, 3, size, size}, 6);
  for (auto _ : state) {
    auto y = model.forward(x, BatchNormMode::eval);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK_TEMPLATE(BM_model_forward, float)->Args({4, 97})->Args({2, 33})->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_model_forward, double)->Args({4, 97})->Unit(benchmark::kMillisecond);

template <typename T>
void BM_train_step(benchmark::State& state) {
  ArchitectureConfig cfg;
  cfg.group = GroupKind::p4m;
  cfg.depth = 2;
  cfg.base_width = 8;
  auto model = GUNet<T>::build(cfg, 7);
  const std::int64_t b = state.range(0);
  auto x = random_tensor<T>({b, 3, 33, 33}, 8);
  Tensor<std::uint8_t> y({b, 33, 33});
  auto params = model.parameters();
  auto adam = AdamState<T>::init(params);
  ModelCache<T> cache;
  for (auto _ : state) {
    auto logits = model.forward(x, BatchNormMode::train, &cache);
    auto loss = pixel_loss(logits, y);
    auto grads = model.backward(loss.grad, cache);
    adam_step(params, grads, adam, static_cast<T>(1e-3));
    benchmark::DoNotOptimize(loss.value);
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK_TEMPLATE(BM_train_step, float)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK_TEMPLATE(BM_train_step, double)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
