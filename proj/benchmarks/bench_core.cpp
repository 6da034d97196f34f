#include <benchmark/benchmark.h>

#include <cstdint>
#include <random>
#include <vector>

#include "bistream/autodiff.hpp"
#include "bistream/curation.hpp"
#include "bistream/metrics.hpp"
#include "bistream/model.hpp"
#include "bistream/tensor.hpp"

namespace {

bistream::Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
  std::size_t count = 1;
  for (std::size_t e : shape) count *= e;
  std::vector<double> values(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (auto& v : values) v = dist(rng);
  return bistream::Tensor::from(std::move(shape), std::move(values));
}

bistream::SaliencyMap random_pred(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::vector<double> v(h * w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& x : v) x = dist(rng);
  return {h, w, std::move(v)};
}

bistream::GroundTruthMask random_mask(std::size_t h, std::size_t w, std::uint64_t seed) {
  std::vector<std::uint8_t> v(h * w);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (auto& x : v) x = dist(rng) < 0.3 ? 1 : 0;
  return {h, w, std::move(v)};
}

void conv_forward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor({16, 64, 64}, 1);
  const auto w = random_tensor({16, 16, k, k}, 2);
  const auto b = random_tensor({16}, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bistream::conv2d(x, w, b));
  }
}
BENCHMARK(conv_forward)->Arg(1)->Arg(3);

void conv_backward(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  const auto x0 = random_tensor({16, 64, 64}, 1);
  const auto w0 = random_tensor({16, 16, k, k}, 2);
  const auto b0 = random_tensor({16}, 3);
  for (auto _ : state) {
    bistream::Tape tape;
    auto x = tape.var(x0);
    auto w = tape.var(w0);
    auto b = tape.var(b0);
    auto y = bistream::sum(bistream::conv2d(x, w, b));
    bistream::backward(y);
    benchmark::DoNotOptimize(w.grad());
  }
}
BENCHMARK(conv_backward)->Arg(1)->Arg(3);

void weighted_f_128(benchmark::State& state) {
  const auto pred = random_pred(128, 128, 7);
  const auto gt = random_mask(128, 128, 8);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bistream::weighted_f(pred, gt));
  }
}
BENCHMARK(weighted_f_128);

void pr_curve_128(benchmark::State& state) {
  std::vector<bistream::EvalPair> pairs;
  pairs.push_back({random_pred(128, 128, 7), random_mask(128, 128, 8)});
  for (auto _ : state) {
    benchmark::DoNotOptimize(bistream::pr_curve(pairs));
  }
}
BENCHMARK(pr_curve_128);

void net_forward_64(benchmark::State& state) {
  const auto net = bistream::build(11);
  const auto image = random_tensor({3, 64, 64}, 4);
  for (auto _ : state) {
    benchmark::DoNotOptimize(bistream::forward(net, image));
  }
}
BENCHMARK(net_forward_64);

void balanced_sampling(benchmark::State& state) {
  std::vector<bistream::ManifestRecord> records;
  for (int c = 0; c < 200; ++c) {
    const int n = 1 + (c * c + 3 * c) % 50;
    for (int i = 0; i < n; ++i) {
      records.push_back({"img" + std::to_string(c) + "_" + std::to_string(i),
                         bistream::SourceDataset::DutsTr, "cat" + std::to_string(c), false});
    }
  }
  const bistream::SamplingPlan plan{10, 20, 10, 99};
  for (auto _ : state) {
    benchmark::DoNotOptimize(bistream::balanced_sample(records, plan));
  }
}
BENCHMARK(balanced_sampling);

}  // namespace

BENCHMARK_MAIN();
