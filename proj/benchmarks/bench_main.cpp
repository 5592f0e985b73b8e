#include <benchmark/benchmark.h>

#include <complex>
#include <vector>

#include "gdse/diffusion.hpp"
#include "gdse/guided_sampler.hpp"
#include "gdse/noise_model.hpp"
#include "gdse/numerics/ops.hpp"
#include "gdse/spectral.hpp"

using namespace gdse;

static void BM_Conv1dForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const auto xv = rng.normal_vector(16 * n);
  const auto wv = rng.normal_vector(16 * 16 * 3);
  for (auto _ : state) {
    Tape tape;
    Var x = tape.input(xv, 16, n, true);
    Var w = tape.input(wv, 16, 16 * 3, true);
    Var y = conv1d(x, w, ConvGeometry::same(3, 4));
    tape.backward(sum(y));
    benchmark::DoNotOptimize(x.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n));
}
BENCHMARK(BM_Conv1dForwardBackward)->Arg(2048)->Arg(16000);

static void BM_Fft(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  std::vector<std::complex<double>> x(n);
  for (auto& c : x) c = rng.normal();
  for (auto _ : state) {
    auto y = x;
    fft(y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Fft)->Arg(512)->Arg(4096);

static void BM_Stft(benchmark::State& state) {
  Rng rng(3);
  const auto x = rng.normal_vector(16000);
  for (auto _ : state) benchmark::DoNotOptimize(stft(x).data.data());
}
BENCHMARK(BM_Stft);

static void BM_NoiseModelLossAndGradient(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = DiffusionSchedule::linear(50, 1e-4, 0.05);
  Rng rng(4);
  const NoiseModel m({}, s.fingerprint(), rng);
  const auto v = rng.normal_vector(n);
  std::vector<double> grad;
  for (auto _ : state) benchmark::DoNotOptimize(m.loss_and_input_gradient(10, v, &grad));
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n));
}
BENCHMARK(BM_NoiseModelLossAndGradient)->Arg(8000)->Arg(16000);

static void BM_EnhanceStep(benchmark::State& state) {
  const std::size_t n = 8000;
  const auto s = DiffusionSchedule::linear(1, 1e-4, 1e-4);
  Rng rng(5);
  const EpsilonNet net({}, rng);
  const NoiseModel nm({}, s.fingerprint(), rng);
  const auto y = rng.normal_vector(n);
  const auto gs = guidance_scale(s, 0.72, 0.7);
  for (auto _ : state) {
    Rng r(6);
    benchmark::DoNotOptimize(enhance(y, net, nm, s, gs, r).x0.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n));
}
BENCHMARK(BM_EnhanceStep);
BENCHMARK_MAIN();
