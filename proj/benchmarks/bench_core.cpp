#include <benchmark/benchmark.h>

#include "supermix/classifier.hpp"
#include "supermix/dataset.hpp"
#include "supermix/kernels.hpp"
#include "supermix/mixing.hpp"
#include "supermix/objective.hpp"
#include "supermix/optimizer.hpp"

namespace {

using namespace supermix;

// Shared fixture: a small dataset and a briefly trained teacher so the
// optimizer benchmarks run against realistic gradients and predictions.
struct Fixture {
  SynthResult data;
  ClassifierSpec mlp;
  ClassifierSpec cnn;
  MixInput pair;
  MaskGrid raw;
  SoftLabel target;

  Fixture() : raw(2, 8, 8) {
    SynthSpec spec;
    spec.width = 16;
    spec.height = 16;
    spec.train_count = 256;
    spec.test_count = 64;
    Rng d(11);
    data = synth_dataset(spec, d);

    TrainSchedule ts;
    ts.lr = 0.02;
    ts.epochs = 4;
    ts.batch = 32;
    Rng mi(12), mt(13);
    mlp = make_classifier(Arch::Mlp, 16, 16, 3, 4, {32}, mi);
    mlp = train_classifier(std::move(mlp), data.train, ts, mt);
    Rng ci(14), ct(15);
    cnn = make_classifier(Arch::TinyCnn, 16, 16, 3, 4, {8, 12}, ci);
    cnn = train_classifier(std::move(cnn), data.train, ts, ct);

    pair.images = {data.train.images[0], data.train.images[1]};
    pair.teacher_classes = {predict_class(mlp, pair.images[0]),
                            predict_class(mlp, pair.images[1])};
    pair.weights = {0.5, 0.5};
    Rng rr(16);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Field2& f : raw.raw)
      for (double& v : f.data) v = u(rr);
    target = target_soft_label(pair.teacher_classes, pair.weights, 4);
  }
};

Fixture& fx() {
  static Fixture f;
  return f;
}

void BM_UpsampleBilinear(benchmark::State& state) {
  Field2 grid(8, 8);
  for (std::size_t i = 0; i < grid.data.size(); ++i) grid.data[i] = double(i) / 64.0;
  for (auto _ : state) benchmark::DoNotOptimize(upsample_bilinear(grid, 32, 32));
}
BENCHMARK(BM_UpsampleBilinear);

void BM_NormalizeMasks(benchmark::State& state) {
  const MaskGrid& raw = fx().raw;
  for (auto _ : state) benchmark::DoNotOptimize(normalize_masks(raw, 16, 16));
}
BENCHMARK(BM_NormalizeMasks);

void BM_Mix(benchmark::State& state) {
  const Fixture& f = fx();
  NormalizedMasks masks = normalize_masks(f.raw, 16, 16);
  for (auto _ : state) benchmark::DoNotOptimize(mix(f.pair, masks));
}
BENCHMARK(BM_Mix);

void BM_GaussianSmooth(benchmark::State& state) {
  GaussianKernel k = GaussianKernel::make(1.0);
  Field2 g(8, 8);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = double(i) / 64.0;
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_smooth(g, k));
}
BENCHMARK(BM_GaussianSmooth);

void BM_ForwardMlp(benchmark::State& state) {
  const Fixture& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.mlp, f.pair.images[0]));
}
BENCHMARK(BM_ForwardMlp);

void BM_ForwardTinyCnn(benchmark::State& state) {
  const Fixture& f = fx();
  for (auto _ : state) benchmark::DoNotOptimize(forward(f.cnn, f.pair.images[0]));
}
BENCHMARK(BM_ForwardTinyCnn);

void BM_LossAndGrad(benchmark::State& state) {
  const Fixture& f = fx();
  ObjectiveConfig cfg;
  for (auto _ : state)
    benchmark::DoNotOptimize(supermix_loss_and_grad(f.raw, f.pair, f.mlp, f.target, cfg));
}
BENCHMARK(BM_LossAndGrad);

void BM_NewtonStep(benchmark::State& state) {
  const Fixture& f = fx();
  ObjectiveConfig cfg;
  ObjectiveEval ev = supermix_loss_and_grad(f.raw, f.pair, f.mlp, f.target, cfg);
  for (auto _ : state)
    benchmark::DoNotOptimize(newton_step(ev.grad, ev.loss.total, 1e-12));
}
BENCHMARK(BM_NewtonStep);

void BM_SmoothNewtonStep(benchmark::State& state) {
  const Fixture& f = fx();
  ObjectiveConfig cfg;
  ObjectiveEval ev = supermix_loss_and_grad(f.raw, f.pair, f.mlp, f.target, cfg);
  GaussianKernel k = GaussianKernel::make(1.0);
  for (auto _ : state)
    benchmark::DoNotOptimize(smooth_newton_step(ev.grad, ev.loss.total, k, 1e-12));
}
BENCHMARK(BM_SmoothNewtonStep);

void BM_SupermixInstance(benchmark::State& state) {
  const Fixture& f = fx();
  SuperMixConfig cfg;
  cfg.method = static_cast<OptimMethod>(state.range(0));
  Rng rng(17);
  std::uniform_int_distribution<std::size_t> pick(0, f.data.train.images.size() - 1);
  for (auto _ : state) {
    MixInput in;
    in.images = {f.data.train.images[pick(rng)], f.data.train.images[pick(rng)]};
    benchmark::DoNotOptimize(supermix::supermix(std::move(in), f.mlp, cfg, rng));
  }
}
BENCHMARK(BM_SupermixInstance)
    ->Arg(static_cast<int>(OptimMethod::NewtonSp))
    ->Arg(static_cast<int>(OptimMethod::Newton))
    ->Arg(static_cast<int>(OptimMethod::Sgd))
    ->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
