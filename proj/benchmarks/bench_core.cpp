#include <benchmark/benchmark.h>

#include "cmc/evalx.hpp"
#include "cmc/features.hpp"
#include "cmc/forest.hpp"
#include "cmc/phantom.hpp"
#include "cmc/pipelines.hpp"
#include "cmc/register.hpp"

using namespace cmc;

namespace {

struct Fixture {
  PhantomCase clean, moved;
  HybridForest sa2d, sa3d;
  TrainingSet train;
};

// One phantom and two small models, built once.
const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture x;
    x.clean = generate_phantom(PhantomConfig{}, 11);
    x.moved = inject_motion(x.clean, 3.0, 2, 12);
    ForestConfig fc;
    fc.n_trees = 2;
    fc.n_candidate_splits = 60;
    x.train = build_training_set({&x.clean}, ModelKind::sa2d, 10000);
    x.sa2d = train_forest(x.train, fc);
    x.sa3d = train_forest(build_training_set({&x.clean}, ModelKind::sa3d, 10000), fc);
    return x;
  }();
  return f;
}

void BM_compute_channels(benchmark::State& state) {
  const PlanarImage& slice = fixture().clean.sa_stack[4];
  for (auto _ : state) benchmark::DoNotOptimize(compute_channels(slice));
}
BENCHMARK(BM_compute_channels)->Unit(benchmark::kMillisecond);

void BM_predict_psm(benchmark::State& state) {
  const Fixture& f = fixture();
  const PlanarImage& slice = f.clean.sa_stack[4];
  for (auto _ : state) benchmark::DoNotOptimize(predict_psm(slice, f.sa2d, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_predict_psm)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_train_forest(benchmark::State& state) {
  const Fixture& f = fixture();
  ForestConfig fc;
  fc.n_trees = 1;
  fc.n_candidate_splits = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(train_forest(f.train, fc));
}
BENCHMARK(BM_train_forest)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_register_2d(benchmark::State& state) {
  const Fixture& f = fixture();
  const PlanarImage& moving = f.moved.sa_stack[5];
  const PlanarImage& fixed = f.clean.sa_stack[5];
  Register2DConfig cfg;
  cfg.metric = state.range(0) ? Metric::nmi : Metric::ncc;
  for (auto _ : state) benchmark::DoNotOptimize(register_translation_2d(moving, fixed, {}, cfg));
}
BENCHMARK(BM_register_2d)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_register_3d(benchmark::State& state) {
  const Fixture& f = fixture();
  const Volume& fixed = f.clean.a3d_seg;
  Register3DConfig cfg;
  cfg.radius_mm = 6.0;
  for (auto _ : state) benchmark::DoNotOptimize(register_translation_3d(f.moved.a3d_seg, fixed, cfg, 2));
}
BENCHMARK(BM_register_3d)->Unit(benchmark::kMillisecond);

void BM_mc_3d_psm(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(mc_3d_psm(f.moved.sa_stack, f.sa2d, f.sa3d));
}
BENCHMARK(BM_mc_3d_psm)->Unit(benchmark::kMillisecond)->Iterations(2);

void BM_evaluate_correction(benchmark::State& state) {
  const Fixture& f = fixture();
  std::vector<Vec2> inv;
  for (const Vec2& t : f.moved.gt_translations) inv.push_back(-t);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_correction(f.moved.a3d_seg, f.moved.sa_seg, inv));
}
BENCHMARK(BM_evaluate_correction)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
