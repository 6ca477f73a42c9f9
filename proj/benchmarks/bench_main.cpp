#include <benchmark/benchmark.h>

#include <random>

#include "ssdlab/data/scene.hpp"
#include "ssdlab/detector/loss.hpp"
#include "ssdlab/detector/model.hpp"
#include "ssdlab/diff/ops.hpp"
#include "ssdlab/eval/metrics.hpp"
#include "ssdlab/selftrain/selftrain.hpp"

using namespace ssdlab;
using diff::Tensor;

namespace {

Tensor random_tensor(diff::Shape shape, std::uint64_t seed, bool requires_grad = false) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(diff::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto channels = static_cast<std::size_t>(state.range(0));
  auto x = random_tensor({4, channels, 32, 32}, 1, true);
  auto w = random_tensor({channels, channels, 3, 3}, 2, true);
  auto b = random_tensor({channels}, 3, true);
  for (auto _ : state) {
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
    diff::backward(diff::reduce_sum(diff::conv2d(x, w, b, {1, 1})));
    benchmark::DoNotOptimize(w.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * 4 * 32 * 32 * channels * channels * 9);
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_DetectorForward(benchmark::State& state) {
  const auto model = detector::init_detector(detector::DetectorConfig{}, 1);
  const auto images = random_tensor({static_cast<std::size_t>(state.range(0)), 3, 64, 64}, 4);
  diff::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(detector::forward(model, images).cls_logits.data().data());
}
BENCHMARK(BM_DetectorForward)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_SupervisedStep(benchmark::State& state) {
  auto spec = data::SceneSpec::preset(3);
  const auto ds = data::generate_dataset(spec, 16);
  selftrain::SelfTrainConfig cfg;
  cfg.policy.fill = ds.channel_mean();
  selftrain::BatchSampler sampler(ds, ds.ids(), {}, cfg, 1);
  auto ts = selftrain::TeacherStudentState::create(detector::init_detector(detector::DetectorConfig{}, 1), cfg);
  for (auto _ : state) {
    selftrain::TrainBatch batch{sampler.next_labeled(), {}};
    benchmark::DoNotOptimize(selftrain::train_step(ts, batch, cfg).total);
  }
}
BENCHMARK(BM_SupervisedStep)->Unit(benchmark::kMillisecond);

void BM_TeacherStudentStep(benchmark::State& state) {
  auto spec = data::SceneSpec::preset(3);
  const auto ds = data::generate_dataset(spec, 16);
  selftrain::SelfTrainConfig cfg;
  cfg.policy.fill = ds.channel_mean();
  cfg.tau = 0.0;  // worst case: every decoded box becomes a pseudo-label
  std::vector<int> labeled{1, 2, 3, 4, 5, 6, 7, 8}, unlabeled{9, 10, 11, 12, 13, 14, 15, 16};
  selftrain::BatchSampler sampler(ds, labeled, unlabeled, cfg, 1);
  auto ts = selftrain::TeacherStudentState::create(detector::init_detector(detector::DetectorConfig{}, 1), cfg);
  for (auto _ : state) {
    selftrain::TrainBatch batch{sampler.next_labeled(), sampler.next_unlabeled()};
    benchmark::DoNotOptimize(selftrain::train_step(ts, batch, cfg).total);
  }
}
BENCHMARK(BM_TeacherStudentStep)->Unit(benchmark::kMillisecond);

void BM_MapCoco(benchmark::State& state) {
  const auto n_images = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  std::uniform_real_distribution<double> pos(0, 48), size(4, 16), score(0, 1);
  std::uniform_int_distribution<int> cls(0, 2);
  std::vector<eval::ImageResult> images(n_images);
  for (auto& im : images) {
    for (int g = 0; g < 4; ++g) {
      const double x = pos(rng), y = pos(rng);
      im.ground_truth.push_back(Box{x, y, x + size(rng), y + size(rng), cls(rng), std::nullopt});
    }
    for (int d = 0; d < 50; ++d) {
      const double x = pos(rng), y = pos(rng);
      im.detections.push_back(Box{x, y, x + size(rng), y + size(rng), cls(rng), score(rng)});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(eval::map_coco(images, 3).map_50_95);
}
BENCHMARK(BM_MapCoco)->Arg(128)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
