#include <benchmark/benchmark.h>

#include "bhia/curation.hpp"
#include "bhia/metrics.hpp"
#include "bhia/model.hpp"
#include "bhia/retrieval.hpp"
#include "bhia/rng.hpp"

using namespace bhia;

namespace {

Tensor synthetic(int w, int h, std::uint64_t seed) {
  Rng rng(seed);
  Tensor t(3, h, w);
  for (double& v : t.data) v = rng.uniform01();
  return t;
}

void BM_ColorHistogram(benchmark::State& state) {
  const Tensor img = synthetic(static_cast<int>(state.range(0)), static_cast<int>(state.range(0) * 2 / 3), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(compute_histogram(img, 8));
  }
  state.SetItemsProcessed(state.iterations() * img.height * img.width);
}
BENCHMARK(BM_ColorHistogram)->Arg(300)->Arg(900);

void BM_HistogramDistance(benchmark::State& state) {
  const auto a = compute_histogram(synthetic(128, 96, 2), 8);
  const auto b = compute_histogram(synthetic(128, 96, 3), 8);
  for (auto _ : state) benchmark::DoNotOptimize(histogram_distance(a, b));
}
BENCHMARK(BM_HistogramDistance);

void BM_StubFeatureMap(benchmark::State& state) {
  BackboneSpec spec;
  spec.stub_mid_channels = 8;
  spec.stub_out_channels = 32;
  const auto backbone = make_extractor(spec);
  const Tensor img = synthetic(static_cast<int>(state.range(0)), static_cast<int>(state.range(0)), 4);
  for (auto _ : state) benchmark::DoNotOptimize(backbone->feature_map(img));
}
BENCHMARK(BM_StubFeatureMap)->Arg(16)->Arg(64)->Arg(224);

void BM_IndexQuery(benchmark::State& state) {
  Rng rng(5);
  std::vector<ReferenceIndex::Entry> entries;
  const int dim = 64;
  for (int i = 0; i < state.range(0); ++i) {
    ReferenceIndex::Entry e;
    e.id = "ref" + std::to_string(i);
    e.score = 4.0;
    for (int k = 0; k < dim; ++k) e.features.values.push_back(rng.gaussian());
    entries.push_back(std::move(e));
  }
  const auto index =
      ReferenceIndex::build(std::move(entries), DistanceMetric::Euclidean, Dimension::Beauty, "bench");
  FeatureVector probe;
  for (int k = 0; k < dim; ++k) probe.values.push_back(rng.gaussian());
  for (auto _ : state) benchmark::DoNotOptimize(index.query(probe));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_IndexQuery)->Arg(100)->Arg(2218);

void BM_SpearmanRanks(benchmark::State& state) {
  Rng rng(6);
  std::vector<double> pred(state.range(0)), truth(state.range(0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = rng.uniform(1, 7);
    truth[i] = rng.uniform(1, 7);
  }
  for (auto _ : state) benchmark::DoNotOptimize(compute_metrics(pred, truth, 4.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SpearmanRanks)->Arg(100)->Arg(3106);

void BM_ForwardAll(benchmark::State& state) {
  ModelSpec spec;
  spec.backbone.stub_mid_channels = 8;
  spec.backbone.stub_out_channels = 32;
  spec.preprocess = Preprocess{64, 48};
  spec.hidden = 32;
  const auto bundle = make_model_bundle(spec);
  const Tensor p = synthetic(120, 80, 7);
  const Tensor q = synthetic(120, 80, 8);
  for (auto _ : state) benchmark::DoNotOptimize(forward_all(bundle, p, q, 4.0));
}
BENCHMARK(BM_ForwardAll);

}  // namespace

BENCHMARK_MAIN();
