#include <benchmark/benchmark.h>

#include "logrep/baselines.hpp"
#include "logrep/synthetic.hpp"

namespace {

using namespace logrep;

struct Data {
  std::vector<std::string> texts;
  std::vector<std::size_t> labels;
};

Data sample() {
  const auto corpus = gen_synthetic_corpus(default_benchmark_spec(20, 2), 1);
  Data d;
  for (std::size_t s = 0; s < corpus.sources.size(); ++s) {
    for (const auto& l : corpus.sources[s].lines) {
      d.texts.push_back(l.raw_text);
      d.labels.push_back(s);
    }
  }
  return d;
}

void BM_TfidfFitApply(benchmark::State& state) {
  const Data d = sample();
  for (auto _ : state) {
    const FeatureDictionary dict = featurize_fit(d.texts);
    benchmark::DoNotOptimize(featurize_apply(dict, d.texts));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * d.texts.size()));
}
BENCHMARK(BM_TfidfFitApply)->Unit(benchmark::kMillisecond);

void BM_DecisionTreeTrain(benchmark::State& state) {
  const Data d = sample();
  const FeatureDictionary dict = featurize_fit(d.texts);
  const SparseFeatures x = featurize_apply(dict, d.texts);
  for (auto _ : state) benchmark::DoNotOptimize(train_decision_tree(x, d.labels, 16, dict.size()));
}
BENCHMARK(BM_DecisionTreeTrain)->Unit(benchmark::kMillisecond);

void BM_SgdTrain(benchmark::State& state) {
  const Data d = sample();
  const FeatureDictionary dict = featurize_fit(d.texts);
  const SparseFeatures x = featurize_apply(dict, d.texts);
  SgdOptions o;
  o.epochs = 10;
  for (auto _ : state) benchmark::DoNotOptimize(train_sgd_linear(x, d.labels, 16, dict.size(), o));
}
BENCHMARK(BM_SgdTrain)->Unit(benchmark::kMillisecond);

}  // namespace
