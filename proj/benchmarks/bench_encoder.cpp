#include <benchmark/benchmark.h>

#include "logrep/encoder.hpp"
#include "logrep/rng.hpp"

namespace {

using namespace logrep;

struct Batch {
  EncoderConfig config;
  ModelParameters params;
  EncoderInput input;
  MlmTarget target;
};

// 32 sequences of 24 tokens on the tiny preset with a 600-piece vocabulary.
Batch make_batch() {
  Batch b;
  b.config = EncoderConfig::tiny(600);
  b.params = init_params(b.config, 1);
  Rng rng(2);
  for (int r = 0; r < 32; ++r) {
    std::vector<TokenId> ids{2};
    std::vector<TokenId> labels{kIgnoreLabel};
    for (int i = 0; i < 22; ++i) {
      const auto id = static_cast<TokenId>(5 + rng.below(595));
      const bool masked = rng.uniform() < 0.15;
      ids.push_back(masked ? 4 : id);
      labels.push_back(masked ? id : kIgnoreLabel);
    }
    ids.push_back(3);
    labels.push_back(kIgnoreLabel);
    labels[1] = ids[1];
    b.input.input_ids.push_back(ids);
    b.input.attention_mask.emplace_back(ids.size(), 1);
    b.target.labels.push_back(labels);
  }
  return b;
}

void BM_EncoderForward(benchmark::State& state) {
  const Batch b = make_batch();
  for (auto _ : state) benchmark::DoNotOptimize(forward(b.params, b.config, b.input));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 32));
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMillisecond);

void BM_EncoderForwardBackward(benchmark::State& state) {
  const Batch b = make_batch();
  const ForwardOptions opts{true, 3};
  for (auto _ : state) benchmark::DoNotOptimize(backward(b.params, b.config, b.input, b.target, opts));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 32));
}
BENCHMARK(BM_EncoderForwardBackward)->Unit(benchmark::kMillisecond);

}  // namespace
