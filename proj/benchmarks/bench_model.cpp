#include <benchmark/benchmark.h>

#include <random>

#include "artbrain/model.hpp"

namespace {

using artbrain::HeadKind;
using artbrain::Model;
using artbrain::ModelConfig;

artbrain::ImageTensor random_input(std::size_t side) {
    std::mt19937_64 rng(11);
    std::normal_distribution<float> n(0.0F, 1.0F);
    artbrain::ImageTensor t;
    t.data = artbrain::Block<float>(3, side, side);
    for (auto &v : t.data.data) v = n(rng);
    t.provenance.normalized = true;
    return t;
}

void BM_ModelForward(benchmark::State &state) {
    auto config = ModelConfig::tiny();
    config.head = state.range(0) == 0 ? HeadKind::attention : HeadKind::plain;
    const Model model(config, 3);
    const auto input = random_input(config.preprocess.target_side);
    for (auto _ : state) {
        auto p = model.forward(input);
        benchmark::DoNotOptimize(p.probs.data());
    }
    state.SetLabel(state.range(0) == 0 ? "attention" : "plain");
}

}  // namespace

BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
