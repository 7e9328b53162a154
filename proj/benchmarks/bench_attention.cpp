#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "artbrain/attention.hpp"

namespace {

using artbrain::AttentionParams;
using artbrain::Block;
using artbrain::FeatureTaps;

Block<float> random_block(std::size_t c, std::size_t side, std::mt19937_64 &rng) {
    std::normal_distribution<float> n(0.0F, 1.0F);
    Block<float> b(c, side, side);
    for (auto &v : b.data) v = n(rng);
    return b;
}

// Tap channels are (c, 2c, 4c) at sides (4s, 2s, s), matching a three-stage backbone.
void BM_AttentionForward(benchmark::State &state) {
    const auto c = static_cast<std::size_t>(state.range(0));
    const auto side = static_cast<std::size_t>(state.range(1));
    std::mt19937_64 rng(7);
    FeatureTaps<float> taps{random_block(c, 4 * side, rng), random_block(2 * c, 2 * side, rng),
                            random_block(4 * c, side, rng)};
    const std::size_t total = 7 * c;
    const std::size_t reduction = 4;
    std::vector<float> w1(total / reduction * total), w2(total * (total / reduction));
    std::normal_distribution<float> n(0.0F, 0.05F);
    for (auto &v : w1) v = n(rng);
    for (auto &v : w2) v = n(rng);
    const AttentionParams<float> params{total, reduction, w1, w2};

    for (auto _ : state) {
        auto out = artbrain::attention_forward(taps, side, params);
        benchmark::DoNotOptimize(out.data.data());
    }
    state.counters["channels"] = static_cast<double>(total);
}

}  // namespace

BENCHMARK(BM_AttentionForward)->Args({8, 2})->Args({32, 4})->Args({96, 7})->Unit(benchmark::kMicrosecond);
