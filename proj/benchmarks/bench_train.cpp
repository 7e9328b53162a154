#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "artbrain/train.hpp"

namespace {

using namespace artbrain;

void BM_TrainStep(benchmark::State &state) {
    const auto batch_size = static_cast<std::size_t>(state.range(0));
    const auto config = ModelConfig::tiny();
    Model model(config, 3);
    Adam<float> adam(model.params(), AdamConfig{});
    std::mt19937_64 rng(9);
    std::normal_distribution<float> n(0.0F, 1.0F);
    std::vector<TrainingSample> batch(batch_size);
    for (std::size_t i = 0; i < batch_size; ++i) {
        const auto side = config.preprocess.target_side;
        batch[i].image = Block<float>(3, side, side);
        for (auto &v : batch[i].image.data) v = n(rng);
        batch[i].label = ClassIndex(static_cast<int>(i % kNumClasses));
    }
    for (auto _ : state) {
        auto r = train_step(model, adam, batch, TrainableMask::all(), 1e-3, rng);
        benchmark::DoNotOptimize(r.loss);
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch_size));
}

}  // namespace

BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);
