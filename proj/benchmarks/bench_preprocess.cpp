#include <benchmark/benchmark.h>

#include <random>

#include "artbrain/preprocess.hpp"

namespace {

artbrain::RgbImage random_image(std::size_t w, std::size_t h) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> u(0, 255);
    artbrain::RgbImage img(w, h);
    for (auto &p : img.pixels) p = static_cast<std::uint8_t>(u(rng));
    return img;
}

void BM_Preprocess(benchmark::State &state) {
    const auto img = random_image(512, 384);
    artbrain::PreprocessConfig config;
    config.target_side = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        auto t = artbrain::preprocess(img, config);
        benchmark::DoNotOptimize(t.data.data.data());
    }
}

void BM_Contrast(benchmark::State &state) {
    const auto img = artbrain::to_float(random_image(512, 384));
    for (auto _ : state) {
        auto out = artbrain::adjust_contrast(img, -40.0);
        benchmark::DoNotOptimize(out.pixels.data());
    }
}

}  // namespace

BENCHMARK(BM_Preprocess)->Arg(64)->Arg(224)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Contrast)->Unit(benchmark::kMicrosecond);
