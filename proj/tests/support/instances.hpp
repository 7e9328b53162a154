#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "artbrain/attention.hpp"
#include "support/oracle.hpp"

namespace testing_support {

/// Random taps plus bottleneck matrices for the attention module.
struct AttentionInstance {
    std::vector<oracle::Tensor3> taps;  // low, mid, high
    std::size_t align = 1;
    std::size_t reduction = 1;
    std::vector<double> w1, w2;

    std::size_t channels() const {
        return oracle::channels(taps[0]) + oracle::channels(taps[1]) + oracle::channels(taps[2]);
    }
    std::size_t hidden() const { return channels() / reduction; }

    artbrain::FeatureTaps<float> taps_f() const {
        return {oracle::to_block<float>(taps[0]), oracle::to_block<float>(taps[1]), oracle::to_block<float>(taps[2])};
    }
    artbrain::FeatureTaps<double> taps_d() const {
        return {oracle::to_block<double>(taps[0]), oracle::to_block<double>(taps[1]),
                oracle::to_block<double>(taps[2])};
    }
    // The float views point into these buffers.
    mutable std::vector<float> w1f, w2f;
    artbrain::AttentionParams<float> params_f() const {
        w1f.assign(w1.begin(), w1.end());
        w2f.assign(w2.begin(), w2.end());
        return {channels(), reduction, w1f, w2f};
    }
    artbrain::AttentionParams<double> params_d() const { return {channels(), reduction, w1, w2}; }
};

inline AttentionInstance random_attention_instance(std::mt19937_64 &rng, std::size_t max_channels = 56,
                                                   std::size_t max_side = 8) {
    const auto pick = [&](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    AttentionInstance inst;
    const std::size_t reductions[] = {1, 2, 4};
    inst.reduction = reductions[pick(0, 2)];
    std::size_t total = 0;
    do {
        total = pick(3, max_channels);
    } while (total % inst.reduction != 0);
    const std::size_t low = pick(1, total - 2);
    const std::size_t mid = pick(1, total - low - 1);
    const std::size_t high = total - low - mid;

    inst.align = pick(1, max_side);
    const std::size_t s_high = pick(inst.align, max_side);
    const std::size_t s_mid = pick(s_high, max_side);
    const std::size_t s_low = pick(s_mid, max_side);
    inst.taps = {oracle::random_tensor(low, s_low, s_low, rng, -2, 2),
                 oracle::random_tensor(mid, s_mid, s_mid, rng, -2, 2),
                 oracle::random_tensor(high, s_high, s_high, rng, -2, 2)};
    const std::size_t m = total / inst.reduction;
    inst.w1 = oracle::random_tensor(1, 1, m * total, rng)[0][0];
    inst.w2 = oracle::random_tensor(1, 1, total * m, rng)[0][0];
    return inst;
}

}  // namespace testing_support
