#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "artbrain/model.hpp"
#include "support/oracle.hpp"

namespace testing_support {

struct GradientCheck {
    double max_rel_double = 0.0;  // 64-bit analytic vs central differences
    double max_rel_float = 0.0;   // 32-bit analytic vs the same differences
    std::size_t probes = 0;
};

/// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// One random tiny model, image and label. Central differences are taken on the 64-bit
/// model with step h over `per_group` random coordinates of every parameter group.
/// The differences carry roughly eps * |loss| / h ~ 1e-11 of rounding noise, so gradients
/// smaller than floor_double are compared absolutely at floor_double * tolerance.
inline GradientCheck check_gradients(std::uint64_t seed, std::size_t per_group = 12, double h = 1e-4,
                                     double floor_double = 1e-5, double floor_float = 1e-4) {
    using namespace artbrain;
    std::mt19937_64 rng(seed);
    auto cfg = ModelConfig::tiny();
    cfg.hidden = 32;
    Network<double> net(cfg, seed);
    // Non-zero biases and gains so every term contributes.
    std::normal_distribution<double> small(0.0, 0.1);
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        auto &p = net.params()[i];
        if (p.name.ends_with(".bias") || p.name.find("norm") != std::string::npos) {
            for (auto &v : p.value) v += small(rng);
        }
    }
    // Round-trip through float so both precisions see identical weights.
    const Network<float> net_f = net.cast<float>();
    net = net_f.cast<double>();

    const auto image = oracle::random_tensor(3, cfg.backbone.input_side, cfg.backbone.input_side, rng, -2, 2);
    const auto image_d = oracle::to_block<double>(image);
    const auto image_f = oracle::to_block<float>(image);
    const ClassIndex label(static_cast<int>(rng() % kNumClasses));

    const auto all = TrainableMask::all();
    auto grads_d = net.params().zero_gradients();
    net.loss_and_gradient(image_d, label, Mode::eval, nullptr, grads_d, all);
    auto grads_f = net_f.params().zero_gradients();
    net_f.loss_and_gradient(image_f, label, Mode::eval, nullptr, grads_f, all);

    const auto loss = [&] {
        const auto z = net.logits(image_d);
        return cross_entropy<double>(z, label);
    };

    GradientCheck out;
    std::vector<std::vector<std::size_t>> by_group(kNumParamGroups);
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        by_group[static_cast<std::size_t>(net.params()[i].group)].push_back(i);
    }
    for (const auto &members : by_group) {
        if (members.empty()) continue;
        for (std::size_t probe = 0; probe < per_group; ++probe) {
            const std::size_t pi = members[rng() % members.size()];
            auto &value = net.params()[pi].value;
            const std::size_t k = rng() % value.size();
            const double keep = value[k];
            value[k] = keep + h;
            const double up = loss();
            value[k] = keep - h;
            const double down = loss();
            value[k] = keep;
            const double numeric = (up - down) / (2 * h);
            out.max_rel_double = std::max(out.max_rel_double, relative_error(grads_d[pi][k], numeric, floor_double));
            out.max_rel_float = std::max(
                out.max_rel_float, relative_error(static_cast<double>(grads_f[pi][k]), numeric, floor_float));
            ++out.probes;
        }
    }
    return out;
}

}  // namespace testing_support
