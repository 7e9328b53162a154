#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>

#include "artbrain/attention.hpp"
#include "artbrain/error.hpp"
#include "support/instances.hpp"
#include "support/oracle.hpp"

using namespace artbrain;

namespace {

FeatureTaps<double> constant_taps(double a, double b, double c, std::size_t side) {
    return {Block<double>(1, side, side, a), Block<double>(1, side, side, b), Block<double>(1, side, side, c)};
}

AttentionParams<double> view(std::size_t c, std::size_t mu, const std::vector<double> &w1,
                             const std::vector<double> &w2) {
    return {c, mu, w1, w2};
}

}  // namespace

TEST(Attention, ConcatOrdersLowMidHigh) {
    const auto z = concat_blocks(constant_taps(1.0, 2.0, 3.0, 1), 1);
    ASSERT_EQ(z.channels(), 3U);
    EXPECT_EQ(z.data.data, (std::vector<double>{1.0, 2.0, 3.0}));
    EXPECT_EQ(z.channel_origins, (std::vector<TapOrigin>{TapOrigin::low, TapOrigin::mid, TapOrigin::high}));
}

TEST(Attention, ConcatWidthIsTheSumOfTapWidths) {
    FeatureTaps<float> taps{Block<float>(8, 16, 16, 1.0F), Block<float>(16, 8, 8, 1.0F), Block<float>(32, 4, 4, 1.0F)};
    const auto z = concat_blocks(taps, 4);
    EXPECT_EQ(z.channels(), 56U);
    EXPECT_EQ(z.data.height, 4U);
    EXPECT_EQ(std::count(z.channel_origins.begin(), z.channel_origins.end(), TapOrigin::mid), 16);
}

TEST(Attention, PoolingEightToFourIsTwoByTwoMeans) {
    std::mt19937_64 rng(1);
    const auto x = oracle::random_tensor(2, 8, 8, rng);
    FeatureTaps<double> taps{oracle::to_block<double>(x), Block<double>(1, 4, 4, 0.0), Block<double>(1, 4, 4, 0.0)};
    const auto z = concat_blocks(taps, 4);
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 4; ++j) {
                const double m = (x[c][2 * i][2 * j] + x[c][2 * i + 1][2 * j] + x[c][2 * i][2 * j + 1] +
                                  x[c][2 * i + 1][2 * j + 1]) /
                                 4.0;
                EXPECT_NEAR(z.data.at(c, i, j), m, 1e-12);
            }
}

TEST(Attention, RefusesToUpsample) {
    FeatureTaps<float> taps{Block<float>(8, 8, 8), Block<float>(16, 4, 4), Block<float>(32, 2, 2)};
    EXPECT_THROW(concat_blocks(taps, 4), AlignmentError);
    EXPECT_THROW(concat_blocks(taps, 0), AlignmentError);
    EXPECT_NO_THROW(concat_blocks(taps, 2));
}

TEST(Attention, GlobalAveragePool) {
    EXPECT_EQ(global_average_pool(Block<double>(2, 3, 3, 0.75)), (std::vector<double>{0.75, 0.75}));
    Block<double> b(1, 2, 2);
    b.data = {1, 2, 3, 4};
    EXPECT_DOUBLE_EQ(global_average_pool(b)[0], 2.5);

    std::mt19937_64 rng(2);
    const auto x = oracle::random_tensor(3, 5, 7, rng);
    const auto y = global_average_pool(oracle::to_block<double>(x));
    const auto want = oracle::channel_means(x);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y[c], want[c], 1e-6);
}

TEST(Attention, ZeroMatricesGiveOneHalf) {
    const std::vector<double> w(8 * 2, 0.0), y{1, -2, 3, 4, 5, 6, 7, 8};
    const auto omega = channel_importance<double>(y, view(8, 4, w, w)).omega;
    for (const double v : omega) EXPECT_EQ(v, 0.5);
}

TEST(Attention, HandChosenBottleneck) {
    // C = 4, mu = 2
    const std::vector<double> w1{0.5, -1.0, 0.25, 0.0, -0.5, 0.5, 1.0, 2.0};
    const std::vector<double> w2{1.0, 0.0, -1.0, 0.5, 0.25, 0.25, 2.0, -2.0};
    const std::vector<double> y{0.2, -0.4, 1.0, 0.3};
    std::vector<double> hidden;
    const auto omega = channel_importance<double>(y, view(4, 2, w1, w2), &hidden).omega;
    const auto want = oracle::importance(y, w1, w2, 2);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(omega[i], want[i], 1e-6);
    // hand arithmetic: h = relu([0.1+0.4+0.25, -0.1-0.2+1.0+0.6]) = [0.75, 1.3]
    EXPECT_NEAR(hidden[0], 0.75, 1e-12);
    EXPECT_NEAR(hidden[1], 1.3, 1e-12);
    EXPECT_NEAR(omega[0], oracle::sigmoid(0.75), 1e-12);
    EXPECT_NEAR(omega[3], oracle::sigmoid(2.0 * 0.75 - 2.0 * 1.3), 1e-12);
}

TEST(Attention, ImportanceStaysInOpenInterval) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(-50.0F, 50.0F);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<float> w1(16 * 4), w2(16 * 4), y(16);
        for (auto *v : {&w1, &w2, &y})
            for (auto &e : *v) e = d(rng);
        const auto omega = channel_importance<float>(y, {16, 4, w1, w2}).omega;
        for (const float v : omega) {
            ASSERT_GT(v, 0.0F);
            ASSERT_LT(v, 1.0F);
        }
    }
}

TEST(Attention, ShapeMismatchesAreConfigErrors) {
    const std::vector<double> w(12, 0.0), y(6, 1.0);
    EXPECT_THROW(channel_importance<double>(y, view(6, 4, w, w)), ConfigError);  // 4 does not divide 6
    EXPECT_THROW(channel_importance<double>(std::vector<double>(5, 1.0), view(6, 2, std::vector<double>(18),
                                                                             std::vector<double>(18))),
                 ConfigError);
    ConcatBlock<double> z;
    z.data = Block<double>(3, 2, 2, 1.0);
    ChannelImportance<double> omega{{0.5, 0.5}, 1};
    EXPECT_THROW(weight_channels(z, omega), ConfigError);
}

TEST(Attention, WeightingIdentityAnnihilationAndScalarOracle) {
    std::mt19937_64 rng(4);
    ConcatBlock<double> z;
    z.data = oracle::to_block<double>(oracle::random_tensor(5, 3, 4, rng));
    EXPECT_EQ(weight_channels(z, {std::vector<double>(5, 1.0), 1}).data, z.data.data);
    for (const double v : weight_channels(z, {std::vector<double>(5, 0.0), 1}).data) EXPECT_EQ(v, 0.0);
    std::vector<double> omega(5);
    for (auto &v : omega) v = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto out = weight_channels(z, {omega, 1});
    for (std::size_t c = 0; c < 5; ++c)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(out.at(c, i, j), omega[c] * z.data.at(c, i, j), 1e-7);
}

TEST(Attention, WeightingIsLinearInTheBlock) {
    std::mt19937_64 rng(5);
    ConcatBlock<double> z;
    z.data = oracle::to_block<double>(oracle::random_tensor(4, 3, 3, rng));
    const ChannelImportance<double> omega{{0.1, 0.7, 0.3, 0.9}, 1};
    auto scaled = z;
    for (auto &v : scaled.data.data) v *= -2.5;
    const auto a = weight_channels(scaled, omega), b = weight_channels(z, omega);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], -2.5 * b.data[i], 1e-12);
}

TEST(Attention, PermutingChannelsAndColumnsPermutesOmega) {
    std::mt19937_64 rng(6);
    const std::size_t C = 12, mu = 3, m = C / mu;
    const auto y = oracle::random_tensor(1, 1, C, rng)[0][0];
    const auto w1 = oracle::random_tensor(1, 1, m * C, rng)[0][0];
    const auto w2 = oracle::random_tensor(1, 1, C * m, rng)[0][0];
    std::vector<std::size_t> perm(C);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> py(C), pw1(m * C), pw2(C * m);
    for (std::size_t i = 0; i < C; ++i) {
        py[i] = y[perm[i]];
        for (std::size_t j = 0; j < m; ++j) {
            pw1[j * C + i] = w1[j * C + perm[i]];
            pw2[i * m + j] = w2[perm[i] * m + j];
        }
    }
    const auto a = channel_importance<double>(y, view(C, mu, w1, w2)).omega;
    const auto b = channel_importance<double>(py, view(C, mu, pw1, pw2)).omega;
    for (std::size_t i = 0; i < C; ++i) EXPECT_NEAR(b[i], a[perm[i]], 1e-12);
}

TEST(Attention, FullModuleMatchesStraightLineOracle) {
    std::mt19937_64 rng(7);
    const auto start = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = testing_support::random_attention_instance(rng);
        const auto out = attention_forward<float>(inst.taps_f(), inst.align, inst.params_f());
        const auto want = oracle::attention(inst.taps, inst.align, inst.w1, inst.w2, inst.hidden());
        worst = std::max(worst, oracle::max_abs_diff(oracle::from_block(out), want));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    EXPECT_LT(worst, 1e-5);
    EXPECT_LT(seconds, 10.0);
}

TEST(Attention, BackwardMatchesCentralDifferences) {
    std::mt19937_64 rng(8);
    const double eps = 1e-3;
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = testing_support::random_attention_instance(rng, 16, 4);
        const auto g = oracle::random_tensor(inst.channels(), inst.align, inst.align, rng);
        const auto loss = [&](const testing_support::AttentionInstance &p) {
            const auto z = oracle::attention(p.taps, p.align, p.w1, p.w2, p.hidden());
            double s = 0;
            for (std::size_t c = 0; c < z.size(); ++c)
                for (std::size_t i = 0; i < z[c].size(); ++i)
                    for (std::size_t j = 0; j < z[c][i].size(); ++j) s += g[c][i][j] * z[c][i][j];
            return s;
        };
        AttentionTrace<double> trace;
        const auto taps = inst.taps_d();
        const auto params = inst.params_d();
        attention_forward<double>(taps, inst.align, params, &trace);
        const auto grads = attention_backward<double>(taps, params, trace, oracle::to_block<double>(g));

        const auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3}); };
        const auto probe = [&](double &slot, double analytic) {
            const double keep = slot;
            slot = keep + eps;
            const double up = loss(inst);
            slot = keep - eps;
            const double down = loss(inst);
            slot = keep;
            worst = std::max(worst, rel(analytic, (up - down) / (2 * eps)));
        };
        for (std::size_t i = 0; i < inst.w1.size(); ++i) probe(inst.w1[i], grads.w1[i]);
        for (std::size_t i = 0; i < inst.w2.size(); ++i) probe(inst.w2[i], grads.w2[i]);
        const std::array<const Block<double> *, 3> gt{&grads.taps.low, &grads.taps.mid, &grads.taps.high};
        for (std::size_t t = 0; t < 3; ++t) {
            auto &tap = inst.taps[t];
            for (std::size_t c = 0; c < tap.size(); ++c)
                for (std::size_t i = 0; i < tap[c].size(); ++i)
                    for (std::size_t j = 0; j < tap[c][i].size(); ++j) probe(tap[c][i][j], gt[t]->at(c, i, j));
        }
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Attention, InitIsBoundedByFanIn) {
    std::mt19937_64 rng(9);
    std::vector<float> w1(14 * 56), w2(56 * 14);
    init_attention<float>(56, 4, w1, w2, rng);
    const float b1 = std::sqrt(1.0F / 56.0F), b2 = std::sqrt(1.0F / 14.0F);
    for (const float v : w1) EXPECT_LE(std::abs(v), b1);
    for (const float v : w2) EXPECT_LE(std::abs(v), b2);
    EXPECT_GT(*std::max_element(w1.begin(), w1.end()), 0.8F * b1);
}
