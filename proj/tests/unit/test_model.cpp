#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "artbrain/error.hpp"
#include "artbrain/model.hpp"
#include "artbrain/train.hpp"
#include "support/gradcheck.hpp"
#include "support/oracle.hpp"

using namespace artbrain;

namespace {

ImageTensor random_input(std::mt19937_64 &rng, std::size_t side = 64) {
    ImageTensor t;
    t.data = oracle::to_block<float>(oracle::random_tensor(3, side, side, rng, -2, 2));
    t.provenance.normalized = true;
    return t;
}

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(ModelConfig, TinyDefaultsAndJson) {
    const auto c = ModelConfig::tiny();
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.feature_channels(), 16U + 32U + 64U);
    EXPECT_EQ(c.align_side(), 2U);
    EXPECT_EQ(c.reduction, 4U);
    EXPECT_EQ(c.hidden, 256U);
    EXPECT_DOUBLE_EQ(c.dropout, 0.3);
    EXPECT_EQ(ModelConfig::from_json(c.to_json()).to_json(), c.to_json());
    auto plain = c;
    plain.head = HeadKind::plain;
    EXPECT_EQ(plain.feature_channels(), 64U);
}

TEST(ModelConfig, RejectsInconsistentSettings) {
    auto c = ModelConfig::tiny();
    c.reduction = 5;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig::tiny();
    c.preprocess.target_side = 96;
    EXPECT_THROW(c.validate(), ConfigError);
    c = ModelConfig::tiny();
    c.dropout = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    EXPECT_THROW(ModelConfig::from_json({{"head", "weird"}}), ConfigError);
}

TEST(Model, ZeroClassifierGivesUniform) {
    Model m(ModelConfig::tiny(), 1);
    for (const auto idx : {m.head_layout().fc2_w, m.head_layout().fc2_b}) {
        std::fill(m.params()[idx].value.begin(), m.params()[idx].value.end(), 0.0F);
    }
    std::mt19937_64 rng(1);
    const auto p = m.forward(random_input(rng));
    for (const double v : p.probs) EXPECT_NEAR(v, 1.0 / 30.0, 1e-7);
}

TEST(Model, LogitsMatchStraightLineOracle) {
    std::mt19937_64 rng(2);
    for (const auto head : {HeadKind::attention, HeadKind::plain}) {
        auto cfg = ModelConfig::tiny();
        cfg.head = head;
        Model m(cfg, 3);
        const auto image = oracle::random_tensor(3, 64, 64, rng, -2, 2);
        const auto z = m.logits(oracle::to_block<float>(image));
        const auto want = oracle::logits(m, image);
        for (std::size_t k = 0; k < kNumClasses; ++k) EXPECT_NEAR(z[k], want[k], 1e-5);
    }
}

TEST(Model, PredictionInvariants) {
    Model m(ModelConfig::tiny(), 4);
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const auto p = m.forward(random_input(rng));
        EXPECT_NEAR(sum(p.probs), 1.0, 1e-6);
        EXPECT_NEAR(sum(*p.style_marginals), 1.0, 1e-6);
        EXPECT_NEAR(sum(*p.source_marginals), 1.0, 1e-6);
        for (const double v : p.probs) EXPECT_GE(v, 0.0);
        ASSERT_EQ(p.top.size(), 3U);
        EXPECT_GE(p.top[0].probability, p.top[1].probability);
        EXPECT_GE(p.top[1].probability, p.top[2].probability);
        const auto src = source_marginals(p.probs);
        for (std::size_t s = 0; s < 3; ++s) EXPECT_DOUBLE_EQ((*p.source_marginals)[s], src[s]);
    }
}

TEST(Model, EvalForwardIsDeterministic) {
    Model m(ModelConfig::tiny(), 5);
    std::mt19937_64 rng(4);
    const auto input = random_input(rng);
    const auto first = m.forward(input);
    for (int i = 0; i < 9; ++i) {
        const auto again = m.forward(input);
        EXPECT_EQ(again.probs, first.probs);
    }
    Model twin(ModelConfig::tiny(), 5);
    EXPECT_EQ(twin.forward(input).probs, first.probs);
    EXPECT_EQ(twin.version(), m.version());
}

TEST(Model, DropoutOnlyInTrainMode) {
    Model m(ModelConfig::tiny(), 6);
    std::mt19937_64 rng(5);
    const auto input = random_input(rng);
    EXPECT_THROW(m.logits(input.data, Mode::train, nullptr), ArgumentError);
    std::mt19937_64 drop(1);
    const auto a = m.logits(input.data, Mode::train, &drop);
    const auto b = m.logits(input.data, Mode::eval);
    EXPECT_NE(a, b);
    std::mt19937_64 drop2(1);
    EXPECT_EQ(m.logits(input.data, Mode::train, &drop2), a);
}

TEST(Model, Errors) {
    Model empty;
    std::mt19937_64 rng(6);
    EXPECT_THROW(empty.forward(random_input(rng)), StateError);

    Model m(ModelConfig::tiny(), 7);
    auto raw = random_input(rng);
    raw.provenance.normalized = false;
    EXPECT_THROW(m.forward(raw), ArgumentError);

    m.params()[m.head_layout().fc2_b].value[3] = std::numeric_limits<float>::infinity();
    try {
        m.forward(random_input(rng));
        FAIL() << "expected NumericError";
    } catch (const NumericError &e) {
        EXPECT_EQ(e.layer(), "classifier");
    }
}

TEST(Model, TopK) {
    Prediction p;
    p.probs.fill(0.01);
    p.probs[7] = 0.71;
    EXPECT_EQ(top_k(p, 1)[0].class_index.value(), 7);

    p.probs.fill(1.0 / 30.0);
    const auto t = top_k(p, 3);
    EXPECT_EQ(t[0].class_index.value(), 0);
    EXPECT_EQ(t[1].class_index.value(), 1);
    EXPECT_EQ(t[2].class_index.value(), 2);

    EXPECT_THROW(top_k(p, 0), ArgumentError);
    EXPECT_THROW(top_k(p, 31), ArgumentError);

    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> coarse(0, 5);  // forces ties
    for (int trial = 0; trial < 200; ++trial) {
        for (auto &v : p.probs) v = coarse(rng);
        std::vector<int> order(kNumClasses);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) {
            const auto pa = p.probs[static_cast<std::size_t>(a)], pb = p.probs[static_cast<std::size_t>(b)];
            return pa != pb ? pa > pb : a < b;
        });
        const std::size_t k = 1 + static_cast<std::size_t>(trial) % kNumClasses;
        const auto got = top_k(p, k);
        ASSERT_EQ(got.size(), k);
        for (std::size_t i = 0; i < k; ++i) ASSERT_EQ(got[i].class_index.value(), order[i]);
    }
}

TEST(Model, SoftmaxShiftInvarianceAndCrossEntropy) {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> d(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::array<double, kNumClasses> z{};
        for (auto &v : z) v = d(rng);
        auto shifted = z;
        for (auto &v : shifted) v += 123.0;
        const auto a = softmax<double>(z), b = softmax<double>(shifted);
        for (std::size_t k = 0; k < kNumClasses; ++k) EXPECT_NEAR(a[k], b[k], 1e-6);
        const auto label = ClassIndex(trial % 30);
        EXPECT_NEAR(cross_entropy<double>(z, label), oracle::cross_entropy(z, label.index()), 1e-12);
    }
    std::array<double, kNumClasses> flat{};
    EXPECT_NEAR(cross_entropy<double>(flat, ClassIndex(4)), std::log(30.0), 1e-12);
}

TEST(Model, ArchiveRoundTrip) {
    Model m(ModelConfig::tiny(), 9);
    const auto archive = m.to_archive();
    EXPECT_EQ(archive.metadata()["class_mapping_version"], std::string(kMappingVersion));
    const auto back = Model::from_archive(WeightArchive::parse(archive.serialize()));
    EXPECT_EQ(back.version(), m.version());
    std::mt19937_64 rng(9);
    const auto input = random_input(rng);
    EXPECT_EQ(back.forward(input).probs, m.forward(input).probs);

    auto other = archive;
    other.metadata()["class_mapping_version"] = "someone-elses-mapping";
    EXPECT_THROW(Model::from_archive(other), ConfigError);
    auto bare = archive;
    bare.metadata().erase("model");
    EXPECT_THROW(Model::from_archive(bare), ConfigError);
}

TEST(Model, VersionTracksWeights) {
    Model a(ModelConfig::tiny(), 10), b(ModelConfig::tiny(), 11);
    EXPECT_NE(a.version(), b.version());
    EXPECT_EQ(a.version().rfind("tiny-", 0), 0U);
}

TEST(Model, FreezingLeavesLowAndMidBitIdentical) {
    Model m(ModelConfig::tiny(), 12);
    Adam<float> adam(m.params(), {});
    std::mt19937_64 rng(10);
    std::vector<TrainingSample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({random_input(rng).data, ClassIndex(i * 7)});
    const TrainableMask frozen{false, false, true, true, true};
    const auto low = m.params().checksum(ParamGroup::low), mid = m.params().checksum(ParamGroup::mid);
    const auto high = m.params().checksum(ParamGroup::high);
    for (int step = 0; step < 3; ++step) train_step(m, adam, batch, frozen, 1e-2, rng);
    EXPECT_EQ(m.params().checksum(ParamGroup::low), low);
    EXPECT_EQ(m.params().checksum(ParamGroup::mid), mid);
    EXPECT_NE(m.params().checksum(ParamGroup::high), high);
}

TEST(Model, GradientsMatchFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto r = testing_support::check_gradients(seed);
        EXPECT_LT(r.max_rel_double, 1e-6) << "seed " << seed;
        EXPECT_LT(r.max_rel_float, 1e-3) << "seed " << seed;
    }
}

TEST(Model, PredictionJsonShape) {
    Model m(ModelConfig::tiny(), 13);
    std::mt19937_64 rng(11);
    const auto j = m.forward(random_input(rng)).to_json();
    ASSERT_EQ(j["top"].size(), 3U);
    EXPECT_TRUE(j["top"][0].contains("label"));
    EXPECT_EQ(j["probs"].size(), 30U);
    EXPECT_EQ(j["source_marginals"].size(), 3U);
    EXPECT_TRUE(j["source_marginals"].contains("stable"));
    EXPECT_EQ(j["style_marginals"].size(), 10U);
}
