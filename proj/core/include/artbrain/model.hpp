#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/attention.hpp"
#include "artbrain/backbone.hpp"
#include "artbrain/labels.hpp"
#include "artbrain/params.hpp"
#include "artbrain/preprocess.hpp"
#include "artbrain/weights.hpp"

namespace artbrain {

/// `attention` is the full multi-depth model; `plain` classifies the pooled high tap
/// alone and serves as the ablation baseline.
enum class HeadKind { attention, plain };

struct ModelConfig {
    BackboneConfig backbone = BackboneConfig::tiny();
    HeadKind head = HeadKind::attention;
    std::size_t reduction = 4;
    std::size_t hidden = 256;
    double dropout = 0.3;
    PreprocessConfig preprocess;

    void validate() const;
    /// Spatial side the taps are pooled to before concatenation (the high tap's side).
    std::size_t align_side() const noexcept;
    /// Channels entering the classifier.
    std::size_t feature_channels() const noexcept;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json &j);

    /// Tiny backbone at 64 px with matching preprocessing.
    static ModelConfig tiny();
};

enum class Mode { train, eval };

struct TopEntry {
    ClassIndex class_index;
    double probability;
};

struct Prediction {
    std::array<double, kNumClasses> probs{};
    std::vector<TopEntry> top;
    std::optional<std::array<double, kNumStyles>> style_marginals;
    std::optional<std::array<double, kNumSources>> source_marginals;

    /// Fills the marginals and the top `k` entries from a probability vector.
    static Prediction from_probs(std::span<const double> probs, std::size_t k = 3);

    /// `{top: [{class_index, label, source, style, probability}], probs, style_marginals, source_marginals}`
    nlohmann::json to_json() const;
};

/// The `k` most probable classes, ties broken by ascending class index.
/// Throws ArgumentError unless 1 <= k <= 30.
std::vector<TopEntry> top_k(const Prediction &prediction, std::size_t k);

template <typename T>
std::array<T, kNumClasses> softmax(std::span<const T> logits);

/// -log softmax(logits)[label], computed with the log-sum-exp shift.
template <typename T>
T cross_entropy(std::span<const T> logits, ClassIndex label);

struct HeadLayout {
    std::size_t att_w1 = 0, att_w2 = 0;
    std::size_t fc1_w = 0, fc1_b = 0, fc2_w = 0, fc2_b = 0;
};

template <typename T>
struct ForwardTrace {
    BackboneTrace<T> backbone;
    FeatureTaps<T> taps;
    AttentionTrace<T> attention;
    Block<T> features;
    std::vector<T> pooled;
    std::vector<T> fc1_out;       // pre-ReLU
    std::vector<T> dropout_scale; // 0 or 1/(1-p) per hidden unit, empty in eval mode
    std::vector<T> hidden_out;    // after ReLU and dropout
    std::array<T, kNumClasses> logits{};
};

/// Backbone taps -> attention module -> global average pool -> two-layer classifier.
///
/// A default-constructed network has no weights; using it throws StateError. Const
/// member functions never mutate, so a loaded network may serve many threads.
template <typename T>
class Network {
public:
    Network() = default;
    /// Fresh network with seeded random initialization.
    Network(ModelConfig config, std::uint64_t init_seed);

    /// Reads the `model` metadata block and every tensor. Throws ConfigError on mismatch.
    static Network from_archive(const WeightArchive &archive);
    WeightArchive to_archive() const;

    bool loaded() const noexcept { return loaded_; }
    const ModelConfig &config() const noexcept { return config_; }
    ParameterSet<T> &params() noexcept { return params_; }
    const ParameterSet<T> &params() const noexcept { return params_; }
    const BackboneLayout &backbone_layout() const noexcept { return backbone_layout_; }
    const HeadLayout &head_layout() const noexcept { return head_layout_; }

    /// Short stable identifier derived from the parameter bytes.
    std::string version() const;

    template <typename U>
    Network<U> cast() const {
        Network<U> out;
        out.config_ = config_;
        out.params_ = params_.template cast<U>();
        out.backbone_layout_ = backbone_layout_;
        out.head_layout_ = head_layout_;
        out.loaded_ = loaded_;
        return out;
    }

    /// Raw class scores. In train mode with dropout > 0 an rng must be supplied.
    std::array<T, kNumClasses> logits(const Block<T> &image, Mode mode = Mode::eval, std::mt19937_64 *rng = nullptr,
                                      ForwardTrace<T> *trace = nullptr) const;

    /// Softmax prediction with marginals and top-3. Throws NumericError on non-finite logits.
    Prediction forward(const ImageTensor &image, Mode mode = Mode::eval, std::mt19937_64 *rng = nullptr) const;

    /// Cross-entropy of one sample; adds `scale` * dLoss/dParam into `grads` for trainable groups.
    T loss_and_gradient(const Block<T> &image, ClassIndex label, Mode mode, std::mt19937_64 *rng,
                        Gradients<T> &grads, const TrainableMask &trainable, T scale = T{1}) const;

    /// Block the classifier pools: Z_weighted for the attention head, the high tap otherwise.
    Block<T> feature_block(const Block<T> &image) const;
    /// Eval-mode logits computed from a feature block.
    std::array<T, kNumClasses> logits_from_features(const Block<T> &features) const;
    /// dLogit[class]/dFeatures in eval mode.
    Block<T> class_score_gradient(const Block<T> &features, ClassIndex class_index) const;

    /// View of the bottleneck matrices inside the parameter set.
    AttentionParams<T> attention_params() const;

private:
    template <typename U>
    friend class Network;

    void register_parameters();
    void require_loaded() const;
    std::array<T, kNumClasses> classify(std::span<const T> pooled, Mode mode, std::mt19937_64 *rng,
                                        ForwardTrace<T> *trace) const;
    std::vector<T> classifier_backward(const ForwardTrace<T> &trace, std::span<const T> dlogits,
                                       Gradients<T> &grads, bool want_params) const;

    ModelConfig config_;
    ParameterSet<T> params_;
    BackboneLayout backbone_layout_;
    HeadLayout head_layout_;
    bool loaded_ = false;
};

using Model = Network<float>;

extern template class Network<float>;
extern template class Network<double>;

}  // namespace artbrain
