#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/layers.hpp"
#include "artbrain/params.hpp"
#include "artbrain/tensor.hpp"

namespace artbrain {

struct ImageTensor;

/// Staged ConvNeXt-style feature extractor layout.
///
/// Stage 0 follows a k=4 stride-4 patchify stem; each later stage starts with a
/// LayerNorm plus k=2 stride-2 downsampling. Every block is depthwise 7x7 conv,
/// LayerNorm, pointwise expansion, GELU, pointwise projection and a residual add.
struct BackboneConfig {
    std::vector<std::size_t> stage_channels;
    std::vector<std::size_t> stage_depths;
    std::size_t input_side = 224;
    /// Stage indices (low, mid, high) whose outputs are tapped. Strictly increasing.
    std::array<std::size_t, 3> tap_stages{1, 2, 3};
    std::string variant_name;
    std::size_t expansion = 4;
    std::size_t depthwise_kernel = 7;
    /// Disabling normalization yields a purely linear-plus-GELU stack; used by shape/oracle tests.
    bool layer_norm = true;
    nn::Padding padding = nn::Padding::zero;

    /// Throws ConfigError when an invariant fails.
    void validate() const;

    std::size_t stage_stride(std::size_t stage) const noexcept { return std::size_t{4} << stage; }
    /// Spatial side of a stage's output for the configured input side.
    std::size_t stage_side(std::size_t stage) const noexcept;
    std::size_t stage_count() const noexcept { return stage_channels.size(); }
    /// Which freezing group a stage belongs to.
    ParamGroup stage_group(std::size_t stage) const noexcept;

    nlohmann::json to_json() const;
    static BackboneConfig from_json(const nlohmann::json &j);

    /// stages [8, 16, 32, 64], depths [1, 1, 1, 1], 64 px input, taps at stages 1/2/3.
    static BackboneConfig tiny();
    /// ConvNeXt-T widths and depths at 224 px.
    static BackboneConfig convnext_tiny();
};

template <typename T>
struct FeatureTaps {
    Block<T> low;
    Block<T> mid;
    Block<T> high;
};

/// Parameter indices for one ConvNeXt block.
struct ConvBlockLayout {
    std::size_t dw_w, dw_b, norm_g, norm_b, pw1_w, pw1_b, pw2_w, pw2_b;
};

struct StageLayout {
    // Only meaningful for stages > 0.
    std::size_t down_norm_g = 0, down_norm_b = 0, down_w = 0, down_b = 0;
    std::vector<ConvBlockLayout> blocks;
};

struct BackboneLayout {
    std::size_t stem_w = 0, stem_b = 0, stem_norm_g = 0, stem_norm_b = 0;
    std::vector<StageLayout> stages;
};

template <typename T>
struct ConvBlockTrace {
    Block<T> input;
    Block<T> dw_out;
    nn::LayerNormCache<T> norm;
    Block<T> norm_out;
    Block<T> pw1_out;
    Block<T> act_out;
};

template <typename T>
struct StageTrace {
    Block<T> input;
    nn::LayerNormCache<T> down_norm;
    Block<T> down_norm_out;
    std::vector<ConvBlockTrace<T>> blocks;
};

/// Activations retained by a forward pass for the backward pass.
template <typename T>
struct BackboneTrace {
    Block<T> image;
    Block<T> stem_out;
    nn::LayerNormCache<T> stem_norm;
    std::vector<StageTrace<T>> stages;
};

/// Registers the parameters of every stage up to the high tap.
template <typename T>
BackboneLayout register_backbone(const BackboneConfig &config, ParameterSet<T> &params);

/// Truncated-normal-free default init: weights uniform in +-sqrt(1/fan_in), biases zero,
/// norm gains one.
template <typename T>
void init_backbone(const BackboneConfig &config, const BackboneLayout &layout, ParameterSet<T> &params,
                   std::mt19937_64 &rng);

/// Runs the stem and stages up to the high tap. Throws ConfigError on an image of the
/// wrong shape and NumericError naming the stage on non-finite activations.
template <typename T>
FeatureTaps<T> forward_taps(const BackboneConfig &config, const BackboneLayout &layout,
                            const ParameterSet<T> &params, const Block<T> &image, BackboneTrace<T> *trace = nullptr);

/// Back-propagates tap gradients into `grads`, stopping below the lowest trainable stage.
/// Empty gradient blocks in `grad_taps` count as zero.
template <typename T>
void backward_taps(const BackboneConfig &config, const BackboneLayout &layout, const ParameterSet<T> &params,
                   const BackboneTrace<T> &trace, const FeatureTaps<T> &grad_taps, Gradients<T> &grads,
                   const TrainableMask &trainable);

/// Immutable backbone bound to archive weights; safe to share across threads.
class Backbone {
public:
    /// Throws ConfigError if the archive lacks a parameter or a shape disagrees.
    Backbone(BackboneConfig config, const WeightArchive &weights);

    const BackboneConfig &config() const noexcept { return config_; }
    FeatureTaps<float> forward_taps(const ImageTensor &image) const;

private:
    BackboneConfig config_;
    BackboneLayout layout_;
    ParameterSet<float> params_;
};

}  // namespace artbrain
