#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "artbrain/backbone.hpp"
#include "artbrain/tensor.hpp"

namespace artbrain {

enum class TapOrigin : std::uint8_t { low, mid, high };

/// Channel-wise concatenation of the low, mid and high taps at a common spatial size.
template <typename T>
struct ConcatBlock {
    Block<T> data;
    std::vector<TapOrigin> channel_origins;
    std::size_t channels() const noexcept { return data.channels; }
};

/// Per-channel multipliers in (0, 1).
template <typename T>
struct ChannelImportance {
    std::vector<T> omega;
    std::size_t reduction = 1;
};

/// Non-owning view of the two bias-free bottleneck matrices.
/// `w1` is (C/reduction) x C and `w2` is C x (C/reduction), both row-major.
template <typename T>
struct AttentionParams {
    std::size_t channels = 0;
    std::size_t reduction = 1;
    std::span<const T> w1;
    std::span<const T> w2;

    std::size_t hidden() const noexcept { return reduction == 0 ? 0 : channels / reduction; }
    /// Throws ConfigError when the reduction does not divide C or the spans have the wrong size.
    void validate() const;
};

/// Pools each tap to `align_side` x `align_side` and stacks low, mid, high along channels.
/// Throws AlignmentError when a tap is smaller than `align_side` (no upsampling).
template <typename T>
ConcatBlock<T> concat_blocks(const FeatureTaps<T> &taps, std::size_t align_side);

/// Spatial mean of every channel.
template <typename T>
std::vector<T> global_average_pool(const Block<T> &block);
template <typename T>
std::vector<T> global_average_pool(const ConcatBlock<T> &block) {
    return global_average_pool(block.data);
}

/// sigmoid(W2 * ReLU(W1 * y)). `hidden_out`, when given, receives the pre-ReLU bottleneck.
template <typename T>
ChannelImportance<T> channel_importance(std::span<const T> pooled, const AttentionParams<T> &params,
                                        std::vector<T> *hidden_out = nullptr);

/// Scales every channel of the block by its importance.
template <typename T>
Block<T> weight_channels(const ConcatBlock<T> &block, const ChannelImportance<T> &importance);

/// Forward state of the full module, kept for the backward pass.
template <typename T>
struct AttentionTrace {
    ConcatBlock<T> concat;
    std::vector<T> pooled;
    std::vector<T> hidden;  // pre-ReLU
    ChannelImportance<T> importance;
};

/// concat -> pool -> importance -> weight.
template <typename T>
Block<T> attention_forward(const FeatureTaps<T> &taps, std::size_t align_side, const AttentionParams<T> &params,
                           AttentionTrace<T> *trace = nullptr);

template <typename T>
struct AttentionGradients {
    FeatureTaps<T> taps;
    std::vector<T> w1;
    std::vector<T> w2;
};

/// Gradients of a scalar loss given dLoss/dZ_weighted.
template <typename T>
AttentionGradients<T> attention_backward(const FeatureTaps<T> &taps, const AttentionParams<T> &params,
                                         const AttentionTrace<T> &trace, const Block<T> &grad_weighted);

/// Uniform in +-sqrt(1/fan_in) for both matrices.
template <typename T>
void init_attention(std::size_t channels, std::size_t reduction, std::span<T> w1, std::span<T> w2,
                    std::mt19937_64 &rng);

}  // namespace artbrain
