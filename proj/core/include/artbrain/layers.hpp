#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "artbrain/tensor.hpp"

/// Convolutional building blocks with hand-written backward passes.
///
/// Backward functions accumulate into the weight/bias gradient spans and return the
/// input gradient, or an empty block when `want_input_grad` is false.
namespace artbrain::nn {

enum class Padding { zero, circular };

/// Convolution whose kernel equals its stride (stem and downsampling layers).
/// Weight shape [out, in, k, k]; trailing rows/columns that do not fill a patch are dropped.
template <typename T>
Block<T> patchify_forward(const Block<T> &x, std::span<const T> weight, std::span<const T> bias,
                          std::size_t out_channels, std::size_t kernel);
template <typename T>
Block<T> patchify_backward(const Block<T> &x, std::span<const T> weight, const Block<T> &dy, std::size_t kernel,
                           std::span<T> dweight, std::span<T> dbias, bool want_input_grad);

/// Depthwise k x k convolution, stride 1, "same" output size. Weight shape [c, 1, k, k].
template <typename T>
Block<T> depthwise_forward(const Block<T> &x, std::span<const T> weight, std::span<const T> bias, std::size_t kernel,
                           Padding padding);
template <typename T>
Block<T> depthwise_backward(const Block<T> &x, std::span<const T> weight, const Block<T> &dy, std::size_t kernel,
                            Padding padding, std::span<T> dweight, std::span<T> dbias, bool want_input_grad);

/// 1x1 convolution. Weight shape [out, in].
template <typename T>
Block<T> pointwise_forward(const Block<T> &x, std::span<const T> weight, std::span<const T> bias,
                           std::size_t out_channels);
template <typename T>
Block<T> pointwise_backward(const Block<T> &x, std::span<const T> weight, const Block<T> &dy, std::span<T> dweight,
                            std::span<T> dbias, bool want_input_grad);

template <typename T>
struct LayerNormCache {
    std::vector<T> normalized;  // x-hat, same layout as the input block
    std::vector<T> inv_std;     // one entry per pixel
};

/// Layer normalization across channels at every pixel (channels-first ConvNeXt norm).
template <typename T>
Block<T> layer_norm_forward(const Block<T> &x, std::span<const T> gamma, std::span<const T> beta, T eps,
                            LayerNormCache<T> *cache);
template <typename T>
Block<T> layer_norm_backward(const Block<T> &dy, std::span<const T> gamma, const LayerNormCache<T> &cache,
                             std::span<T> dgamma, std::span<T> dbeta);

/// Exact (erf-based) GELU.
template <typename T>
T gelu(T x) noexcept;
template <typename T>
T gelu_derivative(T x) noexcept;

template <typename T>
Block<T> gelu_forward(const Block<T> &x);
template <typename T>
Block<T> gelu_backward(const Block<T> &x, const Block<T> &dy);

/// Adaptive average pooling with the usual floor/ceil bin edges.
template <typename T>
Block<T> adaptive_avg_pool(const Block<T> &x, std::size_t out_height, std::size_t out_width);
template <typename T>
Block<T> adaptive_avg_pool_backward(const Block<T> &dy, std::size_t in_height, std::size_t in_width);

}  // namespace artbrain::nn
