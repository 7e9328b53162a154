#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace artbrain {

/// Dense activation block stored channel-major: index = (c * height + y) * width + x.
///
/// The mathematical notation elsewhere writes blocks as H x W x C; only the memory
/// order differs.
template <typename T>
struct Block {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<T> data;

    Block() = default;
    Block(std::size_t c, std::size_t h, std::size_t w, T fill = T{0})
        : channels(c), height(h), width(w), data(c * h * w, fill) {}

    std::size_t plane() const noexcept { return height * width; }
    std::size_t size() const noexcept { return data.size(); }
    bool empty() const noexcept { return data.empty(); }

    T &at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    const T &at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }

    std::span<T> channel(std::size_t c) { return {data.data() + c * plane(), plane()}; }
    std::span<const T> channel(std::size_t c) const { return {data.data() + c * plane(), plane()}; }

    bool same_shape(const Block &other) const noexcept {
        return channels == other.channels && height == other.height && width == other.width;
    }

    bool all_finite() const noexcept {
        return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Block<U> cast() const {
        Block<U> out(channels, height, width);
        std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
        return out;
    }
};

using FeatureMapBlock = Block<float>;

}  // namespace artbrain
