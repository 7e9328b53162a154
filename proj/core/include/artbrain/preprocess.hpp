#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/tensor.hpp"

namespace artbrain {

/// Decoded 8-bit raster, pixels interleaved row-major.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> pixels;

    RgbImage() = default;
    RgbImage(std::size_t w, std::size_t h, std::size_t c = 3) : width(w), height(h), channels(c), pixels(w * h * c) {}

    std::uint8_t &at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * channels + c]; }
    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * channels + c]; }
};

/// Interleaved RGB raster with values in [0, 1].
struct RgbImageF {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<float> pixels;

    RgbImageF() = default;
    RgbImageF(std::size_t w, std::size_t h) : width(w), height(h), pixels(w * h * 3) {}

    float &at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
    float at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

enum class ResizeFilter { bilinear };

struct PreprocessConfig {
    std::size_t target_side = 224;
    std::array<float, 3> channel_means{0.485F, 0.456F, 0.406F};
    std::array<float, 3> channel_stds{0.229F, 0.224F, 0.225F};
    ResizeFilter resize_filter = ResizeFilter::bilinear;

    void validate() const;
    nlohmann::json to_json() const;
    static PreprocessConfig from_json(const nlohmann::json &j);
};

/// Model input: 3 x S x S floats plus how they were produced.
struct ImageTensor {
    Block<float> data;
    struct Provenance {
        bool normalized = false;
        /// Contrast change in percent applied before normalization (0 = none).
        double contrast_percent = 0.0;
    } provenance;
};

/// Throws FormatError unless the raster is non-empty 3-channel.
RgbImageF to_float(const RgbImage &image);
/// Rounds to nearest and clamps.
RgbImage to_u8(const RgbImageF &image);

/// Half-pixel-centre bilinear resampling (no antialiasing).
RgbImageF resize_bilinear(const RgbImageF &image, std::size_t width, std::size_t height);
/// Scales the shorter side to `side` and crops the centred square.
RgbImageF resize_and_center_crop(const RgbImageF &image, std::size_t side);

/// Resize+crop, then per-channel (x - mean) / std into channel-major layout.
ImageTensor preprocess(const RgbImageF &image, const PreprocessConfig &config, double contrast_percent = 0.0);
ImageTensor preprocess(const RgbImage &image, const PreprocessConfig &config);

/// out = clamp(0.5 + f * (in - 0.5), 0, 1), f = 1 + percent / 100.
/// Throws ArgumentError when percent lies outside [-100, 100].
RgbImageF adjust_contrast(const RgbImageF &image, double percent);

}  // namespace artbrain
