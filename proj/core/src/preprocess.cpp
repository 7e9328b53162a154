#include "artbrain/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

struct Tap {
    std::size_t i0, i1;
    float t;
};

std::vector<Tap> taps_for(std::size_t src, std::size_t dst) {
    std::vector<Tap> taps(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t o = 0; o < dst; ++o) {
        double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(s));
        const std::size_t i1 = std::min(i0 + 1, src - 1);
        taps[o] = {i0, i1, static_cast<float>(s - static_cast<double>(i0))};
    }
    return taps;
}

void require_image(const RgbImageF &image) {
    if (image.width == 0 || image.height == 0 || image.pixels.size() != image.width * image.height * 3) {
        throw FormatError("image raster is empty or malformed");
    }
}

}  // namespace

void PreprocessConfig::validate() const {
    if (target_side < 16) throw ConfigError("target_side must be at least 16");
    for (float s : channel_stds) {
        if (!(s > 0.0F)) throw ConfigError("channel standard deviations must be positive");
    }
}

nlohmann::json PreprocessConfig::to_json() const {
    return {{"target_side", target_side},
            {"channel_means", channel_means},
            {"channel_stds", channel_stds},
            {"resize_filter", "bilinear"}};
}

PreprocessConfig PreprocessConfig::from_json(const nlohmann::json &j) {
    PreprocessConfig c;
    c.target_side = j.value("target_side", c.target_side);
    if (j.contains("channel_means")) c.channel_means = j.at("channel_means").get<std::array<float, 3>>();
    if (j.contains("channel_stds")) c.channel_stds = j.at("channel_stds").get<std::array<float, 3>>();
    if (j.value("resize_filter", std::string("bilinear")) != "bilinear") {
        throw ConfigError("unsupported resize filter");
    }
    c.validate();
    return c;
}

RgbImageF to_float(const RgbImage &image) {
    if (image.channels != 3 || image.width == 0 || image.height == 0 ||
        image.pixels.size() != image.width * image.height * 3) {
        throw FormatError("expected a non-empty 3-channel raster");
    }
    RgbImageF out(image.width, image.height);
    std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(),
                   [](std::uint8_t v) { return static_cast<float>(v) / 255.0F; });
    return out;
}

RgbImage to_u8(const RgbImageF &image) {
    RgbImage out(image.width, image.height);
    std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(), [](float v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0F, 1.0F) * 255.0F));
    });
    return out;
}

RgbImageF resize_bilinear(const RgbImageF &image, std::size_t width, std::size_t height) {
    require_image(image);
    if (width == 0 || height == 0) throw ArgumentError("resize target must be non-empty");
    if (width == image.width && height == image.height) return image;
    const auto xs = taps_for(image.width, width);
    const auto ys = taps_for(image.height, height);
    RgbImageF out(width, height);
    for (std::size_t y = 0; y < height; ++y) {
        const Tap &ty = ys[y];
        for (std::size_t x = 0; x < width; ++x) {
            const Tap &tx = xs[x];
            for (std::size_t c = 0; c < 3; ++c) {
                const float top = image.at(tx.i0, ty.i0, c) * (1.0F - tx.t) + image.at(tx.i1, ty.i0, c) * tx.t;
                const float bottom = image.at(tx.i0, ty.i1, c) * (1.0F - tx.t) + image.at(tx.i1, ty.i1, c) * tx.t;
                out.at(x, y, c) = top * (1.0F - ty.t) + bottom * ty.t;
            }
        }
    }
    return out;
}

RgbImageF resize_and_center_crop(const RgbImageF &image, std::size_t side) {
    require_image(image);
    if (side == 0) throw ArgumentError("crop side must be positive");
    const std::size_t shorter = std::min(image.width, image.height);
    const auto scaled = [&](std::size_t n) {
        return std::max(side, static_cast<std::size_t>(std::lround(static_cast<double>(n) * static_cast<double>(side) /
                                                                    static_cast<double>(shorter))));
    };
    const std::size_t rw = image.width == shorter ? side : scaled(image.width);
    const std::size_t rh = image.height == shorter ? side : scaled(image.height);
    const RgbImageF resized = resize_bilinear(image, rw, rh);
    if (rw == side && rh == side) return resized;
    const std::size_t x0 = (rw - side) / 2;
    const std::size_t y0 = (rh - side) / 2;
    RgbImageF out(side, side);
    for (std::size_t y = 0; y < side; ++y) {
        const float *src = &resized.pixels[((y + y0) * rw + x0) * 3];
        std::copy_n(src, side * 3, &out.pixels[y * side * 3]);
    }
    return out;
}

RgbImageF adjust_contrast(const RgbImageF &image, double percent) {
    if (!(percent >= -100.0 && percent <= 100.0)) {
        throw ArgumentError("contrast percent must lie in [-100, 100]");
    }
    RgbImageF out = image;
    if (percent == 0.0) return out;
    const float f = static_cast<float>(1.0 + percent / 100.0);
    for (float &v : out.pixels) v = std::clamp(0.5F + f * (v - 0.5F), 0.0F, 1.0F);
    return out;
}

ImageTensor preprocess(const RgbImageF &image, const PreprocessConfig &config, double contrast_percent) {
    config.validate();
    const RgbImageF adjusted = adjust_contrast(image, contrast_percent);
    const RgbImageF square = resize_and_center_crop(adjusted, config.target_side);
    const std::size_t s = config.target_side;
    ImageTensor out;
    out.data = Block<float>(3, s, s);
    for (std::size_t c = 0; c < 3; ++c) {
        const float mean = config.channel_means[c];
        const float inv_std = 1.0F / config.channel_stds[c];
        for (std::size_t y = 0; y < s; ++y) {
            for (std::size_t x = 0; x < s; ++x) {
                out.data.at(c, y, x) = (square.at(x, y, c) - mean) * inv_std;
            }
        }
    }
    out.provenance.normalized = true;
    out.provenance.contrast_percent = contrast_percent;
    return out;
}

ImageTensor preprocess(const RgbImage &image, const PreprocessConfig &config) {
    return preprocess(to_float(image), config, 0.0);
}

}  // namespace artbrain
