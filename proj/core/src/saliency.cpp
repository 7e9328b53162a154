#include "artbrain/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

// Raw weighted activation sum_c w_c A_c (no ReLU), plus the channel weights.
std::vector<double> weighted_activation(const Model &model, const Block<float> &features, ClassIndex class_index,
                                        std::vector<double> *weights_out) {
    const Block<float> grad = model.class_score_gradient(features, class_index);
    const std::size_t plane = features.plane();
    std::vector<double> weights(features.channels, 0.0);
    for (std::size_t c = 0; c < features.channels; ++c) {
        double sum = 0.0;
        for (const float g : grad.channel(c)) sum += g;
        weights[c] = sum / static_cast<double>(plane);
    }
    std::vector<double> map(plane, 0.0);
    for (std::size_t c = 0; c < features.channels; ++c) {
        const double w = weights[c];
        if (w == 0.0) continue;
        const auto a = features.channel(c);
        for (std::size_t p = 0; p < plane; ++p) map[p] += w * a[p];
    }
    if (weights_out != nullptr) *weights_out = std::move(weights);
    return map;
}

std::vector<int> assign(const std::vector<ClassHeatLayer> &layers, std::size_t plane) {
    std::vector<int> out(plane, kNoClass);
    for (std::size_t p = 0; p < plane; ++p) {
        float best = 0.0F;
        for (std::size_t k = 0; k < layers.size(); ++k) {
            if (layers[k].map[p] > best) {
                best = layers[k].map[p];
                out[p] = static_cast<int>(k);
            }
        }
    }
    return out;
}

std::vector<float> resample(const std::vector<float> &src, std::size_t sh, std::size_t sw, std::size_t dh,
                            std::size_t dw) {
    const auto coord = [](std::size_t o, std::size_t n_src, std::size_t n_dst) {
        const double s = (static_cast<double>(o) + 0.5) * static_cast<double>(n_src) / static_cast<double>(n_dst) - 0.5;
        return std::clamp(s, 0.0, static_cast<double>(n_src - 1));
    };
    std::vector<float> out(dh * dw);
    for (std::size_t y = 0; y < dh; ++y) {
        const double sy = coord(y, sh, dh);
        const auto y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, sh - 1);
        const double ty = sy - static_cast<double>(y0);
        for (std::size_t x = 0; x < dw; ++x) {
            const double sx = coord(x, sw, dw);
            const auto x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, sw - 1);
            const double tx = sx - static_cast<double>(x0);
            const double top = src[y0 * sw + x0] * (1 - tx) + src[y0 * sw + x1] * tx;
            const double bottom = src[y1 * sw + x0] * (1 - tx) + src[y1 * sw + x1] * tx;
            out[y * dw + x] = static_cast<float>(top * (1 - ty) + bottom * ty);
        }
    }
    return out;
}

std::string hex(const Color &c) { return fmt::format("#{:02x}{:02x}{:02x}", c[0], c[1], c[2]); }

}  // namespace

const std::vector<Color> &legend_palette() {
    static const std::vector<Color> palette = [] {
        std::vector<Color> p = {{230, 25, 75},   {60, 180, 75},   {0, 130, 200},   {255, 225, 25},  {245, 130, 48},
                                {145, 30, 180},  {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212},
                                {0, 128, 128},   {220, 190, 255}, {170, 110, 40},  {255, 250, 200}, {128, 0, 0},
                                {170, 255, 195}, {128, 128, 0},   {255, 215, 180}, {0, 0, 128},     {128, 128, 128}};
        for (std::size_t i = 0; p.size() < kNumClasses; ++i) {
            const Color &base = p[i];
            p.push_back({static_cast<std::uint8_t>(base[0] * 3 / 5), static_cast<std::uint8_t>(base[1] * 3 / 5),
                         static_cast<std::uint8_t>(base[2] * 3 / 5)});
        }
        return p;
    }();
    return palette;
}

GradCam grad_cam(const Model &model, const ImageTensor &image, int class_index) {
    const ClassIndex cls(class_index);
    const Block<float> features = model.feature_block(image.data);
    GradCam out;
    auto raw = weighted_activation(model, features, cls, &out.channel_weights);
    double peak = 0.0;
    for (double &v : raw) {
        v = std::max(v, 0.0);
        peak = std::max(peak, v);
    }
    out.layer.class_index = cls;
    out.layer.height = features.height;
    out.layer.width = features.width;
    out.layer.map.resize(raw.size());
    for (std::size_t p = 0; p < raw.size(); ++p) {
        out.layer.map[p] = peak > 0.0 ? static_cast<float>(raw[p] / peak) : 0.0F;
    }
    return out;
}

FusedSaliency fuse_class_maps(const std::vector<std::vector<double>> &raw_maps, std::size_t height,
                              std::size_t width, const std::vector<TopEntry> &ranked_classes) {
    if (raw_maps.empty() || raw_maps.size() != ranked_classes.size()) {
        throw ArgumentError("need one raw map per ranked class");
    }
    const std::size_t plane = height * width;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto &m : raw_maps) {
        if (m.size() != plane) throw ArgumentError("raw map size does not match the given shape");
        for (const double v : m) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    const double span = hi - lo;
    const auto &palette = legend_palette();

    FusedSaliency out;
    out.height = height;
    out.width = width;
    for (std::size_t k = 0; k < raw_maps.size(); ++k) {
        ClassHeatLayer layer;
        layer.class_index = ranked_classes[k].class_index;
        layer.height = height;
        layer.width = width;
        layer.map.resize(plane);
        for (std::size_t p = 0; p < plane; ++p) {
            const double n = span > 0.0 ? (raw_maps[k][p] - lo) / span : 0.0;
            layer.map[p] = static_cast<float>(std::max(n, 0.0));
        }
        out.layers.push_back(std::move(layer));
        out.legend.push_back({ranked_classes[k].class_index, k, ranked_classes[k].probability, palette[k]});
    }
    out.assignment = assign(out.layers, plane);
    return out;
}

FusedSaliency fm_g_cam(const Model &model, const ImageTensor &image, std::size_t k) {
    if (k < 1 || k > kNumClasses) throw ArgumentError("k must lie in [1, 30]");
    const Block<float> features = model.feature_block(image.data);
    const auto logits = model.logits_from_features(features);
    std::array<double, kNumClasses> wide{};
    std::copy(logits.begin(), logits.end(), wide.begin());
    const auto probs = softmax<double>(wide);
    const auto ranked = top_k(Prediction::from_probs(probs), k);
    std::vector<std::vector<double>> raw;
    raw.reserve(k);
    for (const auto &entry : ranked) raw.push_back(weighted_activation(model, features, entry.class_index, nullptr));
    return fuse_class_maps(raw, features.height, features.width, ranked);
}

ClassHeatLayer upsample(const ClassHeatLayer &layer, std::size_t height, std::size_t width) {
    if (height == 0 || width == 0 || layer.height == 0 || layer.width == 0) {
        throw ArgumentError("cannot resample an empty map");
    }
    ClassHeatLayer out = layer;
    out.height = height;
    out.width = width;
    out.map = resample(layer.map, layer.height, layer.width, height, width);
    return out;
}

FusedSaliency upsample(const FusedSaliency &saliency, std::size_t height, std::size_t width) {
    FusedSaliency out;
    out.height = height;
    out.width = width;
    out.legend = saliency.legend;
    for (const auto &layer : saliency.layers) out.layers.push_back(upsample(layer, height, width));
    out.assignment = assign(out.layers, height * width);
    return out;
}

RgbImage overlay(const RgbImage &raster, const FusedSaliency &saliency, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ArgumentError("alpha must lie in [0, 1]");
    if (raster.width != saliency.width || raster.height != saliency.height || raster.channels != 3) {
        throw ArgumentError(fmt::format("raster {}x{} does not match saliency {}x{}", raster.width, raster.height,
                                        saliency.width, saliency.height));
    }
    RgbImage out = raster;
    for (std::size_t p = 0; p < saliency.assignment.size(); ++p) {
        const int k = saliency.assignment[p];
        if (k == kNoClass) continue;
        const double a = alpha * saliency.layers[static_cast<std::size_t>(k)].map[p];
        const Color &color = saliency.legend[static_cast<std::size_t>(k)].color;
        for (std::size_t c = 0; c < 3; ++c) {
            const double v = (1.0 - a) * raster.pixels[p * 3 + c] + a * color[c];
            out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
        }
    }
    return out;
}

nlohmann::json legend_json(const FusedSaliency &saliency) {
    auto out = nlohmann::json::array();
    for (const auto &e : saliency.legend) {
        const auto [source, style] = parts_of(e.class_index);
        out.push_back({{"class_index", e.class_index.value()},
                       {"label", class_label(e.class_index)},
                       {"style", std::string(name(style))},
                       {"source", std::string(name(source))},
                       {"color", hex(e.color)},
                       {"rank", e.rank},
                       {"probability", e.probability}});
    }
    return out;
}

}  // namespace artbrain
