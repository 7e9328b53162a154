#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/labels.hpp"
#include "artbrain/model.hpp"
#include "artbrain/preprocess.hpp"

namespace artbrain {

struct ClassHeatLayer {
    ClassIndex class_index{0};
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> map;  // values in [0, 1]
};

struct GradCam {
    ClassHeatLayer layer;
    /// Spatial mean of dScore/dA per channel of the hooked block.
    std::vector<double> channel_weights;
};

using Color = std::array<std::uint8_t, 3>;

struct LegendEntry {
    ClassIndex class_index{0};
    std::size_t rank = 0;  // 0 = most probable
    double probability = 0.0;
    Color color{};
};

inline constexpr int kNoClass = -1;

struct FusedSaliency {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<ClassHeatLayer> layers;  // in rank order
    /// Winning layer per pixel (index into `layers`), or kNoClass.
    std::vector<int> assignment;
    std::vector<LegendEntry> legend;
};

/// Fixed overlay palette; entry r colours the rank-r class.
const std::vector<Color> &legend_palette();

/// Grad-CAM on the model's feature block (Z_weighted), against the pre-softmax class score.
/// The map is ReLU(sum_c w_c A_c) divided by its maximum; an all-zero map stays zero.
/// Throws ArgumentError for an out-of-range class.
GradCam grad_cam(const Model &model, const ImageTensor &image, int class_index);

/// Joint normalization and exclusive per-pixel assignment of raw class maps.
/// Maps are min-max scaled over the whole stack, passed through ReLU, and each pixel
/// goes to the largest positive value; equal values go to the earlier (higher ranked) map.
FusedSaliency fuse_class_maps(const std::vector<std::vector<double>> &raw_maps, std::size_t height,
                              std::size_t width, const std::vector<TopEntry> &ranked_classes);

/// FM-G-CAM over the top-k predicted classes. Throws ArgumentError unless 1 <= k <= 30.
FusedSaliency fm_g_cam(const Model &model, const ImageTensor &image, std::size_t k = 3);

/// Bilinear upsampling of every layer; the assignment is recomputed at the new size.
FusedSaliency upsample(const FusedSaliency &saliency, std::size_t height, std::size_t width);
ClassHeatLayer upsample(const ClassHeatLayer &layer, std::size_t height, std::size_t width);

/// Blends the winning class colour, scaled by its heat, into the raster:
/// out = (1 - alpha*h) * in + alpha*h * colour. Throws ArgumentError on size mismatch or alpha outside [0, 1].
RgbImage overlay(const RgbImage &raster, const FusedSaliency &saliency, double alpha);

/// `[{"class_index", "style", "source", "color", "rank", "probability"}, ...]`
nlohmann::json legend_json(const FusedSaliency &saliency);

}  // namespace artbrain
