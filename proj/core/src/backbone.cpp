#include "artbrain/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "artbrain/error.hpp"
#include "artbrain/preprocess.hpp"

namespace artbrain {

namespace {

constexpr double kNormEps = 1e-6;
constexpr std::size_t kStemKernel = 4;
constexpr std::size_t kDownKernel = 2;

template <typename T>
std::span<const T> view(const ParameterSet<T> &params, std::size_t i) {
    return params[i].value;
}

template <typename T>
std::span<T> grad(Gradients<T> &grads, std::size_t i) {
    return grads[i];
}

template <typename T>
void require_finite(const Block<T> &block, const std::string &layer) {
    if (!block.all_finite()) throw NumericError(layer, "non-finite activation");
}

template <typename T>
void add_into(Block<T> &dst, const Block<T> &src) {
    if (src.empty()) return;
    if (dst.empty()) {
        dst = src;
        return;
    }
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
void uniform_fill(std::vector<T> &values, double bound, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto &v : values) v = static_cast<T>(dist(rng));
}

}  // namespace

void BackboneConfig::validate() const {
    if (stage_channels.size() != stage_depths.size()) {
        throw ConfigError("stage_channels and stage_depths differ in length");
    }
    if (stage_channels.size() < 3) throw ConfigError("a backbone needs at least three stages");
    for (std::size_t i = 0; i < stage_channels.size(); ++i) {
        if (stage_channels[i] == 0 || stage_depths[i] == 0) {
            throw ConfigError("stage channel counts and depths must be positive");
        }
    }
    if (!(tap_stages[0] < tap_stages[1] && tap_stages[1] < tap_stages[2])) {
        throw ConfigError("tap stages must be strictly increasing");
    }
    if (tap_stages[2] >= stage_channels.size()) throw ConfigError("tap stage index beyond the last stage");
    if (expansion == 0) throw ConfigError("block expansion must be positive");
    if (depthwise_kernel % 2 == 0) throw ConfigError("depthwise kernel must be odd");
    if (stage_side(tap_stages[2]) == 0) {
        throw ConfigError("input side " + std::to_string(input_side) + " too small for the high tap stride");
    }
}

std::size_t BackboneConfig::stage_side(std::size_t stage) const noexcept {
    std::size_t side = input_side / kStemKernel;
    for (std::size_t s = 1; s <= stage; ++s) side /= kDownKernel;
    return side;
}

ParamGroup BackboneConfig::stage_group(std::size_t stage) const noexcept {
    if (stage <= tap_stages[0]) return ParamGroup::low;
    if (stage <= tap_stages[1]) return ParamGroup::mid;
    return ParamGroup::high;
}

nlohmann::json BackboneConfig::to_json() const {
    return {{"variant", variant_name},
            {"stage_channels", stage_channels},
            {"stage_depths", stage_depths},
            {"input_side", input_side},
            {"tap_stages", tap_stages},
            {"expansion", expansion},
            {"depthwise_kernel", depthwise_kernel},
            {"layer_norm", layer_norm},
            {"padding", padding == nn::Padding::zero ? "zero" : "circular"}};
}

BackboneConfig BackboneConfig::from_json(const nlohmann::json &j) {
    BackboneConfig c;
    c.variant_name = j.at("variant").get<std::string>();
    c.stage_channels = j.at("stage_channels").get<std::vector<std::size_t>>();
    c.stage_depths = j.at("stage_depths").get<std::vector<std::size_t>>();
    c.input_side = j.at("input_side").get<std::size_t>();
    c.tap_stages = j.at("tap_stages").get<std::array<std::size_t, 3>>();
    c.expansion = j.value("expansion", std::size_t{4});
    c.depthwise_kernel = j.value("depthwise_kernel", std::size_t{7});
    c.layer_norm = j.value("layer_norm", true);
    c.padding = j.value("padding", std::string("zero")) == "circular" ? nn::Padding::circular : nn::Padding::zero;
    c.validate();
    return c;
}

BackboneConfig BackboneConfig::tiny() {
    BackboneConfig c;
    c.stage_channels = {8, 16, 32, 64};
    c.stage_depths = {1, 1, 1, 1};
    c.input_side = 64;
    c.tap_stages = {1, 2, 3};
    c.variant_name = "tiny";
    return c;
}

BackboneConfig BackboneConfig::convnext_tiny() {
    BackboneConfig c;
    c.stage_channels = {96, 192, 384, 768};
    c.stage_depths = {3, 3, 9, 3};
    c.input_side = 224;
    c.tap_stages = {1, 2, 3};
    c.variant_name = "convnext-t";
    return c;
}

template <typename T>
BackboneLayout register_backbone(const BackboneConfig &config, ParameterSet<T> &params) {
    config.validate();
    BackboneLayout layout;
    const std::size_t c0 = config.stage_channels[0];
    layout.stem_w = params.add("stem.conv.weight", {c0, 3, kStemKernel, kStemKernel}, ParamGroup::low);
    layout.stem_b = params.add("stem.conv.bias", {c0}, ParamGroup::low);
    if (config.layer_norm) {
        layout.stem_norm_g = params.add("stem.norm.weight", {c0}, ParamGroup::low);
        layout.stem_norm_b = params.add("stem.norm.bias", {c0}, ParamGroup::low);
    }
    const std::size_t k = config.depthwise_kernel;
    for (std::size_t s = 0; s <= config.tap_stages[2]; ++s) {
        const std::string prefix = "stages." + std::to_string(s);
        const ParamGroup group = config.stage_group(s);
        const std::size_t c = config.stage_channels[s];
        StageLayout stage;
        if (s > 0) {
            const std::size_t prev = config.stage_channels[s - 1];
            if (config.layer_norm) {
                stage.down_norm_g = params.add(prefix + ".down.norm.weight", {prev}, group);
                stage.down_norm_b = params.add(prefix + ".down.norm.bias", {prev}, group);
            }
            stage.down_w = params.add(prefix + ".down.conv.weight", {c, prev, kDownKernel, kDownKernel}, group);
            stage.down_b = params.add(prefix + ".down.conv.bias", {c}, group);
        }
        for (std::size_t b = 0; b < config.stage_depths[s]; ++b) {
            const std::string bp = prefix + ".blocks." + std::to_string(b);
            ConvBlockLayout block{};
            block.dw_w = params.add(bp + ".dwconv.weight", {c, 1, k, k}, group);
            block.dw_b = params.add(bp + ".dwconv.bias", {c}, group);
            if (config.layer_norm) {
                block.norm_g = params.add(bp + ".norm.weight", {c}, group);
                block.norm_b = params.add(bp + ".norm.bias", {c}, group);
            }
            block.pw1_w = params.add(bp + ".pwconv1.weight", {config.expansion * c, c}, group);
            block.pw1_b = params.add(bp + ".pwconv1.bias", {config.expansion * c}, group);
            block.pw2_w = params.add(bp + ".pwconv2.weight", {c, config.expansion * c}, group);
            block.pw2_b = params.add(bp + ".pwconv2.bias", {c}, group);
            stage.blocks.push_back(block);
        }
        layout.stages.push_back(std::move(stage));
    }
    return layout;
}

template <typename T>
void init_backbone(const BackboneConfig &config, const BackboneLayout &layout, ParameterSet<T> &params,
                   std::mt19937_64 &rng) {
    const auto conv = [&](std::size_t w, std::size_t fan_in) {
        uniform_fill(params[w].value, std::sqrt(1.0 / static_cast<double>(fan_in)), rng);
    };
    const auto norm = [&](std::size_t g, std::size_t b) {
        std::fill(params[g].value.begin(), params[g].value.end(), T{1});
        std::fill(params[b].value.begin(), params[b].value.end(), T{0});
    };
    conv(layout.stem_w, 3 * kStemKernel * kStemKernel);
    if (config.layer_norm) norm(layout.stem_norm_g, layout.stem_norm_b);
    const std::size_t k = config.depthwise_kernel;
    for (std::size_t s = 0; s < layout.stages.size(); ++s) {
        const auto &stage = layout.stages[s];
        const std::size_t c = config.stage_channels[s];
        if (s > 0) {
            if (config.layer_norm) norm(stage.down_norm_g, stage.down_norm_b);
            conv(stage.down_w, config.stage_channels[s - 1] * kDownKernel * kDownKernel);
        }
        for (const auto &block : stage.blocks) {
            conv(block.dw_w, k * k);
            if (config.layer_norm) norm(block.norm_g, block.norm_b);
            conv(block.pw1_w, c);
            conv(block.pw2_w, config.expansion * c);
        }
    }
}

template <typename T>
FeatureTaps<T> forward_taps(const BackboneConfig &config, const BackboneLayout &layout,
                            const ParameterSet<T> &params, const Block<T> &image, BackboneTrace<T> *trace) {
    if (image.channels != 3 || image.height != config.input_side || image.width != config.input_side) {
        throw ConfigError("backbone expects a 3x" + std::to_string(config.input_side) + "x" +
                          std::to_string(config.input_side) + " image");
    }
    const T eps = static_cast<T>(kNormEps);
    if (trace != nullptr) {
        trace->image = image;
        trace->stages.assign(layout.stages.size(), {});
    }

    Block<T> x = nn::patchify_forward(image, view(params, layout.stem_w), view(params, layout.stem_b),
                                      config.stage_channels[0], kStemKernel);
    if (config.layer_norm) {
        if (trace != nullptr) trace->stem_out = x;
        x = nn::layer_norm_forward(x, view(params, layout.stem_norm_g), view(params, layout.stem_norm_b), eps,
                                   trace != nullptr ? &trace->stem_norm : nullptr);
    }
    require_finite(x, "stem");

    FeatureTaps<T> taps;
    for (std::size_t s = 0; s < layout.stages.size(); ++s) {
        const auto &stage = layout.stages[s];
        StageTrace<T> *st = trace != nullptr ? &trace->stages[s] : nullptr;
        if (st != nullptr) st->input = x;
        if (s > 0) {
            if (config.layer_norm) {
                x = nn::layer_norm_forward(x, view(params, stage.down_norm_g), view(params, stage.down_norm_b), eps,
                                           st != nullptr ? &st->down_norm : nullptr);
            }
            if (st != nullptr) st->down_norm_out = x;
            x = nn::patchify_forward(x, view(params, stage.down_w), view(params, stage.down_b),
                                     config.stage_channels[s], kDownKernel);
        }
        for (const auto &block : stage.blocks) {
            ConvBlockTrace<T> bt;
            Block<T> h = nn::depthwise_forward(x, view(params, block.dw_w), view(params, block.dw_b),
                                               config.depthwise_kernel, config.padding);
            if (st != nullptr) {
                bt.input = x;
                bt.dw_out = h;
            }
            if (config.layer_norm) {
                h = nn::layer_norm_forward(h, view(params, block.norm_g), view(params, block.norm_b), eps,
                                           st != nullptr ? &bt.norm : nullptr);
            }
            if (st != nullptr) bt.norm_out = h;
            h = nn::pointwise_forward(h, view(params, block.pw1_w), view(params, block.pw1_b),
                                      config.expansion * config.stage_channels[s]);
            if (st != nullptr) bt.pw1_out = h;
            h = nn::gelu_forward(h);
            if (st != nullptr) bt.act_out = h;
            h = nn::pointwise_forward(h, view(params, block.pw2_w), view(params, block.pw2_b),
                                      config.stage_channels[s]);
            for (std::size_t i = 0; i < x.size(); ++i) x.data[i] += h.data[i];
            if (st != nullptr) st->blocks.push_back(std::move(bt));
        }
        require_finite(x, "stages." + std::to_string(s));
        if (s == config.tap_stages[0]) taps.low = x;
        if (s == config.tap_stages[1]) taps.mid = x;
        if (s == config.tap_stages[2]) taps.high = x;
    }
    return taps;
}

template <typename T>
void backward_taps(const BackboneConfig &config, const BackboneLayout &layout, const ParameterSet<T> &params,
                   const BackboneTrace<T> &trace, const FeatureTaps<T> &grad_taps, Gradients<T> &grads,
                   const TrainableMask &trainable) {
    // Lowest stage whose parameters need gradients; -1 means the stem as well.
    std::ptrdiff_t lowest = static_cast<std::ptrdiff_t>(layout.stages.size());
    for (std::size_t s = 0; s < layout.stages.size(); ++s) {
        if (trainable[config.stage_group(s)]) {
            lowest = static_cast<std::ptrdiff_t>(s);
            break;
        }
    }
    if (trainable.low) lowest = -1;
    if (lowest >= static_cast<std::ptrdiff_t>(layout.stages.size())) return;

    Block<T> g;
    for (std::ptrdiff_t si = static_cast<std::ptrdiff_t>(layout.stages.size()) - 1;
         si >= std::max<std::ptrdiff_t>(lowest, 0); --si) {
        const auto s = static_cast<std::size_t>(si);
        if (s == config.tap_stages[0]) add_into(g, grad_taps.low);
        if (s == config.tap_stages[1]) add_into(g, grad_taps.mid);
        if (s == config.tap_stages[2]) add_into(g, grad_taps.high);
        if (g.empty()) continue;

        const auto &stage = layout.stages[s];
        const auto &st = trace.stages[s];
        const bool need_stage_input = si > lowest;
        for (std::size_t bi = stage.blocks.size(); bi-- > 0;) {
            const auto &block = stage.blocks[bi];
            const auto &bt = st.blocks[bi];
            const bool need_input = need_stage_input || bi > 0 || s > 0;
            Block<T> h = nn::pointwise_backward(bt.act_out, view(params, block.pw2_w), g, grad(grads, block.pw2_w),
                                                grad(grads, block.pw2_b), true);
            h = nn::gelu_backward(bt.pw1_out, h);
            h = nn::pointwise_backward(bt.norm_out, view(params, block.pw1_w), h, grad(grads, block.pw1_w),
                                       grad(grads, block.pw1_b), true);
            if (config.layer_norm) {
                h = nn::layer_norm_backward(h, view(params, block.norm_g), bt.norm, grad(grads, block.norm_g),
                                            grad(grads, block.norm_b));
            }
            h = nn::depthwise_backward(bt.input, view(params, block.dw_w), h, config.depthwise_kernel,
                                       config.padding, grad(grads, block.dw_w), grad(grads, block.dw_b),
                                       need_input);
            if (need_input) add_into(g, h);
        }
        if (s > 0) {
            Block<T> h = nn::patchify_backward(st.down_norm_out, view(params, stage.down_w), g, kDownKernel,
                                               grad(grads, stage.down_w), grad(grads, stage.down_b),
                                               need_stage_input || config.layer_norm);
            if (config.layer_norm) {
                h = nn::layer_norm_backward(h, view(params, stage.down_norm_g), st.down_norm,
                                            grad(grads, stage.down_norm_g), grad(grads, stage.down_norm_b));
            }
            g = need_stage_input ? std::move(h) : Block<T>{};
        } else if (!need_stage_input) {
            g = Block<T>{};
        }
    }

    if (lowest == -1 && !g.empty()) {
        if (config.layer_norm) {
            g = nn::layer_norm_backward(g, view(params, layout.stem_norm_g), trace.stem_norm,
                                        grad(grads, layout.stem_norm_g), grad(grads, layout.stem_norm_b));
        }
        nn::patchify_backward(trace.image, view(params, layout.stem_w), g, kStemKernel, grad(grads, layout.stem_w),
                              grad(grads, layout.stem_b), false);
    }
}

Backbone::Backbone(BackboneConfig config, const WeightArchive &weights) : config_(std::move(config)) {
    layout_ = register_backbone(config_, params_);
    params_.import_from(weights);
}

FeatureTaps<float> Backbone::forward_taps(const ImageTensor &image) const {
    return artbrain::forward_taps(config_, layout_, params_, image.data);
}

#define ARTBRAIN_INSTANTIATE_BACKBONE(T)                                                                            \
    template BackboneLayout register_backbone(const BackboneConfig &, ParameterSet<T> &);                           \
    template void init_backbone(const BackboneConfig &, const BackboneLayout &, ParameterSet<T> &,                  \
                                std::mt19937_64 &);                                                                  \
    template FeatureTaps<T> forward_taps(const BackboneConfig &, const BackboneLayout &, const ParameterSet<T> &,    \
                                         const Block<T> &, BackboneTrace<T> *);                                      \
    template void backward_taps(const BackboneConfig &, const BackboneLayout &, const ParameterSet<T> &,            \
                                const BackboneTrace<T> &, const FeatureTaps<T> &, Gradients<T> &,                   \
                                const TrainableMask &);

ARTBRAIN_INSTANTIATE_BACKBONE(float)
ARTBRAIN_INSTANTIATE_BACKBONE(double)

#undef ARTBRAIN_INSTANTIATE_BACKBONE

}  // namespace artbrain
