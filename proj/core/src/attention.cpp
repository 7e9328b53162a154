#include "artbrain/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

// Kept strictly inside (0, 1) even where the logistic rounds to an endpoint.
template <typename T>
T sigmoid(T x) {
    const T s = T{1} / (T{1} + std::exp(-x));
    return std::clamp(s, std::numeric_limits<T>::min(), std::nextafter(T{1}, T{0}));
}

template <typename T>
void append_pooled(ConcatBlock<T> &out, const Block<T> &tap, std::size_t side, TapOrigin origin, const char *label) {
    if (tap.height < side || tap.width < side) {
        throw AlignmentError(std::string(label) + " tap is " + std::to_string(tap.height) + "x" +
                             std::to_string(tap.width) + ", smaller than the alignment side " +
                             std::to_string(side));
    }
    const Block<T> pooled =
        (tap.height == side && tap.width == side) ? tap : nn::adaptive_avg_pool(tap, side, side);
    out.data.data.insert(out.data.data.end(), pooled.data.begin(), pooled.data.end());
    out.data.channels += pooled.channels;
    out.channel_origins.insert(out.channel_origins.end(), pooled.channels, origin);
}

template <typename T>
Block<T> slice_channels(const Block<T> &block, std::size_t first, std::size_t count) {
    Block<T> out(count, block.height, block.width);
    std::copy_n(block.data.begin() + static_cast<std::ptrdiff_t>(first * block.plane()), count * block.plane(),
                out.data.begin());
    return out;
}

}  // namespace

template <typename T>
void AttentionParams<T>::validate() const {
    if (reduction == 0 || channels == 0 || channels % reduction != 0) {
        throw ConfigError("reduction " + std::to_string(reduction) + " does not divide " + std::to_string(channels) +
                          " channels");
    }
    const std::size_t expected = channels * hidden();
    if (w1.size() != expected || w2.size() != expected) {
        throw ConfigError("attention matrices have the wrong size");
    }
}

template <typename T>
ConcatBlock<T> concat_blocks(const FeatureTaps<T> &taps, std::size_t align_side) {
    if (align_side == 0) throw AlignmentError("alignment side must be positive");
    ConcatBlock<T> out;
    out.data.height = align_side;
    out.data.width = align_side;
    append_pooled(out, taps.low, align_side, TapOrigin::low, "low");
    append_pooled(out, taps.mid, align_side, TapOrigin::mid, "mid");
    append_pooled(out, taps.high, align_side, TapOrigin::high, "high");
    return out;
}

template <typename T>
std::vector<T> global_average_pool(const Block<T> &block) {
    std::vector<T> out(block.channels, T{0});
    if (block.plane() == 0) return out;
    const T inv = T{1} / static_cast<T>(block.plane());
    for (std::size_t c = 0; c < block.channels; ++c) {
        T sum{0};
        for (const T v : block.channel(c)) sum += v;
        out[c] = sum * inv;
    }
    return out;
}

template <typename T>
ChannelImportance<T> channel_importance(std::span<const T> pooled, const AttentionParams<T> &params,
                                        std::vector<T> *hidden_out) {
    params.validate();
    if (pooled.size() != params.channels) throw ConfigError("pooled vector length differs from the channel count");
    const std::size_t c = params.channels;
    const std::size_t m = params.hidden();
    std::vector<T> hidden(m, T{0});
    for (std::size_t j = 0; j < m; ++j) {
        T acc{0};
        for (std::size_t i = 0; i < c; ++i) acc += params.w1[j * c + i] * pooled[i];
        hidden[j] = acc;
    }
    ChannelImportance<T> out;
    out.reduction = params.reduction;
    out.omega.resize(c);
    for (std::size_t i = 0; i < c; ++i) {
        T acc{0};
        for (std::size_t j = 0; j < m; ++j) acc += params.w2[i * m + j] * std::max(hidden[j], T{0});
        out.omega[i] = sigmoid(acc);
    }
    if (hidden_out != nullptr) *hidden_out = std::move(hidden);
    return out;
}

template <typename T>
Block<T> weight_channels(const ConcatBlock<T> &block, const ChannelImportance<T> &importance) {
    if (importance.omega.size() != block.channels()) {
        throw ConfigError("importance vector length differs from the channel count");
    }
    Block<T> out = block.data;
    for (std::size_t c = 0; c < out.channels; ++c) {
        const T w = importance.omega[c];
        for (T &v : out.channel(c)) v *= w;
    }
    return out;
}

template <typename T>
Block<T> attention_forward(const FeatureTaps<T> &taps, std::size_t align_side, const AttentionParams<T> &params,
                           AttentionTrace<T> *trace) {
    ConcatBlock<T> concat = concat_blocks(taps, align_side);
    std::vector<T> pooled = global_average_pool(concat.data);
    std::vector<T> hidden;
    ChannelImportance<T> importance = channel_importance<T>(pooled, params, &hidden);
    Block<T> weighted = weight_channels(concat, importance);
    if (trace != nullptr) {
        trace->concat = std::move(concat);
        trace->pooled = std::move(pooled);
        trace->hidden = std::move(hidden);
        trace->importance = std::move(importance);
    }
    return weighted;
}

template <typename T>
AttentionGradients<T> attention_backward(const FeatureTaps<T> &taps, const AttentionParams<T> &params,
                                         const AttentionTrace<T> &trace, const Block<T> &grad_weighted) {
    const Block<T> &z = trace.concat.data;
    if (!grad_weighted.same_shape(z)) throw ConfigError("attention gradient has the wrong shape");
    const std::size_t c = params.channels;
    const std::size_t m = params.hidden();
    const auto &omega = trace.importance.omega;

    Block<T> dz(z.channels, z.height, z.width);
    std::vector<T> da(c);
    for (std::size_t i = 0; i < c; ++i) {
        const auto g = grad_weighted.channel(i);
        const auto zi = z.channel(i);
        auto di = dz.channel(i);
        T domega{0};
        for (std::size_t p = 0; p < g.size(); ++p) {
            domega += g[p] * zi[p];
            di[p] = omega[i] * g[p];
        }
        da[i] = domega * omega[i] * (T{1} - omega[i]);
    }

    AttentionGradients<T> out;
    out.w1.assign(m * c, T{0});
    out.w2.assign(c * m, T{0});
    std::vector<T> dh(m, T{0});
    for (std::size_t j = 0; j < m; ++j) {
        const T r = std::max(trace.hidden[j], T{0});
        T dr{0};
        for (std::size_t i = 0; i < c; ++i) {
            out.w2[i * m + j] = da[i] * r;
            dr += params.w2[i * m + j] * da[i];
        }
        dh[j] = trace.hidden[j] > T{0} ? dr : T{0};
    }
    const T inv_plane = T{1} / static_cast<T>(z.plane());
    for (std::size_t i = 0; i < c; ++i) {
        T dy{0};
        for (std::size_t j = 0; j < m; ++j) {
            out.w1[j * c + i] = dh[j] * trace.pooled[i];
            dy += params.w1[j * c + i] * dh[j];
        }
        const T spread = dy * inv_plane;
        for (T &v : dz.channel(i)) v += spread;
    }

    const std::size_t side = z.height;
    const auto unpool = [&](const Block<T> &tap, std::size_t first) {
        Block<T> part = slice_channels(dz, first, tap.channels);
        if (tap.height == side && tap.width == side) return part;
        return nn::adaptive_avg_pool_backward(part, tap.height, tap.width);
    };
    out.taps.low = unpool(taps.low, 0);
    out.taps.mid = unpool(taps.mid, taps.low.channels);
    out.taps.high = unpool(taps.high, taps.low.channels + taps.mid.channels);
    return out;
}

template <typename T>
void init_attention(std::size_t channels, std::size_t reduction, std::span<T> w1, std::span<T> w2,
                    std::mt19937_64 &rng) {
    if (reduction == 0 || channels % reduction != 0) throw ConfigError("reduction must divide the channel count");
    const std::size_t m = channels / reduction;
    std::uniform_real_distribution<double> d1(-std::sqrt(1.0 / static_cast<double>(channels)),
                                              std::sqrt(1.0 / static_cast<double>(channels)));
    std::uniform_real_distribution<double> d2(-std::sqrt(1.0 / static_cast<double>(m)),
                                              std::sqrt(1.0 / static_cast<double>(m)));
    for (auto &v : w1) v = static_cast<T>(d1(rng));
    for (auto &v : w2) v = static_cast<T>(d2(rng));
}

#define ARTBRAIN_INSTANTIATE_ATTENTION(T)                                                                            \
    template struct AttentionParams<T>;                                                                              \
    template ConcatBlock<T> concat_blocks(const FeatureTaps<T> &, std::size_t);                                     \
    template std::vector<T> global_average_pool(const Block<T> &);                                                  \
    template ChannelImportance<T> channel_importance(std::span<const T>, const AttentionParams<T> &,                 \
                                                    std::vector<T> *);                                               \
    template Block<T> weight_channels(const ConcatBlock<T> &, const ChannelImportance<T> &);                        \
    template Block<T> attention_forward(const FeatureTaps<T> &, std::size_t, const AttentionParams<T> &,            \
                                        AttentionTrace<T> *);                                                        \
    template AttentionGradients<T> attention_backward(const FeatureTaps<T> &, const AttentionParams<T> &,           \
                                                      const AttentionTrace<T> &, const Block<T> &);                  \
    template void init_attention(std::size_t, std::size_t, std::span<T>, std::span<T>, std::mt19937_64 &);

ARTBRAIN_INSTANTIATE_ATTENTION(float)
ARTBRAIN_INSTANTIATE_ATTENTION(double)

#undef ARTBRAIN_INSTANTIATE_ATTENTION

}  // namespace artbrain
