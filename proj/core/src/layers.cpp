#include "artbrain/layers.hpp"

#include <cmath>
#include <numbers>

#include "artbrain/error.hpp"

namespace artbrain::nn {

namespace {

std::size_t wrap(std::ptrdiff_t v, std::size_t n) {
    const auto m = static_cast<std::ptrdiff_t>(n);
    return static_cast<std::size_t>(((v % m) + m) % m);
}

// Range of output coordinates o such that 0 <= o + shift < n.
std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t shift, std::size_t n) {
    const auto sn = static_cast<std::ptrdiff_t>(n);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(sn, sn - shift);
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

template <typename T>
Block<T> patchify_forward(const Block<T> &x, std::span<const T> weight, std::span<const T> bias,
                          std::size_t out_channels, std::size_t kernel) {
    const std::size_t in_channels = x.channels;
    if (weight.size() != out_channels * in_channels * kernel * kernel || bias.size() != out_channels) {
        throw ConfigError("patchify convolution weights do not match the input channels");
    }
    const std::size_t oh = x.height / kernel;
    const std::size_t ow = x.width / kernel;
    Block<T> y(out_channels, oh, ow);
    for (std::size_t o = 0; o < out_channels; ++o) {
        auto out = y.channel(o);
        std::fill(out.begin(), out.end(), bias[o]);
        for (std::size_t c = 0; c < in_channels; ++c) {
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const T w = weight[((o * in_channels + c) * kernel + ky) * kernel + kx];
                    for (std::size_t i = 0; i < oh; ++i) {
                        const T *row = &x.at(c, i * kernel + ky, kx);
                        T *dst = &out[i * ow];
                        for (std::size_t j = 0; j < ow; ++j) {
                            dst[j] += w * row[j * kernel];
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Block<T> patchify_backward(const Block<T> &x, std::span<const T> weight, const Block<T> &dy, std::size_t kernel,
                           std::span<T> dweight, std::span<T> dbias, bool want_input_grad) {
    const std::size_t in_channels = x.channels;
    const std::size_t out_channels = dy.channels;
    const std::size_t oh = dy.height;
    const std::size_t ow = dy.width;
    Block<T> dx;
    if (want_input_grad) dx = Block<T>(x.channels, x.height, x.width);
    for (std::size_t o = 0; o < out_channels; ++o) {
        const auto g = dy.channel(o);
        T sum{0};
        for (const T v : g) sum += v;
        dbias[o] += sum;
        for (std::size_t c = 0; c < in_channels; ++c) {
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const std::size_t widx = ((o * in_channels + c) * kernel + ky) * kernel + kx;
                    T acc{0};
                    for (std::size_t i = 0; i < oh; ++i) {
                        const T *row = &x.at(c, i * kernel + ky, kx);
                        const T *grow = &g[i * ow];
                        for (std::size_t j = 0; j < ow; ++j) acc += grow[j] * row[j * kernel];
                    }
                    dweight[widx] += acc;
                    if (want_input_grad) {
                        const T w = weight[widx];
                        for (std::size_t i = 0; i < oh; ++i) {
                            T *drow = &dx.at(c, i * kernel + ky, kx);
                            const T *grow = &g[i * ow];
                            for (std::size_t j = 0; j < ow; ++j) drow[j * kernel] += w * grow[j];
                        }
                    }
                }
            }
        }
    }
    return dx;
}

template <typename T>
Block<T> depthwise_forward(const Block<T> &x, std::span<const T> weight, std::span<const T> bias, std::size_t kernel,
                           Padding padding) {
    if (weight.size() != x.channels * kernel * kernel || bias.size() != x.channels) {
        throw ConfigError("depthwise convolution weights do not match the input channels");
    }
    const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::size_t h = x.height;
    const std::size_t w = x.width;
    Block<T> y(x.channels, h, w);
    for (std::size_t c = 0; c < x.channels; ++c) {
        auto out = y.channel(c);
        const auto in = x.channel(c);
        std::fill(out.begin(), out.end(), bias[c]);
        for (std::size_t ky = 0; ky < kernel; ++ky) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(ky) - pad;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(kx) - pad;
                const T k = weight[(c * kernel + ky) * kernel + kx];
                if (padding == Padding::zero) {
                    const auto [y0, y1] = valid_range(sy, h);
                    const auto [x0, x1] = valid_range(sx, w);
                    for (std::size_t yy = y0; yy < y1; ++yy) {
                        const T *src = in.data() + (yy + sy) * w;
                        T *dst = &out[yy * w];
                        for (std::size_t xx = x0; xx < x1; ++xx) dst[xx] += k * src[xx + sx];
                    }
                } else {
                    for (std::size_t yy = 0; yy < h; ++yy) {
                        const std::size_t ry = wrap(static_cast<std::ptrdiff_t>(yy) + sy, h);
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            out[yy * w + xx] += k * in[ry * w + wrap(static_cast<std::ptrdiff_t>(xx) + sx, w)];
                        }
                    }
                }
            }
        }
    }
    return y;
}

template <typename T>
Block<T> depthwise_backward(const Block<T> &x, std::span<const T> weight, const Block<T> &dy, std::size_t kernel,
                            Padding padding, std::span<T> dweight, std::span<T> dbias, bool want_input_grad) {
    const auto pad = static_cast<std::ptrdiff_t>(kernel / 2);
    const std::size_t h = x.height;
    const std::size_t w = x.width;
    Block<T> dx;
    if (want_input_grad) dx = Block<T>(x.channels, h, w);
    for (std::size_t c = 0; c < x.channels; ++c) {
        const auto g = dy.channel(c);
        const auto in = x.channel(c);
        T sum{0};
        for (const T v : g) sum += v;
        dbias[c] += sum;
        for (std::size_t ky = 0; ky < kernel; ++ky) {
            const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(ky) - pad;
            for (std::size_t kx = 0; kx < kernel; ++kx) {
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(kx) - pad;
                const std::size_t widx = (c * kernel + ky) * kernel + kx;
                const T k = weight[widx];
                T acc{0};
                if (padding == Padding::zero) {
                    const auto [y0, y1] = valid_range(sy, h);
                    const auto [x0, x1] = valid_range(sx, w);
                    for (std::size_t yy = y0; yy < y1; ++yy) {
                        const T *src = in.data() + (yy + sy) * w;
                        const T *grow = &g[yy * w];
                        for (std::size_t xx = x0; xx < x1; ++xx) acc += grow[xx] * src[xx + sx];
                        if (want_input_grad) {
                            T *drow = dx.channel(c).data() + (yy + sy) * w;
                            for (std::size_t xx = x0; xx < x1; ++xx) drow[xx + sx] += k * grow[xx];
                        }
                    }
                } else {
                    for (std::size_t yy = 0; yy < h; ++yy) {
                        const std::size_t ry = wrap(static_cast<std::ptrdiff_t>(yy) + sy, h);
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            const std::size_t src = ry * w + wrap(static_cast<std::ptrdiff_t>(xx) + sx, w);
                            acc += g[yy * w + xx] * in[src];
                            if (want_input_grad) dx.channel(c)[src] += k * g[yy * w + xx];
                        }
                    }
                }
                dweight[widx] += acc;
            }
        }
    }
    return dx;
}

template <typename T>
Block<T> pointwise_forward(const Block<T> &x, std::span<const T> weight, std::span<const T> bias,
                           std::size_t out_channels) {
    if (weight.size() != out_channels * x.channels || bias.size() != out_channels) {
        throw ConfigError("pointwise convolution weights do not match the input channels");
    }
    const std::size_t n = x.plane();
    Block<T> y(out_channels, x.height, x.width);
    for (std::size_t o = 0; o < out_channels; ++o) {
        T *dst = y.channel(o).data();
        std::fill(dst, dst + n, bias[o]);
        for (std::size_t i = 0; i < x.channels; ++i) {
            const T w = weight[o * x.channels + i];
            const T *src = x.channel(i).data();
            for (std::size_t p = 0; p < n; ++p) dst[p] += w * src[p];
        }
    }
    return y;
}

template <typename T>
Block<T> pointwise_backward(const Block<T> &x, std::span<const T> weight, const Block<T> &dy, std::span<T> dweight,
                            std::span<T> dbias, bool want_input_grad) {
    const std::size_t n = x.plane();
    const std::size_t in_channels = x.channels;
    Block<T> dx;
    if (want_input_grad) dx = Block<T>(in_channels, x.height, x.width);
    for (std::size_t o = 0; o < dy.channels; ++o) {
        const T *g = dy.channel(o).data();
        T sum{0};
        for (std::size_t p = 0; p < n; ++p) sum += g[p];
        dbias[o] += sum;
        for (std::size_t i = 0; i < in_channels; ++i) {
            const T *src = x.channel(i).data();
            T acc{0};
            for (std::size_t p = 0; p < n; ++p) acc += g[p] * src[p];
            dweight[o * in_channels + i] += acc;
            if (want_input_grad) {
                const T w = weight[o * in_channels + i];
                T *dst = dx.channel(i).data();
                for (std::size_t p = 0; p < n; ++p) dst[p] += w * g[p];
            }
        }
    }
    return dx;
}

template <typename T>
Block<T> layer_norm_forward(const Block<T> &x, std::span<const T> gamma, std::span<const T> beta, T eps,
                            LayerNormCache<T> *cache) {
    const std::size_t c_count = x.channels;
    const std::size_t n = x.plane();
    if (gamma.size() != c_count || beta.size() != c_count) {
        throw ConfigError("layer norm parameters do not match the channel count");
    }
    Block<T> y(c_count, x.height, x.width);
    std::vector<T> mean(n, T{0});
    std::vector<T> var(n, T{0});
    for (std::size_t c = 0; c < c_count; ++c) {
        const T *src = x.channel(c).data();
        for (std::size_t p = 0; p < n; ++p) mean[p] += src[p];
    }
    for (auto &m : mean) m /= static_cast<T>(c_count);
    for (std::size_t c = 0; c < c_count; ++c) {
        const T *src = x.channel(c).data();
        for (std::size_t p = 0; p < n; ++p) {
            const T d = src[p] - mean[p];
            var[p] += d * d;
        }
    }
    std::vector<T> inv_std(n);
    for (std::size_t p = 0; p < n; ++p) {
        inv_std[p] = T{1} / std::sqrt(var[p] / static_cast<T>(c_count) + eps);
    }
    std::vector<T> normalized;
    if (cache != nullptr) normalized.resize(x.size());
    for (std::size_t c = 0; c < c_count; ++c) {
        const T *src = x.channel(c).data();
        T *dst = y.channel(c).data();
        for (std::size_t p = 0; p < n; ++p) {
            const T xhat = (src[p] - mean[p]) * inv_std[p];
            if (cache != nullptr) normalized[c * n + p] = xhat;
            dst[p] = gamma[c] * xhat + beta[c];
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

template <typename T>
Block<T> layer_norm_backward(const Block<T> &dy, std::span<const T> gamma, const LayerNormCache<T> &cache,
                             std::span<T> dgamma, std::span<T> dbeta) {
    const std::size_t c_count = dy.channels;
    const std::size_t n = dy.plane();
    std::vector<T> mean_dxhat(n, T{0});
    std::vector<T> mean_dxhat_xhat(n, T{0});
    for (std::size_t c = 0; c < c_count; ++c) {
        const T *g = dy.channel(c).data();
        const T *xh = cache.normalized.data() + c * n;
        T sg{0};
        T sgx{0};
        for (std::size_t p = 0; p < n; ++p) {
            sg += g[p];
            sgx += g[p] * xh[p];
            const T dxhat = g[p] * gamma[c];
            mean_dxhat[p] += dxhat;
            mean_dxhat_xhat[p] += dxhat * xh[p];
        }
        dbeta[c] += sg;
        dgamma[c] += sgx;
    }
    const T inv_c = T{1} / static_cast<T>(c_count);
    Block<T> dx(c_count, dy.height, dy.width);
    for (std::size_t c = 0; c < c_count; ++c) {
        const T *g = dy.channel(c).data();
        const T *xh = cache.normalized.data() + c * n;
        T *dst = dx.channel(c).data();
        for (std::size_t p = 0; p < n; ++p) {
            const T dxhat = g[p] * gamma[c];
            dst[p] = cache.inv_std[p] * (dxhat - mean_dxhat[p] * inv_c - xh[p] * mean_dxhat_xhat[p] * inv_c);
        }
    }
    return dx;
}

template <typename T>
T gelu(T x) noexcept {
    return T{0.5} * x * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T x) noexcept {
    const T cdf = T{0.5} * (T{1} + std::erf(x / std::numbers::sqrt2_v<T>));
    const T pdf = std::exp(T{-0.5} * x * x) * (std::numbers::inv_sqrtpi_v<T> / std::numbers::sqrt2_v<T>);
    return cdf + x * pdf;
}

template <typename T>
Block<T> gelu_forward(const Block<T> &x) {
    Block<T> y(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = gelu(x.data[i]);
    return y;
}

template <typename T>
Block<T> gelu_backward(const Block<T> &x, const Block<T> &dy) {
    Block<T> dx(x.channels, x.height, x.width);
    for (std::size_t i = 0; i < x.size(); ++i) dx.data[i] = dy.data[i] * gelu_derivative(x.data[i]);
    return dx;
}

namespace {

std::size_t bin_start(std::size_t o, std::size_t in, std::size_t out) { return (o * in) / out; }
std::size_t bin_end(std::size_t o, std::size_t in, std::size_t out) { return ((o + 1) * in + out - 1) / out; }

}  // namespace

template <typename T>
Block<T> adaptive_avg_pool(const Block<T> &x, std::size_t out_height, std::size_t out_width) {
    Block<T> y(x.channels, out_height, out_width);
    for (std::size_t c = 0; c < x.channels; ++c) {
        for (std::size_t oy = 0; oy < out_height; ++oy) {
            const std::size_t y0 = bin_start(oy, x.height, out_height);
            const std::size_t y1 = bin_end(oy, x.height, out_height);
            for (std::size_t ox = 0; ox < out_width; ++ox) {
                const std::size_t x0 = bin_start(ox, x.width, out_width);
                const std::size_t x1 = bin_end(ox, x.width, out_width);
                T sum{0};
                for (std::size_t yy = y0; yy < y1; ++yy) {
                    for (std::size_t xx = x0; xx < x1; ++xx) sum += x.at(c, yy, xx);
                }
                y.at(c, oy, ox) = sum / static_cast<T>((y1 - y0) * (x1 - x0));
            }
        }
    }
    return y;
}

template <typename T>
Block<T> adaptive_avg_pool_backward(const Block<T> &dy, std::size_t in_height, std::size_t in_width) {
    Block<T> dx(dy.channels, in_height, in_width);
    for (std::size_t c = 0; c < dy.channels; ++c) {
        for (std::size_t oy = 0; oy < dy.height; ++oy) {
            const std::size_t y0 = bin_start(oy, in_height, dy.height);
            const std::size_t y1 = bin_end(oy, in_height, dy.height);
            for (std::size_t ox = 0; ox < dy.width; ++ox) {
                const std::size_t x0 = bin_start(ox, in_width, dy.width);
                const std::size_t x1 = bin_end(ox, in_width, dy.width);
                const T share = dy.at(c, oy, ox) / static_cast<T>((y1 - y0) * (x1 - x0));
                for (std::size_t yy = y0; yy < y1; ++yy) {
                    for (std::size_t xx = x0; xx < x1; ++xx) dx.at(c, yy, xx) += share;
                }
            }
        }
    }
    return dx;
}

#define ARTBRAIN_INSTANTIATE_LAYERS(T)                                                                              \
    template Block<T> patchify_forward(const Block<T> &, std::span<const T>, std::span<const T>, std::size_t,       \
                                       std::size_t);                                                                 \
    template Block<T> patchify_backward(const Block<T> &, std::span<const T>, const Block<T> &, std::size_t,        \
                                        std::span<T>, std::span<T>, bool);                                           \
    template Block<T> depthwise_forward(const Block<T> &, std::span<const T>, std::span<const T>, std::size_t,      \
                                        Padding);                                                                    \
    template Block<T> depthwise_backward(const Block<T> &, std::span<const T>, const Block<T> &, std::size_t,       \
                                         Padding, std::span<T>, std::span<T>, bool);                                 \
    template Block<T> pointwise_forward(const Block<T> &, std::span<const T>, std::span<const T>, std::size_t);     \
    template Block<T> pointwise_backward(const Block<T> &, std::span<const T>, const Block<T> &, std::span<T>,      \
                                         std::span<T>, bool);                                                        \
    template Block<T> layer_norm_forward(const Block<T> &, std::span<const T>, std::span<const T>, T,               \
                                         LayerNormCache<T> *);                                                       \
    template Block<T> layer_norm_backward(const Block<T> &, std::span<const T>, const LayerNormCache<T> &,          \
                                          std::span<T>, std::span<T>);                                               \
    template T gelu(T) noexcept;                                                                                     \
    template T gelu_derivative(T) noexcept;                                                                          \
    template Block<T> gelu_forward(const Block<T> &);                                                                \
    template Block<T> gelu_backward(const Block<T> &, const Block<T> &);                                            \
    template Block<T> adaptive_avg_pool(const Block<T> &, std::size_t, std::size_t);                                 \
    template Block<T> adaptive_avg_pool_backward(const Block<T> &, std::size_t, std::size_t);

ARTBRAIN_INSTANTIATE_LAYERS(float)
ARTBRAIN_INSTANTIATE_LAYERS(double)

#undef ARTBRAIN_INSTANTIATE_LAYERS

}  // namespace artbrain::nn
