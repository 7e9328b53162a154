#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/image_io.hpp"

namespace artbrain {

namespace fs = std::filesystem;

namespace {

constexpr int kToyJpegQuality = 100;
// Fingerprint amplitudes in 8-bit units.
constexpr double kLatentOffset = 8.0;
constexpr double kLatentRamp = 16.0;
constexpr double kGrainSigma = 6.0;
constexpr double kCheckerAmplitude = 8.0;

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (const auto p : parts) h = splitmix(h ^ p);
    return h;
}

using Plane = std::vector<double>;  // side*side*3, interleaved

struct Painter {
    std::size_t side;
    std::mt19937_64 rng;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }
    std::array<double, 3> color() { return {uniform(40, 215), uniform(40, 215), uniform(40, 215)}; }
};

// Two-colour rendering driven by a scalar field t in [0, 1].
template <typename Field>
Plane two_tone(Painter &p, Field &&field) {
    const auto bg = p.color();
    auto fg = p.color();
    for (std::size_t c = 0; c < 3; ++c) {
        if (std::abs(fg[c] - bg[c]) < 40) fg[c] = bg[c] < 128 ? bg[c] + 60 : bg[c] - 60;
    }
    Plane out(p.side * p.side * 3);
    for (std::size_t y = 0; y < p.side; ++y) {
        for (std::size_t x = 0; x < p.side; ++x) {
            const double t = std::clamp(field(static_cast<double>(x), static_cast<double>(y)), 0.0, 1.0);
            for (std::size_t c = 0; c < 3; ++c) out[(y * p.side + x) * 3 + c] = bg[c] + t * (fg[c] - bg[c]);
        }
    }
    return out;
}

Plane render_style(Style style, Painter &p) {
    const double s = static_cast<double>(p.side);
    const double pi = std::numbers::pi;
    switch (style) {
    case Style::art_nouveau: {  // oriented stripes
        const double theta = p.uniform(0, pi);
        const double period = p.uniform(10, 18);
        const double phase = p.uniform(0, 2 * pi);
        return two_tone(p, [=](double x, double y) {
            return 0.5 + 0.5 * std::sin(2 * pi * (x * std::cos(theta) + y * std::sin(theta)) / period + phase);
        });
    }
    case Style::baroque: {  // gaussian blobs
        std::vector<std::array<double, 3>> blobs(static_cast<std::size_t>(p.integer(4, 7)));
        for (auto &b : blobs) b = {p.uniform(0, s), p.uniform(0, s), p.uniform(5, 12)};
        return two_tone(p, [=](double x, double y) {
            double v = 0;
            for (const auto &b : blobs) {
                const double dx = x - b[0], dy = y - b[1];
                v += std::exp(-(dx * dx + dy * dy) / (2 * b[2] * b[2]));
            }
            return v;
        });
    }
    case Style::expressionism: {  // grid lines
        const int period = p.integer(11, 15);
        const int ox = p.integer(0, period - 1), oy = p.integer(0, period - 1);
        return two_tone(p, [=](double x, double y) {
            const int gx = (static_cast<int>(x) + ox) % period, gy = (static_cast<int>(y) + oy) % period;
            return (gx < 2 || gy < 2) ? 1.0 : 0.0;
        });
    }
    case Style::impressionism: {  // dot lattice
        const double spacing = p.uniform(11, 15);
        const double radius = p.uniform(2.5, 4.0);
        const double ox = p.uniform(0, spacing), oy = p.uniform(0, spacing);
        return two_tone(p, [=](double x, double y) {
            const double fx = std::fmod(x + ox, spacing) - spacing / 2;
            const double fy = std::fmod(y + oy, spacing) - spacing / 2;
            return std::clamp(radius + 0.5 - std::sqrt(fx * fx + fy * fy), 0.0, 1.0);
        });
    }
    case Style::post_impressionism: {  // swirls
        const double cx = p.uniform(0.3 * s, 0.7 * s), cy = p.uniform(0.3 * s, 0.7 * s);
        const double arms = p.integer(2, 5);
        const double twist = p.uniform(6, 12);
        return two_tone(p, [=](double x, double y) {
            const double dx = x - cx, dy = y - cy;
            return 0.5 + 0.5 * std::sin(arms * std::atan2(dy, dx) + std::sqrt(dx * dx + dy * dy) / twist * 2 * pi);
        });
    }
    case Style::realism: {  // smooth gradients
        const double theta = p.uniform(0, 2 * pi);
        const double bend = p.uniform(-0.3, 0.3);
        return two_tone(p, [=](double x, double y) {
            const double u = ((x - s / 2) * std::cos(theta) + (y - s / 2) * std::sin(theta)) / s + 0.5;
            return u + bend * std::sin(pi * y / s);
        });
    }
    case Style::renaissance: {  // concentric rings
        const double cx = p.uniform(0, s), cy = p.uniform(0, s);
        const double period = p.uniform(9, 15);
        return two_tone(p, [=](double x, double y) {
            return 0.5 + 0.5 * std::cos(2 * pi * std::hypot(x - cx, y - cy) / period);
        });
    }
    case Style::romanticism: {  // warped waves
        const double l1 = p.uniform(14, 22), l2 = p.uniform(10, 20), amp = p.uniform(1.5, 3.0);
        const bool vertical = p.integer(0, 1) == 1;
        return two_tone(p, [=](double x, double y) {
            const double a = vertical ? y : x, b = vertical ? x : y;
            return 0.5 + 0.5 * std::sin(2 * pi * a / l1 + amp * std::sin(2 * pi * b / l2));
        });
    }
    case Style::surrealism: {  // random-value tiles
        const int size = p.integer(10, 14);
        const int ox = p.integer(0, size - 1), oy = p.integer(0, size - 1);
        std::vector<double> values(64);
        for (auto &v : values) v = p.uniform(0, 1);
        return two_tone(p, [=](double x, double y) {
            const int tx = (static_cast<int>(x) + ox) / size, ty = (static_cast<int>(y) + oy) / size;
            return values[static_cast<std::size_t>((ty * 8 + tx) % 64)];
        });
    }
    case Style::ukiyoe: {  // voronoi cells
        std::vector<std::array<double, 3>> sites(static_cast<std::size_t>(p.integer(8, 14)));
        for (auto &site : sites) site = {p.uniform(0, s), p.uniform(0, s), p.uniform(0, 1)};
        return two_tone(p, [=](double x, double y) {
            double best = 1e18, value = 0;
            for (const auto &site : sites) {
                const double d = (x - site[0]) * (x - site[0]) + (y - site[1]) * (y - site[1]);
                if (d < best) {
                    best = d;
                    value = site[2];
                }
            }
            return value;
        });
    }
    }
    throw ArgumentError("unknown style");
}

void apply_fingerprint(Source source, Plane &img, std::size_t side, std::mt19937_64 &rng) {
    switch (source) {
    case Source::human: {
        Plane blurred(img.size());
        const auto n = static_cast<std::ptrdiff_t>(side);
        for (std::ptrdiff_t y = 0; y < n; ++y) {
            for (std::ptrdiff_t x = 0; x < n; ++x) {
                for (std::size_t c = 0; c < 3; ++c) {
                    double sum = 0;
                    for (std::ptrdiff_t dy = -1; dy <= 1; ++dy) {
                        for (std::ptrdiff_t dx = -1; dx <= 1; ++dx) {
                            const auto yy = std::clamp<std::ptrdiff_t>(y + dy, 0, n - 1);
                            const auto xx = std::clamp<std::ptrdiff_t>(x + dx, 0, n - 1);
                            sum += img[static_cast<std::size_t>(yy * n + xx) * 3 + c];
                        }
                    }
                    blurred[static_cast<std::size_t>(y * n + x) * 3 + c] = sum / 9.0;
                }
            }
        }
        std::normal_distribution<double> grain(0.0, kGrainSigma);
        for (auto &v : blurred) v += grain(rng);
        img = std::move(blurred);
        break;
    }
    case Source::latent_diffusion: {
        const std::size_t blocks = (side + 7) / 8;
        std::vector<double> offsets(blocks * blocks);
        std::bernoulli_distribution sign(0.5);
        for (auto &o : offsets) o = sign(rng) ? kLatentOffset : -kLatentOffset;
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const double ramp =
                    kLatentRamp * (static_cast<double>(x % 8) + static_cast<double>(y % 8) - 7.0) / 7.0;
                const double o = offsets[(y / 8) * blocks + x / 8] + ramp;
                for (std::size_t c = 0; c < 3; ++c) img[(y * side + x) * 3 + c] += o;
            }
        }
        break;
    }
    case Source::stable_diffusion:
        for (std::size_t y = 0; y < side; ++y) {
            for (std::size_t x = 0; x < side; ++x) {
                const double o = ((x + y) % 2 == 0) ? kCheckerAmplitude : -kCheckerAmplitude;
                for (std::size_t c = 0; c < 3; ++c) img[(y * side + x) * 3 + c] += o;
            }
        }
        break;
    }
}

}  // namespace

RgbImage render_toy_image(Source source, Style style, std::uint64_t image_seed, std::size_t side) {
    if (side == 0) throw ArgumentError("toy image side must be positive");
    // Style content depends only on the seed, so the same seed differs across sources by fingerprint alone.
    Painter painter{side, std::mt19937_64(mix({image_seed, static_cast<std::uint64_t>(style), 0x51ULL}))};
    Plane img = render_style(style, painter);
    std::mt19937_64 noise(mix({image_seed, static_cast<std::uint64_t>(source), 0xf1ULL}));
    apply_fingerprint(source, img, side, noise);
    RgbImage out(side, side);
    for (std::size_t i = 0; i < img.size(); ++i) {
        out.pixels[i] = static_cast<std::uint8_t>(std::lround(std::clamp(img[i], 0.0, 255.0)));
    }
    return out;
}

DatasetManifest generate_toy(const ToySpec &spec, std::uint64_t seed, const fs::path &out) {
    if (spec.side == 0) throw ArgumentError("toy image side must be positive");
    ClassCounts counts;
    try {
        fs::create_directories(out);
        for (const Split split : {Split::train, Split::test}) {
            const std::size_t per_class = split == Split::train ? spec.train_per_class : spec.test_per_class;
            for (const Source source : spec.sources) {
                for (const Style style : spec.styles) {
                    const fs::path dir = out / std::string(name(split)) / folder_name(source, style);
                    fs::create_directories(dir);
                    for (std::size_t i = 0; i < per_class; ++i) {
                        const std::uint64_t image_seed =
                            mix({seed, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(style), i});
                        const RgbImage image = render_toy_image(source, style, image_seed, spec.side);
                        const SampleName sample{class_of(source, style).value(), image_seed % (kMaxSeed + 1), i};
                        write_file(dir / format_filename(sample), encode_jpeg(image, kToyJpegQuality));
                        counts.at(split, source, style) += 1;
                    }
                }
            }
        }
        const nlohmann::json sidecar = {{"mapping_version", std::string(kMappingVersion)},
                                        {"seed", seed},
                                        {"side", spec.side},
                                        {"counts", counts.to_json()}};
        const std::string text = sidecar.dump(2) + "\n";
        write_file(out / "counts.json", std::as_bytes(std::span(text.data(), text.size())));
    } catch (const fs::filesystem_error &e) {
        throw IoError(std::string("cannot write toy dataset: ") + e.what());
    }
    ValidateOptions options;
    options.expected = counts;
    return validate_manifest(out, default_folder_mapping(), options);
}

ClassCounts read_counts_sidecar(const fs::path &root) {
    const auto bytes = read_file(root / "counts.json");
    try {
        const auto j = nlohmann::json::parse(reinterpret_cast<const char *>(bytes.data()),
                                             reinterpret_cast<const char *>(bytes.data()) + bytes.size());
        return ClassCounts::from_json(j.at("counts"));
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("malformed counts sidecar: ") + e.what());
    }
}

}  // namespace artbrain
