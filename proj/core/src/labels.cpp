#include "artbrain/labels.hpp"

#include <algorithm>
#include <string>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

constexpr std::array<std::string_view, kNumSources> kSourceNames = {"Human", "Latent Diffusion", "Stable Diffusion"};
constexpr std::array<std::string_view, kNumSources> kSourceSlugs = {"human", "latent", "stable"};

constexpr std::array<std::string_view, kNumStyles> kStyleNames = {
    "Art Nouveau", "Baroque",     "Expressionism", "Impressionism", "Post Impressionism",
    "Realism",     "Renaissance", "Romanticism",   "Surrealism",    "Ukiyo-e"};
constexpr std::array<std::string_view, kNumStyles> kStyleSlugs = {
    "art_nouveau", "baroque",     "expressionism", "impressionism", "post_impressionism",
    "realism",     "renaissance", "romanticism",   "surrealism",    "ukiyo_e"};

void require_class_vector(std::span<const double> probs) {
    if (probs.size() != kNumClasses) {
        throw ArgumentError("expected " + std::to_string(kNumClasses) + " class probabilities, got " +
                            std::to_string(probs.size()));
    }
}

}  // namespace

ClassIndex::ClassIndex(int value) : value_(value) {
    if (value < 0 || value >= static_cast<int>(kNumClasses)) {
        throw ArgumentError("class index " + std::to_string(value) + " outside [0, 29]");
    }
}

ClassIndex class_of(Source source, Style style) noexcept {
    return ClassIndex(static_cast<int>(kNumStyles) * static_cast<int>(source) + static_cast<int>(style));
}

std::pair<Source, Style> parts_of(ClassIndex index) noexcept {
    return {static_cast<Source>(index.value() / static_cast<int>(kNumStyles)),
            static_cast<Style>(index.value() % static_cast<int>(kNumStyles))};
}

std::string_view name(Source source) noexcept { return kSourceNames[static_cast<std::size_t>(source)]; }
std::string_view name(Style style) noexcept { return kStyleNames[static_cast<std::size_t>(style)]; }
std::string_view slug(Source source) noexcept { return kSourceSlugs[static_cast<std::size_t>(source)]; }
std::string_view slug(Style style) noexcept { return kStyleSlugs[static_cast<std::size_t>(style)]; }

std::string class_label(ClassIndex index) {
    const auto [source, style] = parts_of(index);
    return std::string(name(source)) + " / " + std::string(name(style));
}

std::optional<Source> source_from_slug(std::string_view text) noexcept {
    for (std::size_t i = 0; i < kNumSources; ++i) {
        if (kSourceSlugs[i] == text || kSourceNames[i] == text) return static_cast<Source>(i);
    }
    return std::nullopt;
}

std::optional<Style> style_from_slug(std::string_view text) noexcept {
    for (std::size_t i = 0; i < kNumStyles; ++i) {
        if (kStyleSlugs[i] == text || kStyleNames[i] == text) return static_cast<Style>(i);
    }
    return std::nullopt;
}

std::array<double, kNumSources> source_marginals(std::span<const double> probs) {
    require_class_vector(probs);
    std::array<double, kNumSources> out{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        out[c / kNumStyles] += probs[c];
    }
    return out;
}

std::array<double, kNumStyles> style_marginals(std::span<const double> probs) {
    require_class_vector(probs);
    std::array<double, kNumStyles> out{};
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        out[c % kNumStyles] += probs[c];
    }
    return out;
}

std::array<double, kNumSources> mean_source_scores(std::span<const double> probs) {
    auto out = source_marginals(probs);
    for (auto &v : out) v /= static_cast<double>(kNumStyles);
    return out;
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw ArgumentError("argmax of an empty vector");
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

nlohmann::json class_mapping_json() {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t c = 0; c < kNumClasses; ++c) {
        const auto [source, style] = parts_of(ClassIndex(static_cast<int>(c)));
        classes.push_back({{"class_index", c}, {"source", name(source)}, {"style", name(style)}});
    }
    return {{"mapping_version", kMappingVersion}, {"classes", std::move(classes)}};
}

}  // namespace artbrain
