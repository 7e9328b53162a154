#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include <nlohmann/json.hpp>

namespace artbrain {

enum class Source : std::uint8_t { human, latent_diffusion, stable_diffusion };

enum class Style : std::uint8_t {
    art_nouveau,
    baroque,
    expressionism,
    impressionism,
    post_impressionism,
    realism,
    renaissance,
    romanticism,
    surrealism,
    ukiyoe,
};

inline constexpr std::size_t kNumSources = 3;
inline constexpr std::size_t kNumStyles = 10;
inline constexpr std::size_t kNumClasses = kNumSources * kNumStyles;

/// Version tag written into manifests and weight archives so on-disk class ids bind explicitly.
inline constexpr std::string_view kMappingVersion = "artbrain-classes-v1";

inline constexpr std::array<Source, kNumSources> kAllSources = {
    Source::human, Source::latent_diffusion, Source::stable_diffusion};

inline constexpr std::array<Style, kNumStyles> kAllStyles = {
    Style::art_nouveau, Style::baroque,     Style::expressionism, Style::impressionism, Style::post_impressionism,
    Style::realism,     Style::renaissance, Style::romanticism,   Style::surrealism,    Style::ukiyoe};

/// One of the 30 source/style classes. Always in [0, 29].
class ClassIndex {
public:
    /// Throws ArgumentError outside [0, 29].
    explicit ClassIndex(int value);

    constexpr int value() const noexcept { return value_; }
    constexpr std::size_t index() const noexcept { return static_cast<std::size_t>(value_); }

    friend constexpr auto operator<=>(ClassIndex, ClassIndex) = default;

private:
    int value_;
};

ClassIndex class_of(Source source, Style style) noexcept;
std::pair<Source, Style> parts_of(ClassIndex index) noexcept;

std::string_view name(Source source) noexcept;
std::string_view name(Style style) noexcept;
/// Short machine-friendly identifiers: "human", "latent", "stable".
std::string_view slug(Source source) noexcept;
/// Snake-case identifiers used for folder names, e.g. "post_impressionism".
std::string_view slug(Style style) noexcept;
/// Display label such as "Stable Diffusion / Ukiyo-e".
std::string class_label(ClassIndex index);

std::optional<Source> source_from_slug(std::string_view text) noexcept;
std::optional<Style> style_from_slug(std::string_view text) noexcept;

/// Per-source sums of subclass probabilities. Throws ArgumentError unless probs has 30 entries.
std::array<double, kNumSources> source_marginals(std::span<const double> probs);
/// Per-style sums of subclass probabilities.
std::array<double, kNumStyles> style_marginals(std::span<const double> probs);
/// Per-source mean subclass score (the sum divided by the 10 subclasses per source).
std::array<double, kNumSources> mean_source_scores(std::span<const double> probs);

/// Index of the largest entry; the earliest index wins ties.
std::size_t argmax(std::span<const double> values);

/// The full mapping as `[{"class_index", "source", "style"}, ...]` plus its version.
nlohmann::json class_mapping_json();

}  // namespace artbrain
