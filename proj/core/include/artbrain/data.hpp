#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/labels.hpp"
#include "artbrain/preprocess.hpp"

namespace artbrain {

enum class Split : std::uint8_t { train, test };

std::string_view name(Split split) noexcept;

inline constexpr std::uint64_t kMaxSeed = 999'999'999;

/// Parts of a generated sample's name `<class>-<seed>-<random>.jpg`.
struct SampleName {
    int class_index = 0;
    std::uint64_t seed = 0;
    std::uint64_t suffix = 0;

    friend bool operator==(const SampleName &, const SampleName &) = default;
};

/// Throws FilenameError naming the bad segment (kind bad_filename, or seed_range for seeds > 999999999).
SampleName parse_filename(std::string_view name);
std::string format_filename(const SampleName &name);

struct SampleRecord {
    std::filesystem::path path;  // relative to the dataset root
    Split split = Split::train;
    Source source = Source::human;
    Style style = Style::art_nouveau;
    /// Present for names following the generated-sample convention.
    std::optional<SampleName> name;

    ClassIndex class_index() const { return class_of(source, style); }
};

/// Per (split, source, style) image counts.
class ClassCounts {
public:
    std::size_t &at(Split split, Source source, Style style);
    std::size_t at(Split split, Source source, Style style) const;
    std::size_t source_total(Split split, Source source) const;
    std::size_t split_total(Split split) const;

    friend bool operator==(const ClassCounts &, const ClassCounts &) = default;

    nlohmann::json to_json() const;
    static ClassCounts from_json(const nlohmann::json &j);

private:
    std::array<std::size_t, 2 * kNumClasses> counts_{};
};

struct ValidationIssue {
    enum class Kind { unknown_folder, duplicate_path, unreadable_file, bad_filename, count_mismatch, unbalanced_test };
    Kind kind;
    std::string path;
    std::string message;
};

std::string_view name(ValidationIssue::Kind kind) noexcept;

struct DatasetManifest {
    std::filesystem::path root;
    std::string mapping_version{kMappingVersion};
    std::vector<SampleRecord> records;
    ClassCounts counts;
    std::vector<ValidationIssue> issues;

    bool ok() const noexcept { return issues.empty(); }
    std::vector<const SampleRecord *> split(Split split) const;

    /// `include_records` false keeps reports compact for the 185k-image dataset.
    nlohmann::json to_json(bool include_records = true) const;
};

/// Folder name -> (source, style).
using FolderMapping = std::map<std::string, std::pair<Source, Style>, std::less<>>;

/// AI-ArtBench style names: `<style>` for human art, `AI_LD_<style>` and `AI_SD_<style>`
/// for the two generators, with `<style>` the snake-case slug (e.g. `ukiyo_e`).
FolderMapping default_folder_mapping();
std::string folder_name(Source source, Style style);
FolderMapping folder_mapping_from_json(const nlohmann::json &j);

struct ValidateOptions {
    std::optional<ClassCounts> expected;
    /// Decode every image instead of only opening it.
    bool decode_images = false;
    /// Require the `<class>-<seed>-<random>.jpg` convention for generated sources.
    bool require_generated_names = true;
    /// Require the test split to hold the same count in every present subclass.
    bool require_balanced_test = true;
    std::size_t threads = 0;
};

/// Scans `root/{train,test}/<folder>/<file>` and reports problems as itemized issues
/// instead of aborting. An empty or missing root yields an empty manifest.
DatasetManifest validate_manifest(const std::filesystem::path &root, const FolderMapping &mapping,
                                  const ValidateOptions &options = {});

/// Counts published for the full AI-ArtBench release (train per source totals only;
/// the per-style split is not published, so this checks source totals).
struct PublishedTotals {
    std::array<std::size_t, kNumSources> train{50'000, 52'092, 52'923};
    std::array<std::size_t, kNumSources> test{10'000, 10'000, 10'000};
};

struct ToySpec {
    std::vector<Source> sources{kAllSources.begin(), kAllSources.end()};
    std::vector<Style> styles{kAllStyles.begin(), kAllStyles.end()};
    std::size_t train_per_class = 100;
    std::size_t test_per_class = 25;
    std::size_t side = 64;
};

/// One procedurally generated toy image (before the JPEG encode).
RgbImage render_toy_image(Source source, Style style, std::uint64_t image_seed, std::size_t side = 64);

/// Writes a deterministic toy dataset in the AI-ArtBench layout plus a `counts.json`
/// sidecar, and returns its manifest. Style picks the texture family; source adds a
/// frequency fingerprint (human: blur + grain, latent: 8x8 block offsets plus an
/// intra-block ramp, stable: pixel-level checker). Throws IoError when `out` is not writable.
DatasetManifest generate_toy(const ToySpec &spec, std::uint64_t seed, const std::filesystem::path &out);

/// Reads the `counts.json` sidecar written by generate_toy.
ClassCounts read_counts_sidecar(const std::filesystem::path &root);

}  // namespace artbrain
