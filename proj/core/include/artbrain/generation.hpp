#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/labels.hpp"

namespace artbrain {

enum class Generator { latent, stable };

std::string_view name(Generator generator) noexcept;
Source source_of(Generator generator) noexcept;

/// One seeded request to an external text-to-image service.
struct GenerationJob {
    Generator model = Generator::latent;
    Style style = Style::art_nouveau;
    std::string prompt;
    std::optional<std::string> negative_prompt;
    int steps = 50;
    int image_side = 256;
    int parallel_samples = 4;
    /// Diversity scale for the latent model, classifier-free guidance for the stable one.
    double guidance_or_diversity = 5.0;
    std::string sampler;
    std::uint64_t seed = 0;

    /// Job with the published per-generator settings and the shared prompt template.
    static GenerationJob make(Generator model, Style style, std::uint64_t seed);

    /// Throws ArgumentError when the settings disagree with the generator's fixed configuration.
    void validate() const;
    nlohmann::json request_json() const;
};

/// "A painting in <style> art style"
std::string style_prompt(Style style);

struct GenerationOptions {
    /// Base URL of the service, e.g. http://127.0.0.1:7860
    std::string endpoint;
    std::string route = "/generate";
    std::filesystem::path out_dir;
    std::filesystem::path ledger_path;
    std::size_t max_parallel = 4;
    std::size_t max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    std::chrono::seconds timeout{120};
    std::uint64_t suffix_seed = 0;
};

struct GenerationSummary {
    std::size_t written = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    std::size_t rejected = 0;
};

/// Posts every job, stores accepted images as `<out>/<folder>/<class>-<seed>-<random>.jpg`
/// and appends one JSON line per job outcome to the ledger. Jobs whose (model, style, seed)
/// already succeeded in the ledger are skipped. Failures are retried with doubling
/// backoff, then recorded; responses whose decoded size is not image_side are rejected.
GenerationSummary run_generation(const std::vector<GenerationJob> &jobs, const GenerationOptions &options);

/// Uniformly drawn seeds in [0, 999999999], without repeats.
std::vector<std::uint64_t> draw_seeds(std::size_t count, std::uint64_t rng_seed);

}  // namespace artbrain
