#include "artbrain/generation.hpp"

#include <atomic>
#include <fstream>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <tuple>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/image_io.hpp"

namespace artbrain {

namespace {

constexpr int kSteps = 50;
constexpr int kParallelSamples = 4;

std::string sha256_hex(const std::string &bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    std::string out;
    for (unsigned int i = 0; i < length; ++i) out += fmt::format("{:02x}", digest[i]);
    return out;
}

using JobKey = std::tuple<std::string, std::string, std::uint64_t>;

JobKey key_of(const GenerationJob &job) {
    return {std::string(name(job.model)), std::string(slug(job.style)), job.seed};
}

std::set<JobKey> completed_jobs(const std::filesystem::path &ledger) {
    std::set<JobKey> done;
    std::ifstream in(ledger);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || j.value("status", "") != "ok") continue;
        done.emplace(j.value("model", ""), j.value("style", ""), j.value("seed", std::uint64_t{0}));
    }
    return done;
}

std::uint64_t suffix_for(const GenerationJob &job, std::uint64_t suffix_seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(suffix_seed), static_cast<std::uint32_t>(suffix_seed >> 32),
                      static_cast<std::uint32_t>(job.seed), static_cast<std::uint32_t>(job.model),
                      static_cast<std::uint32_t>(job.style)};
    std::mt19937_64 rng(seq);
    return rng() % 1'000'000'000ULL;
}

}  // namespace

std::string_view name(Generator generator) noexcept {
    return generator == Generator::latent ? "latent" : "stable";
}

Source source_of(Generator generator) noexcept {
    return generator == Generator::latent ? Source::latent_diffusion : Source::stable_diffusion;
}

std::string style_prompt(Style style) { return fmt::format("A painting in {} art style", name(style)); }

GenerationJob GenerationJob::make(Generator model, Style style, std::uint64_t seed) {
    GenerationJob job;
    job.model = model;
    job.style = style;
    job.prompt = style_prompt(style);
    job.steps = kSteps;
    job.parallel_samples = kParallelSamples;
    job.seed = seed;
    if (model == Generator::latent) {
        job.image_side = 256;
        job.guidance_or_diversity = 5.0;
        job.sampler = "PLMS";
    } else {
        job.image_side = 768;
        job.guidance_or_diversity = 9.0;
        job.sampler = "DPMS Multistep Scheduler";
        job.negative_prompt = "photo frame";
    }
    return job;
}

void GenerationJob::validate() const {
    const GenerationJob ref = make(model, style, seed);
    if (seed > kMaxSeed) throw ArgumentError(fmt::format("seed {} exceeds {}", seed, kMaxSeed));
    if (prompt != ref.prompt) throw ArgumentError("prompt does not follow the style template");
    if (negative_prompt != ref.negative_prompt) throw ArgumentError("negative prompt disagrees with the generator");
    if (steps != ref.steps || image_side != ref.image_side || parallel_samples != ref.parallel_samples ||
        guidance_or_diversity != ref.guidance_or_diversity || sampler != ref.sampler) {
        throw ArgumentError(fmt::format("settings disagree with the {} generator configuration", name(model)));
    }
}

nlohmann::json GenerationJob::request_json() const {
    nlohmann::json j = {{"model", std::string(name(model))},
                        {"style", std::string(slug(style))},
                        {"prompt", prompt},
                        {"steps", steps},
                        {"width", image_side},
                        {"height", image_side},
                        {"parallel_samples", parallel_samples},
                        {"sampler", sampler},
                        {"seed", seed}};
    if (model == Generator::latent) {
        j["diversity_scale"] = guidance_or_diversity;
    } else {
        j["guidance_scale"] = guidance_or_diversity;
    }
    if (negative_prompt) j["negative_prompt"] = *negative_prompt;
    return j;
}

std::vector<std::uint64_t> draw_seeds(std::size_t count, std::uint64_t rng_seed) {
    if (count > kMaxSeed + 1) throw ArgumentError("more seeds requested than the seed range holds");
    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::uint64_t> dist(0, kMaxSeed);
    std::set<std::uint64_t> seen;
    std::vector<std::uint64_t> out;
    out.reserve(count);
    while (out.size() < count) {
        const auto s = dist(rng);
        if (seen.insert(s).second) out.push_back(s);
    }
    return out;
}

GenerationSummary run_generation(const std::vector<GenerationJob> &jobs, const GenerationOptions &options) {
    if (options.endpoint.empty()) throw ArgumentError("generation endpoint is empty");
    if (options.max_parallel == 0 || options.max_attempts == 0) {
        throw ArgumentError("parallelism and attempts must be positive");
    }
    for (const auto &job : jobs) job.validate();

    std::set<JobKey> done = completed_jobs(options.ledger_path);
    std::vector<const GenerationJob *> todo;
    GenerationSummary summary;
    for (const auto &job : jobs) {
        if (done.insert(key_of(job)).second) {
            todo.push_back(&job);
        } else {
            ++summary.skipped;
        }
    }
    if (todo.empty()) return summary;

    if (options.ledger_path.has_parent_path()) std::filesystem::create_directories(options.ledger_path.parent_path());
    std::ofstream ledger(options.ledger_path, std::ios::app);
    if (!ledger) throw IoError("cannot open ledger " + options.ledger_path.string());

    std::mutex lock;
    std::atomic<std::size_t> next{0};
    const auto record = [&](const GenerationJob &job, const std::string &status, std::size_t attempts,
                            const std::string &detail, const std::optional<std::string> &hash,
                            const std::optional<std::string> &path) {
        nlohmann::json line = {{"model", std::string(name(job.model))},
                               {"style", std::string(slug(job.style))},
                               {"seed", job.seed},
                               {"prompt", job.prompt},
                               {"status", status},
                               {"attempts", attempts},
                               {"request", job.request_json()}};
        if (!detail.empty()) line["detail"] = detail;
        if (hash) line["sha256"] = *hash;
        if (path) line["path"] = *path;
        const std::scoped_lock guard(lock);
        ledger << line.dump() << '\n' << std::flush;
        if (status == "ok") {
            ++summary.written;
        } else if (status == "rejected") {
            ++summary.rejected;
        } else {
            ++summary.failed;
        }
    };

    const auto worker = [&] {
        httplib::Client client(options.endpoint);
        client.set_connection_timeout(options.timeout);
        client.set_read_timeout(options.timeout);
        client.set_write_timeout(options.timeout);
        for (std::size_t i = next++; i < todo.size(); i = next++) {
            const GenerationJob &job = *todo[i];
            const std::string body = job.request_json().dump();
            std::string detail;
            std::optional<std::string> image;
            std::size_t attempt = 0;
            auto backoff = options.initial_backoff;
            while (attempt < options.max_attempts) {
                ++attempt;
                auto res = client.Post(options.route, body, "application/json");
                if (res && res->status == 200) {
                    image = res->body;
                    break;
                }
                detail = res ? fmt::format("HTTP {}", res->status) : httplib::to_string(res.error());
                if (attempt < options.max_attempts) {
                    std::this_thread::sleep_for(backoff);
                    backoff *= 2;
                }
            }
            if (!image) {
                record(job, "failed", attempt, detail, std::nullopt, std::nullopt);
                continue;
            }
            const std::string hash = sha256_hex(*image);
            const auto bytes = std::as_bytes(std::span(image->data(), image->size()));
            RgbImage decoded;
            try {
                decoded = decode_image(bytes);
            } catch (const FormatError &e) {
                record(job, "rejected", attempt, e.what(), hash, std::nullopt);
                continue;
            }
            const auto side = static_cast<std::size_t>(job.image_side);
            if (decoded.width != side || decoded.height != side) {
                record(job, "rejected", attempt,
                       fmt::format("expected {}x{}, got {}x{}", side, side, decoded.width, decoded.height), hash,
                       std::nullopt);
                continue;
            }
            const Source source = source_of(job.model);
            const SampleName sample{class_of(source, job.style).value(), job.seed,
                                    suffix_for(job, options.suffix_seed)};
            const auto path = options.out_dir / folder_name(source, job.style) / format_filename(sample);
            try {
                if (sniff_format(bytes) == ImageFormat::jpeg) {
                    write_file(path, bytes);
                } else {
                    write_file(path, encode_jpeg(decoded, 95));
                }
            } catch (const Error &e) {
                record(job, "failed", attempt, e.what(), hash, std::nullopt);
                continue;
            }
            record(job, "ok", attempt, {}, hash, path.string());
        }
    };

    const std::size_t workers = std::min(options.max_parallel, todo.size());
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    }
    return summary;
}

}  // namespace artbrain
