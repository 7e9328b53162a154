#include "artbrain/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "artbrain/error.hpp"
#include "artbrain/image_io.hpp"

namespace artbrain {

namespace fs = std::filesystem;

namespace {

std::size_t cell(Split split, Source source, Style style) {
    return static_cast<std::size_t>(split) * kNumClasses + class_of(source, style).index();
}

// Unsigned decimal without sign or superfluous leading zeros.
std::optional<std::uint64_t> parse_digits(std::string_view text) {
    if (text.empty() || (text.size() > 1 && text.front() == '0')) return std::nullopt;
    if (!std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
    std::uint64_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

bool is_generated(Source source) { return source != Source::human; }

struct FileOutcome {
    std::optional<SampleRecord> record;
    std::optional<ValidationIssue> issue;
};

FileOutcome inspect_file(const fs::path &root, const fs::path &relative, Split split, Source source, Style style,
                         const ValidateOptions &options) {
    FileOutcome out;
    SampleRecord record;
    record.path = relative;
    record.split = split;
    record.source = source;
    record.style = style;
    const std::string filename = relative.filename().string();
    try {
        record.name = parse_filename(filename);
    } catch (const FilenameError &e) {
        if (is_generated(source) && options.require_generated_names) {
            out.issue = ValidationIssue{ValidationIssue::Kind::bad_filename, relative.generic_string(), e.what()};
            return out;
        }
    }
    try {
        if (options.decode_images) {
            (void)read_image(root / relative);
        } else {
            std::ifstream in(root / relative, std::ios::binary);
            char probe = 0;
            if (!in || !in.read(&probe, 1)) throw IoError("cannot read " + relative.generic_string());
        }
    } catch (const Error &e) {
        out.issue = ValidationIssue{ValidationIssue::Kind::unreadable_file, relative.generic_string(), e.what()};
        return out;
    }
    out.record = std::move(record);
    return out;
}

std::string lower(std::string text) {
    std::transform(text.begin(), text.end(), text.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return text;
}

}  // namespace

std::string_view name(Split split) noexcept { return split == Split::train ? "train" : "test"; }

SampleName parse_filename(std::string_view text) {
    constexpr std::string_view ext = ".jpg";
    if (text.size() <= ext.size() || text.substr(text.size() - ext.size()) != ext) {
        throw FilenameError(ParseError::Kind::bad_filename, std::string(text),
                            fmt::format("'{}' does not end in .jpg", text));
    }
    const std::string_view stem = text.substr(0, text.size() - ext.size());
    const auto first = stem.find('-');
    const auto second = first == std::string_view::npos ? first : stem.find('-', first + 1);
    if (first == std::string_view::npos || second == std::string_view::npos) {
        throw FilenameError(ParseError::Kind::bad_filename, std::string(stem),
                            fmt::format("'{}' is not <class>-<seed>-<random>.jpg", text));
    }
    const std::string_view class_part = stem.substr(0, first);
    const std::string_view seed_part = stem.substr(first + 1, second - first - 1);
    const std::string_view suffix_part = stem.substr(second + 1);

    const auto cls = parse_digits(class_part);
    if (!cls || *cls > 1'000'000) {
        throw FilenameError(ParseError::Kind::bad_filename, std::string(class_part),
                            fmt::format("bad class segment '{}' in '{}'", class_part, text));
    }
    const auto seed = parse_digits(seed_part);
    if (!seed) {
        const bool digits_only = !seed_part.empty() && std::all_of(seed_part.begin(), seed_part.end(), [](char c) {
            return c >= '0' && c <= '9';
        });
        const bool too_long = digits_only && seed_part.front() != '0';
        throw FilenameError(too_long ? ParseError::Kind::seed_range : ParseError::Kind::bad_filename,
                            std::string(seed_part), fmt::format("bad seed segment '{}' in '{}'", seed_part, text));
    }
    if (*seed > kMaxSeed) {
        throw FilenameError(ParseError::Kind::seed_range, std::string(seed_part),
                            fmt::format("seed {} exceeds {}", *seed, kMaxSeed));
    }
    const auto suffix = parse_digits(suffix_part);
    if (!suffix) {
        throw FilenameError(ParseError::Kind::bad_filename, std::string(suffix_part),
                            fmt::format("bad random segment '{}' in '{}'", suffix_part, text));
    }
    return {static_cast<int>(*cls), *seed, *suffix};
}

std::string format_filename(const SampleName &name) {
    if (name.class_index < 0) throw ArgumentError("class segment must be non-negative");
    if (name.seed > kMaxSeed) throw ArgumentError(fmt::format("seed {} exceeds {}", name.seed, kMaxSeed));
    return fmt::format("{}-{}-{}.jpg", name.class_index, name.seed, name.suffix);
}

std::size_t &ClassCounts::at(Split split, Source source, Style style) { return counts_[cell(split, source, style)]; }

std::size_t ClassCounts::at(Split split, Source source, Style style) const {
    return counts_[cell(split, source, style)];
}

std::size_t ClassCounts::source_total(Split split, Source source) const {
    std::size_t total = 0;
    for (const Style style : kAllStyles) total += at(split, source, style);
    return total;
}

std::size_t ClassCounts::split_total(Split split) const {
    std::size_t total = 0;
    for (const Source source : kAllSources) total += source_total(split, source);
    return total;
}

nlohmann::json ClassCounts::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const Split split : {Split::train, Split::test}) {
        auto &sj = j[std::string(name(split))];
        for (const Source source : kAllSources) {
            auto &src = sj[std::string(slug(source))];
            for (const Style style : kAllStyles) src[std::string(slug(style))] = at(split, source, style);
        }
    }
    return j;
}

ClassCounts ClassCounts::from_json(const nlohmann::json &j) {
    ClassCounts counts;
    try {
        for (const Split split : {Split::train, Split::test}) {
            const auto sname = std::string(name(split));
            if (!j.contains(sname)) continue;
            for (const auto &[src_key, styles] : j.at(sname).items()) {
                const auto source = source_from_slug(src_key);
                if (!source) throw FormatError("unknown source '" + src_key + "' in counts");
                for (const auto &[style_key, value] : styles.items()) {
                    const auto style = style_from_slug(style_key);
                    if (!style) throw FormatError("unknown style '" + style_key + "' in counts");
                    counts.at(split, *source, *style) = value.get<std::size_t>();
                }
            }
        }
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("malformed counts: ") + e.what());
    }
    return counts;
}

std::string_view name(ValidationIssue::Kind kind) noexcept {
    switch (kind) {
    case ValidationIssue::Kind::unknown_folder: return "unknown_folder";
    case ValidationIssue::Kind::duplicate_path: return "duplicate_path";
    case ValidationIssue::Kind::unreadable_file: return "unreadable_file";
    case ValidationIssue::Kind::bad_filename: return "bad_filename";
    case ValidationIssue::Kind::count_mismatch: return "count_mismatch";
    case ValidationIssue::Kind::unbalanced_test: return "unbalanced_test";
    }
    return "unknown";
}

std::vector<const SampleRecord *> DatasetManifest::split(Split which) const {
    std::vector<const SampleRecord *> out;
    for (const auto &r : records) {
        if (r.split == which) out.push_back(&r);
    }
    return out;
}

nlohmann::json DatasetManifest::to_json(bool include_records) const {
    nlohmann::json j;
    j["root"] = root.string();
    j["mapping_version"] = mapping_version;
    j["counts"] = counts.to_json();
    nlohmann::json totals;
    for (const Split split : {Split::train, Split::test}) {
        auto &t = totals[std::string(name(split))];
        for (const Source source : kAllSources) t[std::string(slug(source))] = counts.source_total(split, source);
        t["all"] = counts.split_total(split);
    }
    j["totals"] = totals;
    j["ok"] = ok();
    auto issue_list = nlohmann::json::array();
    for (const auto &i : issues) {
        issue_list.push_back({{"kind", std::string(name(i.kind))}, {"path", i.path}, {"message", i.message}});
    }
    j["issues"] = issue_list;
    if (include_records) {
        auto list = nlohmann::json::array();
        for (const auto &r : records) {
            nlohmann::json rj = {{"path", r.path.generic_string()},
                                 {"split", std::string(name(r.split))},
                                 {"source", std::string(slug(r.source))},
                                 {"style", std::string(slug(r.style))},
                                 {"class_index", r.class_index().value()}};
            if (r.name) {
                rj["class_index_on_disk"] = r.name->class_index;
                rj["seed"] = r.name->seed;
                rj["suffix"] = r.name->suffix;
            }
            list.push_back(std::move(rj));
        }
        j["records"] = std::move(list);
    }
    return j;
}

std::string folder_name(Source source, Style style) {
    const std::string s(slug(style));
    switch (source) {
    case Source::human: return s;
    case Source::latent_diffusion: return "AI_LD_" + s;
    case Source::stable_diffusion: return "AI_SD_" + s;
    }
    return s;
}

FolderMapping default_folder_mapping() {
    FolderMapping mapping;
    for (const Source source : kAllSources) {
        for (const Style style : kAllStyles) mapping.emplace(folder_name(source, style), std::pair{source, style});
    }
    return mapping;
}

FolderMapping folder_mapping_from_json(const nlohmann::json &j) {
    if (!j.is_object()) throw FormatError("folder mapping must be a JSON object");
    FolderMapping mapping;
    for (const auto &[folder, value] : j.items()) {
        if (!value.is_object() || !value.contains("source") || !value.contains("style")) {
            throw FormatError("mapping for '" + folder + "' needs source and style");
        }
        const auto source = source_from_slug(value.at("source").get<std::string>());
        const auto style = style_from_slug(value.at("style").get<std::string>());
        if (!source || !style) throw FormatError("mapping for '" + folder + "' names an unknown source or style");
        mapping.emplace(folder, std::pair{*source, *style});
    }
    return mapping;
}

DatasetManifest validate_manifest(const fs::path &root, const FolderMapping &mapping, const ValidateOptions &options) {
    DatasetManifest manifest;
    manifest.root = root;
    std::error_code ec;
    if (!fs::is_directory(root, ec)) return manifest;

    struct Pending {
        fs::path relative;
        Split split;
        Source source;
        Style style;
    };
    std::vector<Pending> pending;
    std::set<std::string> seen;
    for (const Split split : {Split::train, Split::test}) {
        const fs::path split_dir = root / std::string(name(split));
        if (!fs::is_directory(split_dir, ec)) continue;
        std::vector<fs::path> folders;
        for (const auto &entry : fs::directory_iterator(split_dir)) folders.push_back(entry.path());
        std::sort(folders.begin(), folders.end());
        for (const auto &folder : folders) {
            const fs::path rel_folder = fs::relative(folder, root);
            if (!fs::is_directory(folder, ec)) {
                manifest.issues.push_back({ValidationIssue::Kind::unknown_folder, rel_folder.generic_string(),
                                           "not a class folder"});
                continue;
            }
            const auto it = mapping.find(folder.filename().string());
            if (it == mapping.end()) {
                manifest.issues.push_back({ValidationIssue::Kind::unknown_folder, rel_folder.generic_string(),
                                           "folder is not in the mapping"});
                continue;
            }
            std::vector<fs::path> files;
            for (const auto &entry : fs::directory_iterator(folder)) {
                if (entry.is_regular_file(ec) || entry.is_symlink(ec)) files.push_back(entry.path());
            }
            std::sort(files.begin(), files.end());
            for (const auto &file : files) {
                const fs::path relative = fs::relative(file, root);
                if (!seen.insert(lower(relative.generic_string())).second) {
                    manifest.issues.push_back({ValidationIssue::Kind::duplicate_path, relative.generic_string(),
                                               "path appears twice"});
                    continue;
                }
                pending.push_back({relative, split, it->second.first, it->second.second});
            }
        }
    }

    std::vector<FileOutcome> outcomes(pending.size());
    const std::size_t threads = std::max<std::size_t>(
        1, std::min<std::size_t>(options.threads == 0 ? std::thread::hardware_concurrency() : options.threads,
                                 pending.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (std::size_t i = t; i < pending.size(); i += threads) {
                    const auto &p = pending[i];
                    outcomes[i] = inspect_file(root, p.relative, p.split, p.source, p.style, options);
                }
            });
        }
    }
    for (auto &o : outcomes) {
        if (o.issue) manifest.issues.push_back(std::move(*o.issue));
        if (o.record) {
            manifest.counts.at(o.record->split, o.record->source, o.record->style) += 1;
            manifest.records.push_back(std::move(*o.record));
        }
    }

    if (options.expected) {
        for (const Split split : {Split::train, Split::test}) {
            for (const Source source : kAllSources) {
                for (const Style style : kAllStyles) {
                    const std::size_t want = options.expected->at(split, source, style);
                    const std::size_t got = manifest.counts.at(split, source, style);
                    if (want != got) {
                        manifest.issues.push_back(
                            {ValidationIssue::Kind::count_mismatch,
                             fmt::format("{}/{}", name(split), folder_name(source, style)),
                             fmt::format("expected {} images, found {}", want, got)});
                    }
                }
            }
        }
    }
    if (options.require_balanced_test) {
        std::optional<std::size_t> level;
        for (const Source source : kAllSources) {
            for (const Style style : kAllStyles) {
                const std::size_t n = manifest.counts.at(Split::test, source, style);
                if (n == 0) continue;
                if (!level) {
                    level = n;
                } else if (*level != n) {
                    manifest.issues.push_back({ValidationIssue::Kind::unbalanced_test,
                                               fmt::format("test/{}", folder_name(source, style)),
                                               fmt::format("{} images where other subclasses hold {}", n, *level)});
                }
            }
        }
    }
    return manifest;
}

}  // namespace artbrain
