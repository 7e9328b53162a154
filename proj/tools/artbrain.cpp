#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/eval.hpp"
#include "artbrain/generation.hpp"
#include "artbrain/image_io.hpp"
#include "artbrain/model.hpp"
#include "artbrain/saliency.hpp"
#include "artbrain/service.hpp"
#include "artbrain/train.hpp"
#include "artbrain/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace artbrain;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

/// Raised after a report has been printed but the outcome is still a failure.
struct DomainFailure {};

std::vector<std::string> split_list(const std::string &text) {
    std::vector<std::string> out;
    std::string item;
    for (const char c : text + ",") {
        if (c == ',') {
            if (!item.empty()) out.push_back(item);
            item.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            item += c;
        }
    }
    return out;
}

bool all_digits(const std::string &s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::vector<Source> parse_sources(const std::string &text) {
    if (all_digits(text)) {
        const auto n = std::stoul(text);
        if (n < 1 || n > kNumSources) throw ArgumentError(fmt::format("--sources count must be 1..{}", kNumSources));
        return {kAllSources.begin(), kAllSources.begin() + static_cast<std::ptrdiff_t>(n)};
    }
    std::vector<Source> out;
    for (const auto &s : split_list(text)) {
        const auto v = source_from_slug(s);
        if (!v) throw ArgumentError("unknown source '" + s + "'");
        out.push_back(*v);
    }
    return out;
}

std::vector<Style> parse_styles(const std::string &text) {
    if (text == "all") return {kAllStyles.begin(), kAllStyles.end()};
    if (all_digits(text)) {
        const auto n = std::stoul(text);
        if (n < 1 || n > kNumStyles) throw ArgumentError(fmt::format("style count must be 1..{}", kNumStyles));
        return {kAllStyles.begin(), kAllStyles.begin() + static_cast<std::ptrdiff_t>(n)};
    }
    std::vector<Style> out;
    for (const auto &s : split_list(text)) {
        const auto v = style_from_slug(s);
        if (!v) throw ArgumentError("unknown style '" + s + "'");
        out.push_back(*v);
    }
    return out;
}

TrainableMask parse_trainable(const std::string &text) {
    if (text == "all") return TrainableMask::all();
    auto mask = TrainableMask::none();
    for (const auto &g : split_list(text)) {
        if (g == "low") mask.low = true;
        else if (g == "mid") mask.mid = true;
        else if (g == "high") mask.high = true;
        else if (g == "attention") mask.attention = true;
        else if (g == "classifier") mask.classifier = true;
        else throw ArgumentError("unknown parameter group '" + g + "'");
    }
    return mask;
}

std::vector<double> parse_sweep(const std::string &text) {
    double lo = 0, hi = 0, step = 0;
    char tail = 0;
    if (std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &lo, &hi, &step, &tail) != 3) {
        throw ArgumentError("--contrast-sweep expects lo:hi:step");
    }
    if (!(step > 0) || lo > hi || lo < -100 || hi > 100) {
        throw ArgumentError("--contrast-sweep needs -100 <= lo <= hi <= 100 and step > 0");
    }
    std::vector<double> out;
    for (std::size_t i = 0;; ++i) {
        const double v = lo + static_cast<double>(i) * step;
        if (v > hi + 1e-9) break;
        out.push_back(v);
    }
    return out;
}

/// Every option of the subcommand with its effective value.
json echo_options(const CLI::App &app) {
    json j = json::object();
    for (const CLI::Option *opt : app.get_options()) {
        if (opt->get_lnames().empty()) continue;
        const auto &key = opt->get_lnames().front();
        if (key == "help") continue;
        if (opt->get_items_expected_max() == 0) {
            j[key] = opt->count() > 0;
        } else if (opt->count() > 0) {
            const auto &r = opt->results();
            j[key] = r.size() == 1 ? json(r.front()) : json(r);
        } else if (!opt->get_default_str().empty()) {
            j[key] = opt->get_default_str();
        } else {
            j[key] = nullptr;
        }
    }
    return j;
}

std::string command_path(const CLI::App &app) {
    std::string out = app.get_name();
    for (const CLI::App *p = app.get_parent(); p != nullptr && p->get_parent() != nullptr; p = p->get_parent()) {
        out = p->get_name() + " " + out;
    }
    return out;
}

struct Output {
    bool json_mode = false;
    json config;

    void header() const {
        if (!json_mode) fmt::print("# artbrain {} {}\n", config["command"].get<std::string>(), config.dump());
    }
    void emit(json body) const {
        body["config"] = config;
        std::cout << body.dump(2) << '\n';
    }
};

Output start(const CLI::App &app, bool json_mode, json extra = json::object()) {
    Output out;
    out.json_mode = json_mode;
    out.config = {{"command", command_path(app)}, {"options", echo_options(app)}};
    for (auto &[k, v] : extra.items()) out.config[k] = v;
    out.header();
    return out;
}

Model load_model(const std::optional<std::string> &path) {
    if (!path || path->empty()) throw ArgumentError("no weights given (use --weights or ARTBRAIN_WEIGHTS)");
    return Model::from_archive(WeightArchive::load(*path));
}

std::string error_kind(const std::exception &e) {
    if (dynamic_cast<const FilenameError *>(&e)) return "filename";
    if (dynamic_cast<const ParseError *>(&e)) return "parse";
    if (dynamic_cast<const NumericError *>(&e)) return "numeric";
    if (dynamic_cast<const AlignmentError *>(&e)) return "alignment";
    if (dynamic_cast<const ConfigError *>(&e)) return "config";
    if (dynamic_cast<const ArgumentError *>(&e)) return "argument";
    if (dynamic_cast<const StateError *>(&e)) return "state";
    if (dynamic_cast<const DataError *>(&e)) return "data";
    if (dynamic_cast<const FormatError *>(&e)) return "format";
    if (dynamic_cast<const IoError *>(&e)) return "io";
    if (dynamic_cast<const fs::filesystem_error *>(&e)) return "io";
    return "internal";
}

// --- commands -------------------------------------------------------------------------

struct TrainArgs {
    std::string data, out, variant = "tiny", head = "attention", trainable = "high,attention,classifier";
    std::size_t epochs = 18, batch = 32, patience = 2, threads = 0, hidden = 256, reduction = 4;
    double lr = 1e-3, lr_factor = 0.1, holdout = 0.1, dropout = 0.3;
    std::uint64_t seed = 0;
    bool test_as_validation = false, json_mode = false;
    std::string checkpoint_dir;
};

void run_train(const CLI::App &app, const TrainArgs &a) {
    ModelConfig mc;
    if (a.variant == "tiny") {
        mc = ModelConfig::tiny();
    } else {
        mc.backbone = BackboneConfig::convnext_tiny();
    }
    mc.head = a.head == "plain" ? HeadKind::plain : HeadKind::attention;
    mc.hidden = a.hidden;
    mc.reduction = a.reduction;
    mc.dropout = a.dropout;
    mc.validate();

    TrainConfig tc;
    tc.batch_size = a.batch;
    tc.max_epochs = a.epochs;
    tc.initial_lr = a.lr;
    tc.lr_factor = a.lr_factor;
    tc.patience_epochs = a.patience;
    tc.seed = a.seed;
    tc.trainable = parse_trainable(a.trainable);
    tc.test_as_validation = a.test_as_validation;
    tc.holdout_fraction = a.holdout;
    tc.threads = a.threads;
    if (!a.checkpoint_dir.empty()) tc.checkpoint_dir = a.checkpoint_dir;
    tc.validate();

    const auto out = start(app, a.json_mode, {{"model", mc.to_json()}, {"train", tc.to_json()}});

    ValidateOptions vo;
    vo.require_generated_names = false;
    vo.threads = a.threads;
    const auto manifest = validate_manifest(a.data, default_folder_mapping(), vo);
    if (!manifest.ok()) {
        for (const auto &i : manifest.issues) {
            fmt::print(stderr, "{}: {}: {}\n", name(i.kind), i.path, i.message);
        }
        throw DataError(fmt::format("dataset has {} issue(s)", manifest.issues.size()));
    }

    if (!a.json_mode) {
        fmt::print("{:>5} {:>10} {:>10} {:>8} {:>8} {:>8} {:>9}\n", "epoch", "train_loss", "val_loss", "val_acc",
                   "src_acc", "sty_acc", "lr");
    }
    const auto on_epoch = [&](const EpochRecord &r) {
        const auto line = fmt::format("{:>5} {:>10.5f} {:>10.5f} {:>8.4f} {:>8.4f} {:>8.4f} {:>9.2e}\n", r.epoch,
                                      r.train_loss, r.val_loss, r.val_accuracy, r.val_source_accuracy,
                                      r.val_style_accuracy, r.lr);
        if (a.json_mode) {
            fmt::print(stderr, "{}", line);
        } else {
            fmt::print("{}", line);
            std::fflush(stdout);
        }
    };
    const auto result = fit(manifest, mc, tc, on_epoch);
    result.best.save(a.out);
    const auto version = Model::from_archive(result.best).version();
    const auto &selected = result.history.at(result.selected_epoch - 1);

    if (a.json_mode) {
        json history = json::array();
        for (const auto &r : result.history) history.push_back(r.to_json());
        out.emit({{"command", "train"},
                  {"weights", a.out},
                  {"model_version", version},
                  {"selected_epoch", result.selected_epoch},
                  {"selected", selected.to_json()},
                  {"final", result.history.back().to_json()},
                  {"history", history}});
    } else {
        fmt::print("selected epoch {} (val_loss {:.5f}, val_accuracy {:.4f}); wrote {} [{}]\n", result.selected_epoch,
                   selected.val_loss, selected.val_accuracy, a.out, version);
    }
}

struct EvalArgs {
    std::optional<std::string> weights;
    std::string data, split = "test", report;
    std::size_t threads = 0;
    bool json_mode = false;
};

void run_eval(const CLI::App &app, const EvalArgs &a) {
    const auto out = start(app, a.json_mode);
    const auto model = load_model(a.weights);
    ValidateOptions vo;
    vo.require_generated_names = false;
    vo.require_balanced_test = false;
    vo.threads = a.threads;
    const auto manifest = validate_manifest(a.data, default_folder_mapping(), vo);
    const Split split = a.split == "train" ? Split::train : Split::test;
    const auto report = evaluate(model, manifest, split, a.threads);
    json body = {{"command", "eval"}, {"model_version", model.version()}, {"split", a.split},
                 {"report", report.to_json()}};
    if (!a.report.empty()) {
        const auto text = body.dump(2);
        write_file(a.report, std::as_bytes(std::span(text.data(), text.size())));
    }
    if (a.json_mode) {
        out.emit(std::move(body));
    } else {
        fmt::print("model {} on {} split\n\n{}", model.version(), a.split, report.to_text());
    }
}

struct PredictArgs {
    std::optional<std::string> weights;
    std::string image, sweep;
    std::size_t top_k = 3;
    double contrast = 0.0;
    bool json_mode = false;
};

Prediction predict_one(const Model &model, const RgbImageF &image, double contrast, std::size_t k) {
    auto p = model.forward(preprocess(image, model.config().preprocess, contrast));
    p.top = top_k(p, k);
    return p;
}

void run_predict(const CLI::App &app, const PredictArgs &a) {
    const auto levels = a.sweep.empty() ? std::vector<double>{} : parse_sweep(a.sweep);
    if (a.top_k < 1 || a.top_k > kNumClasses) throw ArgumentError("--top-k must lie in 1..30");
    const auto out = start(app, a.json_mode);
    const auto model = load_model(a.weights);
    const auto image = to_float(read_image(a.image));

    if (levels.empty()) {
        const auto p = predict_one(model, image, a.contrast, a.top_k);
        if (a.json_mode) {
            json body = p.to_json();
            body["command"] = "predict";
            body["model_version"] = model.version();
            body["contrast_percent"] = a.contrast;
            out.emit(std::move(body));
            return;
        }
        fmt::print("{:>4} {:<42} {:>11}\n", "rank", "class", "probability");
        for (std::size_t r = 0; r < p.top.size(); ++r) {
            fmt::print("{:>4} {:<42} {:>11.6f}\n", r + 1, class_label(p.top[r].class_index), p.top[r].probability);
        }
        const auto &src = *p.source_marginals;
        fmt::print("source: human {:.4f}  latent {:.4f}  stable {:.4f}\n", src[0], src[1], src[2]);
        return;
    }

    json sweep = json::array();
    if (!a.json_mode) {
        fmt::print("{:>9} {:<42} {:>8} {:>8} {:>8} {:>8}\n", "contrast", "top-1", "prob", "human", "latent", "stable");
    }
    for (const double c : levels) {
        const auto p = predict_one(model, image, c, a.top_k);
        if (a.json_mode) {
            json row = p.to_json();
            row["contrast_percent"] = c;
            sweep.push_back(std::move(row));
        } else {
            const auto &src = *p.source_marginals;
            fmt::print("{:>9.1f} {:<42} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f}\n", c, class_label(p.top[0].class_index),
                       p.top[0].probability, src[0], src[1], src[2]);
        }
    }
    if (a.json_mode) out.emit({{"command", "predict"}, {"model_version", model.version()}, {"sweep", sweep}});
}

struct SaliencyArgs {
    std::optional<std::string> weights;
    std::string image, out;
    std::size_t k = 3, size = 0;
    double contrast = 0.0, alpha = 0.5;
    bool json_mode = false;
};

void run_saliency(const CLI::App &app, const SaliencyArgs &a) {
    const auto out = start(app, a.json_mode);
    const auto model = load_model(a.weights);
    const auto &pre = model.config().preprocess;
    const auto image = to_float(read_image(a.image));
    const auto fused = fm_g_cam(model, preprocess(image, pre, a.contrast), a.k);
    const std::size_t side = a.size == 0 ? pre.target_side : a.size;
    const auto shown = to_u8(resize_and_center_crop(adjust_contrast(image, a.contrast), side));
    const auto up = upsample(fused, shown.height, shown.width);
    write_image(a.out, overlay(shown, up, a.alpha));
    const auto legend = legend_json(fused);
    if (a.json_mode) {
        out.emit({{"command", "saliency"},
                  {"model_version", model.version()},
                  {"contrast_percent", a.contrast},
                  {"k", a.k},
                  {"alpha", a.alpha},
                  {"width", shown.width},
                  {"height", shown.height},
                  {"overlay", a.out},
                  {"legend", legend}});
        return;
    }
    for (const auto &e : legend) {
        fmt::print("{} {:<42} {:>9.6f}\n", e["color"].get<std::string>(), e["label"].get<std::string>(),
                   e["probability"].get<double>());
    }
    fmt::print("wrote {} ({}x{})\n", a.out, shown.width, shown.height);
}

struct ValidateArgs {
    std::string data, expected, folders;
    bool sidecar = false, published = false, decode = false, loose_names = false, unbalanced = false;
    bool records = false, json_mode = false;
    std::size_t threads = 0;
};

void run_validate(const CLI::App &app, const ValidateArgs &a) {
    const auto out = start(app, a.json_mode);
    ValidateOptions vo;
    vo.decode_images = a.decode;
    vo.require_generated_names = !a.loose_names;
    vo.require_balanced_test = !a.unbalanced;
    vo.threads = a.threads;
    if (!a.expected.empty()) {
        const auto bytes = read_file(a.expected);
        const auto j = json::parse(std::string(reinterpret_cast<const char *>(bytes.data()), bytes.size()));
        vo.expected = ClassCounts::from_json(j.contains("counts") ? j["counts"] : j);
    } else if (a.sidecar) {
        vo.expected = read_counts_sidecar(a.data);
    }
    FolderMapping mapping = default_folder_mapping();
    if (!a.folders.empty()) {
        const auto bytes = read_file(a.folders);
        mapping = folder_mapping_from_json(
            json::parse(std::string(reinterpret_cast<const char *>(bytes.data()), bytes.size())));
    }
    const auto manifest = validate_manifest(a.data, mapping, vo);

    json published = json::array();
    if (a.published) {
        const PublishedTotals totals;
        for (std::size_t s = 0; s < kNumSources; ++s) {
            for (const Split split : {Split::train, Split::test}) {
                const auto want = split == Split::train ? totals.train[s] : totals.test[s];
                const auto have = manifest.counts.source_total(split, kAllSources[s]);
                if (want != have) {
                    published.push_back({{"split", std::string(name(split))},
                                         {"source", std::string(slug(kAllSources[s]))},
                                         {"expected", want},
                                         {"found", have}});
                }
            }
        }
    }
    const bool ok = manifest.ok() && published.empty();

    if (a.json_mode) {
        json body = {{"command", "dataset validate"}, {"ok", ok}, {"manifest", manifest.to_json(a.records)}};
        if (a.published) body["published_mismatches"] = published;
        out.emit(std::move(body));
    } else {
        fmt::print("{:<10} {:>10} {:>10}\n", "source", "train", "test");
        for (const auto s : kAllSources) {
            fmt::print("{:<10} {:>10} {:>10}\n", slug(s), manifest.counts.source_total(Split::train, s),
                       manifest.counts.source_total(Split::test, s));
        }
        for (const auto &i : manifest.issues) fmt::print("issue {}: {}: {}\n", name(i.kind), i.path, i.message);
        for (const auto &m : published) {
            fmt::print("published mismatch {}/{}: expected {}, found {}\n", m["split"].get<std::string>(),
                       m["source"].get<std::string>(), m["expected"].get<std::size_t>(),
                       m["found"].get<std::size_t>());
        }
        fmt::print("{} ({} files, {} issues)\n", ok ? "OK" : "FAILED", manifest.records.size(),
                   manifest.issues.size() + published.size());
    }
    if (!ok) throw DomainFailure{};
}

struct SynthArgs {
    std::string out, sources = "3", styles = "all";
    std::size_t train = 100, test = 25, side = 64;
    std::uint64_t seed = 0;
    bool json_mode = false;
};

void run_synth(const CLI::App &app, const SynthArgs &a) {
    ToySpec spec;
    spec.sources = parse_sources(a.sources);
    spec.styles = parse_styles(a.styles);
    spec.train_per_class = a.train;
    spec.test_per_class = a.test;
    spec.side = a.side;
    const auto out = start(app, a.json_mode);
    const auto manifest = generate_toy(spec, a.seed, a.out);
    if (a.json_mode) {
        out.emit({{"command", "dataset synth"}, {"ok", manifest.ok()}, {"manifest", manifest.to_json(false)}});
    } else {
        fmt::print("wrote {} images to {} ({})\n", manifest.records.size(), a.out,
                   manifest.ok() ? "valid" : "with issues");
    }
    if (!manifest.ok()) throw DomainFailure{};
}

struct GenerateArgs {
    std::string endpoint, route = "/generate", out, ledger, model = "both", styles = "all";
    std::size_t count = 1, parallel = 4, attempts = 3;
    std::uint64_t seed = 0, suffix_seed = 0;
    long timeout = 120, backoff_ms = 200;
    bool dry_run = false, json_mode = false;
};

void run_generate(const CLI::App &app, const GenerateArgs &a) {
    std::vector<Generator> models;
    if (a.model == "latent" || a.model == "both") models.push_back(Generator::latent);
    if (a.model == "stable" || a.model == "both") models.push_back(Generator::stable);
    const auto styles = parse_styles(a.styles);
    const auto out = start(app, a.json_mode);

    std::vector<GenerationJob> jobs;
    const auto seeds = draw_seeds(a.count * styles.size() * models.size(), a.seed);
    std::size_t next = 0;
    for (const auto m : models) {
        for (const auto s : styles) {
            for (std::size_t i = 0; i < a.count; ++i) jobs.push_back(GenerationJob::make(m, s, seeds[next++]));
        }
    }
    if (a.dry_run) {
        json requests = json::array();
        for (const auto &j : jobs) requests.push_back(j.request_json());
        if (a.json_mode) {
            out.emit({{"command", "generate"}, {"dry_run", true}, {"jobs", requests}});
        } else {
            for (const auto &r : requests) fmt::print("{}\n", r.dump());
        }
        return;
    }

    if (a.endpoint.empty()) throw ArgumentError("--endpoint is required unless --dry-run is given");
    GenerationOptions go;
    go.endpoint = a.endpoint;
    go.route = a.route;
    go.out_dir = a.out;
    go.ledger_path = a.ledger.empty() ? fs::path(a.out) / "ledger.jsonl" : fs::path(a.ledger);
    go.max_parallel = a.parallel;
    go.max_attempts = a.attempts;
    go.initial_backoff = std::chrono::milliseconds(a.backoff_ms);
    go.timeout = std::chrono::seconds(a.timeout);
    go.suffix_seed = a.suffix_seed;
    const auto summary = run_generation(jobs, go);
    const bool ok = summary.failed == 0 && summary.rejected == 0;
    if (a.json_mode) {
        out.emit({{"command", "generate"},
                  {"ok", ok},
                  {"jobs", jobs.size()},
                  {"written", summary.written},
                  {"skipped", summary.skipped},
                  {"failed", summary.failed},
                  {"rejected", summary.rejected},
                  {"ledger", go.ledger_path.string()}});
    } else {
        fmt::print("{} jobs: {} written, {} skipped, {} failed, {} rejected; ledger {}\n", jobs.size(),
                   summary.written, summary.skipped, summary.failed, summary.rejected, go.ledger_path.string());
    }
    if (!ok) throw DomainFailure{};
}

void run_serve(const CLI::App &app, ServiceConfig config, std::optional<std::string> weights) {
    start(app, false);
    std::optional<Model> model;
    if (weights && !weights->empty()) {
        model = load_model(weights);
        config.weights = *weights;
    }
    Service service(config, std::move(model));
    fmt::print("listening on http://{}:{} (pool {} images)\n", config.bind_address, config.port,
               service.pool_size());
    std::fflush(stdout);
    if (!service.listen()) throw IoError(fmt::format("cannot bind {}:{}", config.bind_address, config.port));
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Multi-depth attention ConvNeXt toolkit for AI-generated art attribution"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "artbrain 0.1.0");

    const auto weights_option = [](CLI::App *sub, std::optional<std::string> &target) {
        sub->add_option("--weights", target, "Weight archive (.acnx)")->envname("ARTBRAIN_WEIGHTS");
    };

    TrainArgs ta;
    auto *train = app.add_subcommand("train", "Train a model on a dataset root and write its weights");
    train->add_option("--data", ta.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
    train->add_option("--out", ta.out, "Output weight archive")->required();
    train->add_option("--variant", ta.variant, "Backbone variant")
        ->check(CLI::IsMember({"tiny", "convnext-t"}))
        ->capture_default_str();
    train->add_option("--head", ta.head, "Classifier head")
        ->check(CLI::IsMember({"attention", "plain"}))
        ->capture_default_str();
    train->add_option("--epochs", ta.epochs, "Maximum epochs")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--batch", ta.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--lr", ta.lr, "Initial learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    train->add_option("--lr-factor", ta.lr_factor, "Plateau reduction factor")->capture_default_str();
    train->add_option("--patience", ta.patience, "Plateau patience in epochs")->capture_default_str();
    train->add_option("--seed", ta.seed, "Seed for init, shuffling and dropout")->capture_default_str();
    train->add_option("--trainable", ta.trainable, "Trainable groups: all or a list of low,mid,high,attention,classifier")
        ->capture_default_str();
    train->add_option("--hidden", ta.hidden, "Classifier hidden units")->capture_default_str();
    train->add_option("--reduction", ta.reduction, "Attention bottleneck reduction")->capture_default_str();
    train->add_option("--dropout", ta.dropout, "Classifier dropout")->capture_default_str();
    train->add_flag("--test-as-validation", ta.test_as_validation, "Validate on the test split");
    train->add_option("--holdout", ta.holdout, "Validation fraction held out of train")->capture_default_str();
    train->add_option("--checkpoint-dir", ta.checkpoint_dir, "Write every epoch's weights here");
    train->add_option("--threads", ta.threads, "Worker threads (0 = all cores)")->capture_default_str();
    train->add_flag("--json", ta.json_mode, "Machine-readable output");
    train->callback([&] { run_train(*train, ta); });

    EvalArgs ea;
    auto *eval = app.add_subcommand("eval", "Evaluate weights on a dataset split");
    weights_option(eval, ea.weights);
    eval->add_option("--data", ea.data, "Dataset root")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--split", ea.split, "Split")->check(CLI::IsMember({"train", "test"}))->capture_default_str();
    eval->add_option("--report", ea.report, "Also write the JSON report here");
    eval->add_option("--threads", ea.threads, "Worker threads (0 = all cores)")->capture_default_str();
    eval->add_flag("--json", ea.json_mode, "Machine-readable output");
    eval->callback([&] { run_eval(*eval, ea); });

    PredictArgs pa;
    auto *predict = app.add_subcommand("predict", "Classify one image");
    weights_option(predict, pa.weights);
    predict->add_option("--image", pa.image, "PNG or JPEG image")->required()->check(CLI::ExistingFile);
    predict->add_option("--top-k", pa.top_k, "Number of classes listed")->check(CLI::Range(1, 30))->capture_default_str();
    auto *contrast = predict->add_option("--contrast", pa.contrast, "Contrast change in percent")
                         ->check(CLI::Range(-100.0, 100.0))
                         ->capture_default_str();
    predict->add_option("--contrast-sweep", pa.sweep, "Predict at every level lo:hi:step, e.g. -100:100:25")
        ->excludes(contrast);
    predict->add_flag("--json", pa.json_mode, "Machine-readable output");
    predict->callback([&] { run_predict(*predict, pa); });

    SaliencyArgs sa;
    auto *saliency = app.add_subcommand("saliency", "Write a multi-class saliency overlay for one image");
    weights_option(saliency, sa.weights);
    saliency->add_option("--image", sa.image, "PNG or JPEG image")->required()->check(CLI::ExistingFile);
    saliency->add_option("--out", sa.out, "Overlay image (.png or .jpg)")->required();
    saliency->add_option("-k,--k", sa.k, "Classes shown")->check(CLI::Range(1, 30))->capture_default_str();
    saliency->add_option("--alpha", sa.alpha, "Overlay opacity")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    saliency->add_option("--contrast", sa.contrast, "Contrast change in percent")
        ->check(CLI::Range(-100.0, 100.0))
        ->capture_default_str();
    saliency->add_option("--size", sa.size, "Overlay side in pixels (0 = model input side)")->capture_default_str();
    saliency->add_flag("--json", sa.json_mode, "Machine-readable output");
    saliency->callback([&] { run_saliency(*saliency, sa); });

    auto *dataset = app.add_subcommand("dataset", "Dataset utilities");
    dataset->require_subcommand(1);

    ValidateArgs va;
    auto *validate = dataset->add_subcommand("validate", "Check layout, names and counts of a dataset root");
    validate->add_option("--data", va.data, "Dataset root")->required();
    auto *expected = validate->add_option("--expected", va.expected, "Expected per-class counts (JSON)")
                         ->check(CLI::ExistingFile);
    validate->add_flag("--sidecar", va.sidecar, "Use the root's counts.json as expected counts")->excludes(expected);
    validate->add_flag("--published", va.published, "Compare source totals with the published release");
    validate->add_option("--folders", va.folders, "Folder mapping override (JSON)")->check(CLI::ExistingFile);
    validate->add_flag("--decode", va.decode, "Decode every image");
    validate->add_flag("--allow-any-names", va.loose_names, "Do not enforce the generated-sample name convention");
    validate->add_flag("--allow-unbalanced-test", va.unbalanced, "Do not require equal test counts per class");
    validate->add_flag("--records", va.records, "Include every record in JSON output");
    validate->add_option("--threads", va.threads, "Worker threads (0 = all cores)")->capture_default_str();
    validate->add_flag("--json", va.json_mode, "Machine-readable output");
    validate->callback([&] { run_validate(*validate, va); });

    SynthArgs ya;
    auto *synth = dataset->add_subcommand("synth", "Write a deterministic synthetic dataset");
    synth->add_option("--out", ya.out, "Output root")->required();
    synth->add_option("--sources", ya.sources, "Source count or list of human,latent,stable")->capture_default_str();
    synth->add_option("--styles", ya.styles, "Style count, list of slugs, or all")->capture_default_str();
    synth->add_option("--train", ya.train, "Training images per class")->capture_default_str();
    synth->add_option("--test", ya.test, "Test images per class")->capture_default_str();
    synth->add_option("--side", ya.side, "Image side in pixels")->check(CLI::Range(8, 4096))->capture_default_str();
    synth->add_option("--seed", ya.seed, "Dataset seed")->capture_default_str();
    synth->add_flag("--json", ya.json_mode, "Machine-readable output");
    synth->callback([&] { run_synth(*synth, ya); });

    GenerateArgs ga;
    auto *generate = app.add_subcommand("generate", "Request seeded images from an external generation service");
    generate->add_option("--endpoint", ga.endpoint, "Service base URL, e.g. http://127.0.0.1:7860");
    generate->add_option("--route", ga.route, "Request path")->capture_default_str();
    generate->add_option("--out", ga.out, "Output root for generated images")->required();
    generate->add_option("--ledger", ga.ledger, "JSON-lines ledger (default <out>/ledger.jsonl)");
    generate->add_option("--model", ga.model, "Generator")
        ->check(CLI::IsMember({"latent", "stable", "both"}))
        ->capture_default_str();
    generate->add_option("--styles", ga.styles, "Style count, list of slugs, or all")->capture_default_str();
    generate->add_option("--count", ga.count, "Seeds per generator and style")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    generate->add_option("--seed", ga.seed, "Seed of the seed draw")->capture_default_str();
    generate->add_option("--suffix-seed", ga.suffix_seed, "Seed of the random filename suffixes")->capture_default_str();
    generate->add_option("--parallel", ga.parallel, "Concurrent requests")->check(CLI::PositiveNumber)->capture_default_str();
    generate->add_option("--attempts", ga.attempts, "Attempts per job")->check(CLI::PositiveNumber)->capture_default_str();
    generate->add_option("--backoff-ms", ga.backoff_ms, "Initial retry backoff")->capture_default_str();
    generate->add_option("--timeout", ga.timeout, "Request timeout in seconds")->capture_default_str();
    generate->add_flag("--dry-run", ga.dry_run, "Print the requests without sending them");
    generate->add_flag("--json", ga.json_mode, "Machine-readable output");
    generate->callback([&] { run_generate(*generate, ga); });

    ServiceConfig sc;
    std::optional<std::string> serve_weights;
    std::string pool, state_dir, static_dir;
    auto *serve = app.add_subcommand("serve", "Run the HTTP inference and study service");
    weights_option(serve, serve_weights);
    serve->add_option("--bind", sc.bind_address, "Bind address")->envname("ARTBRAIN_BIND")->capture_default_str();
    serve->add_option("--port", sc.port, "Port")->envname("ARTBRAIN_PORT")->capture_default_str();
    serve->add_option("--pool", pool, "Dataset root whose test split feeds the Turing test")->envname("ARTBRAIN_POOL");
    serve->add_option("--pool-seed", sc.pool_seed, "Pool selection seed")->envname("ARTBRAIN_POOL_SEED")->capture_default_str();
    serve->add_option("--state-dir", state_dir, "Session and response storage")
        ->envname("ARTBRAIN_STATE_DIR")
        ->default_str(sc.state_dir.string());
    serve->add_option("--static-dir", static_dir, "Static files served at /")->envname("ARTBRAIN_STATIC_DIR");
    serve->add_option("--max-upload", sc.max_upload_bytes, "Upload limit in bytes")
        ->envname("ARTBRAIN_MAX_UPLOAD")
        ->capture_default_str();
    serve->add_option("--rate-limit", sc.predictions_per_minute, "Predictions per client per minute")
        ->envname("ARTBRAIN_RATE_LIMIT")
        ->capture_default_str();
    serve->callback([&] {
        if (!pool.empty()) sc.pool_root = pool;
        if (!state_dir.empty()) sc.state_dir = state_dir;
        if (!static_dir.empty()) sc.static_dir = static_dir;
        run_serve(*serve, sc, serve_weights);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const DomainFailure &) {
        return kExitDomain;
    } catch (const std::exception &e) {
        const bool json_mode = ta.json_mode || ea.json_mode || pa.json_mode || sa.json_mode || va.json_mode ||
                               ya.json_mode || ga.json_mode;
        const json err = {{"error", {{"kind", error_kind(e)}, {"message", e.what()}}}};
        if (json_mode) std::cout << err.dump(2) << '\n';
        fmt::print(stderr, "artbrain: {} error: {}\n", error_kind(e), e.what());
        return kExitDomain;
    }
    return 0;
}
