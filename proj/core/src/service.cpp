#include "artbrain/service.hpp"

#include <algorithm>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>

#include <fmt/format.h>
#include <httplib.h>
#include <openssl/evp.h>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/eval.hpp"
#include "artbrain/image_io.hpp"
#include "artbrain/saliency.hpp"

namespace artbrain {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kRateWindowSeconds = 60.0;

struct HttpError : Error {
    int status;
    HttpError(int code, const std::string &what) : Error(what), status(code) {}
};

std::string base64(std::span<const std::byte> bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3) + 1, '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char *>(out.data()),
                                  reinterpret_cast<const unsigned char *>(bytes.data()), static_cast<int>(bytes.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

std::uint64_t fnv1a(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : text) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string random_id() {
    std::random_device rd;
    return fmt::format("{:08x}{:08x}{:08x}{:08x}", rd(), rd(), rd(), rd());
}

void send_json(httplib::Response &res, const json &body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response &res, int status, const std::string &message) {
    send_json(res, {{"error", {{"status", status}, {"message", message}}}}, status);
}

std::optional<std::string> field(const httplib::Request &req, const std::string &key) {
    if (req.is_multipart_form_data()) {
        if (req.has_file(key)) return req.get_file_value(key).content;
    }
    if (req.has_param(key)) return req.get_param_value(key);
    return std::nullopt;
}

double number_field(const httplib::Request &req, const std::string &key, double fallback) {
    const auto text = field(req, key);
    if (!text) return fallback;
    try {
        std::size_t used = 0;
        const double v = std::stod(*text, &used);
        if (used != text->size()) throw std::invalid_argument(key);
        return v;
    } catch (const std::exception &) {
        throw HttpError(400, fmt::format("field '{}' is not a number", key));
    }
}

struct PoolImage {
    fs::path path;
    Origin truth;
};

struct Session {
    std::string id;
    Knowledge ai_knowledge = Knowledge::novice;
    Knowledge human_knowledge = Knowledge::novice;
    double created_at = 0.0;
    double deadline = 0.0;
    std::vector<std::size_t> order;
    std::vector<std::optional<Origin>> answers;
    bool submitted = false;
    std::optional<double> score_percent;

    json to_json() const {
        json a = json::array();
        for (const auto &x : answers) a.push_back(x ? json(std::string(name(*x))) : json(nullptr));
        return {{"id", id},
                {"ai_knowledge", std::string(name(ai_knowledge))},
                {"human_knowledge", std::string(name(human_knowledge))},
                {"created_at", created_at},
                {"deadline", deadline},
                {"order", order},
                {"answers", a},
                {"submitted", submitted},
                {"score_percent", score_percent ? json(*score_percent) : json(nullptr)}};
    }

    static Session from_json(const json &j) {
        Session s;
        s.id = j.at("id").get<std::string>();
        s.ai_knowledge = knowledge_from_name(j.at("ai_knowledge").get<std::string>()).value_or(Knowledge::novice);
        s.human_knowledge = knowledge_from_name(j.at("human_knowledge").get<std::string>()).value_or(Knowledge::novice);
        s.created_at = j.at("created_at").get<double>();
        s.deadline = j.at("deadline").get<double>();
        s.order = j.at("order").get<std::vector<std::size_t>>();
        for (const auto &a : j.at("answers")) {
            s.answers.push_back(a.is_null() ? std::nullopt : origin_from_name(a.get<std::string>()));
        }
        s.submitted = j.at("submitted").get<bool>();
        if (!j.at("score_percent").is_null()) s.score_percent = j.at("score_percent").get<double>();
        return s;
    }
};

}  // namespace

Clock system_clock() {
    return [] {
        return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
    };
}

ServiceConfig ServiceConfig::from_environment() {
    ServiceConfig c;
    const auto env = [](const char *key) -> std::optional<std::string> {
        const char *v = std::getenv(key);
        if (v == nullptr || *v == '\0') return std::nullopt;
        return std::string(v);
    };
    const auto number = [](const std::string &key, const std::string &text) {
        try {
            return std::stoull(text);
        } catch (const std::exception &) {
            throw ConfigError(key + " is not a number");
        }
    };
    if (auto v = env("ARTBRAIN_BIND")) c.bind_address = *v;
    if (auto v = env("ARTBRAIN_PORT")) c.port = static_cast<int>(number("ARTBRAIN_PORT", *v));
    if (auto v = env("ARTBRAIN_WEIGHTS")) c.weights = *v;
    if (auto v = env("ARTBRAIN_POOL")) c.pool_root = *v;
    if (auto v = env("ARTBRAIN_POOL_SEED")) c.pool_seed = number("ARTBRAIN_POOL_SEED", *v);
    if (auto v = env("ARTBRAIN_STATE_DIR")) c.state_dir = *v;
    if (auto v = env("ARTBRAIN_STATIC_DIR")) c.static_dir = *v;
    if (auto v = env("ARTBRAIN_MAX_UPLOAD")) c.max_upload_bytes = number("ARTBRAIN_MAX_UPLOAD", *v);
    if (auto v = env("ARTBRAIN_RATE_LIMIT")) c.predictions_per_minute = number("ARTBRAIN_RATE_LIMIT", *v);
    return c;
}

struct Service::Impl {
    ServiceConfig config;
    std::optional<Model> model;
    Clock clock;
    httplib::Server server;
    std::vector<PoolImage> pool;

    std::mutex sessions_lock;
    std::map<std::string, Session> sessions;
    std::vector<TuringResponse> responses;

    std::mutex rate_lock;
    std::map<std::string, std::deque<double>> recent;

    std::once_flag model_pool_once;
    std::optional<double> model_pool_accuracy;

    Impl(ServiceConfig c, std::optional<Model> m, Clock k)
        : config(std::move(c)), model(std::move(m)), clock(std::move(k)) {
        if (config.questions_per_origin == 0) throw ConfigError("questions_per_origin must be positive");
        load_pool();
        load_state();
        routes();
    }

    fs::path sessions_dir() const { return config.state_dir / "sessions"; }
    fs::path responses_path() const { return config.state_dir / "responses.jsonl"; }

    void load_pool() {
        if (!config.pool_root) return;
        ValidateOptions options;
        options.require_generated_names = false;
        options.require_balanced_test = false;
        const auto manifest = validate_manifest(*config.pool_root, default_folder_mapping(), options);
        std::vector<fs::path> human, machine;
        for (const auto *r : manifest.split(Split::test)) {
            if (r->source == Source::human) human.push_back(manifest.root / r->path);
            if (r->source == Source::stable_diffusion) machine.push_back(manifest.root / r->path);
        }
        const std::size_t n = config.questions_per_origin;
        if (human.size() < n || machine.size() < n) {
            throw ConfigError(fmt::format("image pool needs {} human and {} stable test images, found {} and {}", n,
                                          n, human.size(), machine.size()));
        }
        std::mt19937_64 rng(config.pool_seed);
        const auto pick = [&](std::vector<fs::path> &paths, Origin truth) {
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = i + static_cast<std::size_t>(rng() % (paths.size() - i));
                std::swap(paths[i], paths[j]);
                pool.push_back({paths[i], truth});
            }
        };
        pick(human, Origin::human);
        pick(machine, Origin::machine);
    }

    void load_state() {
        fs::create_directories(sessions_dir());
        for (const auto &entry : fs::directory_iterator(sessions_dir())) {
            if (entry.path().extension() != ".json") continue;
            std::ifstream in(entry.path());
            const auto j = json::parse(in, nullptr, false);
            if (j.is_discarded()) continue;
            try {
                auto s = Session::from_json(j);
                if (s.order.size() != pool.size()) continue;
                sessions.emplace(s.id, std::move(s));
            } catch (const json::exception &) {
            }
        }
        std::ifstream in(responses_path());
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto j = json::parse(line, nullptr, false);
            if (!j.is_discarded()) responses.push_back(TuringResponse::from_json(j));
        }
    }

    void persist(const Session &s) {
        const auto path = sessions_dir() / (s.id + ".json");
        const auto tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << s.to_json().dump();
            if (!out) throw IoError("cannot write session state");
        }
        fs::rename(tmp, path);
    }

    const Model &require_model() const {
        if (!model) throw HttpError(503, "no model is loaded");
        return *model;
    }

    void rate_limit(const httplib::Request &req) {
        if (config.predictions_per_minute == 0) return;
        const double now = clock();
        const std::scoped_lock guard(rate_lock);
        auto &times = recent[req.remote_addr];
        while (!times.empty() && now - times.front() >= kRateWindowSeconds) times.pop_front();
        if (times.size() >= config.predictions_per_minute) {
            throw HttpError(429, fmt::format("limit of {} predictions per minute reached", config.predictions_per_minute));
        }
        times.push_back(now);
    }

    RgbImageF upload(const httplib::Request &req) const {
        std::string bytes;
        if (req.is_multipart_form_data()) {
            if (!req.has_file("image")) throw HttpError(400, "multipart field 'image' is missing");
            bytes = req.get_file_value("image").content;
        } else {
            bytes = req.body;
        }
        if (bytes.empty()) throw HttpError(400, "empty image upload");
        try {
            return to_float(decode_image(std::as_bytes(std::span(bytes.data(), bytes.size()))));
        } catch (const FormatError &e) {
            throw HttpError(400, std::string("undecodable image: ") + e.what());
        }
    }

    double contrast(const httplib::Request &req) const {
        const double pct = number_field(req, "contrast_percent", 0.0);
        if (!(pct >= -100.0 && pct <= 100.0)) throw HttpError(400, "contrast_percent must lie in [-100, 100]");
        return pct;
    }

    std::size_t count_field(const httplib::Request &req, const std::string &key, std::size_t fallback) const {
        const double v = number_field(req, key, static_cast<double>(fallback));
        if (!(v >= 1.0 && v <= static_cast<double>(kNumClasses)) || v != std::floor(v)) {
            throw HttpError(400, fmt::format("{} must be an integer in [1, 30]", key));
        }
        return static_cast<std::size_t>(v);
    }

    json predict(const httplib::Request &req) {
        const Model &m = require_model();
        const auto image = upload(req);
        const double pct = contrast(req);
        const std::size_t k = count_field(req, "top_k", 3);
        rate_limit(req);
        auto prediction = m.forward(preprocess(image, m.config().preprocess, pct));
        prediction.top = top_k(prediction, k);
        json j = prediction.to_json();
        j["model_version"] = m.version();
        j["contrast_percent"] = pct;
        return j;
    }

    json saliency(const httplib::Request &req) {
        const Model &m = require_model();
        const auto image = upload(req);
        const double pct = contrast(req);
        const std::size_t k = count_field(req, "k", 3);
        const double alpha = number_field(req, "alpha", 0.5);
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw HttpError(400, "alpha must lie in [0, 1]");
        rate_limit(req);
        const auto &pre = m.config().preprocess;
        const auto tensor = preprocess(image, pre, pct);
        const auto fused = fm_g_cam(m, tensor, k);
        const auto shown = to_u8(resize_and_center_crop(adjust_contrast(image, pct), pre.target_side));
        const auto up = upsample(fused, shown.height, shown.width);
        const auto png = encode_png(overlay(shown, up, alpha));
        return {{"model_version", m.version()},
                {"contrast_percent", pct},
                {"k", k},
                {"alpha", alpha},
                {"width", shown.width},
                {"height", shown.height},
                {"legend", legend_json(fused)},
                {"overlay_png_base64", base64(png)}};
    }

    Session &find_session(const std::string &id) {
        const auto it = sessions.find(id);
        if (it == sessions.end()) throw HttpError(404, "unknown session");
        return it->second;
    }

    json session_view(const Session &s) const {
        const double now = clock();
        json questions = json::array();
        for (std::size_t q = 0; q < s.order.size(); ++q) {
            json item = {{"index", q},
                         {"image_url", fmt::format("/api/turing/session/{}/image/{}", s.id, q)},
                         {"answer", s.answers[q] ? json(std::string(name(*s.answers[q]))) : json(nullptr)}};
            if (s.submitted) item["truth"] = std::string(name(pool[s.order[q]].truth));
            questions.push_back(std::move(item));
        }
        json j = {{"session_id", s.id},
                  {"ai_knowledge", std::string(name(s.ai_knowledge))},
                  {"human_knowledge", std::string(name(s.human_knowledge))},
                  {"created_at", s.created_at},
                  {"deadline", s.deadline},
                  {"time_limit_seconds", config.turing_time_limit_seconds},
                  {"remaining_seconds", std::max(0.0, s.deadline - now)},
                  {"expired", now > s.deadline},
                  {"submitted", s.submitted},
                  {"questions", questions}};
        if (s.score_percent) j["score_percent"] = *s.score_percent;
        return j;
    }

    json create_session(const httplib::Request &req) {
        if (pool.empty()) throw HttpError(503, "no Turing image pool is configured");
        const auto body = json::parse(req.body.empty() ? "{}" : req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) throw HttpError(400, "intake must be a JSON object");
        const auto level = [&](const char *key) {
            if (!body.contains(key) || !body.at(key).is_string()) throw HttpError(400, fmt::format("missing {}", key));
            const auto k = knowledge_from_name(body.at(key).get<std::string>());
            if (!k) throw HttpError(400, fmt::format("{} must be novice, beginner, advanced or expert", key));
            return *k;
        };
        Session s;
        s.ai_knowledge = level("ai_knowledge");
        s.human_knowledge = level("human_knowledge");
        s.created_at = clock();
        s.deadline = s.created_at + config.turing_time_limit_seconds;
        const std::scoped_lock guard(sessions_lock);
        do {
            s.id = random_id();
        } while (sessions.count(s.id) != 0);
        s.order = shuffled_order(s.id, pool.size());
        s.answers.assign(pool.size(), std::nullopt);
        persist(s);
        const auto &stored = sessions.emplace(s.id, std::move(s)).first->second;
        return session_view(stored);
    }

    json answer(const std::string &id, const httplib::Request &req) {
        const auto body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object() || !body.contains("question") ||
            !body.at("question").is_number_integer() || !body.contains("answer") || !body.at("answer").is_string()) {
            throw HttpError(400, "answer must be {\"question\": int, \"answer\": \"human\"|\"machine\"}");
        }
        const std::scoped_lock guard(sessions_lock);
        Session &s = find_session(id);
        if (clock() > s.deadline) throw HttpError(410, "the session deadline has passed");
        if (s.submitted) throw HttpError(409, "the session was already submitted");
        const auto q = body.at("question").get<std::int64_t>();
        if (q < 0 || static_cast<std::size_t>(q) >= s.answers.size()) throw HttpError(400, "question index out of range");
        const auto origin = origin_from_name(body.at("answer").get<std::string>());
        if (!origin) throw HttpError(400, "answer must be human or machine");
        auto &slot = s.answers[static_cast<std::size_t>(q)];
        if (slot) throw HttpError(409, "question already answered");
        slot = *origin;
        persist(s);
        return {{"session_id", s.id}, {"question", q}, {"answer", std::string(name(*origin))},
                {"answered", std::count_if(s.answers.begin(), s.answers.end(), [](const auto &a) { return a.has_value(); })}};
    }

    json submit(const std::string &id) {
        const std::scoped_lock guard(sessions_lock);
        Session &s = find_session(id);
        const double now = clock();
        if (now > s.deadline) throw HttpError(410, "the session deadline has passed");
        if (s.submitted) throw HttpError(409, "the session was already submitted");
        TuringResponse r;
        r.respondent_id = s.id;
        r.ai_knowledge = s.ai_knowledge;
        r.human_knowledge = s.human_knowledge;
        r.answers = s.answers;
        for (const auto idx : s.order) r.truth.push_back(pool[idx].truth);
        r.elapsed_seconds = std::min(now - s.created_at, config.turing_time_limit_seconds);
        s.submitted = true;
        s.score_percent = r.accuracy_percent();
        persist(s);
        {
            std::ofstream out(responses_path(), std::ios::app);
            out << r.to_json().dump() << '\n';
        }
        responses.push_back(r);
        return {{"session_id", s.id},
                {"correct", r.correct()},
                {"total", r.truth.size()},
                {"score_percent", *s.score_percent}};
    }

    json matrix() {
        std::call_once(model_pool_once, [&] {
            if (!model || pool.empty()) return;
            std::size_t right = 0;
            for (const auto &img : pool) {
                const auto p = model->forward(preprocess(read_image(img.path), model->config().preprocess));
                const bool says_human = argmax(*p.source_marginals) == static_cast<std::size_t>(Source::human);
                if (says_human == (img.truth == Origin::human)) ++right;
            }
            model_pool_accuracy = 100.0 * static_cast<double>(right) / static_cast<double>(pool.size());
        });
        std::vector<TuringResponse> snapshot;
        {
            const std::scoped_lock guard(sessions_lock);
            snapshot = responses;
        }
        auto m = turing_matrix(snapshot);
        m.model_accuracy_percent = model_pool_accuracy;
        return m.to_json();
    }

    static std::vector<std::size_t> shuffled_order(const std::string &id, std::size_t n) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::mt19937_64 rng(fnv1a(id));
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }
        return order;
    }

    template <typename Fn>
    auto guarded(Fn fn) {
        return [this, fn](const httplib::Request &req, httplib::Response &res) {
            try {
                fn(req, res);
            } catch (const HttpError &e) {
                send_error(res, e.status, e.what());
            } catch (const ArgumentError &e) {
                send_error(res, 400, e.what());
            } catch (const FormatError &e) {
                send_error(res, 400, e.what());
            } catch (const std::exception &e) {
                send_error(res, 500, e.what());
            }
        };
    }

    void routes() {
        server.set_payload_max_length(config.max_upload_bytes);
        server.set_error_handler([](const httplib::Request &, httplib::Response &res) {
            if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
            send_error(res, res.status, httplib::status_message(res.status));
            return httplib::Server::HandlerResponse::Handled;
        });
        if (config.static_dir) server.set_mount_point("/", config.static_dir->string());

        server.Get("/api/health", guarded([this](const httplib::Request &, httplib::Response &res) {
                       send_json(res, {{"status", "ok"},
                                       {"model_loaded", model.has_value()},
                                       {"model_version", model ? json(model->version()) : json(nullptr)},
                                       {"pool_size", pool.size()}});
                   }));
        server.Post("/api/predict", guarded([this](const httplib::Request &req, httplib::Response &res) {
                        send_json(res, predict(req));
                    }));
        server.Post("/api/saliency", guarded([this](const httplib::Request &req, httplib::Response &res) {
                        send_json(res, saliency(req));
                    }));
        server.Post("/api/turing/session", guarded([this](const httplib::Request &req, httplib::Response &res) {
                        send_json(res, create_session(req), 201);
                    }));
        server.Get(R"(/api/turing/session/([0-9a-f]+))",
                   guarded([this](const httplib::Request &req, httplib::Response &res) {
                       const std::scoped_lock guard(sessions_lock);
                       send_json(res, session_view(find_session(req.matches[1])));
                   }));
        server.Get(R"(/api/turing/session/([0-9a-f]+)/image/(\d+))",
                   guarded([this](const httplib::Request &req, httplib::Response &res) {
                       fs::path path;
                       {
                           const std::scoped_lock guard(sessions_lock);
                           const Session &s = find_session(req.matches[1]);
                           const auto q = std::stoull(req.matches[2]);
                           if (q >= s.order.size()) throw HttpError(404, "no such question");
                           path = pool[s.order[q]].path;
                       }
                       const auto bytes = read_file(path);
                       const char *type = sniff_format(bytes) == ImageFormat::png ? "image/png" : "image/jpeg";
                       res.set_content(reinterpret_cast<const char *>(bytes.data()), bytes.size(), type);
                       res.set_header("Cache-Control", "no-store");
                   }));
        server.Post(R"(/api/turing/session/([0-9a-f]+)/answer)",
                    guarded([this](const httplib::Request &req, httplib::Response &res) {
                        send_json(res, answer(req.matches[1], req));
                    }));
        server.Post(R"(/api/turing/session/([0-9a-f]+)/submit)",
                    guarded([this](const httplib::Request &req, httplib::Response &res) {
                        send_json(res, submit(req.matches[1]));
                    }));
        server.Get("/api/turing/matrix", guarded([this](const httplib::Request &, httplib::Response &res) {
                       send_json(res, matrix());
                   }));
    }
};

Service::Service(ServiceConfig config, std::optional<Model> model, Clock clock)
    : impl_(std::make_unique<Impl>(std::move(config), std::move(model), std::move(clock))) {}

Service::~Service() {
    if (impl_) impl_->server.stop();
}

bool Service::listen() { return impl_->server.listen(impl_->config.bind_address, impl_->config.port); }

int Service::bind_to_any_port() { return impl_->server.bind_to_any_port(impl_->config.bind_address); }

bool Service::listen_after_bind() { return impl_->server.listen_after_bind(); }

void Service::stop() { impl_->server.stop(); }

void Service::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::size_t Service::pool_size() const { return impl_->pool.size(); }

}  // namespace artbrain
