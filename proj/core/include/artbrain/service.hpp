#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "artbrain/model.hpp"

namespace artbrain {

/// Seconds since an arbitrary epoch; injectable so tests can move time.
using Clock = std::function<double()>;

Clock system_clock();

struct ServiceConfig {
    std::string bind_address = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> weights;
    /// Dataset root whose test split supplies the Turing-test images.
    std::optional<std::filesystem::path> pool_root;
    std::uint64_t pool_seed = 0;
    /// Sessions and anonymized responses are persisted here.
    std::filesystem::path state_dir = "artbrain-state";
    std::optional<std::filesystem::path> static_dir;
    std::size_t max_upload_bytes = 10 * 1024 * 1024;
    std::size_t predictions_per_minute = 30;
    double turing_time_limit_seconds = 1200.0;
    std::size_t questions_per_origin = 25;

    /// Reads ARTBRAIN_* environment variables over the defaults.
    static ServiceConfig from_environment();
};

/// HTTP inference and study service.
///
/// Routes:
///   GET  /api/health
///   POST /api/predict                       multipart `image`, optional `contrast_percent`, `top_k`
///   POST /api/saliency                      multipart `image`, optional `k`, `contrast_percent`, `alpha`
///   POST /api/turing/session                JSON intake `{ai_knowledge, human_knowledge}`
///   GET  /api/turing/session/{id}
///   GET  /api/turing/session/{id}/image/{q}
///   POST /api/turing/session/{id}/answer    JSON `{question, answer}`
///   POST /api/turing/session/{id}/submit
///   GET  /api/turing/matrix
class Service {
public:
    Service(ServiceConfig config, std::optional<Model> model, Clock clock = system_clock());
    ~Service();
    Service(const Service &) = delete;
    Service &operator=(const Service &) = delete;

    /// Binds and serves until stop(); returns false if binding failed.
    bool listen();
    /// Binds to an ephemeral port and returns it, or -1. Call listen_after_bind() afterwards.
    int bind_to_any_port();
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

    std::size_t pool_size() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace artbrain
