#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "artbrain/model.hpp"
#include "artbrain/service.hpp"

namespace testing_support {

struct FakeClock {
    std::shared_ptr<std::atomic<double>> now = std::make_shared<std::atomic<double>>(1000.0);
    artbrain::Clock fn() const {
        auto n = now;
        return [n] { return n->load(); };
    }
    void advance(double s) const { now->store(now->load() + s); }
};

class Running {
public:
    Running(artbrain::ServiceConfig config, std::optional<artbrain::Model> model, const FakeClock &clock)
        : service_(std::move(config), std::move(model), clock.fn()) {
        port_ = service_.bind_to_any_port();
        thread_ = std::thread([this] { service_.listen_after_bind(); });
        service_.wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_read_timeout(60, 0);
    }
    ~Running() {
        service_.stop();
        thread_.join();
    }
    httplib::Client &client() { return *client_; }
    artbrain::Service &service() { return service_; }

    httplib::Result upload(const std::string &route, const std::string &image,
                           const std::vector<std::pair<std::string, std::string>> &fields = {}) {
        httplib::MultipartFormDataItems items = {{"image", image, "upload.png", "image/png"}};
        for (const auto &[k, v] : fields) items.push_back({k, v, "", ""});
        return client_->Post(route, items);
    }
    httplib::Result post_json(const std::string &route, const nlohmann::json &body) {
        return client_->Post(route, body.dump(), "application/json");
    }

private:
    artbrain::Service service_;
    int port_ = -1;
    std::thread thread_;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace testing_support
