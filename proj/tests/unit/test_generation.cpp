#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/generation.hpp"
#include "artbrain/image_io.hpp"

using namespace artbrain;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string png_of_side(std::size_t side) {
    RgbImage img(side, side);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 31);
    const auto bytes = encode_png(img);
    return {reinterpret_cast<const char *>(bytes.data()), bytes.size()};
}

// Scripted stand-in for a text-to-image service.
class MockService {
public:
    MockService() {
        server_.Post("/generate", [this](const httplib::Request &req, httplib::Response &res) {
            const auto body = json::parse(req.body);
            const std::uint64_t seed = body.at("seed");
            std::scoped_lock guard(lock_);
            requests_.push_back(body);
            auto &failures = fail_first_[seed];
            if (failures > 0) {
                --failures;
                res.status = 503;
                return;
            }
            const std::size_t side = wrong_size_.count(seed) ? 64 : body.at("width").get<std::size_t>();
            res.set_content(png_of_side(side), "image/png");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockService() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
    void fail_first(std::uint64_t seed, int n) { fail_first_[seed] = n; }
    void wrong_size(std::uint64_t seed) { wrong_size_.insert(seed); }
    std::vector<json> requests() {
        std::scoped_lock guard(lock_);
        return requests_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex lock_;
    std::vector<json> requests_;
    std::map<std::uint64_t, int> fail_first_;
    std::set<std::uint64_t> wrong_size_;
};

class Generation : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("artbrain_gen_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        options_.endpoint = mock_.endpoint();
        options_.out_dir = dir_ / "out";
        options_.ledger_path = dir_ / "ledger.jsonl";
        options_.initial_backoff = std::chrono::milliseconds(1);
        options_.timeout = std::chrono::seconds(5);
        options_.max_parallel = 2;
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::vector<json> ledger() const {
        std::vector<json> out;
        std::ifstream in(options_.ledger_path);
        for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
        return out;
    }

    MockService mock_;
    fs::path dir_;
    GenerationOptions options_;
};

}  // namespace

TEST(GenerationJob, PublishedSettings) {
    const auto latent = GenerationJob::make(Generator::latent, Style::baroque, 7);
    EXPECT_EQ(latent.prompt, "A painting in Baroque art style");
    EXPECT_EQ(latent.image_side, 256);
    EXPECT_EQ(latent.steps, 50);
    EXPECT_EQ(latent.parallel_samples, 4);
    EXPECT_DOUBLE_EQ(latent.guidance_or_diversity, 5.0);
    EXPECT_EQ(latent.sampler, "PLMS");
    EXPECT_FALSE(latent.negative_prompt.has_value());

    const auto stable = GenerationJob::make(Generator::stable, Style::ukiyoe, 7);
    EXPECT_EQ(stable.image_side, 768);
    EXPECT_DOUBLE_EQ(stable.guidance_or_diversity, 9.0);
    EXPECT_EQ(stable.sampler, "DPMS Multistep Scheduler");
    EXPECT_EQ(stable.negative_prompt, "photo frame");
    const auto j = stable.request_json();
    EXPECT_EQ(j["negative_prompt"], "photo frame");
    EXPECT_EQ(j["guidance_scale"], 9.0);
    EXPECT_EQ(j["width"], 768);
    EXPECT_EQ(j["steps"], 50);
    EXPECT_FALSE(latent.request_json().contains("negative_prompt"));
    EXPECT_EQ(latent.request_json()["diversity_scale"], 5.0);

    auto bad = latent;
    bad.negative_prompt = "photo frame";
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = stable;
    bad.image_side = 512;
    EXPECT_THROW(bad.validate(), ArgumentError);
    bad = latent;
    bad.seed = kMaxSeed + 1;
    EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(GenerationJob, SeedsAreDistinctAndInRange) {
    const auto seeds = draw_seeds(5000, 3);
    EXPECT_EQ(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size(), seeds.size());
    for (const auto s : seeds) EXPECT_LE(s, kMaxSeed);
    EXPECT_EQ(draw_seeds(10, 3), std::vector<std::uint64_t>(seeds.begin(), seeds.begin() + 10));
}

TEST_F(Generation, WritesNamedSamplesAndLedger) {
    const std::vector<GenerationJob> jobs = {GenerationJob::make(Generator::latent, Style::baroque, 11),
                                             GenerationJob::make(Generator::latent, Style::baroque, 12),
                                             GenerationJob::make(Generator::stable, Style::impressionism, 13)};
    const auto summary = run_generation(jobs, options_);
    EXPECT_EQ(summary.written, 3U);
    const auto requests = mock_.requests();
    ASSERT_EQ(requests.size(), 3U);
    for (const auto &r : requests) {
        const auto &job = *std::find_if(jobs.begin(), jobs.end(), [&](const auto &j) { return j.seed == r["seed"]; });
        EXPECT_EQ(r, job.request_json());
    }
    const auto lines = ledger();
    ASSERT_EQ(lines.size(), 3U);
    for (const auto &l : lines) {
        EXPECT_EQ(l["status"], "ok");
        EXPECT_EQ(l["sha256"].get<std::string>().size(), 64U);
        const fs::path path = l["path"].get<std::string>();
        ASSERT_TRUE(fs::exists(path));
        const auto name = parse_filename(path.filename().string());
        EXPECT_EQ(name.seed, l["seed"].get<std::uint64_t>());
        EXPECT_EQ(sniff_format(read_file(path)), ImageFormat::jpeg);
    }
    const auto m = validate_manifest(dir_ / "out", default_folder_mapping());
    EXPECT_EQ(m.issues.size(), 0U);
}

TEST_F(Generation, RetriesThenRecordsFailure) {
    mock_.fail_first(21, 2);
    mock_.fail_first(22, 10);
    options_.max_attempts = 3;
    const auto summary = run_generation({GenerationJob::make(Generator::latent, Style::baroque, 21),
                                         GenerationJob::make(Generator::latent, Style::baroque, 22)},
                                        options_);
    EXPECT_EQ(summary.written, 1U);
    EXPECT_EQ(summary.failed, 1U);
    std::map<std::uint64_t, json> by_seed;
    for (const auto &l : ledger()) by_seed[l["seed"]] = l;
    EXPECT_EQ(by_seed[21]["attempts"], 3);
    EXPECT_EQ(by_seed[22]["status"], "failed");
    EXPECT_EQ(by_seed[22]["detail"], "HTTP 503");
    EXPECT_EQ(mock_.requests().size(), 6U);
}

TEST_F(Generation, RejectsWrongSize) {
    mock_.wrong_size(31);
    const auto summary = run_generation({GenerationJob::make(Generator::latent, Style::baroque, 31)}, options_);
    EXPECT_EQ(summary.rejected, 1U);
    EXPECT_EQ(ledger()[0]["status"], "rejected");
    EXPECT_FALSE(fs::exists(dir_ / "out" / "AI_LD_baroque"));
}

TEST_F(Generation, ResumeSkipsCompletedSeeds) {
    mock_.fail_first(42, 10);
    options_.max_attempts = 1;
    const std::vector<GenerationJob> jobs = {GenerationJob::make(Generator::latent, Style::baroque, 41),
                                             GenerationJob::make(Generator::latent, Style::baroque, 42)};
    run_generation(jobs, options_);
    const auto first = mock_.requests().size();
    mock_.fail_first(42, 0);
    const auto second = run_generation(jobs, options_);
    EXPECT_EQ(second.skipped, 1U);
    EXPECT_EQ(second.written, 1U);
    const auto requests = mock_.requests();
    std::multiset<std::uint64_t> ok_seeds;
    for (const auto &l : ledger())
        if (l["status"] == "ok") ok_seeds.insert(l["seed"].get<std::uint64_t>());
    EXPECT_EQ(ok_seeds, (std::multiset<std::uint64_t>{41, 42}));
    EXPECT_EQ(requests.size(), first + 1);
    EXPECT_EQ(requests.back()["seed"], 42);
    const auto third = run_generation(jobs, options_);
    EXPECT_EQ(third.skipped, 2U);
    EXPECT_EQ(mock_.requests().size(), first + 1);
}

TEST_F(Generation, UnreachableEndpointFails) {
    options_.endpoint = "http://127.0.0.1:1";
    options_.max_attempts = 2;
    const auto summary = run_generation({GenerationJob::make(Generator::latent, Style::baroque, 51)}, options_);
    EXPECT_EQ(summary.failed, 1U);
    options_.endpoint.clear();
    EXPECT_THROW(run_generation({}, options_), ArgumentError);
}
