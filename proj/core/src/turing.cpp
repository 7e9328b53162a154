#include <fmt/format.h>

#include "artbrain/error.hpp"
#include "artbrain/eval.hpp"

namespace artbrain {

namespace {

constexpr std::array<std::string_view, kKnowledgeLevels> kKnowledgeNames = {"novice", "beginner", "advanced",
                                                                            "expert"};

Knowledge knowledge_or_throw(const nlohmann::json &j, const char *key) {
    const auto k = knowledge_from_name(j.at(key).get<std::string>());
    if (!k) throw FormatError(std::string("unknown knowledge level in ") + key);
    return *k;
}

}  // namespace

std::string_view name(Knowledge level) noexcept { return kKnowledgeNames[static_cast<std::size_t>(level)]; }

std::string_view name(Origin origin) noexcept { return origin == Origin::human ? "human" : "machine"; }

std::optional<Knowledge> knowledge_from_name(std::string_view text) noexcept {
    for (std::size_t i = 0; i < kKnowledgeLevels; ++i) {
        if (kKnowledgeNames[i] == text) return static_cast<Knowledge>(i);
    }
    return std::nullopt;
}

std::optional<Origin> origin_from_name(std::string_view text) noexcept {
    if (text == "human") return Origin::human;
    if (text == "machine") return Origin::machine;
    return std::nullopt;
}

void TuringResponse::validate() const {
    if (answers.size() != truth.size()) throw ArgumentError("answers and truth differ in length");
    if (truth.empty()) throw ArgumentError("a response needs at least one question");
    if (!(elapsed_seconds >= 0.0 && elapsed_seconds <= kTuringTimeLimitSeconds)) {
        throw ArgumentError(fmt::format("elapsed {:.1f} s exceeds the {:.0f} s limit", elapsed_seconds,
                                        kTuringTimeLimitSeconds));
    }
}

std::size_t TuringResponse::correct() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < std::min(answers.size(), truth.size()); ++i) {
        if (answers[i] && *answers[i] == truth[i]) ++n;
    }
    return n;
}

double TuringResponse::accuracy_percent() const {
    if (truth.empty()) return 0.0;
    return 100.0 * static_cast<double>(correct()) / static_cast<double>(truth.size());
}

nlohmann::json TuringResponse::to_json() const {
    auto a = nlohmann::json::array();
    for (const auto &x : answers) a.push_back(x ? nlohmann::json(std::string(name(*x))) : nlohmann::json(nullptr));
    auto t = nlohmann::json::array();
    for (const auto x : truth) t.push_back(std::string(name(x)));
    return {{"respondent_id", respondent_id},
            {"ai_knowledge", std::string(name(ai_knowledge))},
            {"human_knowledge", std::string(name(human_knowledge))},
            {"answers", a},
            {"truth", t},
            {"elapsed_seconds", elapsed_seconds}};
}

TuringResponse TuringResponse::from_json(const nlohmann::json &j) {
    try {
        TuringResponse r;
        r.respondent_id = j.at("respondent_id").get<std::string>();
        r.ai_knowledge = knowledge_or_throw(j, "ai_knowledge");
        r.human_knowledge = knowledge_or_throw(j, "human_knowledge");
        for (const auto &a : j.at("answers")) {
            if (a.is_null()) {
                r.answers.emplace_back();
                continue;
            }
            const auto o = origin_from_name(a.get<std::string>());
            if (!o) throw FormatError("unknown answer '" + a.get<std::string>() + "'");
            r.answers.emplace_back(*o);
        }
        for (const auto &t : j.at("truth")) {
            const auto o = origin_from_name(t.get<std::string>());
            if (!o) throw FormatError("unknown truth label");
            r.truth.push_back(*o);
        }
        r.elapsed_seconds = j.at("elapsed_seconds").get<double>();
        return r;
    } catch (const nlohmann::json::exception &e) {
        throw FormatError(std::string("malformed Turing response: ") + e.what());
    }
}

TuringMatrix turing_matrix(std::span<const TuringResponse> responses) {
    TuringMatrix m;
    std::array<std::array<double, kKnowledgeLevels>, kKnowledgeLevels> sums{};
    double total = 0.0;
    for (const auto &r : responses) {
        r.validate();
        const double acc = r.accuracy_percent();
        const auto h = static_cast<std::size_t>(r.human_knowledge);
        const auto a = static_cast<std::size_t>(r.ai_knowledge);
        sums[h][a] += acc;
        m.cells[h][a].count += 1;
        total += acc;
    }
    for (std::size_t h = 0; h < kKnowledgeLevels; ++h) {
        for (std::size_t a = 0; a < kKnowledgeLevels; ++a) {
            auto &cell = m.cells[h][a];
            cell.accuracy_percent = cell.count == 0 ? 0.0 : sums[h][a] / static_cast<double>(cell.count);
        }
    }
    m.respondents = responses.size();
    m.overall_percent = responses.empty() ? 0.0 : total / static_cast<double>(responses.size());
    return m;
}

nlohmann::json TuringMatrix::to_json() const {
    auto list = nlohmann::json::array();
    for (std::size_t h = 0; h < kKnowledgeLevels; ++h) {
        for (std::size_t a = 0; a < kKnowledgeLevels; ++a) {
            const auto &c = cells[h][a];
            if (c.count == 0) continue;
            list.push_back({{"human_knowledge", std::string(kKnowledgeNames[h])},
                            {"ai_knowledge", std::string(kKnowledgeNames[a])},
                            {"accuracy_percent", c.accuracy_percent},
                            {"count", c.count}});
        }
    }
    nlohmann::json j = {{"cells", list}, {"overall_percent", overall_percent}, {"respondents", respondents}};
    j["model_accuracy_percent"] = model_accuracy_percent ? nlohmann::json(*model_accuracy_percent) : nlohmann::json();
    return j;
}

std::string TuringMatrix::to_text() const {
    std::string out = fmt::format("{:<22}", "art \\ AI knowledge");
    for (const auto n : kKnowledgeNames) out += fmt::format(" {:>14}", n);
    out += '\n';
    for (std::size_t h = 0; h < kKnowledgeLevels; ++h) {
        out += fmt::format("{:<22}", kKnowledgeNames[h]);
        for (std::size_t a = 0; a < kKnowledgeLevels; ++a) {
            const auto &c = cells[h][a];
            out += c.count == 0 ? fmt::format(" {:>14}", "-")
                                : fmt::format(" {:>14}", fmt::format("{:.1f}% ({})", c.accuracy_percent, c.count));
        }
        out += '\n';
    }
    out += fmt::format("overall human accuracy {:.1f}% over {} respondents\n", overall_percent, respondents);
    if (model_accuracy_percent) out += fmt::format("model accuracy {:.1f}%\n", *model_accuracy_percent);
    return out;
}

}  // namespace artbrain
