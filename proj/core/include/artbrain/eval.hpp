#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/data.hpp"
#include "artbrain/labels.hpp"
#include "artbrain/model.hpp"

namespace artbrain {

/// Square count matrix, rows = truth, columns = prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t classes = kNumClasses);

    void add(std::size_t truth, std::size_t predicted, std::uint64_t count = 1);
    /// Associative merge; both matrices must have the same size.
    void merge(const ConfusionMatrix &other);

    std::uint64_t at(std::size_t truth, std::size_t predicted) const;
    std::size_t classes() const noexcept { return classes_; }
    std::uint64_t total() const noexcept;
    std::uint64_t trace() const noexcept;

    nlohmann::json to_json() const;

private:
    std::size_t classes_;
    std::vector<std::uint64_t> counts_;
};

struct ClassScores {
    std::vector<double> precision;
    std::vector<double> recall;
    std::vector<double> f1;
    std::vector<std::uint64_t> support;
    /// Micro accuracy: trace / total.
    double accuracy = 0.0;
    double macro_f1 = 0.0;
};

/// F1 = 2PR/(P+R), defined as 0 when P and R are both 0. Throws ArgumentError on an empty matrix.
ClassScores f1_per_class(const ConfusionMatrix &matrix);

struct AttributionScores {
    ConfusionMatrix matrix{kNumSources};
    ClassScores scores;
};

/// Argmax of each prediction's source marginals against the true source.
/// Throws StateError if a prediction lacks marginals, ArgumentError on length mismatch.
AttributionScores attribution_scores(std::span<const Prediction> predictions, std::span<const Source> truth);

struct EvaluationReport {
    ConfusionMatrix classes{kNumClasses};
    ClassScores class_scores;
    AttributionScores attribution;
    ConfusionMatrix styles{kNumStyles};
    ClassScores style_scores;
    /// Images whose top class's source differs from the marginal argmax source.
    std::size_t discrepant = 0;
    std::size_t samples = 0;

    nlohmann::json to_json() const;
    /// Aligned text tables: per-class F1, attribution, style summary.
    std::string to_text() const;
};

/// Accumulates predictions one sample at a time (batch size 1).
class Evaluator {
public:
    void add(const Prediction &prediction, ClassIndex truth);
    void merge(const Evaluator &other);
    EvaluationReport report() const;

private:
    ConfusionMatrix classes_{kNumClasses};
    ConfusionMatrix styles_{kNumStyles};
    std::vector<Prediction> predictions_;
    std::vector<Source> sources_;
    std::size_t discrepant_ = 0;
};

/// Runs the model over one split of the manifest.
EvaluationReport evaluate(const Model &model, const DatasetManifest &manifest, Split split,
                          std::size_t threads = 0);

/// Side-by-side overall accuracy table for several named runs (ablations).
std::string ablation_table(const std::vector<std::pair<std::string, EvaluationReport>> &runs);

// --- Artistic Turing test -------------------------------------------------------------

enum class Knowledge : std::uint8_t { novice, beginner, advanced, expert };
enum class Origin : std::uint8_t { human, machine };

inline constexpr std::size_t kKnowledgeLevels = 4;
inline constexpr double kTuringTimeLimitSeconds = 1200.0;

std::string_view name(Knowledge level) noexcept;
std::string_view name(Origin origin) noexcept;
std::optional<Knowledge> knowledge_from_name(std::string_view text) noexcept;
std::optional<Origin> origin_from_name(std::string_view text) noexcept;

struct TuringResponse {
    std::string respondent_id;
    Knowledge ai_knowledge = Knowledge::novice;
    Knowledge human_knowledge = Knowledge::novice;
    /// Unanswered questions are empty and count as wrong.
    std::vector<std::optional<Origin>> answers;
    std::vector<Origin> truth;
    double elapsed_seconds = 0.0;

    /// Throws ArgumentError on length mismatch or elapsed > 1200 s.
    void validate() const;
    std::size_t correct() const;
    double accuracy_percent() const;

    nlohmann::json to_json() const;
    static TuringResponse from_json(const nlohmann::json &j);
};

struct TuringCell {
    double accuracy_percent = 0.0;
    std::size_t count = 0;
};

/// cells[human_knowledge][ai_knowledge].
struct TuringMatrix {
    std::array<std::array<TuringCell, kKnowledgeLevels>, kKnowledgeLevels> cells{};
    double overall_percent = 0.0;
    std::size_t respondents = 0;
    std::optional<double> model_accuracy_percent;

    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Mean per-respondent accuracy per knowledge cell and overall. Empty cells have count 0.
TuringMatrix turing_matrix(std::span<const TuringResponse> responses);

}  // namespace artbrain
