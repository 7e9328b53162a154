#include "artbrain/eval.hpp"

#include <algorithm>
#include <thread>

#include <fmt/format.h>

#include "artbrain/error.hpp"
#include "artbrain/image_io.hpp"

namespace artbrain {

ConfusionMatrix::ConfusionMatrix(std::size_t classes) : classes_(classes), counts_(classes * classes, 0) {
    if (classes == 0) throw ArgumentError("confusion matrix needs at least one class");
}

void ConfusionMatrix::add(std::size_t truth, std::size_t predicted, std::uint64_t count) {
    if (truth >= classes_ || predicted >= classes_) throw ArgumentError("class index outside the confusion matrix");
    counts_[truth * classes_ + predicted] += count;
}

void ConfusionMatrix::merge(const ConfusionMatrix &other) {
    if (other.classes_ != classes_) throw ArgumentError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::at(std::size_t truth, std::size_t predicted) const {
    if (truth >= classes_ || predicted >= classes_) throw ArgumentError("class index outside the confusion matrix");
    return counts_[truth * classes_ + predicted];
}

std::uint64_t ConfusionMatrix::total() const noexcept {
    std::uint64_t sum = 0;
    for (const auto v : counts_) sum += v;
    return sum;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
    std::uint64_t sum = 0;
    for (std::size_t i = 0; i < classes_; ++i) sum += counts_[i * classes_ + i];
    return sum;
}

nlohmann::json ConfusionMatrix::to_json() const {
    auto rows = nlohmann::json::array();
    for (std::size_t t = 0; t < classes_; ++t) {
        rows.push_back(std::vector<std::uint64_t>(counts_.begin() + static_cast<std::ptrdiff_t>(t * classes_),
                                                  counts_.begin() + static_cast<std::ptrdiff_t>((t + 1) * classes_)));
    }
    return rows;
}

ClassScores f1_per_class(const ConfusionMatrix &matrix) {
    const std::uint64_t total = matrix.total();
    if (total == 0) throw ArgumentError("confusion matrix is empty");
    const std::size_t n = matrix.classes();
    ClassScores s;
    s.precision.assign(n, 0.0);
    s.recall.assign(n, 0.0);
    s.f1.assign(n, 0.0);
    s.support.assign(n, 0);
    for (std::size_t c = 0; c < n; ++c) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t k = 0; k < n; ++k) {
            row += matrix.at(c, k);
            col += matrix.at(k, c);
        }
        const auto tp = static_cast<double>(matrix.at(c, c));
        s.support[c] = row;
        s.precision[c] = col == 0 ? 0.0 : tp / static_cast<double>(col);
        s.recall[c] = row == 0 ? 0.0 : tp / static_cast<double>(row);
        const double denom = s.precision[c] + s.recall[c];
        s.f1[c] = denom == 0.0 ? 0.0 : 2.0 * s.precision[c] * s.recall[c] / denom;
    }
    s.accuracy = static_cast<double>(matrix.trace()) / static_cast<double>(total);
    double sum = 0.0;
    for (const double f : s.f1) sum += f;
    s.macro_f1 = sum / static_cast<double>(n);
    return s;
}

AttributionScores attribution_scores(std::span<const Prediction> predictions, std::span<const Source> truth) {
    if (predictions.size() != truth.size()) throw ArgumentError("predictions and truth differ in length");
    AttributionScores out;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (!predictions[i].source_marginals) throw StateError("prediction lacks source marginals");
        out.matrix.add(static_cast<std::size_t>(truth[i]), argmax(*predictions[i].source_marginals));
    }
    out.scores = f1_per_class(out.matrix);
    return out;
}

void Evaluator::add(const Prediction &prediction, ClassIndex truth) {
    if (!prediction.style_marginals || !prediction.source_marginals) throw StateError("prediction lacks marginals");
    const std::size_t top = argmax(prediction.probs);
    const auto [truth_source, truth_style] = parts_of(truth);
    classes_.add(truth.index(), top);
    styles_.add(static_cast<std::size_t>(truth_style), argmax(*prediction.style_marginals));
    const auto top_source = parts_of(ClassIndex(static_cast<int>(top))).first;
    if (static_cast<std::size_t>(top_source) != argmax(*prediction.source_marginals)) ++discrepant_;
    predictions_.push_back(prediction);
    sources_.push_back(truth_source);
}

void Evaluator::merge(const Evaluator &other) {
    classes_.merge(other.classes_);
    styles_.merge(other.styles_);
    predictions_.insert(predictions_.end(), other.predictions_.begin(), other.predictions_.end());
    sources_.insert(sources_.end(), other.sources_.begin(), other.sources_.end());
    discrepant_ += other.discrepant_;
}

EvaluationReport Evaluator::report() const {
    if (predictions_.empty()) throw StateError("no predictions to report");
    EvaluationReport r;
    r.classes = classes_;
    r.class_scores = f1_per_class(classes_);
    r.attribution = attribution_scores(predictions_, sources_);
    r.styles = styles_;
    r.style_scores = f1_per_class(styles_);
    r.discrepant = discrepant_;
    r.samples = predictions_.size();
    return r;
}

nlohmann::json EvaluationReport::to_json() const {
    const auto scores_json = [](const ClassScores &s, const auto &label) {
        auto rows = nlohmann::json::array();
        for (std::size_t c = 0; c < s.f1.size(); ++c) {
            rows.push_back({{"label", label(c)},
                            {"precision", s.precision[c]},
                            {"recall", s.recall[c]},
                            {"f1", s.f1[c]},
                            {"support", s.support[c]}});
        }
        return nlohmann::json{{"per_class", rows}, {"accuracy", s.accuracy}, {"macro_f1", s.macro_f1}};
    };
    return {{"samples", samples},
            {"discrepant", discrepant},
            {"classes",
             scores_json(class_scores, [](std::size_t c) { return class_label(ClassIndex(static_cast<int>(c))); })},
            {"attribution", scores_json(attribution.scores,
                                        [](std::size_t c) { return std::string(name(kAllSources[c])); })},
            {"styles", scores_json(style_scores, [](std::size_t c) { return std::string(name(kAllStyles[c])); })},
            {"class_confusion", classes.to_json()},
            {"attribution_confusion", attribution.matrix.to_json()},
            {"style_confusion", styles.to_json()}};
}

std::string EvaluationReport::to_text() const {
    std::string out;
    const auto table = [&](const std::string &title, const ClassScores &s, const auto &label) {
        out += fmt::format("{}\n{:<42} {:>9} {:>9} {:>9} {:>8}\n", title, "class", "precision", "recall", "f1",
                           "support");
        for (std::size_t c = 0; c < s.f1.size(); ++c) {
            out += fmt::format("{:<42} {:>9.4f} {:>9.4f} {:>9.4f} {:>8}\n", label(c), s.precision[c], s.recall[c],
                               s.f1[c], s.support[c]);
        }
        out += fmt::format("{:<42} {:>9.4f}   (macro f1 {:.4f})\n\n", "overall accuracy", s.accuracy, s.macro_f1);
    };
    table("Classification", class_scores, [](std::size_t c) { return class_label(ClassIndex(static_cast<int>(c))); });
    table("Attribution", attribution.scores, [](std::size_t c) { return std::string(name(kAllSources[c])); });
    table("Styles", style_scores, [](std::size_t c) { return std::string(name(kAllStyles[c])); });
    out += fmt::format("samples {}, top-class/marginal source disagreements {}\n", samples, discrepant);
    return out;
}

EvaluationReport evaluate(const Model &model, const DatasetManifest &manifest, Split split, std::size_t threads) {
    const auto records = manifest.split(split);
    if (records.empty()) throw DataError(fmt::format("{} split is empty", name(split)));
    std::vector<Prediction> predictions(records.size());
    const std::size_t workers = std::max<std::size_t>(
        1, std::min(threads == 0 ? std::thread::hardware_concurrency() : threads, records.size()));
    std::vector<std::exception_ptr> errors(workers);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < records.size(); i += workers) {
                        const auto image = read_image(manifest.root / records[i]->path);
                        predictions[i] = model.forward(preprocess(image, model.config().preprocess));
                    }
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
    Evaluator evaluator;
    for (std::size_t i = 0; i < records.size(); ++i) evaluator.add(predictions[i], records[i]->class_index());
    return evaluator.report();
}

std::string ablation_table(const std::vector<std::pair<std::string, EvaluationReport>> &runs) {
    std::string out = fmt::format("{:<28} {:>10} {:>10} {:>12} {:>10}\n", "run", "accuracy", "macro f1",
                                  "attribution", "style");
    for (const auto &[label, r] : runs) {
        out += fmt::format("{:<28} {:>10.4f} {:>10.4f} {:>12.4f} {:>10.4f}\n", label, r.class_scores.accuracy,
                           r.class_scores.macro_f1, r.attribution.scores.accuracy, r.style_scores.accuracy);
    }
    return out;
}

}  // namespace artbrain
