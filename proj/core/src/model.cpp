#include "artbrain/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "artbrain/error.hpp"

namespace artbrain {

namespace {

template <typename T>
void require_finite(std::span<const T> values, const char *layer) {
    for (const T v : values) {
        if (!std::isfinite(v)) throw NumericError(layer, "non-finite activation");
    }
}

template <typename T>
Block<T> spread_pooled_gradient(std::span<const T> dpooled, std::size_t height, std::size_t width) {
    Block<T> out(dpooled.size(), height, width);
    const T inv = T{1} / static_cast<T>(height * width);
    for (std::size_t c = 0; c < dpooled.size(); ++c) {
        auto ch = out.channel(c);
        std::fill(ch.begin(), ch.end(), dpooled[c] * inv);
    }
    return out;
}

template <typename T>
void fill_uniform(std::vector<T> &values, double bound, std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto &v : values) v = static_cast<T>(dist(rng));
}

}  // namespace

void ModelConfig::validate() const {
    backbone.validate();
    preprocess.validate();
    if (preprocess.target_side != backbone.input_side) {
        throw ConfigError(fmt::format("preprocess side {} differs from backbone input side {}", preprocess.target_side,
                                      backbone.input_side));
    }
    if (hidden == 0) throw ConfigError("classifier hidden width must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (head == HeadKind::attention) {
        if (reduction == 0 || feature_channels() % reduction != 0) {
            throw ConfigError(fmt::format("reduction {} does not divide {} concatenated channels", reduction,
                                          feature_channels()));
        }
    }
}

std::size_t ModelConfig::align_side() const noexcept { return backbone.stage_side(backbone.tap_stages[2]); }

std::size_t ModelConfig::feature_channels() const noexcept {
    const auto &ch = backbone.stage_channels;
    const auto &taps = backbone.tap_stages;
    if (head == HeadKind::plain) return ch[taps[2]];
    return ch[taps[0]] + ch[taps[1]] + ch[taps[2]];
}

nlohmann::json ModelConfig::to_json() const {
    return {{"backbone", backbone.to_json()},
            {"head", head == HeadKind::attention ? "attention" : "plain"},
            {"reduction", reduction},
            {"hidden", hidden},
            {"dropout", dropout},
            {"preprocess", preprocess.to_json()}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json &j) {
    try {
        ModelConfig c;
        c.backbone = BackboneConfig::from_json(j.at("backbone"));
        const auto head = j.value("head", std::string("attention"));
        if (head == "attention") {
            c.head = HeadKind::attention;
        } else if (head == "plain") {
            c.head = HeadKind::plain;
        } else {
            throw ConfigError("unknown head kind '" + head + "'");
        }
        c.reduction = j.value("reduction", c.reduction);
        c.hidden = j.value("hidden", c.hidden);
        c.dropout = j.value("dropout", c.dropout);
        if (j.contains("preprocess")) {
            c.preprocess = PreprocessConfig::from_json(j.at("preprocess"));
        } else {
            c.preprocess.target_side = c.backbone.input_side;
        }
        c.validate();
        return c;
    } catch (const nlohmann::json::exception &e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
}

ModelConfig ModelConfig::tiny() {
    ModelConfig c;
    c.backbone = BackboneConfig::tiny();
    c.preprocess.target_side = c.backbone.input_side;
    return c;
}

Prediction Prediction::from_probs(std::span<const double> probs, std::size_t k) {
    if (probs.size() != kNumClasses) throw ArgumentError("a prediction needs 30 probabilities");
    Prediction p;
    std::copy(probs.begin(), probs.end(), p.probs.begin());
    p.style_marginals = artbrain::style_marginals(probs);
    p.source_marginals = artbrain::source_marginals(probs);
    p.top = top_k(p, k);
    return p;
}

nlohmann::json Prediction::to_json() const {
    auto entries = nlohmann::json::array();
    for (const auto &e : top) {
        const auto [source, style] = parts_of(e.class_index);
        entries.push_back({{"class_index", e.class_index.value()},
                           {"label", class_label(e.class_index)},
                           {"source", std::string(name(source))},
                           {"style", std::string(name(style))},
                           {"probability", e.probability}});
    }
    nlohmann::json j = {{"top", entries}, {"probs", probs}};
    if (style_marginals) {
        auto m = nlohmann::json::object();
        for (std::size_t i = 0; i < kNumStyles; ++i) m[std::string(slug(kAllStyles[i]))] = (*style_marginals)[i];
        j["style_marginals"] = m;
    }
    if (source_marginals) {
        auto m = nlohmann::json::object();
        for (std::size_t i = 0; i < kNumSources; ++i) m[std::string(slug(kAllSources[i]))] = (*source_marginals)[i];
        j["source_marginals"] = m;
    }
    return j;
}

std::vector<TopEntry> top_k(const Prediction &prediction, std::size_t k) {
    if (k < 1 || k > kNumClasses) throw ArgumentError("k must lie in [1, 30]");
    std::array<int, kNumClasses> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return prediction.probs[a] > prediction.probs[b]; });
    std::vector<TopEntry> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        out.push_back({ClassIndex(order[i]), prediction.probs[order[i]]});
    }
    return out;
}

template <typename T>
std::array<T, kNumClasses> softmax(std::span<const T> logits) {
    if (logits.size() != kNumClasses) throw ArgumentError("softmax expects 30 logits");
    const T shift = *std::max_element(logits.begin(), logits.end());
    std::array<T, kNumClasses> out{};
    T sum{0};
    for (std::size_t i = 0; i < kNumClasses; ++i) {
        out[i] = std::exp(logits[i] - shift);
        sum += out[i];
    }
    for (auto &v : out) v /= sum;
    return out;
}

template <typename T>
T cross_entropy(std::span<const T> logits, ClassIndex label) {
    if (logits.size() != kNumClasses) throw ArgumentError("cross entropy expects 30 logits");
    const T shift = *std::max_element(logits.begin(), logits.end());
    T sum{0};
    for (const T v : logits) sum += std::exp(v - shift);
    return std::log(sum) + shift - logits[label.index()];
}

template <typename T>
Network<T>::Network(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
    config_.validate();
    register_parameters();
    std::mt19937_64 rng(init_seed);
    init_backbone(config_.backbone, backbone_layout_, params_, rng);
    if (config_.head == HeadKind::attention) {
        init_attention<T>(config_.feature_channels(), config_.reduction, params_[head_layout_.att_w1].value,
                          params_[head_layout_.att_w2].value, rng);
    }
    const double b1 = 1.0 / std::sqrt(static_cast<double>(config_.feature_channels()));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(config_.hidden));
    fill_uniform(params_[head_layout_.fc1_w].value, b1, rng);
    fill_uniform(params_[head_layout_.fc1_b].value, b1, rng);
    fill_uniform(params_[head_layout_.fc2_w].value, b2, rng);
    fill_uniform(params_[head_layout_.fc2_b].value, b2, rng);
    loaded_ = true;
}

template <typename T>
void Network<T>::register_parameters() {
    backbone_layout_ = register_backbone(config_.backbone, params_);
    const std::size_t c = config_.feature_channels();
    if (config_.head == HeadKind::attention) {
        const std::size_t m = c / config_.reduction;
        head_layout_.att_w1 = params_.add("attention.w1", {m, c}, ParamGroup::attention);
        head_layout_.att_w2 = params_.add("attention.w2", {c, m}, ParamGroup::attention);
    }
    head_layout_.fc1_w = params_.add("classifier.fc1.weight", {config_.hidden, c}, ParamGroup::classifier);
    head_layout_.fc1_b = params_.add("classifier.fc1.bias", {config_.hidden}, ParamGroup::classifier);
    head_layout_.fc2_w = params_.add("classifier.fc2.weight", {kNumClasses, config_.hidden}, ParamGroup::classifier);
    head_layout_.fc2_b = params_.add("classifier.fc2.bias", {kNumClasses}, ParamGroup::classifier);
}

template <typename T>
Network<T> Network<T>::from_archive(const WeightArchive &archive) {
    const auto &meta = archive.metadata();
    if (!meta.contains("model")) throw ConfigError("weight archive has no model configuration");
    if (meta.contains("class_mapping_version") &&
        meta.at("class_mapping_version").get<std::string>() != kMappingVersion) {
        throw ConfigError("weight archive uses class mapping '" + meta.at("class_mapping_version").get<std::string>() +
                          "'");
    }
    Network<T> net;
    net.config_ = ModelConfig::from_json(meta.at("model"));
    net.register_parameters();
    net.params_.import_from(archive);
    net.loaded_ = true;
    return net;
}

template <typename T>
WeightArchive Network<T>::to_archive() const {
    require_loaded();
    WeightArchive archive(config_.backbone.variant_name);
    archive.metadata()["model"] = config_.to_json();
    archive.metadata()["class_mapping_version"] = std::string(kMappingVersion);
    params_.export_to(archive);
    return archive;
}

template <typename T>
std::string Network<T>::version() const {
    require_loaded();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t g = 0; g < kNumParamGroups; ++g) {
        h ^= params_.checksum(static_cast<ParamGroup>(g));
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{}-{:012x}", config_.backbone.variant_name, h & 0xffffffffffffULL);
}

template <typename T>
void Network<T>::require_loaded() const {
    if (!loaded_) throw StateError("model has no weights loaded");
}

template <typename T>
AttentionParams<T> Network<T>::attention_params() const {
    if (config_.head != HeadKind::attention) throw StateError("plain head has no attention parameters");
    AttentionParams<T> p;
    p.channels = config_.feature_channels();
    p.reduction = config_.reduction;
    p.w1 = params_[head_layout_.att_w1].value;
    p.w2 = params_[head_layout_.att_w2].value;
    return p;
}

template <typename T>
std::array<T, kNumClasses> Network<T>::classify(std::span<const T> pooled, Mode mode, std::mt19937_64 *rng,
                                                ForwardTrace<T> *trace) const {
    const std::size_t c = pooled.size();
    const std::size_t hidden = config_.hidden;
    const auto &w1 = params_[head_layout_.fc1_w].value;
    const auto &b1 = params_[head_layout_.fc1_b].value;
    const auto &w2 = params_[head_layout_.fc2_w].value;
    const auto &b2 = params_[head_layout_.fc2_b].value;

    std::vector<T> pre(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
        T acc = b1[j];
        const T *row = &w1[j * c];
        for (std::size_t i = 0; i < c; ++i) acc += row[i] * pooled[i];
        pre[j] = acc;
    }
    std::vector<T> act(hidden);
    for (std::size_t j = 0; j < hidden; ++j) act[j] = std::max(pre[j], T{0});

    std::vector<T> scale;
    if (mode == Mode::train && config_.dropout > 0.0) {
        if (rng == nullptr) throw ArgumentError("train-mode dropout needs a random generator");
        std::bernoulli_distribution keep(1.0 - config_.dropout);
        const T kept = static_cast<T>(1.0 / (1.0 - config_.dropout));
        scale.resize(hidden);
        for (std::size_t j = 0; j < hidden; ++j) {
            scale[j] = keep(*rng) ? kept : T{0};
            act[j] *= scale[j];
        }
    }

    std::array<T, kNumClasses> logits{};
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        T acc = b2[k];
        const T *row = &w2[k * hidden];
        for (std::size_t j = 0; j < hidden; ++j) acc += row[j] * act[j];
        logits[k] = acc;
    }
    require_finite<T>(logits, "classifier");
    if (trace != nullptr) {
        trace->pooled.assign(pooled.begin(), pooled.end());
        trace->fc1_out = std::move(pre);
        trace->dropout_scale = std::move(scale);
        trace->hidden_out = std::move(act);
        trace->logits = logits;
    }
    return logits;
}

template <typename T>
std::vector<T> Network<T>::classifier_backward(const ForwardTrace<T> &trace, std::span<const T> dlogits,
                                               Gradients<T> &grads, bool want_params) const {
    const std::size_t c = trace.pooled.size();
    const std::size_t hidden = config_.hidden;
    const auto &w1 = params_[head_layout_.fc1_w].value;
    const auto &w2 = params_[head_layout_.fc2_w].value;

    std::vector<T> dh(hidden, T{0});
    for (std::size_t k = 0; k < kNumClasses; ++k) {
        const T g = dlogits[k];
        const T *row = &w2[k * hidden];
        for (std::size_t j = 0; j < hidden; ++j) dh[j] += row[j] * g;
        if (want_params) {
            T *grow = &grads[head_layout_.fc2_w][k * hidden];
            for (std::size_t j = 0; j < hidden; ++j) grow[j] += g * trace.hidden_out[j];
            grads[head_layout_.fc2_b][k] += g;
        }
    }
    for (std::size_t j = 0; j < hidden; ++j) {
        if (!trace.dropout_scale.empty()) dh[j] *= trace.dropout_scale[j];
        if (!(trace.fc1_out[j] > T{0})) dh[j] = T{0};
    }
    std::vector<T> dpooled(c, T{0});
    for (std::size_t j = 0; j < hidden; ++j) {
        const T g = dh[j];
        if (g == T{0}) continue;
        const T *row = &w1[j * c];
        for (std::size_t i = 0; i < c; ++i) dpooled[i] += row[i] * g;
        if (want_params) {
            T *grow = &grads[head_layout_.fc1_w][j * c];
            for (std::size_t i = 0; i < c; ++i) grow[i] += g * trace.pooled[i];
            grads[head_layout_.fc1_b][j] += g;
        }
    }
    return dpooled;
}

template <typename T>
std::array<T, kNumClasses> Network<T>::logits(const Block<T> &image, Mode mode, std::mt19937_64 *rng,
                                              ForwardTrace<T> *trace) const {
    require_loaded();
    FeatureTaps<T> taps = forward_taps(config_.backbone, backbone_layout_, params_, image,
                                       trace != nullptr ? &trace->backbone : nullptr);
    Block<T> features;
    if (config_.head == HeadKind::attention) {
        features = attention_forward(taps, config_.align_side(), attention_params(),
                                     trace != nullptr ? &trace->attention : nullptr);
        require_finite<T>(features.data, "attention");
    } else {
        features = taps.high;
    }
    const std::vector<T> pooled = global_average_pool(features);
    if (trace != nullptr) {
        trace->taps = std::move(taps);
        trace->features = std::move(features);
    }
    return classify(pooled, mode, rng, trace);
}

template <typename T>
Prediction Network<T>::forward(const ImageTensor &image, Mode mode, std::mt19937_64 *rng) const {
    if (!image.provenance.normalized) throw ArgumentError("image tensor has not been preprocessed");
    std::array<T, kNumClasses> raw;
    if constexpr (std::is_same_v<T, float>) {
        raw = logits(image.data, mode, rng);
    } else {
        raw = logits(image.data.template cast<T>(), mode, rng);
    }
    std::array<double, kNumClasses> wide{};
    std::transform(raw.begin(), raw.end(), wide.begin(), [](T v) { return static_cast<double>(v); });
    const auto probs = softmax<double>(wide);
    return Prediction::from_probs(probs);
}

template <typename T>
T Network<T>::loss_and_gradient(const Block<T> &image, ClassIndex label, Mode mode, std::mt19937_64 *rng,
                                Gradients<T> &grads, const TrainableMask &trainable, T scale) const {
    ForwardTrace<T> trace;
    const auto raw = logits(image, mode, rng, &trace);
    const T loss = cross_entropy<T>(raw, label);
    if (!trainable.any()) return loss;
    if (grads.size() != params_.size()) throw ArgumentError("gradient buffers do not match the parameter set");

    auto dlogits = softmax<T>(raw);
    dlogits[label.index()] -= T{1};
    for (auto &v : dlogits) v *= scale;

    const bool below_classifier = trainable.attention || trainable.low || trainable.mid || trainable.high;
    const auto dpooled = classifier_backward(trace, dlogits, grads, trainable.classifier);
    if (!below_classifier) return loss;

    const Block<T> dfeatures = spread_pooled_gradient<T>(dpooled, trace.features.height, trace.features.width);
    FeatureTaps<T> grad_taps;
    if (config_.head == HeadKind::attention) {
        const auto att = attention_params();
        auto ag = attention_backward(trace.taps, att, trace.attention, dfeatures);
        if (trainable.attention) {
            auto &g1 = grads[head_layout_.att_w1];
            auto &g2 = grads[head_layout_.att_w2];
            for (std::size_t i = 0; i < g1.size(); ++i) g1[i] += ag.w1[i];
            for (std::size_t i = 0; i < g2.size(); ++i) g2[i] += ag.w2[i];
        }
        grad_taps = std::move(ag.taps);
    } else {
        grad_taps.high = dfeatures;
    }
    if (trainable.low || trainable.mid || trainable.high) {
        backward_taps(config_.backbone, backbone_layout_, params_, trace.backbone, grad_taps, grads, trainable);
    }
    return loss;
}

template <typename T>
Block<T> Network<T>::feature_block(const Block<T> &image) const {
    require_loaded();
    FeatureTaps<T> taps = forward_taps(config_.backbone, backbone_layout_, params_, image);
    if (config_.head == HeadKind::plain) return std::move(taps.high);
    return attention_forward(taps, config_.align_side(), attention_params());
}

template <typename T>
std::array<T, kNumClasses> Network<T>::logits_from_features(const Block<T> &features) const {
    require_loaded();
    if (features.channels != config_.feature_channels()) throw ArgumentError("feature block has the wrong width");
    const auto pooled = global_average_pool(features);
    return classify(pooled, Mode::eval, nullptr, nullptr);
}

template <typename T>
Block<T> Network<T>::class_score_gradient(const Block<T> &features, ClassIndex class_index) const {
    require_loaded();
    if (features.channels != config_.feature_channels()) throw ArgumentError("feature block has the wrong width");
    ForwardTrace<T> trace;
    const auto pooled = global_average_pool(features);
    classify(pooled, Mode::eval, nullptr, &trace);
    std::array<T, kNumClasses> dlogits{};
    dlogits[class_index.index()] = T{1};
    Gradients<T> unused;
    const auto dpooled = classifier_backward(trace, dlogits, unused, false);
    return spread_pooled_gradient<T>(dpooled, features.height, features.width);
}

template std::array<float, kNumClasses> softmax(std::span<const float>);
template std::array<double, kNumClasses> softmax(std::span<const double>);
template float cross_entropy(std::span<const float>, ClassIndex);
template double cross_entropy(std::span<const double>, ClassIndex);

template class Network<float>;
template class Network<double>;

}  // namespace artbrain
