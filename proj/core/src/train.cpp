#include "artbrain/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include <fmt/format.h>

#include "artbrain/data.hpp"
#include "artbrain/error.hpp"
#include "artbrain/image_io.hpp"

namespace artbrain {

namespace {

std::size_t resolve_threads(std::size_t requested) {
    if (requested != 0) return requested;
    return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) over up to `threads` workers, strided so the work split is fixed.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn &&fn) {
    threads = std::min(resolve_threads(threads), n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto &e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

void add_gradients(Gradients<float> &into, const Gradients<float> &from) {
    for (std::size_t p = 0; p < into.size(); ++p) {
        auto &dst = into[p];
        const auto &src = from[p];
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
}

void clear_gradients(Gradients<float> &grads) {
    for (auto &g : grads) std::fill(g.begin(), g.end(), 0.0F);
}

// Per-sample gradients are computed independently and summed in sample order, so the
// result does not depend on the thread count.
double accumulate_batch(const Model &model, std::span<const TrainingSample> batch, const TrainableMask &trainable,
                        Mode mode, std::span<const std::uint64_t> sample_seeds, Gradients<float> &grads,
                        std::size_t threads) {
    const std::size_t n = batch.size();
    const float scale = 1.0F / static_cast<float>(n);
    const std::size_t workers = std::min(resolve_threads(threads), n);
    std::vector<Gradients<float>> scratch(workers, model.params().zero_gradients());
    std::vector<float> losses(n, 0.0F);
    double total = 0.0;
    for (std::size_t start = 0; start < n; start += workers) {
        const std::size_t count = std::min(workers, n - start);
        parallel_for(count, workers, [&](std::size_t k) {
            const std::size_t i = start + k;
            clear_gradients(scratch[k]);
            std::mt19937_64 rng(sample_seeds.empty() ? 0 : sample_seeds[i]);
            losses[i] = model.loss_and_gradient(batch[i].image, batch[i].label, mode, &rng, scratch[k], trainable,
                                                scale);
        });
        for (std::size_t k = 0; k < count; ++k) {
            add_gradients(grads, scratch[k]);
            total += losses[start + k];
        }
    }
    const double loss = total / static_cast<double>(n);
    if (!std::isfinite(loss)) throw NumericError("loss", "non-finite training loss");
    return loss;
}

}  // namespace

template <typename T>
Adam<T>::Adam(const ParameterSet<T> &params, AdamConfig config)
    : config_(config), m_(params.zero_gradients()), v_(params.zero_gradients()) {}

template <typename T>
void Adam<T>::step(ParameterSet<T> &params, const Gradients<T> &grads, const TrainableMask &trainable, double lr) {
    if (m_.size() != params.size()) {
        m_ = params.zero_gradients();
        v_ = params.zero_gradients();
    }
    if (grads.size() != params.size()) throw ArgumentError("gradient buffers do not match the parameter set");
    ++t_;
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!trainable[params[p].group]) continue;
        auto &value = params[p].value;
        auto &m = m_[p];
        auto &v = v_[p];
        const auto &g = grads[p];
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
            const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + config_.epsilon);
            value[i] = static_cast<T>(static_cast<double>(value[i]) - update);
        }
    }
}

template class Adam<float>;
template class Adam<double>;

void TrainConfig::validate() const {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    if (max_epochs == 0) throw ConfigError("max_epochs must be at least 1");
    if (!(initial_lr > 0.0)) throw ConfigError("initial_lr must be positive");
    if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigError("lr_factor must lie in (0, 1)");
    if (patience_epochs == 0) throw ConfigError("patience must be at least 1");
    if (!test_as_validation && !(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
        throw ConfigError("holdout_fraction must lie in (0, 1)");
    }
}

nlohmann::json TrainConfig::to_json() const {
    return {{"batch_size", batch_size},
            {"max_epochs", max_epochs},
            {"initial_lr", initial_lr},
            {"lr_factor", lr_factor},
            {"patience_epochs", patience_epochs},
            {"seed", seed},
            {"trainable",
             {{"low", trainable.low},
              {"mid", trainable.mid},
              {"high", trainable.high},
              {"attention", trainable.attention},
              {"classifier", trainable.classifier}}},
            {"adam", {{"beta1", adam.beta1}, {"beta2", adam.beta2}, {"epsilon", adam.epsilon}}},
            {"test_as_validation", test_as_validation},
            {"holdout_fraction", holdout_fraction}};
}

nlohmann::json EpochRecord::to_json() const {
    nlohmann::json j = {{"epoch", epoch},
                        {"train_loss", train_loss},
                        {"val_loss", val_loss},
                        {"val_accuracy", val_accuracy},
                        {"val_source_accuracy", val_source_accuracy},
                        {"val_style_accuracy", val_style_accuracy},
                        {"lr", lr}};
    j["checkpoint_ref"] = checkpoint_ref ? nlohmann::json(*checkpoint_ref) : nlohmann::json(nullptr);
    return j;
}

double batch_loss_and_gradient(const Model &model, std::span<const TrainingSample> batch,
                               const TrainableMask &trainable, Gradients<float> &grads, std::size_t threads) {
    if (batch.empty()) throw ArgumentError("empty batch");
    if (grads.size() != model.params().size()) grads = model.params().zero_gradients();
    else clear_gradients(grads);
    return accumulate_batch(model, batch, trainable, Mode::eval, {}, grads, threads);
}

StepResult train_step(Model &model, Adam<float> &optimizer, std::span<const TrainingSample> batch,
                      const TrainableMask &trainable, double lr, std::mt19937_64 &rng, std::size_t threads) {
    if (batch.empty()) throw ArgumentError("empty batch");
    std::vector<std::uint64_t> seeds(batch.size());
    for (auto &s : seeds) s = rng();
    Gradients<float> grads = model.params().zero_gradients();
    StepResult result;
    result.loss = accumulate_batch(model, batch, trainable, Mode::train, seeds, grads, threads);
    if (trainable.any()) optimizer.step(model.params(), grads, trainable, lr);
    return result;
}

double lr_schedule(std::span<const EpochRecord> history, double current_lr, const TrainConfig &config) {
    std::size_t streak = 0;
    for (std::size_t i = history.size(); i-- > 1;) {
        if (history[i].lr != current_lr || !(history[i].val_loss > history[i - 1].val_loss)) break;
        ++streak;
    }
    return streak >= config.patience_epochs ? current_lr * config.lr_factor : current_lr;
}

std::size_t select_checkpoint(std::span<const EpochRecord> history) {
    if (history.empty()) throw StateError("no epochs recorded");
    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i) {
        if (history[i].val_loss < history[best].val_loss) best = i;
    }
    return history[best].epoch;
}

ValidationMetrics validate_model(const Model &model, std::span<const TrainingSample> samples, std::size_t threads) {
    if (samples.empty()) throw DataError("validation set is empty");
    struct Outcome {
        double loss;
        bool cls, source, style;
    };
    std::vector<Outcome> outcomes(samples.size());
    parallel_for(samples.size(), threads, [&](std::size_t i) {
        const auto logits = model.logits(samples[i].image);
        std::array<double, kNumClasses> wide{};
        std::copy(logits.begin(), logits.end(), wide.begin());
        const auto probs = softmax<double>(wide);
        const auto [src, sty] = parts_of(samples[i].label);
        outcomes[i] = {cross_entropy<double>(wide, samples[i].label), argmax(probs) == samples[i].label.index(),
                       argmax(source_marginals(probs)) == static_cast<std::size_t>(src),
                       argmax(style_marginals(probs)) == static_cast<std::size_t>(sty)};
    });
    ValidationMetrics m;
    for (const auto &o : outcomes) {
        m.loss += o.loss;
        m.accuracy += o.cls ? 1.0 : 0.0;
        m.source_accuracy += o.source ? 1.0 : 0.0;
        m.style_accuracy += o.style ? 1.0 : 0.0;
    }
    const auto n = static_cast<double>(samples.size());
    m.loss /= n;
    m.accuracy /= n;
    m.source_accuracy /= n;
    m.style_accuracy /= n;
    return m;
}

FitData prepare_fit_data(const DatasetManifest &manifest, const ModelConfig &model_config, const TrainConfig &config) {
    config.validate();
    const auto load = [&](const std::vector<const SampleRecord *> &records) {
        std::vector<TrainingSample> out(records.size());
        parallel_for(records.size(), config.threads, [&](std::size_t i) {
            const auto image = read_image(manifest.root / records[i]->path);
            out[i] = {preprocess(image, model_config.preprocess).data, records[i]->class_index()};
        });
        return out;
    };
    auto train_records = manifest.split(Split::train);
    std::vector<const SampleRecord *> val_records;
    if (config.test_as_validation) {
        val_records = manifest.split(Split::test);
    } else {
        // Stratified: every class gives up the same fraction of its training images.
        std::array<std::vector<const SampleRecord *>, kNumClasses> by_class;
        for (const auto *r : train_records) by_class[r->class_index().index()].push_back(r);
        std::mt19937_64 rng(config.seed ^ 0x5eedf00dULL);
        train_records.clear();
        for (auto &records : by_class) {
            std::shuffle(records.begin(), records.end(), rng);
            std::size_t held = static_cast<std::size_t>(
                std::lround(config.holdout_fraction * static_cast<double>(records.size())));
            if (held == 0 && records.size() >= 2) held = 1;
            val_records.insert(val_records.end(), records.begin(), records.begin() + static_cast<std::ptrdiff_t>(held));
            train_records.insert(train_records.end(), records.begin() + static_cast<std::ptrdiff_t>(held),
                                 records.end());
        }
    }
    if (train_records.empty()) throw DataError("training split is empty");
    if (val_records.empty()) throw DataError("validation split is empty");
    FitData data;
    data.train = load(train_records);
    data.validation = load(val_records);
    return data;
}

FitResult fit(const FitData &data, const ModelConfig &model_config, const TrainConfig &config,
              const EpochCallback &on_epoch) {
    config.validate();
    if (data.train.empty()) throw DataError("training split is empty");
    if (data.validation.empty()) throw DataError("validation split is empty");

    Model model(model_config, config.seed);
    Adam<float> optimizer(model.params(), config.adam);
    std::mt19937_64 order_rng(config.seed * 0x9e3779b97f4a7c15ULL + 1);
    std::mt19937_64 dropout_rng(config.seed * 0x9e3779b97f4a7c15ULL + 2);
    if (config.checkpoint_dir) std::filesystem::create_directories(*config.checkpoint_dir);

    std::vector<std::size_t> order(data.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<TrainingSample> batch;
    FitResult result;
    double lr = config.initial_lr;
    double best_loss = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(data.train[order[i]]);
            const auto step = train_step(model, optimizer, batch, config.trainable, lr, dropout_rng, config.threads);
            loss_sum += step.loss * static_cast<double>(batch.size());
        }
        const auto metrics = validate_model(model, data.validation, config.threads);

        EpochRecord record;
        record.epoch = epoch;
        record.train_loss = loss_sum / static_cast<double>(order.size());
        record.val_loss = metrics.loss;
        record.val_accuracy = metrics.accuracy;
        record.val_source_accuracy = metrics.source_accuracy;
        record.val_style_accuracy = metrics.style_accuracy;
        record.lr = lr;

        WeightArchive archive = model.to_archive();
        archive.metadata()["training"] = {{"epoch", epoch}, {"val_loss", metrics.loss}, {"config", config.to_json()}};
        if (config.checkpoint_dir) {
            const auto path = *config.checkpoint_dir / fmt::format("ckpt-epoch{}.acnx", epoch);
            archive.save(path);
            record.checkpoint_ref = path.string();
        }
        if (metrics.loss < best_loss) {
            best_loss = metrics.loss;
            result.best = std::move(archive);
        }
        result.history.push_back(record);
        if (on_epoch) on_epoch(record);
        lr = lr_schedule(result.history, lr, config);
    }
    result.selected_epoch = select_checkpoint(result.history);
    return result;
}

FitResult fit(const DatasetManifest &manifest, const ModelConfig &model_config, const TrainConfig &config,
              const EpochCallback &on_epoch) {
    return fit(prepare_fit_data(manifest, model_config, config), model_config, config, on_epoch);
}

}  // namespace artbrain
