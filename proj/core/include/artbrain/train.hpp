#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "artbrain/labels.hpp"
#include "artbrain/model.hpp"
#include "artbrain/params.hpp"

namespace artbrain {

struct DatasetManifest;

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moments live alongside the parameters they update.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(const ParameterSet<T> &params, AdamConfig config);

    /// Updates every parameter whose group is trainable; frozen ones are left untouched.
    void step(ParameterSet<T> &params, const Gradients<T> &grads, const TrainableMask &trainable, double lr);

    std::size_t steps() const noexcept { return t_; }

private:
    AdamConfig config_;
    Gradients<T> m_;
    Gradients<T> v_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t max_epochs = 18;
    double initial_lr = 1e-3;
    double lr_factor = 0.1;
    std::size_t patience_epochs = 2;
    std::uint64_t seed = 0;
    /// Frozen groups. The default freezes the low and mid feature blocks.
    TrainableMask trainable{false, false, true, true, true};
    AdamConfig adam;
    /// Validate on the test split. Off by default; when off, a stratified slice of the
    /// training split is held out instead.
    bool test_as_validation = false;
    double holdout_fraction = 0.1;
    /// When set, every epoch writes ckpt-epoch{N}.acnx here.
    std::optional<std::filesystem::path> checkpoint_dir;
    std::size_t threads = 0;  // 0 = hardware concurrency

    void validate() const;
    nlohmann::json to_json() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double val_source_accuracy = 0.0;
    double val_style_accuracy = 0.0;
    double lr = 0.0;
    std::optional<std::string> checkpoint_ref;

    nlohmann::json to_json() const;
};

/// One labelled, preprocessed sample.
struct TrainingSample {
    Block<float> image;
    ClassIndex label{0};
};

struct StepResult {
    double loss = 0.0;
};

/// Cross-entropy over the batch mean, Adam on trainable groups only.
/// Throws NumericError on a non-finite loss.
StepResult train_step(Model &model, Adam<float> &optimizer, std::span<const TrainingSample> batch,
                      const TrainableMask &trainable, double lr, std::mt19937_64 &rng, std::size_t threads = 1);

/// Mean-reduced batch loss and gradient without updating anything (dropout off). `grads` is overwritten.
double batch_loss_and_gradient(const Model &model, std::span<const TrainingSample> batch,
                               const TrainableMask &trainable, Gradients<float> &grads, std::size_t threads = 1);

/// Plateau schedule: multiply by lr_factor once the last `patience` epochs trained at the
/// current rate each raised val_loss over their predecessor. Epochs trained at an
/// earlier rate never count, so the streak restarts after every reduction.
double lr_schedule(std::span<const EpochRecord> history, double current_lr, const TrainConfig &config);

/// Epoch (1-based) with minimal val_loss; the earliest wins ties. Throws StateError when empty.
std::size_t select_checkpoint(std::span<const EpochRecord> history);

struct FitResult {
    WeightArchive best;
    std::vector<EpochRecord> history;
    std::size_t selected_epoch = 0;
};

struct FitData {
    std::vector<TrainingSample> train;
    std::vector<TrainingSample> validation;
};

/// Loads and preprocesses the manifest's images, splitting off validation per the config.
/// Throws DataError when a split is empty.
FitData prepare_fit_data(const DatasetManifest &manifest, const ModelConfig &model_config,
                         const TrainConfig &config);

using EpochCallback = std::function<void(const EpochRecord &)>;

/// Full training run: fresh seeded model, max_epochs epochs with per-epoch validation,
/// plateau schedule and best-validation-loss checkpoint selection. Reproducible per seed.
FitResult fit(const FitData &data, const ModelConfig &model_config, const TrainConfig &config,
              const EpochCallback &on_epoch = {});
FitResult fit(const DatasetManifest &manifest, const ModelConfig &model_config, const TrainConfig &config,
              const EpochCallback &on_epoch = {});

struct ValidationMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
    double source_accuracy = 0.0;
    double style_accuracy = 0.0;
};

ValidationMetrics validate_model(const Model &model, std::span<const TrainingSample> samples, std::size_t threads = 1);

}  // namespace artbrain
