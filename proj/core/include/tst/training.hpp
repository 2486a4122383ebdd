#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tst/data.hpp"
#include "tst/model.hpp"

namespace tst {

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    std::size_t epochs = 50;
    double learning_rate = 1e-3;
    std::size_t batch_size = 16;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::optional<double> grad_clip;  // cap on the global L2 norm
    std::uint64_t seed = 42;
    bool shuffle_each_epoch = true;

    void validate() const;  // throws ConfigError
};

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
};

struct EpochMetrics {
    std::size_t epoch = 0;  // 1-based
    Metrics train;
    std::optional<Metrics> validation;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochMetrics> epochs;
    std::size_t optimizer_steps = 0;

    // Header `epoch,train_mse,train_mae,val_mse,val_mae,seconds`. Values use 17
    // significant digits. The seconds field is blank unless include_timing is set.
    std::string to_csv(bool include_timing = false) const;
};

double mse(std::span<const double> predictions, std::span<const double> targets);
double mae(std::span<const double> predictions, std::span<const double> targets);

// theta <- theta - lr * g
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr);

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::uint64_t step = 0;

    static AdamState zeros_like(std::span<Tensor* const> params);
};

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam; increments state.step before updating.
void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config);

double global_norm(std::span<const Tensor> grads);

// Rescales grads so their global L2 norm is at most cap. Returns the norm before clipping.
double clip_global_norm(std::span<Tensor> grads, double cap);

// Mean squared error over the windows, differentiable w.r.t. `params`.
ad::Var batch_loss(ad::Tape& tape, const ParamVars& params, const ModelConfig& config,
                   std::span<const Window* const> batch);

struct TrainResult {
    ModelParams params;
    TrainReport report;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Seeded shuffle, mini-batch mean-squared-error steps, optional global-norm clipping.
// Per-epoch metrics are measured after the epoch's last step. Throws NumericError with
// epoch/batch context when the loss goes non-finite.
TrainResult train(const TimeSeriesDataset& train_set, const TimeSeriesDataset* validation,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch = {});

TrainResult train(ModelParams initial, const TimeSeriesDataset& train_set,
                  const TimeSeriesDataset* validation, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch = {});

std::vector<double> predict_all(const ModelParams& params, const ModelConfig& config,
                                const TimeSeriesDataset& dataset);

Metrics evaluate(const ModelParams& params, const ModelConfig& config,
                 const TimeSeriesDataset& dataset);

// Predict the last observed target value.
Metrics persistence_baseline(const TimeSeriesDataset& dataset);

// Gradient check of the mean-squared-error loss over `n_windows` random windows with
// random targets, covering every parameter of a freshly initialized model.
ad::GradCheckReport check_model_gradients(const ModelConfig& config, double step, double tolerance,
                                          std::size_t n_windows = 2);

}  // namespace tst
