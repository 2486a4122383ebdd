#include "tst/training.hpp"

#include <chrono>
#include <cstdio>
#include <cmath>
#include <numeric>

#include "tst/error.hpp"
#include "tst/rng.hpp"

namespace tst {

namespace {

void check_lengths(std::span<const double> p, std::span<const double> t) {
    if (p.size() != t.size()) {
        throw DimensionError("metric: " + std::to_string(p.size()) + " predictions vs " +
                             std::to_string(t.size()) + " targets");
    }
    if (p.empty()) {
        throw DimensionError("metric: no samples");
    }
}

void check_grads(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) {
        throw DimensionError("optimizer: " + std::to_string(params.size()) + " params vs " +
                             std::to_string(grads.size()) + " gradients");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->shape() != grads[i].shape()) {
            throw DimensionError("optimizer: param " + shape_string(params[i]->shape()) +
                                 " vs gradient " + shape_string(grads[i].shape()));
        }
    }
}

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void check_dims(const TimeSeriesDataset& ds, const ModelConfig& c, const char* what) {
    if (ds.window_len != c.window_len || ds.input_dim != c.input_dim) {
        throw DataError(std::string(what) + " windows are " + std::to_string(ds.window_len) + "x" +
                        std::to_string(ds.input_dim) + ", model expects " +
                        std::to_string(c.window_len) + "x" + std::to_string(c.input_dim));
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be >= 1");
    if (grad_clip && !(*grad_clip > 0.0)) throw ConfigError("grad clip must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be positive");
}

std::string TrainReport::to_csv(bool include_timing) const {
    std::string out = "epoch,train_mse,train_mae,val_mse,val_mae,seconds\n";
    for (const auto& e : epochs) {
        out += std::to_string(e.epoch) + ',' + fmt17(e.train.mse) + ',' + fmt17(e.train.mae) + ',';
        if (e.validation) {
            out += fmt17(e.validation->mse) + ',' + fmt17(e.validation->mae);
        } else {
            out += ',';
        }
        out += ',';
        if (include_timing) out += fmt17(e.seconds);
        out += '\n';
    }
    return out;
}

double mse(std::span<const double> predictions, std::span<const double> targets) {
    check_lengths(predictions, targets);
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const double d = predictions[i] - targets[i];
        acc += d * d;
    }
    return acc / static_cast<double>(predictions.size());
}

double mae(std::span<const double> predictions, std::span<const double> targets) {
    check_lengths(predictions, targets);
    double acc = 0.0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        acc += std::abs(predictions[i] - targets[i]);
    }
    return acc / static_cast<double>(predictions.size());
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads, double lr) {
    check_grads(params, grads);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto p = params[i]->data();
        const auto g = grads[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            p[k] -= lr * g[k];
        }
    }
}

AdamState AdamState::zeros_like(std::span<Tensor* const> params) {
    AdamState s;
    for (const Tensor* p : params) {
        s.m.emplace_back(p->shape(), 0.0);
        s.v.emplace_back(p->shape(), 0.0);
    }
    return s;
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor> grads, AdamState& state,
               const AdamConfig& config) {
    check_grads(params, grads);
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw DimensionError("adam: state holds " + std::to_string(state.m.size()) +
                             " moments for " + std::to_string(params.size()) + " params");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(config.beta1, t);
    const double correct2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.m[i].shape() != params[i]->shape() || state.v[i].shape() != params[i]->shape()) {
            throw DimensionError("adam: moment shape mismatch for param " + std::to_string(i));
        }
        auto p = params[i]->data();
        auto m = state.m[i].data();
        auto v = state.v[i].data();
        const auto g = grads[i].data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = config.beta1 * m[k] + (1.0 - config.beta1) * g[k];
            v[k] = config.beta2 * v[k] + (1.0 - config.beta2) * g[k] * g[k];
            const double m_hat = m[k] / correct1;
            const double v_hat = v[k] / correct2;
            p[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps);
        }
    }
}

double global_norm(std::span<const Tensor> grads) {
    double acc = 0.0;
    for (const auto& g : grads) {
        for (double v : g.data()) acc += v * v;
    }
    return std::sqrt(acc);
}

double clip_global_norm(std::span<Tensor> grads, double cap) {
    if (!(cap > 0.0)) throw ContractError("clip cap must be positive");
    const double norm = global_norm(grads);
    if (norm > cap) {
        const double factor = cap / norm;
        for (auto& g : grads) {
            for (auto& v : g.data()) v *= factor;
        }
    }
    return norm;
}

ad::Var batch_loss(ad::Tape& tape, const ParamVars& params, const ModelConfig& config,
                   std::span<const Window* const> batch) {
    if (batch.empty()) throw DataError("empty batch");
    ad::Var total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const ad::Var y = graph::forward(tape.constant(batch[i]->x), params, config);
        const ad::Var diff = ad::sub(y, tape.constant(Tensor::scalar(batch[i]->y)));
        const ad::Var sq = ad::mul(diff, diff);
        total = i == 0 ? sq : ad::add(total, sq);
    }
    return ad::scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<double> predict_all(const ModelParams& params, const ModelConfig& config,
                                const TimeSeriesDataset& dataset) {
    check_dims(dataset, config, "dataset");
    std::vector<double> out;
    out.reserve(dataset.size());
    for (const auto& w : dataset.windows) {
        out.push_back(forward(w.x, params, config).value);
    }
    return out;
}

Metrics evaluate(const ModelParams& params, const ModelConfig& config,
                 const TimeSeriesDataset& dataset) {
    if (dataset.empty()) throw DataError("evaluate: empty dataset");
    const auto preds = predict_all(params, config, dataset);
    std::vector<double> targets;
    targets.reserve(dataset.size());
    for (const auto& w : dataset.windows) targets.push_back(w.y);
    return {mse(preds, targets), mae(preds, targets)};
}

Metrics persistence_baseline(const TimeSeriesDataset& dataset) {
    if (dataset.empty()) throw DataError("persistence baseline: empty dataset");
    std::vector<double> preds;
    std::vector<double> targets;
    for (const auto& w : dataset.windows) {
        preds.push_back(w.last_target);
        targets.push_back(w.y);
    }
    return {mse(preds, targets), mae(preds, targets)};
}

TrainResult train(const TimeSeriesDataset& train_set, const TimeSeriesDataset* validation,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  const EpochCallback& on_epoch) {
    return train(init_params(model_config), train_set, validation, model_config, train_config,
                 on_epoch);
}

TrainResult train(ModelParams initial, const TimeSeriesDataset& train_set,
                  const TimeSeriesDataset* validation, const ModelConfig& model_config,
                  const TrainConfig& train_config, const EpochCallback& on_epoch) {
    model_config.validate();
    train_config.validate();
    if (train_set.empty()) throw DataError("training set is empty");
    check_dims(train_set, model_config, "training");
    if (validation != nullptr) {
        if (validation->empty()) throw DataError("validation set is empty");
        check_dims(*validation, model_config, "validation");
    }
    validate_params(initial, model_config);

    TrainResult result{std::move(initial), {}};
    std::vector<Tensor*> params = tensor_refs(result.params);
    AdamState adam = AdamState::zeros_like(params);
    const AdamConfig adam_config{train_config.learning_rate, train_config.beta1,
                                 train_config.beta2, train_config.adam_eps};
    Rng rng(train_config.seed);

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        if (train_config.shuffle_each_epoch) rng.shuffle(order);

        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += train_config.batch_size) {
            ++batch_index;
            const std::size_t end = std::min(order.size(), begin + train_config.batch_size);
            std::vector<const Window*> batch;
            for (std::size_t i = begin; i < end; ++i) batch.push_back(&train_set.windows[order[i]]);

            const std::string where =
                "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index);
            ad::Tape tape;
            const ParamVars vars = attach(tape, result.params, true);
            ad::Var loss;
            try {
                loss = batch_loss(tape, vars, model_config, batch);
            } catch (const NumericError& e) {
                throw NumericError(where + ": " + e.what());
            }
            if (!std::isfinite(loss.value()[0])) {
                throw NumericError(where + ": loss is not finite");
            }
            const ad::Gradients grads = tape.backward(loss);
            std::vector<Tensor> g;
            g.reserve(params.size());
            for_each_param(vars, [&](const std::string&, const ad::Var& v) { g.push_back(grads[v]); });
            if (train_config.grad_clip) clip_global_norm(g, *train_config.grad_clip);

            if (train_config.optimizer == OptimizerKind::sgd) {
                sgd_step(params, g, train_config.learning_rate);
            } else {
                adam_step(params, g, adam, adam_config);
            }
            ++result.report.optimizer_steps;
        }

        EpochMetrics metrics;
        metrics.epoch = epoch;
        try {
            metrics.train = evaluate(result.params, model_config, train_set);
            if (validation != nullptr) {
                metrics.validation = evaluate(result.params, model_config, *validation);
            }
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(epoch) + " evaluation: " + e.what());
        }
        metrics.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        result.report.epochs.push_back(metrics);
        if (on_epoch) on_epoch(metrics);
    }
    return result;
}

ad::GradCheckReport check_model_gradients(const ModelConfig& config, double step, double tolerance,
                                          std::size_t n_windows) {
    config.validate();
    const ModelParams params = init_params(config);
    Rng rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
    std::vector<Window> windows(n_windows);
    for (auto& w : windows) {
        w.x = Tensor({config.window_len, config.input_dim});
        for (auto& v : w.x.data()) v = rng.uniform(-1.0, 1.0);
        w.y = rng.uniform(-2.0, 2.0);
    }
    std::vector<const Window*> batch;
    for (const auto& w : windows) batch.push_back(&w);

    const ad::ScalarFn loss = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
        ParamVars vars;
        vars.blocks.resize(config.n_blocks);
        for (auto& b : vars.blocks) b.heads.resize(config.n_heads);
        std::size_t i = 0;
        for_each_param(vars, [&](const std::string&, ad::Var& v) { v = leaves[i++]; });
        return batch_loss(tape, vars, config, batch);
    };
    return ad::grad_check(loss, named_tensors(params), step, tolerance);
}

}  // namespace tst
