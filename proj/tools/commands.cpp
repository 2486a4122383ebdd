#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "tst/checkpoint.hpp"
#include "tst/data.hpp"
#include "tst/error.hpp"

namespace tst::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fmt17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt6(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string join(const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += (i ? "," : "") + items[i];
    }
    return out;
}

std::vector<std::string> split(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    for (char c : text) {
        if (c == ',') {
            out.push_back(item);
            item.clear();
        } else {
            item += c;
        }
    }
    if (!item.empty()) out.push_back(item);
    return out;
}

const std::string& require_key(const Metadata& meta, const std::string& key) {
    const auto it = meta.find(key);
    if (it == meta.end()) {
        throw DataError("checkpoint metadata is missing '" + key + "'");
    }
    return it->second;
}

RawSeries load_series(const std::string& path, const std::string& target,
                      const std::vector<std::string>& features, const std::string& mapping) {
    if (path.empty()) throw ConfigError("--data is required");
    if (mapping.empty()) return load_csv(path, target, features);
    const CategoricalMap map = load_categorical_map(mapping);
    return load_csv(path, target, features, &map);
}

// Data pipeline settings a checkpoint needs to rebuild its inputs.
struct PipelineSettings {
    std::string target;
    std::vector<std::string> features;
    std::string mapping;
    std::size_t horizon = 1;
    double train_frac = 0.8;
    Normalizer normalizer;
};

Metadata pipeline_metadata(const PipelineSettings& p) {
    Metadata meta = p.normalizer.to_metadata();
    meta["data.target"] = p.target;
    meta["data.features"] = join(p.features);
    meta["data.mapping"] = p.mapping;
    meta["data.horizon"] = std::to_string(p.horizon);
    meta["data.train_frac"] = fmt17(p.train_frac);
    return meta;
}

PipelineSettings pipeline_from_metadata(const Metadata& meta) {
    PipelineSettings p;
    p.target = require_key(meta, "data.target");
    p.features = split(require_key(meta, "data.features"));
    p.mapping = require_key(meta, "data.mapping");
    p.horizon = std::stoul(require_key(meta, "data.horizon"));
    p.train_frac = std::stod(require_key(meta, "data.train_frac"));
    p.normalizer = Normalizer::from_metadata(meta);
    return p;
}

ordered_json manifest_json(const TrainOptions& o, const std::string& report,
                           const std::string& manifest) {
    const auto& m = o.model;
    const auto& t = o.train;
    ordered_json j;
    j["command"] = "train";
    j["data"] = {{"path", o.data.data},
                 {"target", o.data.target},
                 {"features", o.data.features},
                 {"mapping", o.data.mapping},
                 {"window", o.data.window},
                 {"horizon", o.data.horizon},
                 {"train_frac", o.data.train_frac}};
    j["model"] = {{"window_len", m.window_len},
                  {"input_dim", m.input_dim},
                  {"model_dim", m.model_dim},
                  {"n_heads", m.n_heads},
                  {"ffn_hidden", m.ffn_hidden},
                  {"n_blocks", m.n_blocks},
                  {"use_positional_encoding", m.use_positional_encoding},
                  {"use_residual", m.use_residual},
                  {"seed", m.seed}};
    j["train"] = {{"epochs", t.epochs},
                  {"learning_rate", t.learning_rate},
                  {"batch_size", t.batch_size},
                  {"optimizer", o.optimizer},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"adam_eps", t.adam_eps},
                  {"grad_clip", o.grad_clip ? ordered_json(*o.grad_clip) : ordered_json(nullptr)},
                  {"seed", t.seed},
                  {"shuffle_each_epoch", t.shuffle_each_epoch}};
    j["artifacts"] = {{"checkpoint", o.out}, {"report", report}, {"manifest", manifest}};
    j["timing"] = o.timing;
    return j;
}

TrainOptions options_from_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path);
    ordered_json j;
    try {
        in >> j;
        TrainOptions o;
        const auto& d = j.at("data");
        o.data.data = d.at("path").get<std::string>();
        o.data.target = d.at("target").get<std::string>();
        o.data.features = d.at("features").get<std::vector<std::string>>();
        o.data.mapping = d.at("mapping").get<std::string>();
        o.data.window = d.at("window").get<std::size_t>();
        o.data.horizon = d.at("horizon").get<std::size_t>();
        o.data.train_frac = d.at("train_frac").get<double>();
        const auto& m = j.at("model");
        o.model.window_len = m.at("window_len").get<std::size_t>();
        o.model.input_dim = m.at("input_dim").get<std::size_t>();
        o.model.model_dim = m.at("model_dim").get<std::size_t>();
        o.model.n_heads = m.at("n_heads").get<std::size_t>();
        o.model.ffn_hidden = m.at("ffn_hidden").get<std::size_t>();
        o.model.n_blocks = m.at("n_blocks").get<std::size_t>();
        o.model.use_positional_encoding = m.at("use_positional_encoding").get<bool>();
        o.model.use_residual = m.at("use_residual").get<bool>();
        o.model.seed = m.at("seed").get<std::uint64_t>();
        const auto& t = j.at("train");
        o.train.epochs = t.at("epochs").get<std::size_t>();
        o.train.learning_rate = t.at("learning_rate").get<double>();
        o.train.batch_size = t.at("batch_size").get<std::size_t>();
        o.optimizer = t.at("optimizer").get<std::string>();
        o.train.beta1 = t.at("beta1").get<double>();
        o.train.beta2 = t.at("beta2").get<double>();
        o.train.adam_eps = t.at("adam_eps").get<double>();
        if (!t.at("grad_clip").is_null()) o.grad_clip = t.at("grad_clip").get<double>();
        o.train.seed = t.at("seed").get<std::uint64_t>();
        o.train.shuffle_each_epoch = t.at("shuffle_each_epoch").get<bool>();
        const auto& a = j.at("artifacts");
        o.out = a.at("checkpoint").get<std::string>();
        o.report = a.at("report").get<std::string>();
        o.manifest = a.at("manifest").get<std::string>();
        o.timing = j.at("timing").get<bool>();
        return o;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad manifest " + path + ": " + e.what());
    }
}

void write_attention(const fs::path& dir, const std::vector<AttentionRecord>& records) {
    fs::create_directories(dir);
    for (const auto& r : records) {
        const std::size_t T = r.weights.rows();
        std::string csv;
        for (std::size_t c = 0; c < T; ++c) {
            csv += (c ? ",t" : "t") + std::to_string(c);
        }
        csv += '\n';
        for (std::size_t i = 0; i < T; ++i) {
            for (std::size_t c = 0; c < T; ++c) {
                csv += (c ? "," : "") + fmt17(r.weights(i, c));
            }
            csv += '\n';
        }
        const auto name = "attention_block" + std::to_string(r.block) + "_head" +
                          std::to_string(r.head) + ".csv";
        write_file_atomic(dir / name, csv);
    }
}

}  // namespace

int guarded(const std::string& command, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        spdlog::error("{}: configuration error: {}", command, e.what());
        return kConfigError;
    } catch (const NumericError& e) {
        spdlog::error("{}: numeric failure: {}", command, e.what());
        return kNumericError;
    } catch (const DataError& e) {
        spdlog::error("{}: data error: {}", command, e.what());
        return kDataError;
    } catch (const CheckpointError& e) {
        spdlog::error("{}: checkpoint error: {}", command, e.what());
        return kDataError;
    } catch (const DimensionError& e) {
        spdlog::error("{}: dimension error: {}", command, e.what());
        return kDataError;
    } catch (const std::exception& e) {
        spdlog::error("{}: {}", command, e.what());
        return kConfigError;
    }
}

int cmd_train(TrainOptions o) {
    if (!o.replay.empty()) {
        const TrainOptions cli = o;
        o = options_from_manifest(o.replay);
        if (cli.out_given) {
            o.out = cli.out;
            o.report = cli.report;
            o.manifest = cli.manifest;
        }
    }
    if (o.optimizer == "adam") {
        o.train.optimizer = OptimizerKind::adam;
    } else if (o.optimizer == "sgd") {
        o.train.optimizer = OptimizerKind::sgd;
    } else {
        throw ConfigError("unknown optimizer '" + o.optimizer + "' (expected adam or sgd)");
    }
    o.train.grad_clip = o.grad_clip;
    if (o.data.features.empty()) o.data.features = {o.data.target};
    o.model.window_len = o.data.window;
    o.model.input_dim = o.data.features.size();
    o.model.validate();
    o.train.validate();
    if (o.report.empty()) o.report = o.out + ".report.csv";
    if (o.manifest.empty()) o.manifest = o.out + ".manifest.json";

    const RawSeries series = load_series(o.data.data, o.data.target, o.data.features, o.data.mapping);
    const PreparedData prepared =
        prepare_dataset(series, o.data.window, o.data.horizon, o.data.train_frac);
    spdlog::info("{} rows -> {} train / {} validation windows", series.rows.size(),
                 prepared.train.size(), prepared.validation.size());

    const TrainResult result =
        train(prepared.train, &prepared.validation, o.model, o.train, [](const EpochMetrics& e) {
            spdlog::info("epoch {:>4}  train mse {:.6g} mae {:.6g}  val mse {:.6g} mae {:.6g}  ({:.2f}s)",
                         e.epoch, e.train.mse, e.train.mae, e.validation->mse, e.validation->mae,
                         e.seconds);
        });

    PipelineSettings pipeline{o.data.target, o.data.features, o.data.mapping, o.data.horizon,
                              o.data.train_frac, prepared.normalizer};
    save_params(result.params, o.model, o.out, pipeline_metadata(pipeline));
    write_file_atomic(o.report, result.report.to_csv(o.timing));
    write_file_atomic(o.manifest, manifest_json(o, o.report, o.manifest).dump(2) + "\n");

    const auto& last = result.report.epochs.back();
    std::cout << "train_mse=" << fmt6(last.train.mse) << " train_mae=" << fmt6(last.train.mae)
              << " val_mse=" << fmt6(last.validation->mse)
              << " val_mae=" << fmt6(last.validation->mae) << '\n';
    spdlog::info("wrote {}, {}, {}", o.out, o.report, o.manifest);
    return kOk;
}

int cmd_eval(const EvalOptions& o) {
    if (o.model.empty()) throw ConfigError("--model is required");
    const LoadedModel loaded = load_params(o.model);
    const PipelineSettings p = pipeline_from_metadata(loaded.metadata);
    const RawSeries series = load_series(o.data, p.target, p.features, p.mapping);
    const RawSeries normalized = p.normalizer.apply(series);
    const TimeSeriesDataset all = make_windows(normalized, loaded.config.window_len, p.horizon);

    TimeSeriesDataset dataset;
    if (o.split == "all") {
        dataset = all;
    } else if (o.split == "train" || o.split == "val") {
        auto s = chrono_split(all, p.train_frac);
        dataset = o.split == "train" ? std::move(s.train) : std::move(s.validation);
    } else {
        throw ConfigError("--split must be all, train or val");
    }

    Metrics m;
    if (o.denorm) {
        auto preds = predict_all(loaded.params, loaded.config, dataset);
        std::vector<double> targets;
        for (auto& v : preds) v = p.normalizer.invert_target(v);
        for (const auto& w : dataset.windows) targets.push_back(p.normalizer.invert_target(w.y));
        m = {mse(preds, targets), mae(preds, targets)};
    } else {
        m = evaluate(loaded.params, loaded.config, dataset);
    }
    std::cout << "mse=" << fmt6(m.mse) << " mae=" << fmt6(m.mae) << '\n';
    return kOk;
}

int cmd_predict(const PredictOptions& o) {
    if (o.model.empty()) throw ConfigError("--model is required");
    const LoadedModel loaded = load_params(o.model);
    const PipelineSettings p = pipeline_from_metadata(loaded.metadata);
    const RawSeries normalized =
        p.normalizer.apply(load_series(o.data, p.target, p.features, p.mapping));
    const std::size_t T = loaded.config.window_len;
    if (normalized.rows.size() < T) {
        throw DataError("need at least " + std::to_string(T) + " rows to predict, got " +
                        std::to_string(normalized.rows.size()));
    }
    Tensor x({T, p.features.size()});
    const std::size_t first = normalized.rows.size() - T;
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t j = 0; j < p.features.size(); ++j) {
            x(t, j) = normalized.rows[first + t][normalized.column_index(p.features[j])];
        }
    }
    const Prediction pred = forward(x, loaded.params, loaded.config);
    const double value = o.denorm ? p.normalizer.invert_target(pred.value) : pred.value;
    std::cout << fmt17(value) << '\n';
    if (!o.attn_out.empty()) {
        write_attention(o.attn_out, pred.records);
        spdlog::info("wrote {} attention maps to {}", pred.records.size(), o.attn_out);
    }
    return kOk;
}

int cmd_gradcheck(const GradcheckOptions& o) {
    o.model.validate();
    const ad::GradCheckReport report = check_model_gradients(o.model, o.step, o.tolerance);
    for (const auto& e : report.entries) {
        std::printf("%-20s n=%-5zu max_rel_error=%.3e\n", e.name.c_str(), e.elements,
                    e.max_rel_error);
    }
    std::printf("overall max_rel_error=%.3e tolerance=%.1e %s\n", report.max_rel_error(),
                report.tolerance, report.passed() ? "PASS" : "FAIL");
    return report.passed() ? kOk : kNumericError;
}

int cmd_synth(const SynthOptions& o) {
    RawSeries series;
    if (o.kind == "sine") {
        series = synth_sine(o.n, o.period, o.noise, o.seed);
    } else if (o.kind == "ar1") {
        series = synth_ar1(o.n, o.coeff, o.noise, o.seed);
    } else {
        throw ConfigError("--kind must be sine or ar1");
    }
    write_file_atomic(o.out, to_csv(series));
    spdlog::info("wrote {} rows to {}", series.rows.size(), o.out);
    return kOk;
}

}  // namespace tst::cli
