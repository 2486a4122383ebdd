#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>

#include "commands.hpp"

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("tst");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("TST_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
}

void add_model_flags(CLI::App* cmd, tst::ModelConfig& m) {
    cmd->add_option("--d-model", m.model_dim, "Model (embedding) dimension")->capture_default_str();
    cmd->add_option("--heads", m.n_heads, "Attention heads")->capture_default_str();
    cmd->add_option("--blocks", m.n_blocks, "Attention + FFN blocks")->capture_default_str();
    cmd->add_option("--ffn-hidden", m.ffn_hidden, "FFN hidden width")->capture_default_str();
    cmd->add_flag_callback("--no-pe", [&m] { m.use_positional_encoding = false; }, "Disable positional encoding");
    cmd->add_flag("--residual", m.use_residual, "Add residual connections around both sublayers");
}

}  // namespace

int main(int argc, char** argv) {
    using namespace tst::cli;
    setup_logging();

    CLI::App app{"tst: time series transformer forecasting"};
    app.require_subcommand(1);

    TrainOptions train;
    auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, report and manifest");
    train_cmd->add_option("--data", train.data.data, "Input CSV");
    train_cmd->add_option("--target", train.data.target, "Target column")->capture_default_str();
    train_cmd->add_option("--features", train.data.features, "Feature columns (default: target)")
        ->delimiter(',');
    train_cmd->add_option("--mapping", train.data.mapping, "Categorical mapping CSV (value,code)");
    train_cmd->add_option("--window", train.data.window, "Window length T")->capture_default_str();
    train_cmd->add_option("--horizon", train.data.horizon, "Steps ahead of the window")->capture_default_str();
    train_cmd->add_option("--train-frac", train.data.train_frac, "Chronological train fraction")
        ->capture_default_str();
    add_model_flags(train_cmd, train.model);
    train_cmd->add_option("--epochs", train.train.epochs)->capture_default_str();
    train_cmd->add_option("--lr", train.train.learning_rate)->capture_default_str();
    train_cmd->add_option("--batch", train.train.batch_size)->capture_default_str();
    train_cmd->add_option("--optimizer", train.optimizer, "adam or sgd")->capture_default_str();
    train_cmd->add_option("--grad-clip", train.grad_clip, "Global gradient-norm cap");
    train_cmd->add_option("--seed", train.train.seed)->capture_default_str();
    train_cmd->add_option("--out", train.out, "Checkpoint path")->capture_default_str();
    train_cmd->add_option("--report", train.report, "Report CSV (default <out>.report.csv)");
    train_cmd->add_option("--manifest", train.manifest, "Manifest JSON (default <out>.manifest.json)");
    train_cmd->add_option("--replay", train.replay, "Rerun exactly what a manifest describes");
    train_cmd->add_flag("--timing", train.timing, "Fill the seconds column of the report");

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Print mse and mae of a checkpoint on a CSV");
    eval_cmd->add_option("--model", eval.model, "Checkpoint")->required();
    eval_cmd->add_option("--data", eval.data, "Input CSV")->required();
    eval_cmd->add_option("--split", eval.split, "all, train or val")->capture_default_str();
    eval_cmd->add_flag("--denorm", eval.denorm, "Report on the original target scale");

    PredictOptions predict;
    auto* predict_cmd = app.add_subcommand("predict", "Forecast from the last T rows of a CSV");
    predict_cmd->add_option("--model", predict.model, "Checkpoint")->required();
    predict_cmd->add_option("--data", predict.data, "Input CSV")->required();
    predict_cmd->add_option("--attn-out", predict.attn_out, "Directory for attention CSVs");
    predict_cmd->add_flag("--denorm", predict.denorm, "Print on the original target scale");

    GradcheckOptions gradcheck;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every model gradient");
    gc_cmd->add_option("--window", gradcheck.model.window_len)->capture_default_str();
    gc_cmd->add_option("--input-dim", gradcheck.model.input_dim)->capture_default_str();
    add_model_flags(gc_cmd, gradcheck.model);
    gc_cmd->add_option("--seed", gradcheck.model.seed)->capture_default_str();
    gc_cmd->add_option("--step", gradcheck.step)->capture_default_str();
    gc_cmd->add_option("--tolerance", gradcheck.tolerance)->capture_default_str();

    SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic series CSV");
    synth_cmd->add_option("--kind", synth.kind, "sine or ar1")->capture_default_str();
    synth_cmd->add_option("--n", synth.n, "Number of points")->capture_default_str();
    synth_cmd->add_option("--period", synth.period)->capture_default_str();
    synth_cmd->add_option("--noise", synth.noise, "Gaussian noise std")->capture_default_str();
    synth_cmd->add_option("--coeff", synth.coeff, "AR(1) coefficient")->capture_default_str();
    synth_cmd->add_option("--seed", synth.seed)->capture_default_str();
    synth_cmd->add_option("--out", synth.out)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }

    if (*train_cmd) {
        // One --seed drives both initialization and shuffling.
        train.model.seed = train.train.seed;
        train.out_given = train_cmd->count("--out") > 0;
        return guarded("train", [&] { return cmd_train(train); });
    }
    if (*eval_cmd) return guarded("eval", [&] { return cmd_eval(eval); });
    if (*predict_cmd) return guarded("predict", [&] { return cmd_predict(predict); });
    if (*gc_cmd) return guarded("gradcheck", [&] { return cmd_gradcheck(gradcheck); });
    if (*synth_cmd) return guarded("synth", [&] { return cmd_synth(synth); });
    return kConfigError;
}
