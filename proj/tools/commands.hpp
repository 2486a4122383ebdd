#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tst/model.hpp"
#include "tst/training.hpp"

namespace tst::cli {

enum ExitCode : int {
    kOk = 0,
    kConfigError = 1,
    kDataError = 2,
    kNumericError = 3,
};

struct DataOptions {
    std::string data;
    std::string target = "value";
    std::vector<std::string> features;
    std::string mapping;
    std::size_t window = 16;
    std::size_t horizon = 1;
    double train_frac = 0.8;
};

struct TrainOptions {
    DataOptions data;
    ModelConfig model;
    TrainConfig train;
    std::string optimizer = "adam";
    std::optional<double> grad_clip;
    std::string out = "model.tstm";
    std::string report;
    std::string manifest;
    std::string replay;
    bool out_given = false;  // --out on the command line redirects a replay's artifacts
    bool timing = false;
};

struct EvalOptions {
    std::string model;
    std::string data;
    std::string split = "all";
    bool denorm = false;
};

struct PredictOptions {
    std::string model;
    std::string data;
    std::string attn_out;
    bool denorm = false;
};

struct GradcheckOptions {
    ModelConfig model{4, 3, 8, 2, 16, 1, true, false, 42};
    double step = 1e-6;
    double tolerance = 1e-5;
};

struct SynthOptions {
    std::string kind = "sine";
    std::size_t n = 200;
    double period = 20.0;
    double noise = 0.0;
    double coeff = 0.9;
    std::uint64_t seed = 42;
    std::string out = "synth.csv";
};

int cmd_train(TrainOptions opts);
int cmd_eval(const EvalOptions& opts);
int cmd_predict(const PredictOptions& opts);
int cmd_gradcheck(const GradcheckOptions& opts);
int cmd_synth(const SynthOptions& opts);

// Runs a command body, mapping library exceptions onto exit codes.
int guarded(const std::string& command, const std::function<int()>& body);

}  // namespace tst::cli
