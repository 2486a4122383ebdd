#include <benchmark/benchmark.h>

#include <vector>

#include "tst/rng.hpp"
#include "tst/training.hpp"

namespace {

tst::Tensor random_tensor(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    tst::Rng rng(seed);
    tst::Tensor t({rows, cols});
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

tst::ModelConfig model_config(std::size_t window_len) {
    tst::ModelConfig c;
    c.window_len = window_len;
    return c;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const tst::Tensor a = random_tensor(n, n, 1);
    const tst::Tensor b = random_tensor(n, n, 2);
    for (auto _ : state) {
        auto c = tst::matmul(a, b);
        benchmark::DoNotOptimize(c);
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(16, 256)->Complexity();

static void BM_Softmax(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const tst::Tensor a = random_tensor(n, n, 3);
    for (auto _ : state) {
        auto s = tst::softmax_rows(a);
        benchmark::DoNotOptimize(s);
    }
}
BENCHMARK(BM_Softmax)->Arg(16)->Arg(64)->Arg(256);

static void BM_Forward(benchmark::State& state) {
    const auto c = model_config(static_cast<std::size_t>(state.range(0)));
    const auto params = tst::init_params(c);
    const tst::Tensor x = random_tensor(c.window_len, c.input_dim, 4);
    for (auto _ : state) {
        auto p = tst::forward(x, params, c);
        benchmark::DoNotOptimize(p.value);
    }
}
BENCHMARK(BM_Forward)->Arg(8)->Arg(16)->Arg(64);

static void BM_TrainStep(benchmark::State& state) {
    const auto c = model_config(16);
    const auto batch_size = static_cast<std::size_t>(state.range(0));
    const auto ds = tst::make_windows(tst::synth_sine(batch_size + c.window_len, 20.0, 0.0, 1), c.window_len, 1);
    tst::TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = batch_size;
    const auto params = tst::init_params(c);
    for (auto _ : state) {
        auto r = tst::train(params, ds, nullptr, c, tc);
        benchmark::DoNotOptimize(r.report.optimizer_steps);
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch_size));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(16)->Unit(benchmark::kMillisecond);

static void BM_GradCheck(benchmark::State& state) {
    tst::ModelConfig c;
    c.window_len = 4;
    c.input_dim = 3;
    c.model_dim = 8;
    c.n_heads = 2;
    c.ffn_hidden = 16;
    for (auto _ : state) {
        auto r = tst::check_model_gradients(c, 1e-6, 1e-5);
        benchmark::DoNotOptimize(r.entries.data());
    }
}
BENCHMARK(BM_GradCheck)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
