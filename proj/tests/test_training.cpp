#include <doctest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "tst/error.hpp"
#include "tst/rng.hpp"
#include "tst/training.hpp"

using tst::Tensor;

namespace {

tst::ModelConfig small_model(std::size_t T = 6) {
    tst::ModelConfig c;
    c.window_len = T;
    c.model_dim = 8;
    c.n_heads = 2;
    c.ffn_hidden = 16;
    c.seed = 3;
    return c;
}

tst::TimeSeriesDataset sine_windows(std::size_t n_windows, std::size_t T) {
    return tst::make_windows(tst::synth_sine(n_windows + T, 20.0, 0.0, 1), T, 1);
}

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
    tst::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return v;
}

bool bitwise_equal(const tst::ModelParams& a, const tst::ModelParams& b) {
    const auto x = tst::named_tensors(a);
    const auto y = tst::named_tensors(b);
    for (std::size_t i = 0; i < x.size(); ++i) {
        const auto xs = x[i].value.data();
        const auto ys = y[i].value.data();
        if (xs.size() != ys.size()) return false;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            if (std::bit_cast<std::uint64_t>(xs[k]) != std::bit_cast<std::uint64_t>(ys[k])) return false;
        }
    }
    return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("mse and mae") {
    const std::vector<double> p{1.0, 3.0};
    const std::vector<double> t{0.0, 1.0};
    CHECK(tst::mse(p, t) == 2.5);
    CHECK(tst::mae(p, t) == 1.5);
    CHECK(tst::mse(p, p) == 0.0);
    CHECK(tst::mae(t, t) == 0.0);

    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto a = random_values(17, s);
        const auto b = random_values(17, s + 100);
        CHECK(tst::mse(a, b) == tst::mse(b, a));
        CHECK(tst::mae(a, b) <= std::sqrt(tst::mse(a, b)) + 1e-15);

        auto ra = a;
        auto rb = b;
        std::reverse(ra.begin(), ra.end());
        std::reverse(rb.begin(), rb.end());
        CHECK(std::abs(tst::mse(a, b) - tst::mse(ra, rb)) < 1e-12);
        CHECK(std::abs(tst::mae(a, b) - tst::mae(ra, rb)) < 1e-12);
    }

    CHECK_THROWS_AS(tst::mse(std::vector<double>{1.0}, t), tst::DimensionError);
    CHECK_THROWS_AS(tst::mae(std::vector<double>{}, std::vector<double>{}), tst::DimensionError);
}

TEST_CASE("sgd_step") {
    Tensor theta = Tensor::vector({2.0});
    Tensor* params[] = {&theta};
    const Tensor g[] = {Tensor::vector({0.5})};
    tst::sgd_step(params, g, 1.0);
    CHECK(theta == Tensor::vector({1.5}));

    tst::Rng rng(1);
    Tensor a({3, 2});
    for (auto& v : a.data()) v = rng.normal();
    Tensor b = a;
    Tensor grad({3, 2});
    for (auto& v : grad.data()) v = rng.normal();
    Tensor* pa[] = {&a};
    Tensor* pb[] = {&b};
    const Tensor ga[] = {grad};
    tst::sgd_step(pa, ga, 0.1);
    tst::sgd_step(pb, ga, 0.05);
    tst::sgd_step(pb, ga, 0.05);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);

    Tensor before = a;
    const Tensor zero[] = {Tensor({3, 2}, 0.0)};
    tst::sgd_step(pa, zero, 0.1);
    CHECK(a == before);

    const Tensor wrong[] = {Tensor({2, 3})};
    CHECK_THROWS_AS(tst::sgd_step(pa, wrong, 0.1), tst::DimensionError);
}

TEST_CASE("adam_step") {
    tst::AdamConfig cfg;
    cfg.learning_rate = 0.01;

    Tensor theta = Tensor::vector({1.0, -2.0, 3.0});
    const Tensor start = theta;
    Tensor* params[] = {&theta};
    auto state = tst::AdamState::zeros_like(params);
    const Tensor zero[] = {Tensor({3}, 0.0)};
    tst::adam_step(params, zero, state, cfg);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(theta[i] - start[i]) < 1e-12);
    CHECK(state.step == 1);

    for (double gv : {1e-3, 0.7, -5.0, 250.0}) {
        Tensor p = Tensor::vector({0.0, 1.0});
        Tensor* pp[] = {&p};
        auto st = tst::AdamState::zeros_like(pp);
        const Tensor g[] = {Tensor({2}, gv)};
        tst::adam_step(pp, g, st, cfg);
        const double expect = -cfg.learning_rate * (gv > 0 ? 1.0 : -1.0);
        CHECK(p[0] == doctest::Approx(expect).epsilon(1e-4));
        CHECK(p[1] - 1.0 == doctest::Approx(expect).epsilon(1e-4));
    }

    Tensor p1 = Tensor::vector({0.3, 0.4});
    Tensor p2 = p1;
    Tensor* a[] = {&p1};
    Tensor* b[] = {&p2};
    auto s1 = tst::AdamState::zeros_like(a);
    auto s2 = tst::AdamState::zeros_like(b);
    for (int i = 0; i < 5; ++i) {
        const Tensor g[] = {Tensor::vector({0.1 * i, -0.2})};
        tst::adam_step(a, g, s1, cfg);
        tst::adam_step(b, g, s2, cfg);
    }
    CHECK(p1 == p2);
}

TEST_CASE("global norm clipping") {
    tst::Rng rng(8);
    for (double cap : {0.01, 0.5, 1.0, 10.0}) {
        std::vector<Tensor> grads{Tensor({4, 3}), Tensor({5})};
        for (auto& g : grads)
            for (auto& v : g.data()) v = rng.normal(0.0, 2.0);
        const double before = tst::global_norm(grads);
        const auto copy = grads;
        CHECK(tst::clip_global_norm(grads, cap) == before);
        CHECK(tst::global_norm(grads) <= cap + 1e-12);
        if (before <= cap) {
            CHECK(grads[0] == copy[0]);
        } else {
            const double ratio = grads[1][0] / copy[1][0];
            CHECK(std::abs(ratio - cap / before) < 1e-12);
        }
    }
    std::vector<Tensor> g{Tensor::vector({3.0, 4.0})};
    CHECK(tst::global_norm(g) == 5.0);
    CHECK_THROWS_AS(tst::clip_global_norm(g, 0.0), tst::ContractError);
}

TEST_CASE("an SGD step decreases a convex quadratic") {
    tst::Rng rng(9);
    for (double lr : {0.01, 0.3, 0.9}) {
        Tensor theta({6});
        for (auto& v : theta.data()) v = rng.normal();
        const double loss0 = 0.5 * tst::sum(tst::mul(theta, theta));
        Tensor* p[] = {&theta};
        const Tensor g[] = {theta};
        tst::sgd_step(p, g, lr);
        CHECK(0.5 * tst::sum(tst::mul(theta, theta)) < loss0);
    }
}

TEST_CASE("config validation") {
    tst::TrainConfig tc;
    CHECK_NOTHROW(tc.validate());
    tc.epochs = 0;
    CHECK_THROWS_AS(tc.validate(), tst::ConfigError);
    tc = {};
    tc.batch_size = 0;
    CHECK_THROWS_AS(tc.validate(), tst::ConfigError);
    tc = {};
    tc.learning_rate = -1.0;
    CHECK_THROWS_AS(tc.validate(), tst::ConfigError);
    tc = {};
    tc.beta1 = 1.0;
    CHECK_THROWS_AS(tc.validate(), tst::ConfigError);
    tc = {};
    tc.grad_clip = 0.0;
    CHECK_THROWS_AS(tc.validate(), tst::ConfigError);

    const auto ds = sine_windows(4, 6);
    tc = {};
    tc.epochs = 0;
    CHECK_THROWS_AS(tst::train(ds, nullptr, small_model(), tc), tst::ConfigError);
}

TEST_CASE("loop accounting") {
    const auto c = small_model();
    tst::TrainConfig tc;
    tc.epochs = 1;
    auto one = sine_windows(1, 6);
    CHECK(tst::train(one, nullptr, c, tc).report.optimizer_steps == 1);

    const auto ds = sine_windows(10, 6);
    tc.epochs = 3;
    tc.batch_size = 4;
    std::size_t callbacks = 0;
    const auto r = tst::train(ds, &ds, c, tc, [&](const tst::EpochMetrics& m) { CHECK(m.epoch == ++callbacks); });
    CHECK(r.report.optimizer_steps == 9);
    CHECK(callbacks == 3);
    CHECK(r.report.epochs.size() == 3);
    CHECK(r.report.epochs[2].validation.has_value());

    const auto m = tst::evaluate(r.params, c, ds);
    CHECK(m.mse == r.report.epochs.back().train.mse);
    CHECK(m.mae == r.report.epochs.back().train.mae);
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto c = small_model();
    const auto ds = sine_windows(20, 6);
    tst::TrainConfig tc;
    tc.epochs = 3;
    tc.batch_size = 6;
    tc.grad_clip = 1.0;
    const auto a = tst::train(ds, &ds, c, tc);
    const auto b = tst::train(ds, &ds, c, tc);
    CHECK(a.report.to_csv() == b.report.to_csv());
    CHECK(bitwise_equal(a.params, b.params));

    tc.seed = 43;
    CHECK(tst::train(ds, &ds, c, tc).report.to_csv() != a.report.to_csv());

    const std::string csv = a.report.to_csv();
    CHECK(csv.starts_with("epoch,train_mse,train_mae,val_mse,val_mae,seconds\n"));
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("evaluate") {
    const auto c = small_model();
    const auto ds = sine_windows(8, 6);
    const auto params = tst::init_params(c);
    const auto copy = params;
    const auto m = tst::evaluate(params, c, ds);
    CHECK(bitwise_equal(params, copy));
    const auto preds = tst::predict_all(params, c, ds);
    std::vector<double> ys;
    for (const auto& w : ds.windows) ys.push_back(w.y);
    CHECK(m.mse == tst::mse(preds, ys));

    auto zeros = ds;
    for (auto& w : zeros.windows) w.y = 0.0;
    const auto z = tst::evaluate(tst::zero_params(c), c, zeros);
    CHECK(z.mse == 0.0);
    CHECK(z.mae == 0.0);

    const auto base = tst::persistence_baseline(ds);
    double expect = 0.0;
    for (const auto& w : ds.windows) expect += (w.y - w.last_target) * (w.y - w.last_target) / static_cast<double>(ds.size());
    CHECK(std::abs(base.mse - expect) < 1e-15);
}

TEST_CASE("a diverging loss aborts with epoch and batch context") {
    auto ds = sine_windows(4, 6);
    ds.windows[0].y = 1e300;
    ds.windows[1].y = 1e300;
    tst::TrainConfig tc;
    tc.epochs = 2;
    tc.shuffle_each_epoch = false;
    CHECK_THROWS_WITH_AS(tst::train(ds, nullptr, small_model(), tc), doctest::Contains("epoch 1 batch 1"),
                         tst::NumericError);
}

TEST_CASE("mismatched window shape is rejected") {
    const auto ds = sine_windows(4, 5);
    CHECK_THROWS_AS(tst::train(ds, nullptr, small_model(6), tst::TrainConfig{}), tst::DataError);
}

TEST_CASE("overfits 32 sine windows") {
    tst::ModelConfig c;  // defaults: T = 16, d' = 32, 2 heads
    const auto ds = sine_windows(32, c.window_len);
    REQUIRE(ds.size() == 32);
    tst::TrainConfig tc;
    tc.epochs = 200;
    const auto r = tst::train(ds, nullptr, c, tc);
    CHECK(r.report.epochs.back().train.mse < 1e-3);
    CHECK(tst::evaluate(r.params, c, ds).mse < 1e-3);
}

}  // TEST_SUITE
