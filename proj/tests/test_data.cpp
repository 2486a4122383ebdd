#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "tst/data.hpp"
#include "tst/error.hpp"
#include "tst/rng.hpp"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("tst_data_" + std::to_string(tst::Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }

    fs::path write(const std::string& name, const std::string& contents) const {
        const fs::path p = path / name;
        std::ofstream(p, std::ios::binary) << contents;
        return p;
    }
};

tst::RawSeries counting_series(std::size_t rows, std::size_t cols = 1) {
    tst::RawSeries s;
    for (std::size_t c = 0; c < cols; ++c) s.columns.push_back("c" + std::to_string(c));
    s.features = s.columns;
    s.target = s.columns[0];
    for (std::size_t r = 0; r < rows; ++r) {
        std::vector<double> row;
        for (std::size_t c = 0; c < cols; ++c) row.push_back(static_cast<double>(r) * 10.0 + static_cast<double>(c));
        s.rows.push_back(row);
    }
    return s;
}

tst::RawSeries random_series(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    auto s = counting_series(rows, cols);
    tst::Rng rng(seed);
    for (auto& row : s.rows)
        for (auto& v : row) v = rng.normal(3.0, 7.0);
    return s;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("load_csv") {
    TempDir dir;

    SUBCASE("three numeric rows") {
        const auto p = dir.write("a.csv", "date,value,balance\n1,0.5,10\n2,-1.25,20\n3,2e3,30\n");
        const auto s = tst::load_csv(p, "value", {"balance", "value"});
        CHECK(s.columns == std::vector<std::string>{"balance", "value"});
        REQUIRE(s.rows.size() == 3);
        CHECK(s.rows[0] == std::vector<double>{10.0, 0.5});
        CHECK(s.rows[2] == std::vector<double>{30.0, 2000.0});
        CHECK(s.column("value") == std::vector<double>{0.5, -1.25, 2000.0});

        const auto only_target = tst::load_csv(p, "balance");
        CHECK(only_target.columns == std::vector<std::string>{"balance"});
        CHECK(only_target.features == std::vector<std::string>{"balance"});
    }

    SUBCASE("target outside the feature list is appended") {
        const auto p = dir.write("a.csv", "x,y\n1,2\n3,4\n");
        const auto s = tst::load_csv(p, "y", {"x"});
        CHECK(s.columns == std::vector<std::string>{"x", "y"});
        CHECK(s.features == std::vector<std::string>{"x"});
    }

    SUBCASE("CRLF, BOM, quoting and blank lines") {
        const auto p = dir.write("b.csv", "\xEF\xBB\xBFvalue,\"note\"\r\n1.5,\"a, b\"\r\n\r\n2.5,c\r\n");
        const auto s = tst::load_csv(p, "value");
        CHECK(s.column("value") == std::vector<double>{1.5, 2.5});
    }

    SUBCASE("missing target column") {
        const auto p = dir.write("c.csv", "a,b\n1,2\n");
        CHECK_THROWS_WITH_AS(tst::load_csv(p, "stability"), doctest::Contains("'stability'"), tst::DataError);
    }

    SUBCASE("unparseable cell") {
        const auto p = dir.write("d.csv", "age,balance\n30,100\n31,abc\n");
        try {
            tst::load_csv(p, "balance", {"age", "balance"});
            FAIL("expected DataError");
        } catch (const tst::DataError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("'abc'") != std::string::npos);
            CHECK(msg.find("row 2") != std::string::npos);
            CHECK(msg.find("\"balance\"") != std::string::npos);
        }
    }

    SUBCASE("categorical cells need a mapping") {
        const auto p = dir.write("e.csv", "job,y\nadmin,1\ntechnician,2\nadmin,3\n");
        CHECK_THROWS_AS(tst::load_csv(p, "y", {"job", "y"}), tst::DataError);
        const auto m = tst::load_categorical_map(dir.write("map.csv", "value,code\nadmin,0\ntechnician,1\n"));
        const auto s = tst::load_csv(p, "y", {"job", "y"}, &m);
        CHECK(s.column("job") == std::vector<double>{0.0, 1.0, 0.0});
        CHECK_THROWS_AS(tst::load_categorical_map(dir.write("bad.csv", "value,code\nadmin,zero\n")), tst::DataError);
    }

    SUBCASE("empty and missing files") {
        CHECK_THROWS_AS(tst::load_csv(dir.write("empty.csv", ""), "value"), tst::DataError);
        CHECK_THROWS_AS(tst::load_csv(dir.write("header.csv", "value\n"), "value"), tst::DataError);
        CHECK_THROWS_AS(tst::load_csv(dir.path / "nope.csv", "value"), tst::DataError);
    }

    SUBCASE("ragged row") {
        CHECK_THROWS_AS(tst::load_csv(dir.write("r.csv", "a,b\n1,2\n3\n"), "a"), tst::DataError);
    }

    SUBCASE("to_csv round trip") {
        const auto s = random_series(7, 3, 4);
        const auto p = dir.write("rt.csv", tst::to_csv(s));
        const auto back = tst::load_csv(p, "c0", {"c0", "c1", "c2"});
        CHECK(back.rows == s.rows);
    }

    SUBCASE("loading is deterministic") {
        const auto p = dir.write("det.csv", tst::to_csv(random_series(20, 2, 9)));
        CHECK(tst::load_csv(p, "c1").rows == tst::load_csv(p, "c1").rows);
    }
}

TEST_CASE("make_windows") {
    const auto s = counting_series(10, 2);
    const auto ds = tst::make_windows(s, 4, 1);
    REQUIRE(ds.size() == 6);
    CHECK(ds.input_dim == 2);
    for (std::size_t k = 0; k < 6; ++k) {
        const auto& w = ds.windows[k];
        CHECK(w.start == k);
        CHECK(w.x.shape() == tst::Tensor::Shape{4, 2});
        for (std::size_t t = 0; t < 4; ++t) {
            CHECK(w.x(t, 0) == s.rows[k + t][0]);
            CHECK(w.x(t, 1) == s.rows[k + t][1]);
        }
        CHECK(w.y == s.rows[k + 4][0]);
        CHECK(w.last_target == s.rows[k + 3][0]);
    }

    const auto h3 = tst::make_windows(s, 4, 3);
    CHECK(h3.size() == 4);
    CHECK(h3.windows[0].y == s.rows[4 - 1 + 3][0]);

    CHECK_THROWS_AS(tst::make_windows(s, 10, 0), tst::DataError);
    CHECK_THROWS_AS(tst::make_windows(s, 0, 1), tst::DataError);
    CHECK_THROWS_WITH_AS(tst::make_windows(s, 10, 1), doctest::Contains("at least 11"), tst::DataError);
}

TEST_CASE("window count formula, exhaustive over small sizes") {
    for (std::size_t rows = 1; rows <= 20; ++rows) {
        const auto s = counting_series(rows);
        for (std::size_t T = 1; T <= rows; ++T) {
            for (std::size_t h = 1; T + h <= rows; ++h) {
                std::size_t enumerated = 0;
                for (std::size_t start = 0; start + T - 1 + h < rows; ++start) ++enumerated;
                CHECK(tst::window_count(rows, T, h) == enumerated);
                CHECK(tst::make_windows(s, T, h).size() == enumerated);
            }
        }
    }
}

TEST_CASE("normalizer") {
    SUBCASE("constant feature maps to zero") {
        auto s = counting_series(5, 2);
        for (auto& row : s.rows) row[1] = 4.0;
        const auto n = tst::Normalizer::fit(s, 5);
        CHECK(n.feature_std[1] == tst::kStdFloor);
        for (const auto& row : n.apply(s).rows) CHECK(row[1] == 0.0);
    }

    SUBCASE("apply then invert") {
        const auto s = random_series(50, 3, 21);
        const auto n = tst::Normalizer::fit(s, 30);
        const auto back = n.invert(n.apply(s));
        double worst = 0.0;
        for (std::size_t r = 0; r < 50; ++r)
            for (std::size_t c = 0; c < 3; ++c) worst = std::max(worst, std::abs(back.rows[r][c] - s.rows[r][c]));
        CHECK(worst < 1e-9);
        CHECK(std::abs(n.invert_target(n.normalize_target(12.5)) - 12.5) < 1e-12);
    }

    SUBCASE("training rows are centered and scaled") {
        const auto s = random_series(40, 2, 22);
        const auto n = tst::Normalizer::fit(s, 25);
        const auto z = n.apply(s);
        for (std::size_t c = 0; c < 2; ++c) {
            double m = 0.0, v = 0.0;
            for (std::size_t r = 0; r < 25; ++r) m += z.rows[r][c] / 25.0;
            for (std::size_t r = 0; r < 25; ++r) v += (z.rows[r][c] - m) * (z.rows[r][c] - m) / 25.0;
            CHECK(std::abs(m) < 1e-9);
            CHECK(std::abs(v - 1.0) < 1e-9);
        }
    }

    SUBCASE("metadata round trip") {
        const auto n = tst::Normalizer::fit(random_series(10, 2, 23), 10);
        const auto back = tst::Normalizer::from_metadata(n.to_metadata());
        CHECK(back.feature_mean == n.feature_mean);
        CHECK(back.feature_std == n.feature_std);
        CHECK(back.target_mean == n.target_mean);
        CHECK(back.target_std == n.target_std);
        CHECK_THROWS_AS(tst::Normalizer::from_metadata({}), tst::DataError);
    }

    SUBCASE("statistics ignore validation rows") {
        auto s = random_series(60, 2, 24);
        const auto a = tst::prepare_dataset(s, 5, 1, 0.8);
        const std::size_t fit_rows = tst::train_row_count(60, 5, 1, 0.8);
        CHECK(fit_rows == 44 + 5);
        for (std::size_t r = fit_rows; r < 60; ++r) s.rows[r] = {1e6, -1e6};
        const auto b = tst::prepare_dataset(s, 5, 1, 0.8);
        CHECK(a.normalizer.feature_mean == b.normalizer.feature_mean);
        CHECK(a.normalizer.feature_std == b.normalizer.feature_std);
        CHECK(a.normalizer.target_mean == b.normalizer.target_mean);
        CHECK(a.normalizer.target_std == b.normalizer.target_std);
    }
}

TEST_CASE("chrono_split") {
    const auto ds = tst::make_windows(counting_series(13), 3, 1);
    REQUIRE(ds.size() == 10);

    const auto a = tst::chrono_split(ds, 0.8);
    CHECK(a.train.size() == 8);
    CHECK(a.validation.size() == 2);
    const auto b = tst::chrono_split(ds, 0.99);
    CHECK(b.train.size() == 9);
    CHECK(b.validation.size() == 1);

    for (const auto& v : a.validation.windows)
        for (const auto& t : a.train.windows) CHECK(v.start > t.start);

    std::size_t last_train_target = 0;
    for (const auto& t : a.train.windows) last_train_target = std::max(last_train_target, ds.target_row(t));
    for (const auto& v : a.validation.windows) CHECK(ds.target_row(v) > last_train_target);

    CHECK_THROWS_AS(tst::chrono_split(ds, 0.05), tst::DataError);
    CHECK_THROWS_AS(tst::chrono_split(ds, 0.0), tst::DataError);
    CHECK_THROWS_AS(tst::chrono_split(ds, 1.0), tst::DataError);
}

TEST_CASE("synthetic generators") {
    const auto sine = tst::synth_sine(12, 4.0, 0.0, 1);
    const double cycle[4] = {0.0, 1.0, 0.0, -1.0};
    for (std::size_t t = 0; t < 12; ++t) CHECK(std::abs(sine.rows[t][0] - cycle[t % 4]) < 1e-12);
    CHECK(sine.target == "value");
    CHECK(sine.features == std::vector<std::string>{"value"});

    for (const auto& row : tst::synth_ar1(50, 0.0, 0.0, 1).rows) CHECK(row[0] == 0.0);

    const auto ar = tst::synth_ar1(10000, 0.9, 0.1, 2024);
    double m = 0.0;
    for (const auto& row : ar.rows) m += row[0] / 10000.0;
    double v = 0.0;
    for (const auto& row : ar.rows) v += (row[0] - m) * (row[0] - m) / 9999.0;
    const double expected = 0.01 / (1.0 - 0.81);
    CHECK(std::abs(v - expected) < 0.2 * expected);

    CHECK(tst::synth_sine(30, 7.0, 0.3, 5).rows == tst::synth_sine(30, 7.0, 0.3, 5).rows);
    CHECK(tst::synth_ar1(30, 0.5, 0.3, 5).rows == tst::synth_ar1(30, 0.5, 0.3, 5).rows);
    CHECK_FALSE(tst::synth_ar1(30, 0.5, 0.3, 5).rows == tst::synth_ar1(30, 0.5, 0.3, 6).rows);
    CHECK_THROWS_AS(tst::synth_ar1(10, 1.0, 0.1, 1), tst::DataError);
    CHECK_THROWS_AS(tst::synth_sine(0, 4.0, 0.0, 1), tst::DataError);
}

}  // TEST_SUITE
