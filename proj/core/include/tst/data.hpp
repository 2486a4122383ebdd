#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tst/tensor.hpp"

namespace tst {

// Tabular series in file order. `features` and `target` name entries of `columns`;
// the target may also be one of the features.
struct RawSeries {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;
    std::vector<std::string> features;
    std::string target;

    std::size_t column_index(const std::string& name) const;  // throws DataError
    std::vector<double> column(const std::string& name) const;
};

// value -> integer code, applied to any cell that is not a number.
using CategoricalMap = std::map<std::string, double>;

// Two-column CSV with header `value,code`.
CategoricalMap load_categorical_map(const std::filesystem::path& path);

// Loads the target column plus the feature columns (defaults to just the target).
RawSeries load_csv(const std::filesystem::path& path, const std::string& target,
                   const std::vector<std::string>& features = {},
                   const CategoricalMap* categories = nullptr);

std::string to_csv(const RawSeries& series);

struct Window {
    Tensor x;                   // T x d
    double y = 0.0;             // target `horizon` rows after the last input row
    double last_target = 0.0;   // target at the last input row, for the persistence baseline
    std::size_t start = 0;      // row index of the first input row
};

struct TimeSeriesDataset {
    std::vector<Window> windows;
    std::size_t window_len = 0;
    std::size_t input_dim = 0;
    std::size_t horizon = 1;

    std::size_t size() const noexcept { return windows.size(); }
    bool empty() const noexcept { return windows.empty(); }
    std::size_t target_row(const Window& w) const { return w.start + window_len - 1 + horizon; }
};

// Stride-1 windows: rows - window_len - horizon + 1 of them.
TimeSeriesDataset make_windows(const RawSeries& series, std::size_t window_len,
                               std::size_t horizon);

inline std::size_t window_count(std::size_t rows, std::size_t window_len, std::size_t horizon) {
    return rows + 1 < window_len + horizon ? 0 : rows - window_len - horizon + 1;
}

inline constexpr double kStdFloor = 1e-8;

// Per-feature z-score with the target normalized on its own statistics.
struct Normalizer {
    std::vector<double> feature_mean;
    std::vector<double> feature_std;
    double target_mean = 0.0;
    double target_std = 1.0;

    // Fits on rows [0, n_rows). Population std, floored at kStdFloor.
    static Normalizer fit(const RawSeries& series, std::size_t n_rows);

    RawSeries apply(const RawSeries& series) const;
    RawSeries invert(const RawSeries& normalized) const;
    double normalize_target(double y) const { return (y - target_mean) / target_std; }
    double invert_target(double y) const { return y * target_std + target_mean; }

    std::map<std::string, std::string> to_metadata() const;
    static Normalizer from_metadata(const std::map<std::string, std::string>& metadata);
};

struct DatasetSplit {
    TimeSeriesDataset train;
    TimeSeriesDataset validation;
};

// First floor(n * train_fraction) windows train; the rest validate, minus any window
// whose target row lies inside the rows touched by the training windows.
DatasetSplit chrono_split(const TimeSeriesDataset& dataset, double train_fraction);

// Number of leading raw rows the training windows touch, inputs and targets included.
// Normalizer statistics are fitted on exactly these rows.
std::size_t train_row_count(std::size_t rows, std::size_t window_len, std::size_t horizon,
                            double train_fraction);

struct PreparedData {
    Normalizer normalizer;
    RawSeries normalized;
    TimeSeriesDataset train;
    TimeSeriesDataset validation;
};

// Fits the normalizer on the training rows only, windows the normalized series and
// splits it chronologically.
PreparedData prepare_dataset(const RawSeries& series, std::size_t window_len, std::size_t horizon,
                             double train_fraction);

// x_t = sin(2 pi t / period) + noise, t = 0..n-1. Single column "value", also the target.
RawSeries synth_sine(std::size_t n, double period, double noise_std, std::uint64_t seed);

// x_0 = 0, x_{t+1} = coeff x_t + noise.
RawSeries synth_ar1(std::size_t n, double coeff, double noise_std, std::uint64_t seed);

}  // namespace tst
