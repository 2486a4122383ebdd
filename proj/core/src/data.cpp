#include "tst/data.hpp"

#include <algorithm>
#include <boost/tokenizer.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "tst/error.hpp"
#include "tst/rng.hpp"

namespace tst {

namespace {

using CsvTokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> cells;
    try {
        CsvTokenizer tok(line);
        for (const auto& cell : tok) {
            cells.push_back(trim(cell));
        }
    } catch (const boost::escaped_list_error& e) {
        throw DataError("malformed CSV at line " + std::to_string(line_no) + ": " + e.what());
    }
    return cells;
}

std::optional<double> parse_double(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || first == last || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, ptr);
}

std::string join_doubles(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    return out;
}

std::vector<double> split_doubles(const std::string& key, const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto v = parse_double(item);
        if (!v) throw DataError("bad number in metadata '" + key + "': " + item);
        out.push_back(*v);
    }
    return out;
}

}  // namespace

std::size_t RawSeries::column_index(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) {
        throw DataError("column '" + name + "' not found");
    }
    return static_cast<std::size_t>(it - columns.begin());
}

std::vector<double> RawSeries::column(const std::string& name) const {
    const std::size_t c = column_index(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
}

CategoricalMap load_categorical_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mapping file " + path.string());
    CategoricalMap map;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line, line_no);
        if (line_no == 1 && cells.size() == 2 && cells[0] == "value" && cells[1] == "code") continue;
        if (cells.size() != 2) {
            throw DataError("mapping file line " + std::to_string(line_no) + ": expected value,code");
        }
        const auto code = parse_double(cells[1]);
        if (!code || *code != std::floor(*code)) {
            throw DataError("mapping file line " + std::to_string(line_no) + ": code '" + cells[1] +
                            "' is not an integer");
        }
        map[cells[0]] = *code;
    }
    return map;
}

RawSeries load_csv(const std::filesystem::path& path, const std::string& target,
                   const std::vector<std::string>& features, const CategoricalMap* categories) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open data file " + path.string());

    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (header.empty() && std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (!trim(line).empty()) header = split_csv_line(line, line_no);
    }
    if (header.empty()) throw DataError("data file " + path.string() + " is empty");

    RawSeries series;
    series.target = target;
    series.features = features.empty() ? std::vector<std::string>{target} : features;
    series.columns = series.features;
    if (std::find(series.columns.begin(), series.columns.end(), target) == series.columns.end()) {
        series.columns.push_back(target);
    }

    std::vector<std::size_t> source;
    for (const auto& name : series.columns) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw DataError("column '" + name + "' not found in " + path.string());
        }
        source.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        ++data_row;
        const auto cells = split_csv_line(line, line_no);
        if (cells.size() != header.size()) {
            throw DataError("row " + std::to_string(data_row) + " (line " + std::to_string(line_no) +
                            ") has " + std::to_string(cells.size()) + " cells, header has " +
                            std::to_string(header.size()));
        }
        std::vector<double> row;
        row.reserve(source.size());
        for (std::size_t k = 0; k < source.size(); ++k) {
            const std::string& cell = cells[source[k]];
            if (auto v = parse_double(cell)) {
                row.push_back(*v);
                continue;
            }
            if (categories != nullptr) {
                if (const auto it = categories->find(cell); it != categories->end()) {
                    row.push_back(it->second);
                    continue;
                }
            }
            throw DataError("cannot parse '" + cell + "' at row " + std::to_string(data_row) +
                            " (line " + std::to_string(line_no) + "), column \"" +
                            series.columns[k] + "\"");
        }
        series.rows.push_back(std::move(row));
    }
    if (series.rows.empty()) throw DataError("data file " + path.string() + " has no data rows");
    return series;
}

std::string to_csv(const RawSeries& series) {
    std::string out;
    for (std::size_t c = 0; c < series.columns.size(); ++c) {
        if (c) out += ',';
        out += series.columns[c];
    }
    out += '\n';
    for (const auto& row : series.rows) {
        out += join_doubles(row);
        out += '\n';
    }
    return out;
}

TimeSeriesDataset make_windows(const RawSeries& series, std::size_t window_len,
                               std::size_t horizon) {
    if (window_len == 0) throw DataError("window length must be >= 1");
    if (horizon == 0) throw DataError("horizon must be >= 1");
    const std::size_t n_rows = series.rows.size();
    if (n_rows < window_len + horizon) {
        throw DataError("need at least " + std::to_string(window_len + horizon) +
                        " rows for window " + std::to_string(window_len) + " and horizon " +
                        std::to_string(horizon) + ", got " + std::to_string(n_rows));
    }
    std::vector<std::size_t> feature_cols;
    for (const auto& f : series.features) feature_cols.push_back(series.column_index(f));
    const std::size_t target_col = series.column_index(series.target);

    TimeSeriesDataset ds;
    ds.window_len = window_len;
    ds.input_dim = feature_cols.size();
    ds.horizon = horizon;
    const std::size_t count = window_count(n_rows, window_len, horizon);
    ds.windows.reserve(count);
    for (std::size_t s = 0; s < count; ++s) {
        Window w;
        w.x = Tensor({window_len, feature_cols.size()});
        for (std::size_t t = 0; t < window_len; ++t) {
            for (std::size_t j = 0; j < feature_cols.size(); ++j) {
                w.x(t, j) = series.rows[s + t][feature_cols[j]];
            }
        }
        w.y = series.rows[s + window_len - 1 + horizon][target_col];
        w.last_target = series.rows[s + window_len - 1][target_col];
        w.start = s;
        ds.windows.push_back(std::move(w));
    }
    return ds;
}

Normalizer Normalizer::fit(const RawSeries& series, std::size_t n_rows) {
    n_rows = std::min(n_rows, series.rows.size());
    if (n_rows == 0) throw DataError("normalizer needs at least one row");
    auto stats = [&](std::size_t col) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n_rows; ++i) mu += series.rows[i][col];
        mu /= static_cast<double>(n_rows);
        double var = 0.0;
        for (std::size_t i = 0; i < n_rows; ++i) {
            const double d = series.rows[i][col] - mu;
            var += d * d;
        }
        var /= static_cast<double>(n_rows);
        return std::pair{mu, std::max(std::sqrt(var), kStdFloor)};
    };
    Normalizer n;
    for (const auto& f : series.features) {
        const auto [mu, sd] = stats(series.column_index(f));
        n.feature_mean.push_back(mu);
        n.feature_std.push_back(sd);
    }
    std::tie(n.target_mean, n.target_std) = stats(series.column_index(series.target));
    return n;
}

RawSeries Normalizer::apply(const RawSeries& series) const {
    if (series.features.size() != feature_mean.size()) {
        throw DataError("normalizer fitted on " + std::to_string(feature_mean.size()) +
                        " features, series has " + std::to_string(series.features.size()));
    }
    RawSeries out = series;
    const std::size_t tc = series.column_index(series.target);
    for (auto& row : out.rows) {
        row[tc] = normalize_target(row[tc]);
    }
    for (std::size_t f = 0; f < series.features.size(); ++f) {
        const std::size_t c = series.column_index(series.features[f]);
        if (c == tc) continue;
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            out.rows[i][c] = (series.rows[i][c] - feature_mean[f]) / feature_std[f];
        }
    }
    return out;
}

RawSeries Normalizer::invert(const RawSeries& normalized) const {
    RawSeries out = normalized;
    const std::size_t tc = normalized.column_index(normalized.target);
    for (auto& row : out.rows) {
        row[tc] = invert_target(row[tc]);
    }
    for (std::size_t f = 0; f < normalized.features.size(); ++f) {
        const std::size_t c = normalized.column_index(normalized.features[f]);
        if (c == tc) continue;
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            out.rows[i][c] = normalized.rows[i][c] * feature_std[f] + feature_mean[f];
        }
    }
    return out;
}

std::map<std::string, std::string> Normalizer::to_metadata() const {
    return {
        {"norm.feature_mean", join_doubles(feature_mean)},
        {"norm.feature_std", join_doubles(feature_std)},
        {"norm.target_mean", format_double(target_mean)},
        {"norm.target_std", format_double(target_std)},
    };
}

Normalizer Normalizer::from_metadata(const std::map<std::string, std::string>& metadata) {
    auto get = [&](const std::string& key) -> const std::string& {
        const auto it = metadata.find(key);
        if (it == metadata.end()) throw DataError("metadata is missing '" + key + "'");
        return it->second;
    };
    Normalizer n;
    n.feature_mean = split_doubles("norm.feature_mean", get("norm.feature_mean"));
    n.feature_std = split_doubles("norm.feature_std", get("norm.feature_std"));
    const auto tm = split_doubles("norm.target_mean", get("norm.target_mean"));
    const auto ts = split_doubles("norm.target_std", get("norm.target_std"));
    if (n.feature_mean.size() != n.feature_std.size() || tm.size() != 1 || ts.size() != 1) {
        throw DataError("inconsistent normalizer metadata");
    }
    n.target_mean = tm[0];
    n.target_std = ts[0];
    return n;
}

DatasetSplit chrono_split(const TimeSeriesDataset& dataset, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("train fraction must lie in (0, 1)");
    }
    const auto n_train = static_cast<std::size_t>(
        std::floor(static_cast<double>(dataset.size()) * train_fraction));
    if (n_train == 0 || n_train >= dataset.size()) {
        throw DataError("split of " + std::to_string(dataset.size()) + " windows at fraction " +
                        format_double(train_fraction) + " leaves one side empty");
    }
    DatasetSplit split;
    split.train = dataset;
    split.validation = dataset;
    split.train.windows.assign(dataset.windows.begin(), dataset.windows.begin() + n_train);
    split.validation.windows.clear();

    std::size_t train_last_row = 0;
    for (const auto& w : split.train.windows) {
        train_last_row = std::max(train_last_row, dataset.target_row(w));
    }
    for (std::size_t i = n_train; i < dataset.size(); ++i) {
        const auto& w = dataset.windows[i];
        if (dataset.target_row(w) > train_last_row) {
            split.validation.windows.push_back(w);
        }
    }
    if (split.validation.empty()) {
        throw DataError("no validation window survives the leakage filter");
    }
    return split;
}

std::size_t train_row_count(std::size_t rows, std::size_t window_len, std::size_t horizon,
                            double train_fraction) {
    const std::size_t windows = window_count(rows, window_len, horizon);
    const auto n_train =
        static_cast<std::size_t>(std::floor(static_cast<double>(windows) * train_fraction));
    if (n_train == 0) {
        throw DataError("no training windows at fraction " + format_double(train_fraction));
    }
    return n_train + window_len + horizon - 1;
}

PreparedData prepare_dataset(const RawSeries& series, std::size_t window_len, std::size_t horizon,
                             double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw DataError("train fraction must lie in (0, 1)");
    }
    if (series.rows.size() < window_len + horizon) {
        throw DataError("need at least " + std::to_string(window_len + horizon) +
                        " rows for window " + std::to_string(window_len) + " and horizon " +
                        std::to_string(horizon) + ", got " + std::to_string(series.rows.size()));
    }
    PreparedData out;
    out.normalizer = Normalizer::fit(
        series, train_row_count(series.rows.size(), window_len, horizon, train_fraction));
    out.normalized = out.normalizer.apply(series);
    auto split = chrono_split(make_windows(out.normalized, window_len, horizon), train_fraction);
    out.train = std::move(split.train);
    out.validation = std::move(split.validation);
    return out;
}

RawSeries synth_sine(std::size_t n, double period, double noise_std, std::uint64_t seed) {
    if (n == 0) throw DataError("synth_sine: n must be >= 1");
    if (!(period > 0.0)) throw DataError("synth_sine: period must be positive");
    Rng rng(seed);
    RawSeries s{{"value"}, {}, {"value"}, "value"};
    s.rows.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        double v = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period);
        if (noise_std > 0.0) v += rng.normal(0.0, noise_std);
        s.rows.push_back({v});
    }
    return s;
}

RawSeries synth_ar1(std::size_t n, double coeff, double noise_std, std::uint64_t seed) {
    if (n == 0) throw DataError("synth_ar1: n must be >= 1");
    if (!(std::abs(coeff) < 1.0)) throw DataError("synth_ar1: |coeff| must be < 1");
    Rng rng(seed);
    RawSeries s{{"value"}, {}, {"value"}, "value"};
    s.rows.reserve(n);
    double x = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        s.rows.push_back({x});
        x = coeff * x + (noise_std > 0.0 ? rng.normal(0.0, noise_std) : 0.0);
    }
    return s;
}

}  // namespace tst
