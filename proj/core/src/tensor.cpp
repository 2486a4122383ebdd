#include "tst/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "tst/error.hpp"
#include "tst/rng.hpp"

namespace tst {

namespace {

std::size_t extent_product(const Tensor::Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) {
        if (e == 0) {
            throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
        }
        n *= e;
    }
    return n;
}

void require_matrix(const Tensor& a, const char* what) {
    if (a.empty()) {
        throw DimensionError(std::string(what) + ": empty tensor");
    }
    if (a.rank() > 2) {
        throw DimensionError(std::string(what) + ": expected rank <= 2, got " +
                             shape_string(a.shape()));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    data_.assign(extent_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (extent_product(shape_) != data_.size()) {
        throw DimensionError("data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw DimensionError("ragged matrix literal");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

Tensor Tensor::identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) {
        out(i, i) = 1.0;
    }
    return out;
}

std::size_t Tensor::rows() const {
    switch (rank()) {
        case 0:
            return 0;
        case 1:
            return 1;
        case 2:
            return shape_[0];
        default:
            throw DimensionError("rows() on rank " + std::to_string(rank()) + " tensor");
    }
}

std::size_t Tensor::cols() const {
    switch (rank()) {
        case 0:
            return 0;
        case 1:
            return shape_[0];
        case 2:
            return shape_[1];
        default:
            throw DimensionError("cols() on rank " + std::to_string(rank()) + " tensor");
    }
}

std::span<const double> Tensor::row(std::size_t r) const {
    const std::size_t c = cols();
    return std::span<const double>(data_).subspan(r * c, c);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) {
        return false;
    }
    // Bitwise, so -0.0 != 0.0 and NaN payloads compare by representation.
    return std::equal(a.data_.begin(), a.data_.end(), b.data_.begin(), [](double x, double y) {
        return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
    });
}

std::string shape_string(const Tensor::Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    if (b.rows() != k) {
        throw DimensionError("matmul: inner extents disagree, " + shape_string(a.shape()) + " x " +
                             shape_string(b.shape()));
    }
    Tensor out({m, n});
    const auto A = a.data();
    const auto B = b.data();
    auto C = out.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += A[i * k + p] * B[p * n + j];
            }
            C[i * n + j] = acc;
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out(j, i) = a(i, j);
        }
    }
    return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
    if (a.empty() || b.empty()) {
        throw DimensionError("elementwise: empty tensor");
    }
    const bool same = a.shape() == b.shape();
    const std::size_t width = a.shape().back();
    const bool row_broadcast =
        !same && b.size() == width && (b.rank() == 1 || (b.rank() == 2 && b.shape()[0] == 1));
    if (!same && !row_broadcast) {
        throw DimensionError("elementwise: cannot broadcast " + shape_string(b.shape()) +
                             " onto " + shape_string(a.shape()));
    }
    Tensor out(a.shape());
    const auto A = a.data();
    const auto B = b.data();
    auto C = out.data();
    for (std::size_t i = 0; i < A.size(); ++i) {
        const double y = same ? B[i] : B[i % width];
        switch (op) {
            case ElementwiseOp::add:
                C[i] = A[i] + y;
                break;
            case ElementwiseOp::sub:
                C[i] = A[i] - y;
                break;
            case ElementwiseOp::mul:
                C[i] = A[i] * y;
                break;
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::mul, a, b); }

Tensor scale(const Tensor& a, double factor) {
    Tensor out = a;
    for (auto& v : out.data()) {
        v *= factor;
    }
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = a;
    for (auto& v : out.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor softmax_rows(const Tensor& a) {
    require_matrix(a, "softmax_rows");
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Tensor out(a.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const auto in = a.row(i);
        const double top = *std::max_element(in.begin(), in.end());
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(in[j] - top);
            out(i, j) = e;
            total += e;
        }
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) /= total;
        }
    }
    return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    if (gain.size() != n || bias.size() != n) {
        throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                             shape_string(bias.shape()) + " do not match row width " +
                             std::to_string(n));
    }
    Tensor out(x.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const auto in = x.row(i);
        double mu = 0.0;
        for (double v : in) {
            mu += v;
        }
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (double v : in) {
            var += (v - mu) * (v - mu);
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            out(i, j) = (in[j] - mu) * inv * gain[j] + bias[j];
        }
    }
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_cols: no parts");
    }
    const std::size_t m = parts.front().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != m) {
            throw DimensionError("concat_cols: row count " + std::to_string(p.rows()) +
                                 " differs from " + std::to_string(m));
        }
        total += p.cols();
    }
    Tensor out({m, total});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.cols();
        for (std::size_t i = 0; i < m; ++i) {
            std::copy_n(p.row(i).begin(), w, out.data().begin() + i * total + offset);
        }
        offset += w;
    }
    return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix(a, "slice_cols");
    if (count == 0 || begin + count > a.cols()) {
        throw DimensionError("slice_cols: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of range for " +
                             shape_string(a.shape()));
    }
    const std::size_t m = a.rows();
    Tensor out({m, count});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.row(i).begin() + begin, count, out.data().begin() + i * count);
    }
    return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix(a, "slice_rows");
    if (count == 0 || begin + count > a.rows()) {
        throw DimensionError("slice_rows: [" + std::to_string(begin) + ", " +
                             std::to_string(begin + count) + ") out of range for " +
                             shape_string(a.shape()));
    }
    const std::size_t n = a.cols();
    std::vector<double> data(a.data().begin() + begin * n, a.data().begin() + (begin + count) * n);
    return Tensor({count, n}, std::move(data));
}

double sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) {
        acc += v;
    }
    return acc;
}

double mean(const Tensor& a) {
    if (a.empty()) {
        throw DimensionError("mean: empty tensor");
    }
    return sum(a) / static_cast<double>(a.size());
}

Tensor xavier_init(std::size_t rows, std::size_t cols, Rng& rng) {
    if (rows == 0 || cols == 0) {
        throw DimensionError("xavier_init: rows and cols must be >= 1");
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Tensor out({rows, cols});
    for (auto& v : out.data()) {
        v = rng.uniform(-bound, bound);
    }
    return out;
}

}  // namespace tst
