#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tst {

class Rng;

// Dense row-major array of doubles. Rank 1 and rank 2 are what the model uses;
// higher ranks are storable but the kernels below only accept rank <= 2.
class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);
    static Tensor scalar(double value);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    // Matrix view of rank <= 2 tensors: a vector of length n is a 1 x n row.
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const;

    bool all_finite() const noexcept;

    // Bitwise comparison of shape and contents.
    friend bool operator==(const Tensor& a, const Tensor& b);

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);

enum class ElementwiseOp { add, sub, mul };

// a[m x k] * b[k x n]; the k-sum runs left to right.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Same-shape pointwise op, or b broadcast as a row vector over a's last dimension.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor relu(const Tensor& a);

// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& a);

// Per row: (x - mean) / sqrt(var + eps) * gain + bias, var being the population variance.
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);

double sum(const Tensor& a);
double mean(const Tensor& a);

// Uniform on [-sqrt(6 / (rows + cols)), +sqrt(6 / (rows + cols))].
Tensor xavier_init(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace tst
