#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tst/tensor.hpp"

// Tape-based reverse-mode differentiation over the tensor kernels.
namespace tst::ad {

// The differentiable op set. Anything the model does not need is left out.
enum class Op {
    leaf,
    matmul,
    transpose,
    add,
    sub,
    mul,
    scale,
    relu,
    softmax_rows,
    layer_norm,
    slice_cols,
    slice_rows,
    concat_cols,
    sum,
    mean,
};

const char* op_name(Op op) noexcept;

// Non-tensor arguments of an op: scale factor, LayerNorm eps, slice bounds.
struct OpAttrs {
    double scalar = 0.0;
    std::size_t begin = 0;
    std::size_t count = 0;
};

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    std::size_t id() const noexcept { return id_; }
    bool requires_grad() const;
    Tape* tape() const noexcept { return tape_; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Gradients {
public:
    // Gradient with the same shape as v.value(). Throws ContractError for nodes
    // that do not require a gradient.
    const Tensor& operator[](const Var& v) const;
    bool has(const Var& v) const noexcept;

private:
    friend class Tape;
    std::vector<Tensor> grads_;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Runs the forward kernel for `op` and appends one node.
    Var record(Op op, std::span<const Var> inputs, OpAttrs attrs = {});

    // root must hold exactly one element. Every requires_grad node reachable or not
    // gets a gradient; unreachable ones are zero.
    Gradients backward(const Var& root) const;

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

private:
    struct Node {
        Op op;
        std::vector<std::size_t> inputs;
        OpAttrs attrs;
        Tensor value;
        // LayerNorm keeps the normalized rows and per-row 1/sqrt(var + eps).
        Tensor saved_xhat;
        Tensor saved_inv;
        bool requires_grad;
    };

    void check_owner(std::span<const Var> inputs) const;
    void backprop_node(const Node& node, const Tensor& upstream, std::vector<Tensor>& grads) const;

    std::vector<Node> nodes_;
};

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double factor);
Var relu(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);
Var slice_cols(const Var& a, std::size_t begin, std::size_t count);
Var slice_rows(const Var& a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var sum(const Var& a);
Var mean(const Var& a);

// Scalar-valued function of a list of parameter leaves, built on the given tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

struct NamedTensor {
    std::string name;
    Tensor value;
};

struct GradCheckEntry {
    std::string name;
    std::size_t elements = 0;
    double max_rel_error = 0.0;
    double max_abs_grad = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double step = 0.0;
    double tolerance = 0.0;

    double max_rel_error() const;
    bool passed() const { return max_rel_error() < tolerance; }
};

// Central differences (f(p + step) - f(p - step)) / (2 step) against the tape gradient,
// element by element. Relative error is |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params, double step,
                           double tolerance);

}  // namespace tst::ad
