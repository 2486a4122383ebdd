#include "tst/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tst/error.hpp"

namespace tst::ad {

namespace {

std::size_t expected_arity(Op op) {
    switch (op) {
        case Op::leaf:
            return 0;
        case Op::matmul:
        case Op::add:
        case Op::sub:
        case Op::mul:
            return 2;
        case Op::layer_norm:
            return 3;
        case Op::concat_cols:
            return 0;  // variadic
        default:
            return 1;
    }
}

// Collapses a gradient of a's shape onto a row-broadcast operand of `target` shape.
Tensor reduce_to(const Tensor& grad, const Tensor::Shape& target) {
    if (grad.shape() == target) {
        return grad;
    }
    Tensor out(target);
    const std::size_t width = out.size();
    const auto g = grad.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
        out[i % width] += g[i];
    }
    return out;
}

void accumulate(Tensor& slot, const Tensor& contribution) {
    if (slot.empty()) {
        slot = contribution;
        return;
    }
    auto s = slot.data();
    const auto c = contribution.data();
    for (std::size_t i = 0; i < s.size(); ++i) {
        s[i] += c[i];
    }
}

}  // namespace

const char* op_name(Op op) noexcept {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::matmul: return "matmul";
        case Op::transpose: return "transpose";
        case Op::add: return "add";
        case Op::sub: return "sub";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::relu: return "relu";
        case Op::softmax_rows: return "softmax_rows";
        case Op::layer_norm: return "layer_norm";
        case Op::slice_cols: return "slice_cols";
        case Op::slice_rows: return "slice_rows";
        case Op::concat_cols: return "concat_cols";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
    }
    return "?";
}

const Tensor& Var::value() const {
    if (tape_ == nullptr) {
        throw ContractError("value() on a default-constructed Var");
    }
    return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ != nullptr && tape_->requires_grad(id_); }

const Tensor& Gradients::operator[](const Var& v) const {
    if (!has(v)) {
        throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
    }
    return grads_[v.id()];
}

bool Gradients::has(const Var& v) const noexcept {
    return v.id() < grads_.size() && !grads_[v.id()].empty();
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    nodes_.push_back(Node{Op::leaf, {}, {}, std::move(value), {}, {}, requires_grad});
    return Var(this, nodes_.size() - 1);
}

void Tape::check_owner(std::span<const Var> inputs) const {
    for (const auto& v : inputs) {
        if (v.tape() != this) {
            throw ContractError("Var belongs to a different tape");
        }
    }
}

Var Tape::record(Op op, std::span<const Var> inputs, OpAttrs attrs) {
    check_owner(inputs);
    if (op == Op::leaf) {
        throw ContractError("record(leaf): use Tape::leaf");
    }
    const std::size_t arity = expected_arity(op);
    if ((arity != 0 && inputs.size() != arity) || inputs.empty()) {
        throw ContractError(std::string("record(") + op_name(op) + "): wrong number of inputs");
    }

    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id()].value; };
    Node node{op, {}, attrs, {}, {}, {}, false};
    for (const auto& v : inputs) {
        node.inputs.push_back(v.id());
        node.requires_grad = node.requires_grad || nodes_[v.id()].requires_grad;
    }

    switch (op) {
        case Op::matmul:
            node.value = tst::matmul(in(0), in(1));
            break;
        case Op::transpose:
            node.value = tst::transpose(in(0));
            break;
        case Op::add:
            node.value = tst::add(in(0), in(1));
            break;
        case Op::sub:
            node.value = tst::sub(in(0), in(1));
            break;
        case Op::mul:
            node.value = tst::mul(in(0), in(1));
            break;
        case Op::scale:
            node.value = tst::scale(in(0), attrs.scalar);
            break;
        case Op::relu:
            node.value = tst::relu(in(0));
            break;
        case Op::softmax_rows:
            node.value = tst::softmax_rows(in(0));
            break;
        case Op::layer_norm: {
            const Tensor& x = in(0);
            node.value = tst::layer_norm_rows(x, in(1), in(2), attrs.scalar);
            const std::size_t m = x.rows();
            const std::size_t n = x.cols();
            node.saved_xhat = Tensor(x.shape());
            node.saved_inv = Tensor({m});
            for (std::size_t i = 0; i < m; ++i) {
                const auto row = x.row(i);
                double mu = 0.0;
                for (double v : row) {
                    mu += v;
                }
                mu /= static_cast<double>(n);
                double var = 0.0;
                for (double v : row) {
                    var += (v - mu) * (v - mu);
                }
                var /= static_cast<double>(n);
                const double inv = 1.0 / std::sqrt(var + attrs.scalar);
                node.saved_inv[i] = inv;
                for (std::size_t j = 0; j < n; ++j) {
                    node.saved_xhat(i, j) = (row[j] - mu) * inv;
                }
            }
            break;
        }
        case Op::slice_cols:
            node.value = tst::slice_cols(in(0), attrs.begin, attrs.count);
            break;
        case Op::slice_rows:
            node.value = tst::slice_rows(in(0), attrs.begin, attrs.count);
            break;
        case Op::concat_cols: {
            std::vector<Tensor> parts;
            parts.reserve(inputs.size());
            for (std::size_t i = 0; i < inputs.size(); ++i) {
                parts.push_back(in(i));
            }
            node.value = tst::concat_cols(parts);
            break;
        }
        case Op::sum:
            node.value = Tensor::scalar(tst::sum(in(0)));
            break;
        case Op::mean:
            node.value = Tensor::scalar(tst::mean(in(0)));
            break;
        case Op::leaf:
            break;
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

void Tape::backprop_node(const Node& node, const Tensor& up, std::vector<Tensor>& grads) const {
    auto input = [&](std::size_t i) -> const Node& { return nodes_[node.inputs[i]]; };
    auto send = [&](std::size_t i, const Tensor& g) {
        if (input(i).requires_grad) {
            accumulate(grads[node.inputs[i]], g);
        }
    };
    auto wants = [&](std::size_t i) { return input(i).requires_grad; };

    switch (node.op) {
        case Op::leaf:
            break;
        case Op::matmul:
            if (wants(0)) send(0, tst::matmul(up, tst::transpose(input(1).value)));
            if (wants(1)) send(1, tst::matmul(tst::transpose(input(0).value), up));
            break;
        case Op::transpose:
            send(0, tst::transpose(up));
            break;
        case Op::add:
            send(0, up);
            if (wants(1)) send(1, reduce_to(up, input(1).value.shape()));
            break;
        case Op::sub:
            send(0, up);
            if (wants(1)) send(1, reduce_to(tst::scale(up, -1.0), input(1).value.shape()));
            break;
        case Op::mul:
            if (wants(0)) send(0, tst::mul(up, input(1).value));
            if (wants(1)) {
                send(1, reduce_to(tst::elementwise(ElementwiseOp::mul, up, input(0).value),
                                  input(1).value.shape()));
            }
            break;
        case Op::scale:
            send(0, tst::scale(up, node.attrs.scalar));
            break;
        case Op::relu: {
            Tensor g = up;
            const auto x = input(0).value.data();
            auto gd = g.data();
            for (std::size_t i = 0; i < gd.size(); ++i) {
                if (!(x[i] > 0.0)) gd[i] = 0.0;
            }
            send(0, g);
            break;
        }
        case Op::softmax_rows: {
            // dx = y * (dy - sum_j dy_j y_j), row by row.
            const Tensor& y = node.value;
            Tensor g(y.shape());
            for (std::size_t i = 0; i < y.rows(); ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    dot += up(i, j) * y(i, j);
                }
                for (std::size_t j = 0; j < y.cols(); ++j) {
                    g(i, j) = y(i, j) * (up(i, j) - dot);
                }
            }
            send(0, g);
            break;
        }
        case Op::layer_norm: {
            const Tensor& xhat = node.saved_xhat;
            const Tensor& gain = input(1).value;
            const std::size_t m = xhat.rows();
            const std::size_t n = xhat.cols();
            const double inv_n = 1.0 / static_cast<double>(n);
            if (wants(0)) {
                Tensor gx(xhat.shape());
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_dh = 0.0;
                    double mean_dh_xhat = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = up(i, j) * gain[j];
                        mean_dh += dh;
                        mean_dh_xhat += dh * xhat(i, j);
                    }
                    mean_dh *= inv_n;
                    mean_dh_xhat *= inv_n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = up(i, j) * gain[j];
                        gx(i, j) = node.saved_inv[i] * (dh - mean_dh - xhat(i, j) * mean_dh_xhat);
                    }
                }
                send(0, gx);
            }
            if (wants(1)) send(1, reduce_to(tst::mul(up, xhat), gain.shape()));
            if (wants(2)) send(2, reduce_to(up, input(2).value.shape()));
            break;
        }
        case Op::slice_cols: {
            const Tensor& x = input(0).value;
            Tensor g(x.shape());
            for (std::size_t i = 0; i < x.rows(); ++i) {
                for (std::size_t j = 0; j < node.attrs.count; ++j) {
                    g(i, node.attrs.begin + j) = up(i, j);
                }
            }
            send(0, g);
            break;
        }
        case Op::slice_rows: {
            const Tensor& x = input(0).value;
            Tensor g(x.shape());
            const std::size_t n = x.cols();
            std::copy(up.data().begin(), up.data().end(),
                      g.data().begin() + node.attrs.begin * n);
            send(0, g);
            break;
        }
        case Op::concat_cols: {
            std::size_t offset = 0;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                const std::size_t w = input(k).value.cols();
                if (wants(k)) {
                    Tensor part = tst::slice_cols(up, offset, w);
                    send(k, Tensor(input(k).value.shape(), std::vector<double>(
                                                             part.data().begin(), part.data().end())));
                }
                offset += w;
            }
            break;
        }
        case Op::sum:
            send(0, Tensor(input(0).value.shape(), up[0]));
            break;
        case Op::mean:
            send(0, Tensor(input(0).value.shape(),
                           up[0] / static_cast<double>(input(0).value.size())));
            break;
    }
}

Gradients Tape::backward(const Var& root) const {
    if (root.tape() != this) {
        throw ContractError("backward: root belongs to a different tape");
    }
    const Node& top = nodes_.at(root.id());
    if (top.value.size() != 1) {
        throw ContractError("backward: root must be a scalar, got shape " +
                            shape_string(top.value.shape()));
    }

    std::vector<Tensor> grads(nodes_.size());
    if (top.requires_grad) {
        grads[root.id()] = Tensor(top.value.shape(), 1.0);
    }
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        const Node& node = nodes_[id];
        if (!node.requires_grad || grads[id].empty()) {
            continue;
        }
        backprop_node(node, grads[id], grads);
    }
    for (std::size_t id = 0; id < nodes_.size(); ++id) {
        if (nodes_[id].requires_grad && grads[id].empty()) {
            grads[id] = Tensor(nodes_[id].value.shape(), 0.0);
        }
    }

    Gradients out;
    out.grads_ = std::move(grads);
    return out;
}

namespace {

Var record_on(std::initializer_list<Var> inputs, Op op, OpAttrs attrs = {}) {
    const Var& first = *inputs.begin();
    if (first.tape() == nullptr) {
        throw ContractError(std::string(op_name(op)) + ": default-constructed Var");
    }
    return first.tape()->record(op, std::span<const Var>(inputs.begin(), inputs.size()), attrs);
}

}  // namespace

Var matmul(const Var& a, const Var& b) { return record_on({a, b}, Op::matmul); }
Var transpose(const Var& a) { return record_on({a}, Op::transpose); }
Var add(const Var& a, const Var& b) { return record_on({a, b}, Op::add); }
Var sub(const Var& a, const Var& b) { return record_on({a, b}, Op::sub); }
Var mul(const Var& a, const Var& b) { return record_on({a, b}, Op::mul); }
Var scale(const Var& a, double factor) { return record_on({a}, Op::scale, {factor, 0, 0}); }
Var relu(const Var& a) { return record_on({a}, Op::relu); }
Var softmax_rows(const Var& a) { return record_on({a}, Op::softmax_rows); }

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    return record_on({x, gain, bias}, Op::layer_norm, {eps, 0, 0});
}

Var slice_cols(const Var& a, std::size_t begin, std::size_t count) {
    return record_on({a}, Op::slice_cols, {0.0, begin, count});
}

Var slice_rows(const Var& a, std::size_t begin, std::size_t count) {
    return record_on({a}, Op::slice_rows, {0.0, begin, count});
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty() || parts.front().tape() == nullptr) {
        throw ContractError("concat_cols: no parts");
    }
    return parts.front().tape()->record(Op::concat_cols, parts);
}

Var sum(const Var& a) { return record_on({a}, Op::sum); }
Var mean(const Var& a) { return record_on({a}, Op::mean); }

double GradCheckReport::max_rel_error() const {
    double worst = 0.0;
    for (const auto& e : entries) {
        worst = std::max(worst, e.max_rel_error);
    }
    return worst;
}

GradCheckReport grad_check(const ScalarFn& f, const std::vector<NamedTensor>& params, double step,
                           double tolerance) {
    if (!(step > 0.0)) {
        throw ContractError("grad_check: step must be positive");
    }

    std::vector<Tensor> values;
    values.reserve(params.size());
    for (const auto& p : params) {
        values.push_back(p.value);
    }

    auto evaluate = [&](const std::vector<Tensor>& at) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(at.size());
        for (const auto& v : at) {
            leaves.push_back(tape.constant(v));
        }
        const Var out = f(tape, leaves);
        if (out.value().size() != 1) {
            throw ContractError("grad_check: function must return a scalar, got " +
                                shape_string(out.value().shape()));
        }
        return out.value()[0];
    };

    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(values.size());
    for (const auto& v : values) {
        leaves.push_back(tape.leaf(v, true));
    }
    const Var root = f(tape, leaves);
    if (root.value().size() != 1) {
        throw ContractError("grad_check: function must return a scalar, got " +
                            shape_string(root.value().shape()));
    }
    const Gradients grads = tape.backward(root);

    GradCheckReport report;
    report.step = step;
    report.tolerance = tolerance;
    for (std::size_t p = 0; p < values.size(); ++p) {
        GradCheckEntry entry{params[p].name, values[p].size(), 0.0, 0.0};
        const Tensor& analytic = grads[leaves[p]];
        for (std::size_t i = 0; i < values[p].size(); ++i) {
            const double original = values[p][i];
            values[p][i] = original + step;
            const double plus = evaluate(values);
            values[p][i] = original - step;
            const double minus = evaluate(values);
            values[p][i] = original;

            const double numeric = (plus - minus) / (2.0 * step);
            const double a = analytic[i];
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            entry.max_rel_error = std::max(entry.max_rel_error, rel);
            entry.max_abs_grad = std::max(entry.max_abs_grad, std::abs(a));
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace tst::ad
