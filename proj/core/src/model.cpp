#include "tst/model.hpp"

#include <cmath>
#include <utility>

#include "tst/error.hpp"
#include "tst/rng.hpp"

namespace tst {

namespace {

void require_finite(const ad::Var& v, const std::string& stage) {
    if (!v.value().all_finite()) {
        throw NumericError("forward: non-finite value after stage '" + stage + "'");
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (window_len == 0) throw ConfigError("window length must be >= 1");
    if (input_dim == 0) throw ConfigError("input dimension must be >= 1");
    if (model_dim == 0) throw ConfigError("model dimension must be >= 1");
    if (n_heads == 0) throw ConfigError("head count must be >= 1");
    if (ffn_hidden == 0) throw ConfigError("ffn hidden width must be >= 1");
    if (n_blocks == 0) throw ConfigError("block count must be >= 1");
    if (model_dim % n_heads != 0) {
        throw ConfigError("model dimension " + std::to_string(model_dim) +
                          " is not divisible by head count " + std::to_string(n_heads));
    }
}

std::vector<std::pair<std::string, Tensor::Shape>> param_layout(const ModelConfig& c) {
    c.validate();
    const std::size_t d = c.input_dim;
    const std::size_t dm = c.model_dim;
    const std::size_t h = c.head_dim();
    const std::size_t f = c.ffn_hidden;

    ModelParamsT<Tensor::Shape> shapes;
    shapes.w_e = {dm, d};
    shapes.b_e = {dm};
    shapes.blocks.resize(c.n_blocks);
    for (auto& block : shapes.blocks) {
        block.heads.assign(c.n_heads, HeadParamsT<Tensor::Shape>{{h, dm}, {h, dm}, {h, dm}});
        block.w_o = {dm, dm};
        block.ln_gain = {dm};
        block.ln_bias = {dm};
        block.ffn_w1 = {f, dm};
        block.ffn_b1 = {f};
        block.ffn_w2 = {dm, f};
        block.ffn_b2 = {dm};
    }
    shapes.w_y = {1, dm};
    shapes.b_y = {1};

    std::vector<std::pair<std::string, Tensor::Shape>> out;
    for_each_param(shapes, [&](const std::string& name, const Tensor::Shape& s) {
        out.emplace_back(name, s);
    });
    return out;
}

ModelParams init_params(const ModelConfig& config) {
    const auto layout = param_layout(config);
    Rng rng(config.seed);
    std::vector<Tensor> tensors;
    tensors.reserve(layout.size());
    for (const auto& [name, shape] : layout) {
        if (shape.size() == 2) {
            tensors.push_back(xavier_init(shape[0], shape[1], rng));
        } else if (name.ends_with("ln_gain")) {
            tensors.emplace_back(shape, 1.0);
        } else {
            tensors.emplace_back(shape, 0.0);
        }
    }
    return params_from_tensors(config, std::move(tensors));
}

ModelParams zero_params(const ModelConfig& config) {
    std::vector<Tensor> tensors;
    for (const auto& [name, shape] : param_layout(config)) {
        tensors.emplace_back(shape, 0.0);
    }
    return params_from_tensors(config, std::move(tensors));
}

ModelParams params_from_tensors(const ModelConfig& config, std::vector<Tensor> tensors) {
    const auto layout = param_layout(config);
    if (tensors.size() != layout.size()) {
        throw DimensionError("expected " + std::to_string(layout.size()) + " parameter tensors, got " +
                             std::to_string(tensors.size()));
    }
    ModelParams params;
    params.blocks.resize(config.n_blocks);
    for (auto& block : params.blocks) {
        block.heads.resize(config.n_heads);
    }
    std::size_t i = 0;
    for_each_param(params, [&](const std::string&, Tensor& slot) { slot = std::move(tensors[i++]); });
    validate_params(params, config);
    return params;
}

void validate_params(const ModelParams& params, const ModelConfig& config) {
    const auto layout = param_layout(config);
    std::size_t count = 0;
    for_each_param(params, [&](const std::string& name, const Tensor& t) {
        if (count >= layout.size() || layout[count].first != name) {
            throw DimensionError("parameter structure does not match config at '" + name + "'");
        }
        if (t.shape() != layout[count].second) {
            throw DimensionError("parameter '" + name + "' has shape " + shape_string(t.shape()) +
                                 ", config expects " + shape_string(layout[count].second));
        }
        if (!t.all_finite()) {
            throw NumericError("parameter '" + name + "' has non-finite entries");
        }
        ++count;
    });
    if (count != layout.size()) {
        throw DimensionError("parameter structure does not match config (block/head count)");
    }
}

std::vector<ad::NamedTensor> named_tensors(const ModelParams& params) {
    std::vector<ad::NamedTensor> out;
    for_each_param(params, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
    return out;
}

std::vector<Tensor*> tensor_refs(ModelParams& params) {
    std::vector<Tensor*> out;
    for_each_param(params, [&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
}

ParamVars attach(ad::Tape& tape, const ModelParams& params, bool requires_grad) {
    ParamVars vars;
    vars.blocks.resize(params.blocks.size());
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        vars.blocks[b].heads.resize(params.blocks[b].heads.size());
    }
    std::vector<const Tensor*> sources;
    for_each_param(params, [&](const std::string&, const Tensor& t) { sources.push_back(&t); });
    std::size_t i = 0;
    for_each_param(vars, [&](const std::string&, ad::Var& v) {
        v = tape.leaf(*sources[i++], requires_grad);
    });
    return vars;
}

Tensor positional_encoding(std::size_t window_len, std::size_t model_dim) {
    Tensor pe({window_len, model_dim});
    for (std::size_t t = 0; t < window_len; ++t) {
        for (std::size_t j = 0; j < model_dim; ++j) {
            const std::size_t i = j / 2;
            const double exponent = static_cast<double>(2 * i) / static_cast<double>(model_dim);
            const double angle = static_cast<double>(t) / std::pow(10000.0, exponent);
            pe(t, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return pe;
}

namespace graph {

ad::Var embed(const ad::Var& x, const ad::Var& w_e, const ad::Var& b_e) {
    return ad::add(ad::matmul(x, ad::transpose(w_e)), b_e);
}

ad::Var attention_head(const ad::Var& h, const HeadParamsT<ad::Var>& head, std::size_t model_dim,
                       Tensor* weights_out) {
    const ad::Var q = ad::matmul(h, ad::transpose(head.w_q));
    const ad::Var k = ad::matmul(h, ad::transpose(head.w_k));
    const ad::Var v = ad::matmul(h, ad::transpose(head.w_v));
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(model_dim));
    const ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_scale);
    const ad::Var weights = ad::softmax_rows(scores);
    if (weights_out != nullptr) {
        *weights_out = weights.value();
    }
    return ad::matmul(weights, v);
}

ad::Var multi_head(const ad::Var& h, const BlockParamsT<ad::Var>& block, std::size_t model_dim,
                   std::size_t block_index, std::vector<AttentionRecord>* records) {
    std::vector<ad::Var> outputs;
    outputs.reserve(block.heads.size());
    for (std::size_t i = 0; i < block.heads.size(); ++i) {
        Tensor weights;
        outputs.push_back(attention_head(h, block.heads[i], model_dim, &weights));
        if (records != nullptr) {
            records->push_back({block_index, i, std::move(weights)});
        }
    }
    return ad::matmul(ad::concat_cols(outputs), block.w_o);
}

ad::Var ffn(const ad::Var& x, const ad::Var& w1, const ad::Var& b1, const ad::Var& w2,
            const ad::Var& b2) {
    const ad::Var hidden = ad::relu(ad::add(ad::matmul(x, ad::transpose(w1)), b1));
    return ad::add(ad::matmul(hidden, ad::transpose(w2)), b2);
}

ad::Var forward(const ad::Var& x, const ParamVars& params, const ModelConfig& config,
                std::vector<AttentionRecord>* records) {
    const auto& shape = x.value().shape();
    if (shape.size() != 2 || shape[0] != config.window_len || shape[1] != config.input_dim) {
        throw DimensionError("forward: input shape " + shape_string(shape) + " does not match [" +
                             std::to_string(config.window_len) + "x" +
                             std::to_string(config.input_dim) + "]");
    }
    ad::Tape& tape = *x.tape();

    ad::Var h = embed(x, params.w_e, params.b_e);
    require_finite(h, "embed");
    if (config.use_positional_encoding) {
        h = ad::add(h, tape.constant(positional_encoding(config.window_len, config.model_dim)));
        require_finite(h, "positional_encoding");
    }

    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        const auto& block = params.blocks[b];
        const std::string stage = "block" + std::to_string(b) + ".";
        ad::Var attn = multi_head(h, block, config.model_dim, b, records);
        require_finite(attn, stage + "attention");
        if (config.use_residual) {
            attn = ad::add(h, attn);
        }
        const ad::Var normed = ad::layer_norm(attn, block.ln_gain, block.ln_bias, kLayerNormEps);
        require_finite(normed, stage + "layer_norm");
        ad::Var out = ffn(normed, block.ffn_w1, block.ffn_b1, block.ffn_w2, block.ffn_b2);
        require_finite(out, stage + "ffn");
        if (config.use_residual) {
            out = ad::add(normed, out);
        }
        h = out;
    }

    const ad::Var last = ad::slice_rows(h, config.window_len - 1, 1);
    const ad::Var y = ad::add(ad::matmul(last, ad::transpose(params.w_y)), params.b_y);
    require_finite(y, "readout");
    return y;
}

}  // namespace graph

Tensor embed(const Tensor& x, const Tensor& w_e, const Tensor& b_e) {
    ad::Tape tape;
    return graph::embed(tape.constant(x), tape.constant(w_e), tape.constant(b_e)).value();
}

AttentionHeadResult attention_head(const Tensor& h, const Tensor& w_q, const Tensor& w_k,
                                   const Tensor& w_v, std::size_t model_dim) {
    ad::Tape tape;
    HeadParamsT<ad::Var> head{tape.constant(w_q), tape.constant(w_k), tape.constant(w_v)};
    AttentionHeadResult result;
    result.output = graph::attention_head(tape.constant(h), head, model_dim, &result.weights).value();
    return result;
}

MultiHeadResult multi_head(const Tensor& h, const std::vector<HeadParamsT<Tensor>>& heads,
                           const Tensor& w_o) {
    if (heads.empty()) {
        throw DimensionError("multi_head: no heads");
    }
    ad::Tape tape;
    BlockParamsT<ad::Var> block;
    for (const auto& head : heads) {
        block.heads.push_back(
            {tape.constant(head.w_q), tape.constant(head.w_k), tape.constant(head.w_v)});
    }
    block.w_o = tape.constant(w_o);
    MultiHeadResult result;
    result.output = graph::multi_head(tape.constant(h), block, h.cols(), 0, &result.records).value();
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    return layer_norm_rows(x, gain, bias, eps);
}

Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2) {
    ad::Tape tape;
    return graph::ffn(tape.constant(x), tape.constant(w1), tape.constant(b1), tape.constant(w2),
                      tape.constant(b2))
        .value();
}

Prediction forward(const Tensor& x, const ModelParams& params, const ModelConfig& config) {
    config.validate();
    ad::Tape tape;
    const ParamVars vars = attach(tape, params, false);
    Prediction out;
    out.value = graph::forward(tape.constant(x), vars, config, &out.records).value()[0];
    return out;
}

}  // namespace tst
