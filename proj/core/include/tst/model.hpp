#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tst/autodiff.hpp"
#include "tst/tensor.hpp"

namespace tst {

inline constexpr double kLayerNormEps = 1e-5;

struct ModelConfig {
    std::size_t window_len = 16;  // T
    std::size_t input_dim = 1;    // d
    std::size_t model_dim = 32;   // d', split evenly across heads
    std::size_t n_heads = 2;
    std::size_t ffn_hidden = 128;
    std::size_t n_blocks = 1;
    bool use_positional_encoding = true;
    // Off by default: the block is FFN(LayerNorm(MultiHead(H))) with no skip paths.
    bool use_residual = false;
    std::uint64_t seed = 42;

    std::size_t head_dim() const { return model_dim / n_heads; }

    // Throws ConfigError on a zero extent or model_dim not divisible by n_heads.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Leaf type is Tensor for storage and ad::Var on a tape.
template <class T>
struct HeadParamsT {
    T w_q;  // h x d'
    T w_k;
    T w_v;
};

template <class T>
struct BlockParamsT {
    std::vector<HeadParamsT<T>> heads;
    T w_o;      // d' x d'
    T ln_gain;  // d'
    T ln_bias;  // d'
    T ffn_w1;   // ffn_hidden x d'
    T ffn_b1;   // ffn_hidden
    T ffn_w2;   // d' x ffn_hidden
    T ffn_b2;   // d'
};

template <class T>
struct ModelParamsT {
    T w_e;  // d' x d
    T b_e;  // d'
    std::vector<BlockParamsT<T>> blocks;
    T w_y;  // 1 x d'
    T b_y;  // 1
};

using ModelParams = ModelParamsT<Tensor>;
using ParamVars = ModelParamsT<ad::Var>;

// Calls fn(name, member) for every parameter, in checkpoint order:
// w_e, b_e, then per block (per head w_q, w_k, w_v), w_o, ln_gain, ln_bias,
// ffn_w1, ffn_b1, ffn_w2, ffn_b2, and finally w_y, b_y.
template <class P, class F>
void for_each_param(P& params, F&& fn) {
    fn(std::string("w_e"), params.w_e);
    fn(std::string("b_e"), params.b_e);
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        auto& block = params.blocks[b];
        const std::string prefix = "block" + std::to_string(b) + ".";
        for (std::size_t h = 0; h < block.heads.size(); ++h) {
            const std::string hp = prefix + "head" + std::to_string(h) + ".";
            fn(hp + "w_q", block.heads[h].w_q);
            fn(hp + "w_k", block.heads[h].w_k);
            fn(hp + "w_v", block.heads[h].w_v);
        }
        fn(prefix + "w_o", block.w_o);
        fn(prefix + "ln_gain", block.ln_gain);
        fn(prefix + "ln_bias", block.ln_bias);
        fn(prefix + "ffn_w1", block.ffn_w1);
        fn(prefix + "ffn_b1", block.ffn_b1);
        fn(prefix + "ffn_w2", block.ffn_w2);
        fn(prefix + "ffn_b2", block.ffn_b2);
    }
    fn(std::string("w_y"), params.w_y);
    fn(std::string("b_y"), params.b_y);
}

// Expected shape of every parameter, in for_each_param order.
std::vector<std::pair<std::string, Tensor::Shape>> param_layout(const ModelConfig& config);

// Xavier-uniform matrices, zero biases, unit LayerNorm gain.
ModelParams init_params(const ModelConfig& config);
ModelParams zero_params(const ModelConfig& config);

// Throws DimensionError naming the first parameter whose shape disagrees with config,
// NumericError on a non-finite entry.
void validate_params(const ModelParams& params, const ModelConfig& config);

std::vector<ad::NamedTensor> named_tensors(const ModelParams& params);
std::vector<Tensor*> tensor_refs(ModelParams& params);
ModelParams params_from_tensors(const ModelConfig& config, std::vector<Tensor> tensors);

ParamVars attach(ad::Tape& tape, const ModelParams& params, bool requires_grad);

struct AttentionRecord {
    std::size_t block = 0;
    std::size_t head = 0;
    Tensor weights;  // T x T, row t holds a(t, .)
};

struct AttentionHeadResult {
    Tensor output;   // T x h
    Tensor weights;  // T x T
};

struct MultiHeadResult {
    Tensor output;  // T x d'
    std::vector<AttentionRecord> records;
};

struct Prediction {
    double value = 0.0;
    std::vector<AttentionRecord> records;
};

// Z = X W_e^T + b_e, one row per time step.
Tensor embed(const Tensor& x, const Tensor& w_e, const Tensor& b_e);

// (t, 2i) -> sin(t / 10000^(2i/d')), (t, 2i+1) -> cos(t / 10000^(2i/d')), t from 0.
Tensor positional_encoding(std::size_t window_len, std::size_t model_dim);

// Scores are Q K^T / sqrt(model_dim), softmaxed over all T keys (no causal mask).
AttentionHeadResult attention_head(const Tensor& h, const Tensor& w_q, const Tensor& w_k,
                                   const Tensor& w_v, std::size_t model_dim);

MultiHeadResult multi_head(const Tensor& h, const std::vector<HeadParamsT<Tensor>>& heads,
                           const Tensor& w_o);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

// ReLU(X W1^T + b1) W2^T + b2.
Tensor ffn(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2,
           const Tensor& b2);

// Throws NumericError naming the first stage that produced a non-finite value.
Prediction forward(const Tensor& x, const ModelParams& params, const ModelConfig& config);

// Tape versions of the above. The tensor overloads are thin wrappers around these.
namespace graph {

ad::Var embed(const ad::Var& x, const ad::Var& w_e, const ad::Var& b_e);
ad::Var attention_head(const ad::Var& h, const HeadParamsT<ad::Var>& head, std::size_t model_dim,
                       Tensor* weights_out = nullptr);
ad::Var multi_head(const ad::Var& h, const BlockParamsT<ad::Var>& block, std::size_t model_dim,
                   std::size_t block_index, std::vector<AttentionRecord>* records = nullptr);
ad::Var ffn(const ad::Var& x, const ad::Var& w1, const ad::Var& b1, const ad::Var& w2,
            const ad::Var& b2);

// Returns a 1 x 1 prediction.
ad::Var forward(const ad::Var& x, const ParamVars& params, const ModelConfig& config,
                std::vector<AttentionRecord>* records = nullptr);

}  // namespace graph

}  // namespace tst
