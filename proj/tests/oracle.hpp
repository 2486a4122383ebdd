#pragma once

// Straight-line reference evaluations used as test oracles. Everything here works on
// nested std::vector with explicit loops and never calls the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "tst/model.hpp"

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

inline Mat to_mat(const tst::Tensor& t) {
    Mat m(t.rows(), Vec(t.cols()));
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.data()[i * t.cols() + j];
    return m;
}

inline Vec to_vec(const tst::Tensor& t) { return Vec(t.data().begin(), t.data().end()); }

// W (rows x cols) times column vector v.
inline Vec mat_vec(const Mat& w, const Vec& v) {
    Vec out(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) out[i] += w[i][j] * v[j];
    return out;
}

inline double pe_value(std::size_t t, std::size_t col, std::size_t dm) {
    const double i = static_cast<double>(col / 2);
    const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * i / static_cast<double>(dm));
    return col % 2 == 0 ? std::sin(angle) : std::cos(angle);
}

struct HeadOut {
    Mat out;      // T x h
    Mat weights;  // T x T
};

// Q_t = Wq H_t, K_t = Wk H_t, V_t = Wv H_t; a = exp(Q.K / sqrt(dm)) / sum; O_t = sum a V.
inline HeadOut head(const Mat& H, const Mat& wq, const Mat& wk, const Mat& wv, std::size_t dm) {
    const std::size_t T = H.size();
    Mat Q, K, V;
    for (const auto& h : H) {
        Q.push_back(mat_vec(wq, h));
        K.push_back(mat_vec(wk, h));
        V.push_back(mat_vec(wv, h));
    }
    HeadOut r{Mat(T, Vec(V[0].size(), 0.0)), Mat(T, Vec(T, 0.0))};
    for (std::size_t t = 0; t < T; ++t) {
        double denom = 0.0;
        for (std::size_t u = 0; u < T; ++u) {
            double dot = 0.0;
            for (std::size_t k = 0; k < Q[t].size(); ++k) dot += Q[t][k] * K[u][k];
            r.weights[t][u] = std::exp(dot / std::sqrt(static_cast<double>(dm)));
            denom += r.weights[t][u];
        }
        for (std::size_t u = 0; u < T; ++u) r.weights[t][u] /= denom;
        for (std::size_t u = 0; u < T; ++u)
            for (std::size_t k = 0; k < V[u].size(); ++k) r.out[t][k] += r.weights[t][u] * V[u][k];
    }
    return r;
}

inline Vec layer_norm(const Vec& x, const Vec& gain, const Vec& bias, double eps) {
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    Vec out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mu) / std::sqrt(var + eps) * gain[j] + bias[j];
    return out;
}

inline Vec ffn(const Vec& x, const Mat& w1, const Vec& b1, const Mat& w2, const Vec& b2) {
    Vec hidden = mat_vec(w1, x);
    for (std::size_t i = 0; i < hidden.size(); ++i) hidden[i] = std::max(0.0, hidden[i] + b1[i]);
    Vec out = mat_vec(w2, hidden);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b2[i];
    return out;
}

// y_T for one window, no residual paths.
inline double forward(const tst::Tensor& x, const tst::ModelParams& p, const tst::ModelConfig& c) {
    const std::size_t T = c.window_len;
    const std::size_t dm = c.model_dim;
    const Mat X = to_mat(x);
    const Mat We = to_mat(p.w_e);
    const Vec be = to_vec(p.b_e);

    Mat H(T);
    for (std::size_t t = 0; t < T; ++t) {
        H[t] = mat_vec(We, X[t]);
        for (std::size_t i = 0; i < dm; ++i) {
            H[t][i] += be[i];
            if (c.use_positional_encoding) H[t][i] += pe_value(t, i, dm);
        }
    }

    for (const auto& block : p.blocks) {
        Mat concat(T);
        for (const auto& hp : block.heads) {
            const HeadOut o = head(H, to_mat(hp.w_q), to_mat(hp.w_k), to_mat(hp.w_v), dm);
            for (std::size_t t = 0; t < T; ++t) concat[t].insert(concat[t].end(), o.out[t].begin(), o.out[t].end());
        }
        const Mat Wo = to_mat(block.w_o);
        Mat next(T);
        for (std::size_t t = 0; t < T; ++t) {
            Vec mh(dm, 0.0);
            for (std::size_t j = 0; j < dm; ++j)
                for (std::size_t k = 0; k < dm; ++k) mh[j] += concat[t][k] * Wo[k][j];
            const Vec normed = layer_norm(mh, to_vec(block.ln_gain), to_vec(block.ln_bias), 1e-5);
            next[t] = ffn(normed, to_mat(block.ffn_w1), to_vec(block.ffn_b1), to_mat(block.ffn_w2),
                          to_vec(block.ffn_b2));
        }
        H = next;
    }

    const Vec wy = to_vec(p.w_y);
    double y = p.b_y.data()[0];
    for (std::size_t j = 0; j < dm; ++j) y += wy[j] * H[T - 1][j];
    return y;
}

}  // namespace oracle
