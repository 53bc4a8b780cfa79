#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "lcr/graph.hpp"
#include "lcr/params.hpp"
#include "lcr/tensor.hpp"

namespace lcr::nn {

// The layer code below is written once against a "fabric" that supplies
// parameter leaves. PlainFabric runs on bare tensors for inference paths;
// TapeFabric records the identical kernel sequence for training, so both
// produce bitwise-equal values.
struct PlainFabric {
    using T = Tensor2;
    const ParamStore& ps;
    T param(const std::string& n) const { return ps.value(n); }
    T rows(const std::string& n, const std::vector<int>& idx) const {
        return select_rows(ps.value(n), idx);
    }
    T constant(Tensor2 t) const { return t; }
};

struct TapeFabric {
    using T = Var;
    Tape& tape;
    T param(const std::string& n) const { return tape.param(n); }
    T rows(const std::string& n, const std::vector<int>& idx) const {
        return tape.rows_of(n, idx);
    }
    T constant(Tensor2 t) const { return tape.constant(std::move(t)); }
};

inline int n_rows(const Tensor2& t) { return t.rows; }
inline int n_cols(const Tensor2& t) { return t.cols; }
inline int n_rows(Var v) { return v.rows(); }
inline int n_cols(Var v) { return v.cols(); }

// Parameter names for one attention block; values live in the ParamStore.
// Projections wq/wk/wv/wo are all d x d; heads split the width evenly.
struct AttentionWeights {
    std::string wq, wk, wv, wo;
    int d = 0;
    int heads = 1;
};

struct FfnWeights {
    std::string w1, b1, w2, b2;  // d x hidden, 1 x hidden, hidden x d, 1 x d
    int d = 0;
    int hidden = 0;
};

AttentionWeights make_attention(ParamStore& ps, const std::string& prefix, int d, int heads,
                                Rng& rng);
FfnWeights make_ffn(ParamStore& ps, const std::string& prefix, int d, int hidden, Rng& rng);
// Bind to parameters that already exist (e.g. after loading a checkpoint);
// throws StateError when a name is missing, ConfigError on a shape mismatch.
AttentionWeights attach_attention(const ParamStore& ps, const std::string& prefix, int d,
                                  int heads);
FfnWeights attach_ffn(const ParamStore& ps, const std::string& prefix, int d, int hidden);

template <class F>
typename F::T multi_head_attention(F& f, const typename F::T& q, const typename F::T& k,
                                   const typename F::T& v, const Mask& mask,
                                   const AttentionWeights& w) {
    if (n_cols(q) != w.d || n_cols(k) != w.d || n_cols(v) != w.d)
        throw ConfigError("multi_head_attention: input width does not match d");
    if (n_rows(k) != n_rows(v))
        throw ConfigError("multi_head_attention: key/value row counts differ");
    if (mask.rows != n_rows(q) || mask.cols != n_rows(k))
        throw ConfigError("multi_head_attention: mask shape mismatch");
    auto Q = matmul(q, f.param(w.wq));
    auto K = matmul(k, f.param(w.wk));
    auto V = matmul(v, f.param(w.wv));
    const int dh = w.d / w.heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<typename F::T> heads;
    heads.reserve(w.heads);
    for (int h = 0; h < w.heads; ++h) {
        auto Qh = slice_cols(Q, h * dh, (h + 1) * dh);
        auto Kh = slice_cols(K, h * dh, (h + 1) * dh);
        auto Vh = slice_cols(V, h * dh, (h + 1) * dh);
        auto attn = softmax_rows(affine(matmul_nt(Qh, Kh), scale, 0.0), mask);
        heads.push_back(matmul(attn, Vh));
    }
    return matmul(concat_cols(heads), f.param(w.wo));
}

template <class F>
typename F::T feed_forward(F& f, const typename F::T& x, const FfnWeights& w) {
    if (n_cols(x) != w.d) throw ConfigError("feed_forward: input width does not match d");
    auto h = gelu(add_rowvec(matmul(x, f.param(w.w1)), f.param(w.b1)));
    return add_rowvec(matmul(h, f.param(w.w2)), f.param(w.b2));
}

// Central-difference verification of analytic gradients. loss_fn(store, true)
// must compute the loss and add its gradients into the store; with false it
// must only return the loss. Relative error per sampled entry is
// |analytic - central| / max(1, |central|).
struct GradCheckReport {
    double max_rel_err = 0.0;
    double mean_rel_err = 0.0;
    int entries = 0;
    std::string worst_param;
};

GradCheckReport finite_diff_grad_check(ParamStore& store,
                                       const std::function<double(ParamStore&, bool)>& loss_fn,
                                       double eps, int entries_per_param, Rng& rng);

}  // namespace lcr::nn
