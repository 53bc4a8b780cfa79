#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "lcr/data.hpp"
#include "lcr/nn.hpp"

namespace lcr::model {

struct ModelConfig {
    int d = 64;
    int heads = 2;
    int encoder_layers = 1;
    int ffn_hidden = 0;  // 0 means 4*d
    int K = 2;           // reasoning steps
    int max_search = 50;
    int max_rec = 50;
    bool pre_layernorm = false;  // swap the literal encoder block for standard pre-norm
    bool learned_agg = false;    // learned q/k/v projections in target-aware aggregation
    int n_users = 0, n_items = 0, n_words = 0;

    int ffn_hidden_resolved() const { return ffn_hidden > 0 ? ffn_hidden : 4 * d; }
};

template <class T>
struct EncodedSide {
    T ehat;  // position-augmented embeddings, L x d
    T H;     // encoder output, L x d
    int len = 0;
};

template <class T>
struct ReasonOut {
    T Hs, Hr;             // (L_s + K) x d and (L_r + K) x d
    std::vector<T> hs, hr;  // step outputs h^(1..K)
    T hs0, hr0;           // initial states, 1 x d
    T hs_last, hr_last;   // h^(K), or the initial state when K = 0
    bool search_was_empty = false;
    bool rec_was_empty = false;
};

// Dual-encoder model with latent cross reasoning. Holds only parameter names
// and dimensions; values live in a ParamStore supplied through a fabric, so
// the same Model can drive the live store, a frozen snapshot, or a tape.
class Model {
public:
    static Model create(const ModelConfig& cfg, nn::ParamStore& ps, Rng& rng);
    static Model attach(const ModelConfig& cfg, const nn::ParamStore& ps);

    const ModelConfig& cfg() const { return cfg_; }
    static constexpr int kSearch = 0;
    static constexpr int kRec = 1;

    const std::string& user_table() const { return user_table_; }
    const std::string& item_table() const { return item_table_; }
    const std::string& word_table() const { return word_table_; }

    template <class F>
    typename F::T embed_user(F& f, int user) const {
        check_id(user, cfg_.n_users, "user");
        return f.rows(user_table_, {user});
    }

    template <class F>
    typename F::T embed_items(F& f, const std::vector<int>& items) const {
        for (int it : items) check_id(it, cfg_.n_items, "item");
        return f.rows(item_table_, items);
    }

    // Mean of the query's word embeddings.
    template <class F>
    typename F::T embed_query(F& f, const std::vector<int>& words) const {
        if (words.empty()) throw ValidationError("cannot embed an empty query");
        for (int w : words) check_id(w, cfg_.n_words, "word");
        return nn::mean_rows(f.rows(word_table_, words));
    }

    // Query embedding plus the mean clicked-item embedding (zero when the
    // event has no clicks).
    template <class F>
    typename F::T embed_search_event(F& f, const data::SearchEvent& ev) const {
        auto e_q = embed_query(f, ev.query_words);
        if (ev.clicked_items.empty()) return e_q;
        return nn::add(e_q, nn::mean_rows(embed_items(f, ev.clicked_items)));
    }

    template <class F>
    EncodedSide<typename F::T> encode_search(F& f, const std::vector<data::SearchEvent>& evs) const {
        auto E = f.constant(nn::Tensor2(0, cfg_.d));
        for (const data::SearchEvent& ev : evs) E = nn::concat_rows(E, embed_search_event(f, ev));
        return encode_side(f, E, kSearch);
    }

    template <class F>
    EncodedSide<typename F::T> encode_rec(F& f, const std::vector<int>& items) const {
        if (items.empty()) return encode_side(f, f.constant(nn::Tensor2(0, cfg_.d)), kRec);
        return encode_side(f, embed_items(f, items), kRec);
    }

    // K steps of cross reasoning. Contexts start as the position-augmented
    // embeddings and grow by one reasoning input per step; self- and
    // feed-forward weights are the encoder's own (last layer), the cross
    // attention has dedicated weights. init_s/init_r, when given, replace the
    // encoder-derived initial states (used by the RL rollout and update).
    template <class F>
    ReasonOut<typename F::T> reason(F& f, const EncodedSide<typename F::T>& s,
                                    const EncodedSide<typename F::T>& r, bool use_cross,
                                    const nn::Tensor2* init_s = nullptr,
                                    const nn::Tensor2* init_r = nullptr) const {
        using T = typename F::T;
        ReasonOut<T> out;
        out.search_was_empty = s.len == 0;
        out.rec_was_empty = r.len == 0;
        T hs = init_s ? f.constant(*init_s)
                      : (s.len > 0 ? nn::slice_rows(s.H, s.len - 1, s.len)
                                   : f.constant(nn::Tensor2(1, cfg_.d)));
        T hr = init_r ? f.constant(*init_r)
                      : (r.len > 0 ? nn::slice_rows(r.H, r.len - 1, r.len)
                                   : f.constant(nn::Tensor2(1, cfg_.d)));
        out.hs0 = hs;
        out.hr0 = hr;
        T ctx_s = s.ehat;
        T ctx_r = r.ehat;
        for (int k = 1; k <= cfg_.K; ++k) {
            T es = nn::add(hs, f.rows(side_[kSearch].step_pos, {k - 1}));
            T er = nn::add(hr, f.rows(side_[kRec].step_pos, {k - 1}));
            ctx_s = nn::concat_rows(ctx_s, es);
            ctx_r = nn::concat_rows(ctx_r, er);
            const nn::Mask ms = nn::Mask::all(1, s.len + k);
            const nn::Mask mr = nn::Mask::all(1, r.len + k);
            T fs = nn::add(nn::multi_head_attention(f, es, ctx_s, ctx_s, ms, shared_msa(kSearch)),
                           es);
            T fr = nn::add(nn::multi_head_attention(f, er, ctx_r, ctx_r, mr, shared_msa(kRec)),
                           er);
            if (use_cross) {
                hs = nn::feed_forward(
                    f, nn::add(nn::multi_head_attention(f, fs, ctx_r, ctx_r, mr, side_[kSearch].mca), fs),
                    shared_ffn(kSearch));
                hr = nn::feed_forward(
                    f, nn::add(nn::multi_head_attention(f, fr, ctx_s, ctx_s, ms, side_[kRec].mca), fr),
                    shared_ffn(kRec));
            } else {
                hs = nn::feed_forward(f, fs, shared_ffn(kSearch));
                hr = nn::feed_forward(f, fr, shared_ffn(kRec));
            }
            out.hs.push_back(hs);
            out.hr.push_back(hr);
        }
        out.Hs = s.H;
        for (const T& h : out.hs) out.Hs = nn::concat_rows(out.Hs, h);
        out.Hr = r.H;
        for (const T& h : out.hr) out.Hr = nn::concat_rows(out.Hr, h);
        out.hs_last = hs;
        out.hr_last = hr;
        return out;
    }

    template <class F>
    ReasonOut<typename F::T> forward_user(F& f, const data::TrainInstance& inst, bool use_cross,
                                          const nn::Tensor2* init_s = nullptr,
                                          const nn::Tensor2* init_r = nullptr) const {
        auto enc_s = encode_search(f, inst.search);
        auto enc_r = encode_rec(f, inst.rec_items);
        return reason(f, enc_s, enc_r, use_cross, init_s, init_r);
    }

    // One softmax mixture over H rows per target row: n x d summaries for
    // n candidates in a single matrix pass.
    template <class F>
    typename F::T aggregate_target_aware(F& f, const typename F::T& H, const typename F::T& targets,
                                         int side) const {
        const int n = nn::n_rows(targets);
        const int rows = nn::n_rows(H);
        // Nothing to attend over; match the zero summary mean pooling yields.
        if (rows == 0) return f.constant(nn::Tensor2(n, cfg_.d));
        typename F::T q = targets, keys = H, vals = H;
        if (cfg_.learned_agg) {
            q = nn::matmul(targets, f.param(side_[side].agg_q));
            keys = nn::matmul(H, f.param(side_[side].agg_k));
            vals = nn::matmul(H, f.param(side_[side].agg_v));
        }
        auto scores = nn::affine(nn::matmul_nt(q, keys), 1.0 / std::sqrt(double(cfg_.d)), 0.0);
        return nn::matmul(nn::softmax_rows(scores, nn::Mask::all(n, rows)), vals);
    }

    template <class F>
    typename F::T aggregate_mean(F&, const typename F::T& H, int n) const {
        return nn::broadcast_rows(nn::mean_rows(H), n);
    }

    // Pre-sigmoid preference scores for a candidate list, n x 1.
    template <class F>
    typename F::T candidate_logits(F& f, int user, const ReasonOut<typename F::T>& ro,
                                   const std::vector<int>& candidates, bool target_aware) const {
        if (candidates.empty()) throw ValidationError("candidate list is empty");
        const int n = static_cast<int>(candidates.size());
        auto targets = embed_items(f, candidates);
        auto U = nn::broadcast_rows(embed_user(f, user), n);
        auto Ws = target_aware ? aggregate_target_aware(f, ro.Hs, targets, kSearch)
                               : aggregate_mean(f, ro.Hs, n);
        auto Wr = target_aware ? aggregate_target_aware(f, ro.Hr, targets, kRec)
                               : aggregate_mean(f, ro.Hr, n);
        auto X = nn::concat_cols({U, Ws, Wr, targets});
        auto h1 = nn::gelu(nn::add_rowvec(nn::matmul(X, f.param(head_.w1)), f.param(head_.b1)));
        auto h2 = nn::gelu(nn::add_rowvec(nn::matmul(h1, f.param(head_.w2)), f.param(head_.b2)));
        return nn::add_rowvec(nn::matmul(h2, f.param(head_.w3)), f.param(head_.b3));
    }

    // The deterministic inference path: encode, reason without noise, score
    // the pool. Evaluation, rollouts, and policy-probability recomputation
    // all funnel through here so their forward values agree bitwise.
    nn::Tensor2 score_pool(const nn::ParamStore& ps, const data::TrainInstance& inst,
                           const std::vector<int>& pool, bool target_aware, bool use_cross = true,
                           const nn::Tensor2* init_s = nullptr,
                           const nn::Tensor2* init_r = nullptr) const {
        nn::PlainFabric f{ps};
        auto ro = forward_user(f, inst, use_cross, init_s, init_r);
        return candidate_logits(f, inst.user, ro, pool, target_aware);
    }

private:
    Model() = default;

    struct Side {
        std::string pos;
        std::vector<nn::AttentionWeights> msa;
        std::vector<nn::FfnWeights> ffn;
        std::string step_pos;
        nn::AttentionWeights mca;
        std::string agg_q, agg_k, agg_v;
    };
    struct Head {
        std::string w1, b1, w2, b2, w3, b3;
    };

    static void check_id(int id, int bound, const char* what) {
        if (id < 0 || id >= bound)
            throw ValidationError(std::string(what) + " id " + std::to_string(id) +
                                  " outside catalog of " + std::to_string(bound));
    }

    const nn::AttentionWeights& shared_msa(int side) const { return side_[side].msa.back(); }
    const nn::FfnWeights& shared_ffn(int side) const { return side_[side].ffn.back(); }

    template <class F>
    EncodedSide<typename F::T> encode_side(F& f, typename F::T E, int side) const {
        const int L = nn::n_rows(E);
        const int cap = side == kSearch ? cfg_.max_search : cfg_.max_rec;
        if (L > cap)
            throw StateError("history of length " + std::to_string(L) +
                             " exceeds the position table (" + std::to_string(cap) + ")");
        EncodedSide<typename F::T> out{E, E, L};
        if (L == 0) return out;
        std::vector<int> idx(L);
        std::iota(idx.begin(), idx.end(), 0);
        auto x = nn::add(E, f.rows(side_[side].pos, idx));
        out.ehat = x;
        const nn::Mask m = nn::Mask::causal(L, L);
        for (int l = 0; l < cfg_.encoder_layers; ++l) {
            if (cfg_.pre_layernorm) {
                auto xn = nn::layernorm_rows(x);
                auto a = nn::add(x, nn::multi_head_attention(f, xn, xn, xn, m, side_[side].msa[l]));
                x = nn::add(a, nn::feed_forward(f, nn::layernorm_rows(a), side_[side].ffn[l]));
            } else {
                auto a = nn::add(nn::multi_head_attention(f, x, x, x, m, side_[side].msa[l]), x);
                x = nn::feed_forward(f, a, side_[side].ffn[l]);
            }
        }
        out.H = x;
        return out;
    }

    ModelConfig cfg_;
    Side side_[2];
    Head head_;
    std::string user_table_, item_table_, word_table_;
};

}  // namespace lcr::model
