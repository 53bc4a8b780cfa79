#include "lcr/nn.hpp"

#include <algorithm>
#include <cmath>

namespace lcr::nn {

AttentionWeights make_attention(ParamStore& ps, const std::string& prefix, int d, int heads,
                                Rng& rng) {
    if (heads < 1 || d % heads != 0)
        throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    AttentionWeights w;
    w.wq = prefix + ".wq";
    w.wk = prefix + ".wk";
    w.wv = prefix + ".wv";
    w.wo = prefix + ".wo";
    w.d = d;
    w.heads = heads;
    ps.create(w.wq, d, d, rng, 0.02);
    ps.create(w.wk, d, d, rng, 0.02);
    ps.create(w.wv, d, d, rng, 0.02);
    ps.create(w.wo, d, d, rng, 0.02);
    return w;
}

FfnWeights make_ffn(ParamStore& ps, const std::string& prefix, int d, int hidden, Rng& rng) {
    FfnWeights w;
    w.w1 = prefix + ".w1";
    w.b1 = prefix + ".b1";
    w.w2 = prefix + ".w2";
    w.b2 = prefix + ".b2";
    w.d = d;
    w.hidden = hidden;
    ps.create(w.w1, d, hidden, rng, 0.02);
    ps.create(w.b1, 1, hidden, rng, 0.0);
    ps.create(w.w2, hidden, d, rng, 0.02);
    ps.create(w.b2, 1, d, rng, 0.0);
    return w;
}

namespace {
void expect_shape(const ParamStore& ps, const std::string& name, int rows, int cols) {
    if (!ps.has(name)) throw StateError("missing parameter: " + name);
    const Tensor2& t = ps.value(name);
    if (t.rows != rows || t.cols != cols)
        throw ConfigError("parameter " + name + " has shape " + std::to_string(t.rows) + "x" +
                          std::to_string(t.cols) + ", expected " + std::to_string(rows) + "x" +
                          std::to_string(cols));
}
}  // namespace

AttentionWeights attach_attention(const ParamStore& ps, const std::string& prefix, int d,
                                  int heads) {
    if (heads < 1 || d % heads != 0)
        throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    AttentionWeights w;
    w.wq = prefix + ".wq";
    w.wk = prefix + ".wk";
    w.wv = prefix + ".wv";
    w.wo = prefix + ".wo";
    w.d = d;
    w.heads = heads;
    for (const std::string& n : {w.wq, w.wk, w.wv, w.wo}) expect_shape(ps, n, d, d);
    return w;
}

FfnWeights attach_ffn(const ParamStore& ps, const std::string& prefix, int d, int hidden) {
    FfnWeights w;
    w.w1 = prefix + ".w1";
    w.b1 = prefix + ".b1";
    w.w2 = prefix + ".w2";
    w.b2 = prefix + ".b2";
    w.d = d;
    w.hidden = hidden;
    expect_shape(ps, w.w1, d, hidden);
    expect_shape(ps, w.b1, 1, hidden);
    expect_shape(ps, w.w2, hidden, d);
    expect_shape(ps, w.b2, 1, d);
    return w;
}

GradCheckReport finite_diff_grad_check(ParamStore& store,
                                       const std::function<double(ParamStore&, bool)>& loss_fn,
                                       double eps, int entries_per_param, Rng& rng) {
    if (eps <= 0.0) throw ConfigError("finite_diff_grad_check: eps must be positive");
    store.zero_grads();
    const double base = loss_fn(store, true);
    if (!std::isfinite(base)) throw NumericError("finite_diff_grad_check: non-finite loss");

    GradCheckReport rep;
    double err_sum = 0.0;
    for (const std::string& name : store.names()) {
        const Tensor2 analytic = store.grad(name);
        const int n = static_cast<int>(analytic.size());
        std::vector<int> sample;
        if (n <= entries_per_param) {
            for (int i = 0; i < n; ++i) sample.push_back(i);
        } else {
            std::vector<uint8_t> seen(n, 0);
            while (static_cast<int>(sample.size()) < entries_per_param) {
                int i = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
                if (!seen[i]) {
                    seen[i] = 1;
                    sample.push_back(i);
                }
            }
            std::sort(sample.begin(), sample.end());
        }
        Tensor2& p = store.value(name);
        for (int i : sample) {
            const double x0 = p.v[i];
            p.v[i] = x0 + eps;
            const double lp = loss_fn(store, false);
            p.v[i] = x0 - eps;
            const double lm = loss_fn(store, false);
            p.v[i] = x0;
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw NumericError("finite_diff_grad_check: non-finite perturbed loss at " + name);
            const double central = (lp - lm) / (2.0 * eps);
            const double rel =
                std::fabs(analytic.v[i] - central) / std::max(1.0, std::fabs(central));
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name;
            }
            err_sum += rel;
            ++rep.entries;
        }
    }
    rep.mean_rel_err = rep.entries > 0 ? err_sum / rep.entries : 0.0;
    return rep;
}

}  // namespace lcr::nn
