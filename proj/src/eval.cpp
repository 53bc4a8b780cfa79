#include "lcr/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lcr/error.hpp"
#include "lcr/rng.hpp"

namespace lcr::eval {

namespace {

// Continued-fraction evaluation for the regularized incomplete beta
// function (modified Lentz), good to ~1e-14 for the t-test arguments here.
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

double reg_inc_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

// One-sided upper tail of Student's t with nu degrees of freedom.
double t_tail(double t, double nu) {
    const double x = nu / (nu + t * t);
    const double half_two_sided = 0.5 * reg_inc_beta(0.5 * nu, 0.5, x);
    return t >= 0.0 ? half_two_sided : 1.0 - half_two_sided;
}

}  // namespace

RankedList rank_pool(const nn::Tensor2& scores, const std::vector<int>& pool, int target) {
    const int n = static_cast<int>(pool.size());
    if (scores.rows != n || scores.cols != 1)
        throw ConfigError("rank_pool: scores must be pool-size x 1");
    std::vector<int> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores.v[a] != scores.v[b]) return scores.v[a] > scores.v[b];
        return pool[a] < pool[b];
    });
    RankedList out;
    out.items.reserve(pool.size());
    out.scores.reserve(pool.size());
    int seen = 0;
    for (std::size_t r = 0; r < order.size(); ++r) {
        const int i = order[r];
        out.items.push_back(pool[i]);
        out.scores.push_back(scores.v[i]);
        if (pool[i] == target) {
            out.target_rank = static_cast<int>(r) + 1;
            ++seen;
        }
    }
    if (seen != 1) throw ValidationError("rank_pool: pool must contain the target exactly once");
    return out;
}

RankedList rank_candidates(const model::Model& m, const nn::ParamStore& ps,
                           const data::TrainInstance& inst,
                           const std::vector<int>& negatives, bool target_aware) {
    std::vector<int> pool;
    pool.reserve(negatives.size() + 1);
    pool.push_back(inst.target);
    pool.insert(pool.end(), negatives.begin(), negatives.end());
    const nn::Tensor2 scores = m.score_pool(ps, inst, pool, target_aware);
    return rank_pool(scores, pool, inst.target);
}

double hr_at_k(const RankedList& list, int k) {
    if (k < 1) throw ConfigError("hr_at_k: k must be >= 1");
    return list.target_rank >= 1 && list.target_rank <= k ? 1.0 : 0.0;
}

double ndcg_at_k(const RankedList& list, int k) {
    if (k < 1) throw ConfigError("ndcg_at_k: k must be >= 1");
    if (list.target_rank < 1 || list.target_rank > k) return 0.0;
    return 1.0 / std::log2(static_cast<double>(list.target_rank) + 1.0);
}

std::vector<int> eval_negatives(const data::TrainInstance& inst, const data::Catalog& cat,
                                int k, std::uint64_t seed) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(inst.user),
                     static_cast<std::uint64_t>(inst.target)));
    return data::sample_negatives(inst, cat, k, rng);
}

MetricTable evaluate(const model::Model& m, const nn::ParamStore& ps,
                     const std::vector<data::TrainInstance>& split, const data::Catalog& cat,
                     const Protocol& proto, PerInstance* per_instance) {
    if (split.empty()) throw ConfigError("evaluate: split is empty");
    const std::uint64_t before = ps.checksum();
    MetricTable table;
    for (const data::TrainInstance& inst : split) {
        const auto negs = eval_negatives(inst, cat, proto.negatives, proto.seed);
        const RankedList list = rank_candidates(m, ps, inst, negs, proto.target_aware);
        const double h1 = hr_at_k(list, 1), h5 = hr_at_k(list, 5), h10 = hr_at_k(list, 10);
        const double n5 = ndcg_at_k(list, 5), n10 = ndcg_at_k(list, 10);
        table.hr1 += h1;
        table.hr5 += h5;
        table.hr10 += h10;
        table.ndcg5 += n5;
        table.ndcg10 += n10;
        if (per_instance) {
            per_instance->hr1.push_back(h1);
            per_instance->hr5.push_back(h5);
            per_instance->hr10.push_back(h10);
            per_instance->ndcg5.push_back(n5);
            per_instance->ndcg10.push_back(n10);
        }
        ++table.instances;
    }
    if (ps.checksum() != before)
        throw StateError("evaluate: parameters changed during evaluation");
    const double n = table.instances;
    table.hr1 /= n;
    table.hr5 /= n;
    table.hr10 /= n;
    table.ndcg5 /= n;
    table.ndcg10 /= n;
    return table;
}

DistanceTrace distance_trace(const model::Model& m, const nn::ParamStore& ps,
                             const std::vector<data::TrainInstance>& split,
                             train::Distance kind) {
    if (split.empty()) throw ConfigError("distance_trace: split is empty");
    const int K = m.cfg().K;
    DistanceTrace out;
    out.mean_search.assign(K + 1, 0.0);
    out.mean_rec.assign(K + 1, 0.0);
    out.mean_all.assign(K + 1, 0.0);
    nn::PlainFabric f{ps};
    for (const data::TrainInstance& inst : split) {
        const auto ro = m.forward_user(f, inst, true);
        const nn::Tensor2 e_t = f.rows(m.item_table(), {inst.target});
        for (int k = 0; k <= K; ++k) {
            const nn::Tensor2& hs = k == 0 ? ro.hs0 : ro.hs[k - 1];
            const nn::Tensor2& hr = k == 0 ? ro.hr0 : ro.hr[k - 1];
            out.mean_search[k] += train::distance_value(e_t, hs, kind);
            out.mean_rec[k] += train::distance_value(e_t, hr, kind);
        }
        ++out.instances;
    }
    for (int k = 0; k <= K; ++k) {
        out.mean_search[k] /= out.instances;
        out.mean_rec[k] /= out.instances;
        out.mean_all[k] = 0.5 * (out.mean_search[k] + out.mean_rec[k]);
    }
    return out;
}

TTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ConfigError("paired_ttest: sample sizes differ");
    if (a.size() < 2) throw ConfigError("paired_ttest: need at least 2 pairs");
    const int n = static_cast<int>(a.size());
    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += b[i] - a[i];
    mean /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = (b[i] - a[i]) - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1));
    TTest out;
    out.mean_diff = mean;
    out.n = n;
    if (sd < 1e-300) {
        // All differences identical: the direction alone decides.
        out.t = mean > 0.0 ? 1e300 : (mean < 0.0 ? -1e300 : 0.0);
        out.p_one_sided = mean > 0.0 ? 0.0 : (mean < 0.0 ? 1.0 : 0.5);
        return out;
    }
    out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    out.p_one_sided = t_tail(out.t, static_cast<double>(n - 1));
    return out;
}

}  // namespace lcr::eval
