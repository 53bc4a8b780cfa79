#pragma once

#include <vector>

#include "lcr/data.hpp"
#include "lcr/model.hpp"
#include "lcr/objectives.hpp"

namespace lcr::eval {

struct RankedList {
    std::vector<int> items;      // descending score, ties by ascending item id
    std::vector<double> scores;  // aligned with items
    int target_rank = 0;         // 1-based
};

// Pure ranking over precomputed scores; pool[i] is scored by scores(i, 0)
// and must contain the target exactly once.
RankedList rank_pool(const nn::Tensor2& scores, const std::vector<int>& pool, int target);

// Scores [target, negatives...] with the deterministic inference path.
RankedList rank_candidates(const model::Model& m, const nn::ParamStore& ps,
                           const data::TrainInstance& inst,
                           const std::vector<int>& negatives, bool target_aware);

double hr_at_k(const RankedList& list, int k);
double ndcg_at_k(const RankedList& list, int k);

struct Protocol {
    int negatives = 99;
    std::uint64_t seed = 7;
    bool target_aware = true;
};

struct MetricTable {
    double hr1 = 0.0;
    double hr5 = 0.0;
    double hr10 = 0.0;
    double ndcg5 = 0.0;
    double ndcg10 = 0.0;
    int instances = 0;
};

// Per-instance metric values in split order, for paired significance tests.
struct PerInstance {
    std::vector<double> hr1, hr5, hr10, ndcg5, ndcg10;
};

// Negatives are a pure function of (seed, user, target), so every model
// variant evaluated under the same protocol ranks against the same pools.
std::vector<int> eval_negatives(const data::TrainInstance& inst, const data::Catalog& cat,
                                int k, std::uint64_t seed);

MetricTable evaluate(const model::Model& m, const nn::ParamStore& ps,
                     const std::vector<data::TrainInstance>& split, const data::Catalog& cat,
                     const Protocol& proto, PerInstance* per_instance = nullptr);

// Mean distance between the reasoning state h^(k) and the target embedding
// for k = 0..K, averaged over the split (per side and pooled).
struct DistanceTrace {
    std::vector<double> mean_all;
    std::vector<double> mean_search;
    std::vector<double> mean_rec;
    int instances = 0;
};

DistanceTrace distance_trace(const model::Model& m, const nn::ParamStore& ps,
                             const std::vector<data::TrainInstance>& split,
                             train::Distance kind = train::Distance::euclidean);

struct TTest {
    double t = 0.0;
    double p_one_sided = 1.0;  // H1: mean(b - a) > 0
    double mean_diff = 0.0;
    int n = 0;
};

// Paired one-sided t-test on equal-length samples.
TTest paired_ttest(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace lcr::eval
