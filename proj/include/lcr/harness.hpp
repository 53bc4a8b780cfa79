#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lcr/checkpoint.hpp"
#include "lcr/config.hpp"
#include "lcr/data.hpp"
#include "lcr/eval.hpp"
#include "lcr/model.hpp"
#include "lcr/objectives.hpp"
#include "lcr/rl.hpp"

namespace lcr::harness {

// Creates dir (and parents). An existing non-empty dir is refused unless
// force is set, so runs never silently overwrite each other.
void ensure_run_dir(const std::string& dir, bool force);
void write_text(const std::string& path, const std::string& content);

// One ablation row: which capabilities are switched on relative to the
// encoder-plus-mean-pooling baseline.
struct Variant {
    std::string name;
    int K = 0;
    bool target_aware = false;
    double lambda_tcl = 0.0;
    bool run_rl = false;
};

// base, +reason, +target-agg, +contrast, +rl (cumulative).
std::vector<Variant> ablation_variants(const RunConfig& rc);
RunConfig variant_config(RunConfig rc, const Variant& v);

struct PretrainResult {
    model::ModelConfig mcfg;
    nn::ParamStore params;
    std::vector<train::EpochMetrics> epochs;
};

// Builds (or loads, when rc.init_checkpoint is set) the model parameters and
// runs rc.epochs training passes over the split.
PretrainResult pretrain(const RunConfig& rc, const data::Catalog& cat,
                        const std::vector<data::TrainInstance>& train_split,
                        std::ostream* progress);

struct FilterPoint {
    double tau = 0.0;
    double kept_fraction = 1.0;
    eval::MetricTable table;
};

// Re-evaluates the model on the test split after dropping every search event
// whose embedding is not similar enough to the user's rec profile.
std::vector<FilterPoint> filter_curve(const RunConfig& rc, const data::Dataset& ds,
                                      const model::Model& m, const nn::ParamStore& ps,
                                      const std::vector<double>& taus);

struct VariantOutcome {
    Variant variant;
    eval::MetricTable test;
    eval::PerInstance per;
    std::vector<train::EpochMetrics> epochs;
    double valid_hr1 = 0.0;
};

struct SeedOutcome {
    std::uint64_t seed = 0;
    std::vector<VariantOutcome> variants;
    rl::RlRunResult rl_run;
    eval::DistanceTrace trace;       // on the +contrast model, pre-RL
    std::vector<FilterPoint> filter; // same model
};

// Full single-seed pipeline shared by cmd_ablate and the acceptance tests:
// generate data, train every variant on it, fine-tune the last one with
// GRPO, and (optionally) compute the distance trace and filter curve.
SeedOutcome run_seed_experiment(RunConfig rc, std::uint64_t seed, bool with_trace,
                                bool with_filter, std::ostream* progress);

struct PairSummary {
    std::string a, b;
    eval::TTest ndcg5;  // paired over all test instances pooled across seeds
    int b_wins = 0;     // seeds where mean NDCG@5 of b >= a
    int seeds = 0;
};

struct AblateSummary {
    std::vector<SeedOutcome> seeds;
    std::vector<PairSummary> pairs;
};

// Runs run_seed_experiment for rc.seed, rc.seed+1, ... and aggregates.
AblateSummary run_ablation(const RunConfig& rc, int n_seeds, bool with_trace,
                           bool with_filter, std::ostream* progress);

// Record formatting (tab-separated, one record per line, stable layout).
std::string metric_table_text(const std::vector<std::pair<std::string, eval::MetricTable>>& rows);
std::string epoch_records(const std::vector<train::EpochMetrics>& epochs);
std::string rl_records(const rl::RlRunResult& run);
std::string trace_records(const eval::DistanceTrace& trace);
std::string filter_records(const std::vector<FilterPoint>& points);
std::string ablate_records(const AblateSummary& summary);

}  // namespace lcr::harness
