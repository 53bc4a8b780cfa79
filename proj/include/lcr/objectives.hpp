#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lcr/data.hpp"
#include "lcr/model.hpp"

namespace lcr::train {

enum class Distance { euclidean, cosine };

Distance parse_distance(const std::string& name);
std::string distance_name(Distance d);

struct TrainHyperparams {
    double lambda_tcl = 0.1;
    double lambda_reg = 1e-6;
    double margin = 0.5;
    Distance distance = Distance::euclidean;
    double lr = 1e-3;
    int batch_size = 32;
    std::uint64_t seed = 1;
    // When false the L2 penalty skips the embedding tables and only decays
    // the attention / FFN / head weights.
    bool reg_include_embeddings = true;
    bool target_aware = true;

    void validate() const;
};

// Plain scalar helpers. These are the reference formulas the taped training
// loss must agree with; tests compare them against independent loops.
double distance_value(const nn::Tensor2& a, const nn::Tensor2& b, Distance kind);

struct TclParts {
    double search = 0.0;
    double rec = 0.0;
    double total = 0.0;
};

// Hinge contrast between the cross-reasoned state h and the no-cross state
// h_tilde, measured against the target embedding e_t, summed over both sides.
TclParts tcl_loss(const nn::Tensor2& e_t,
                  const nn::Tensor2& h_s, const nn::Tensor2& h_s_nocross,
                  const nn::Tensor2& h_r, const nn::Tensor2& h_r_nocross,
                  double margin, Distance kind);

// Mean binary cross-entropy over (probability, label) pairs. Probabilities
// are clamped to [kProbEps, 1 - kProbEps] before the log.
inline constexpr double kProbEps = 1e-7;
double bce_loss(const std::vector<std::pair<double, int>>& prob_label);

struct LossBreakdown {
    double l_rec = 0.0;
    double l_tcl = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
};

// Squared L2 norm of the parameters covered by the regularizer.
double reg_value(const nn::ParamStore& ps, bool include_embeddings);

// Adds d/dp of lambda * ||p||^2 to the accumulated gradients.
void add_reg_grad(nn::ParamStore& ps, double lambda, bool include_embeddings);

LossBreakdown total_loss(double l_rec, double l_tcl, const nn::ParamStore& ps,
                         const TrainHyperparams& hp);

// Taped loss terms for one positive instance paired with one sampled
// negative. bce_sum is the sum of the two cross-entropy terms (not yet
// averaged); tcl is present whenever lambda_tcl > 0.
struct InstanceTerms {
    nn::Var bce_sum;
    nn::Var tcl;
    bool has_tcl = false;
    double bce_pos = 0.0;
    double bce_neg = 0.0;
    double tcl_value = 0.0;
};

InstanceTerms instance_terms(nn::Tape& tape, const model::Model& m,
                             const data::TrainInstance& inst, int negative,
                             const TrainHyperparams& hp);

struct EpochMetrics {
    int epoch = 0;
    double l_rec = 0.0;
    double l_tcl = 0.0;
    double l_reg = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;
    int instances = 0;
    int batches = 0;
};

// One pass over the training instances: shuffles deterministically, samples
// one fresh negative per positive, accumulates per-batch mean gradients,
// applies the L2 penalty analytically, and takes an Adam step per batch.
EpochMetrics train_epoch(const model::Model& m, nn::ParamStore& ps,
                         const std::vector<data::TrainInstance>& instances,
                         const data::Catalog& cat, const TrainHyperparams& hp,
                         int epoch);

}  // namespace lcr::train
