#include "lcr/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lcr/error.hpp"
#include "lcr/rng.hpp"

namespace lcr::train {

namespace {

bool is_embedding(const std::string& name) {
    return name.rfind("emb.", 0) == 0;
}

double clamp_prob(double p) {
    return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

}  // namespace

Distance parse_distance(const std::string& name) {
    if (name == "euclidean") return Distance::euclidean;
    if (name == "cosine") return Distance::cosine;
    throw ConfigError("unknown distance '" + name + "' (expected euclidean or cosine)");
}

std::string distance_name(Distance d) {
    return d == Distance::euclidean ? "euclidean" : "cosine";
}

void TrainHyperparams::validate() const {
    if (margin <= 0.0) throw ConfigError("margin must be positive");
    if (lambda_tcl < 0.0) throw ConfigError("lambda_tcl must be non-negative");
    if (lambda_reg < 0.0) throw ConfigError("lambda_reg must be non-negative");
    if (lr < 0.0) throw ConfigError("lr must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
}

double distance_value(const nn::Tensor2& a, const nn::Tensor2& b, Distance kind) {
    if (kind == Distance::euclidean) return nn::l2_distance(a, b);
    return 1.0 - nn::cosine_similarity(a, b);
}

TclParts tcl_loss(const nn::Tensor2& e_t,
                  const nn::Tensor2& h_s, const nn::Tensor2& h_s_nocross,
                  const nn::Tensor2& h_r, const nn::Tensor2& h_r_nocross,
                  double margin, Distance kind) {
    TclParts out;
    const double ds = distance_value(e_t, h_s, kind) - distance_value(e_t, h_s_nocross, kind);
    const double dr = distance_value(e_t, h_r, kind) - distance_value(e_t, h_r_nocross, kind);
    out.search = std::max(ds + margin, 0.0);
    out.rec = std::max(dr + margin, 0.0);
    out.total = out.search + out.rec;
    return out;
}

double bce_loss(const std::vector<std::pair<double, int>>& prob_label) {
    if (prob_label.empty()) throw ConfigError("bce_loss needs at least one prediction");
    double sum = 0.0;
    for (const auto& [p, y] : prob_label) {
        const double pc = clamp_prob(p);
        sum += y != 0 ? -std::log(pc) : -std::log(1.0 - pc);
    }
    return sum / static_cast<double>(prob_label.size());
}

double reg_value(const nn::ParamStore& ps, bool include_embeddings) {
    double sum = 0.0;
    for (const std::string& name : ps.names()) {
        if (!include_embeddings && is_embedding(name)) continue;
        sum += nn::sum_sq(ps.value(name));
    }
    return sum;
}

void add_reg_grad(nn::ParamStore& ps, double lambda, bool include_embeddings) {
    if (lambda == 0.0) return;
    for (const std::string& name : ps.names()) {
        if (!include_embeddings && is_embedding(name)) continue;
        const nn::Tensor2& v = ps.value(name);
        nn::Tensor2& g = ps.grad(name);
        for (std::size_t i = 0; i < v.v.size(); ++i) g.v[i] += 2.0 * lambda * v.v[i];
    }
}

LossBreakdown total_loss(double l_rec, double l_tcl, const nn::ParamStore& ps,
                         const TrainHyperparams& hp) {
    LossBreakdown out;
    out.l_rec = l_rec;
    out.l_tcl = l_tcl;
    out.l_reg = reg_value(ps, hp.reg_include_embeddings);
    out.total = out.l_rec + hp.lambda_tcl * out.l_tcl + hp.lambda_reg * out.l_reg;
    return out;
}

InstanceTerms instance_terms(nn::Tape& tape, const model::Model& m,
                             const data::TrainInstance& inst, int negative,
                             const TrainHyperparams& hp) {
    nn::TapeFabric f{tape};
    auto enc_s = m.encode_search(f, inst.search);
    auto enc_r = m.encode_rec(f, inst.rec_items);
    auto ro = m.reason(f, enc_s, enc_r, true);
    auto logits = m.candidate_logits(f, inst.user, ro, {inst.target, negative}, hp.target_aware);
    auto probs = nn::clamp(nn::sigmoid(logits), kProbEps, 1.0 - kProbEps);

    InstanceTerms out;
    auto bce_pos = nn::mul(nn::log_el(nn::pick(probs, 0, 0)), -1.0);
    auto bce_neg = nn::mul(nn::log_el(nn::affine(nn::pick(probs, 1, 0), -1.0, 1.0)), -1.0);
    out.bce_sum = nn::add(bce_pos, bce_neg);
    out.bce_pos = bce_pos.item();
    out.bce_neg = bce_neg.item();

    if (hp.lambda_tcl > 0.0) {
        // The contrast pass shares the encoder nodes with the cross pass;
        // only the reasoning stack is rebuilt without cross attention.
        auto ro_nc = m.reason(f, enc_s, enc_r, false);
        auto e_t = f.rows(m.item_table(), {inst.target});
        auto dist = [&](nn::Var a, nn::Var b) {
            return hp.distance == Distance::euclidean
                       ? nn::l2_dist(a, b)
                       : nn::affine(nn::cos_sim(a, b), -1.0, 1.0);
        };
        auto hinge_s = nn::relu(nn::affine(
            nn::sub(dist(e_t, ro.hs_last), dist(e_t, ro_nc.hs_last)), 1.0, hp.margin));
        auto hinge_r = nn::relu(nn::affine(
            nn::sub(dist(e_t, ro.hr_last), dist(e_t, ro_nc.hr_last)), 1.0, hp.margin));
        out.tcl = nn::add(hinge_s, hinge_r);
        out.has_tcl = true;
        out.tcl_value = out.tcl.item();
    }
    return out;
}

EpochMetrics train_epoch(const model::Model& m, nn::ParamStore& ps,
                         const std::vector<data::TrainInstance>& instances,
                         const data::Catalog& cat, const TrainHyperparams& hp,
                         int epoch) {
    hp.validate();
    EpochMetrics metrics;
    metrics.epoch = epoch;
    if (instances.empty()) return metrics;

    Rng rng(mix_seed(hp.seed, 0x7261696eULL, static_cast<std::uint64_t>(epoch)));
    std::vector<int> order(instances.size());
    std::iota(order.begin(), order.end(), 0);
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[i], order[j]);
    }

    nn::AdamConfig adam;
    adam.lr = hp.lr;

    double bce_sum = 0.0;
    double tcl_sum = 0.0;
    double grad_norm_sum = 0.0;
    const int n = static_cast<int>(order.size());
    for (int start = 0; start < n; start += hp.batch_size) {
        const int end = std::min(start + hp.batch_size, n);
        const int batch = end - start;
        for (int b = start; b < end; ++b) {
            const data::TrainInstance& inst = instances[order[b]];
            const int negative = data::sample_negatives(inst, cat, 1, rng)[0];
            nn::Tape tape(ps);
            auto terms = instance_terms(tape, m, inst, negative, hp);
            auto loss = nn::mul(terms.bce_sum, 1.0 / (2.0 * batch));
            if (terms.has_tcl)
                loss = nn::add(loss, nn::mul(terms.tcl, hp.lambda_tcl / batch));
            if (!std::isfinite(loss.item())) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " batch " << metrics.batches
                    << " (user " << inst.user << ", target " << inst.target << ")";
                throw NumericError(msg.str());
            }
            tape.backward(loss);
            bce_sum += (terms.bce_pos + terms.bce_neg) / 2.0;
            tcl_sum += terms.tcl_value;
            ++metrics.instances;
        }
        add_reg_grad(ps, hp.lambda_reg, hp.reg_include_embeddings);
        const double gnorm = ps.grad_norm();
        if (!std::isfinite(gnorm)) {
            std::ostringstream msg;
            msg << "non-finite gradient norm at epoch " << epoch << " batch " << metrics.batches;
            throw NumericError(msg.str());
        }
        grad_norm_sum += gnorm;
        ps.adam_step(adam);
        ps.zero_grads();
        ++metrics.batches;
    }

    metrics.l_rec = bce_sum / metrics.instances;
    metrics.l_tcl = tcl_sum / metrics.instances;
    metrics.l_reg = reg_value(ps, hp.reg_include_embeddings);
    metrics.total = metrics.l_rec + hp.lambda_tcl * metrics.l_tcl + hp.lambda_reg * metrics.l_reg;
    metrics.grad_norm = grad_norm_sum / metrics.batches;
    return metrics;
}

}  // namespace lcr::train
