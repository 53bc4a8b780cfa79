#include "lcr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lcr/error.hpp"
#include "lcr/rng.hpp"

namespace lcr::harness {

namespace {

namespace fs = std::filesystem;

std::string num(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / xs.size();
}

double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / (xs.size() - 1));
}

}  // namespace

void ensure_run_dir(const std::string& dir, bool force) {
    if (dir.empty()) throw ConfigError("output directory is not set (paths.out)");
    std::error_code ec;
    if (fs::exists(dir, ec)) {
        if (!fs::is_directory(dir, ec))
            throw ConfigError("output path '" + dir + "' exists and is not a directory");
        if (!fs::is_empty(dir, ec) && !force)
            throw ConfigError("output directory '" + dir +
                              "' is not empty; pass --force to reuse it");
    } else if (!fs::create_directories(dir, ec) || ec) {
        throw IoError("cannot create output directory '" + dir + "': " + ec.message());
    }
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<Variant> ablation_variants(const RunConfig& rc) {
    const int K = rc.K > 0 ? rc.K : 2;
    return {
        {"base", 0, false, 0.0, false},
        {"+reason", K, false, 0.0, false},
        {"+target-agg", K, true, 0.0, false},
        {"+contrast", K, true, rc.lambda_tcl, false},
        {"+rl", K, true, rc.lambda_tcl, true},
    };
}

RunConfig variant_config(RunConfig rc, const Variant& v) {
    rc.K = v.K;
    rc.target_aware = v.target_aware;
    rc.lambda_tcl = v.lambda_tcl;
    return rc;
}

PretrainResult pretrain(const RunConfig& rc, const data::Catalog& cat,
                        const std::vector<data::TrainInstance>& train_split,
                        std::ostream* progress) {
    PretrainResult out;
    out.mcfg = rc.model_config(cat);
    model::Model m = [&] {
        if (!rc.init_checkpoint.empty()) {
            const CheckpointMeta meta = load_checkpoint(rc.init_checkpoint, out.params);
            return model::Model::attach(meta.cfg, out.params);
        }
        Rng rng(mix_seed(rc.seed, 0x696e6974ULL));
        return model::Model::create(out.mcfg, out.params, rng);
    }();
    if (!rc.init_checkpoint.empty()) out.mcfg = m.cfg();

    const train::TrainHyperparams hp = rc.train_hyperparams();
    for (int e = 1; e <= rc.epochs; ++e) {
        const auto metrics = train::train_epoch(m, out.params, train_split, cat, hp, e);
        if (progress)
            *progress << "epoch " << e << " l_rec " << num(metrics.l_rec) << " l_tcl "
                      << num(metrics.l_tcl) << " grad_norm " << num(metrics.grad_norm) << "\n";
        out.epochs.push_back(metrics);
    }
    return out;
}

std::vector<FilterPoint> filter_curve(const RunConfig& rc, const data::Dataset& ds,
                                      const model::Model& m, const nn::ParamStore& ps,
                                      const std::vector<double>& taus) {
    nn::PlainFabric f{ps};
    const auto embed_event = [&](const data::SearchEvent& ev) {
        return m.embed_search_event(f, ev);
    };
    const auto embed_rec = [&](const std::vector<data::RecEvent>& recs) {
        std::vector<int> items;
        items.reserve(recs.size());
        for (const auto& r : recs) items.push_back(r.item);
        return nn::mean_rows(m.embed_items(f, items));
    };

    std::vector<FilterPoint> out;
    for (double tau : taus) {
        const data::FilterResult fr =
            data::cosine_filter_analysis(ds, embed_event, embed_rec, tau);
        const data::Splits splits =
            data::leave_one_out_split(fr.filtered, rc.max_search, rc.max_rec);
        FilterPoint p;
        p.tau = tau;
        p.kept_fraction = fr.total_events == 0
                              ? 1.0
                              : static_cast<double>(fr.kept_events) / fr.total_events;
        p.table = eval::evaluate(m, ps, splits.test, fr.filtered.catalog, rc.eval_protocol());
        out.push_back(p);
    }
    return out;
}

SeedOutcome run_seed_experiment(RunConfig rc, std::uint64_t seed, bool with_trace,
                                bool with_filter, std::ostream* progress) {
    rc.seed = seed;
    rc.synth.seed = seed;
    rc.validate();

    SeedOutcome out;
    out.seed = seed;
    const data::Dataset ds = data::generate_synthetic(rc.synth);
    const data::Splits splits = data::leave_one_out_split(ds, rc.max_search, rc.max_rec);

    nn::ParamStore contrast_params;
    model::ModelConfig contrast_cfg;
    for (const Variant& v : ablation_variants(rc)) {
        if (progress) *progress << "[seed " << seed << "] variant " << v.name << "\n";
        const RunConfig vc = variant_config(rc, v);
        VariantOutcome vo;
        vo.variant = v;
        if (!v.run_rl) {
            PretrainResult pr = pretrain(vc, ds.catalog, splits.train, progress);
            const model::Model m = model::Model::attach(pr.mcfg, pr.params);
            vo.epochs = pr.epochs;
            vo.test = eval::evaluate(m, pr.params, splits.test, ds.catalog,
                                     vc.eval_protocol(), &vo.per);
            vo.valid_hr1 =
                eval::evaluate(m, pr.params, splits.valid, ds.catalog, vc.eval_protocol()).hr1;
            if (v.name == "+contrast") {
                contrast_params = pr.params.clone_values();
                contrast_cfg = pr.mcfg;
                const model::Model cm = model::Model::attach(contrast_cfg, contrast_params);
                if (with_trace)
                    out.trace = eval::distance_trace(cm, contrast_params, splits.test,
                                                     vc.train_hyperparams().distance);
                if (with_filter)
                    out.filter = filter_curve(vc, ds, cm, contrast_params,
                                              {-1.0, 0.0, 0.25, 0.5, 0.75, 1.0});
            }
        } else {
            if (contrast_params.count() == 0)
                throw StateError("rl variant needs the +contrast model trained first");
            nn::ParamStore rl_params = contrast_params.clone_values();
            const model::Model m = model::Model::attach(contrast_cfg, rl_params);
            out.rl_run = rl::run_grpo(m, rl_params, splits.train, splits.valid, ds.catalog,
                                      vc.rl_run_config());
            if (progress)
                *progress << "[seed " << seed << "] rl best round " << out.rl_run.best_round
                          << " valid_hr1 " << num(out.rl_run.best_valid_hr1) << "\n";
            vo.test = eval::evaluate(m, rl_params, splits.test, ds.catalog, vc.eval_protocol(),
                                     &vo.per);
            vo.valid_hr1 = out.rl_run.best_valid_hr1;
        }
        out.variants.push_back(std::move(vo));
    }
    return out;
}

AblateSummary run_ablation(const RunConfig& rc, int n_seeds, bool with_trace,
                           bool with_filter, std::ostream* progress) {
    if (n_seeds < 1) throw ConfigError("ablation needs at least one seed");
    AblateSummary out;
    for (int s = 0; s < n_seeds; ++s)
        out.seeds.push_back(run_seed_experiment(rc, rc.seed + static_cast<std::uint64_t>(s),
                                                with_trace, with_filter, progress));

    const auto& variants = out.seeds.front().variants;
    for (std::size_t v = 1; v < variants.size(); ++v) {
        PairSummary pair;
        pair.a = variants[v - 1].variant.name;
        pair.b = variants[v].variant.name;
        pair.seeds = n_seeds;
        std::vector<double> pooled_a, pooled_b;
        for (const SeedOutcome& so : out.seeds) {
            const auto& a = so.variants[v - 1];
            const auto& b = so.variants[v];
            pooled_a.insert(pooled_a.end(), a.per.ndcg5.begin(), a.per.ndcg5.end());
            pooled_b.insert(pooled_b.end(), b.per.ndcg5.begin(), b.per.ndcg5.end());
            if (b.test.ndcg5 >= a.test.ndcg5) ++pair.b_wins;
        }
        pair.ndcg5 = eval::paired_ttest(pooled_a, pooled_b);
        out.pairs.push_back(pair);
    }
    return out;
}

std::string metric_table_text(
    const std::vector<std::pair<std::string, eval::MetricTable>>& rows) {
    std::ostringstream os;
    char line[160];
    std::snprintf(line, sizeof line, "%-14s %8s %8s %8s %8s %8s %8s\n", "variant", "HR@1",
                  "HR@5", "HR@10", "NDCG@5", "NDCG@10", "n");
    os << line;
    for (const auto& [name, t] : rows) {
        std::snprintf(line, sizeof line, "%-14s %8.4f %8.4f %8.4f %8.4f %8.4f %8d\n",
                      name.c_str(), t.hr1, t.hr5, t.hr10, t.ndcg5, t.ndcg10, t.instances);
        os << line;
    }
    return os.str();
}

std::string epoch_records(const std::vector<train::EpochMetrics>& epochs) {
    std::ostringstream os;
    os << "epoch\tl_rec\tl_tcl\tl_reg\ttotal\tgrad_norm\tinstances\tbatches\n";
    for (const auto& e : epochs)
        os << e.epoch << "\t" << num(e.l_rec) << "\t" << num(e.l_tcl) << "\t" << num(e.l_reg)
           << "\t" << num(e.total) << "\t" << num(e.grad_norm) << "\t" << e.instances << "\t"
           << e.batches << "\n";
    return os.str();
}

std::string rl_records(const rl::RlRunResult& run) {
    std::ostringstream os;
    os << "round\tmean_reward\tmean_kl\tratio_mean\tratio_min\tratio_max\tkept\tskipped\t"
          "degenerate\tgrad_norm\tvalid_hr1\n";
    for (const auto& r : run.rounds)
        os << r.round << "\t" << num(r.mean_reward) << "\t" << num(r.mean_kl) << "\t"
           << num(r.ratio_mean) << "\t" << num(r.ratio_min) << "\t" << num(r.ratio_max) << "\t"
           << r.kept_trajectories << "\t" << r.skipped_instances << "\t" << r.degenerate_pools
           << "\t" << num(r.grad_norm) << "\t" << num(r.valid_hr1) << "\n";
    os << "best_round\t" << run.best_round << "\n";
    os << "best_valid_hr1\t" << num(run.best_valid_hr1) << "\n";
    return os.str();
}

std::string trace_records(const eval::DistanceTrace& trace) {
    std::ostringstream os;
    os << "step\tdist_mean\tdist_search\tdist_rec\n";
    for (std::size_t k = 0; k < trace.mean_all.size(); ++k)
        os << k << "\t" << num(trace.mean_all[k]) << "\t" << num(trace.mean_search[k]) << "\t"
           << num(trace.mean_rec[k]) << "\n";
    return os.str();
}

std::string filter_records(const std::vector<FilterPoint>& points) {
    std::ostringstream os;
    os << "tau\tkept_fraction\thr1\thr5\thr10\tndcg5\tndcg10\n";
    for (const auto& p : points)
        os << num(p.tau) << "\t" << num(p.kept_fraction) << "\t" << num(p.table.hr1) << "\t"
           << num(p.table.hr5) << "\t" << num(p.table.hr10) << "\t" << num(p.table.ndcg5)
           << "\t" << num(p.table.ndcg10) << "\n";
    return os.str();
}

std::string ablate_records(const AblateSummary& summary) {
    std::ostringstream os;
    os << "seed\tvariant\tk\ttarget_aware\tlambda_tcl\trl\thr1\thr5\thr10\tndcg5\tndcg10\n";
    for (const SeedOutcome& so : summary.seeds)
        for (const VariantOutcome& vo : so.variants)
            os << so.seed << "\t" << vo.variant.name << "\t" << vo.variant.K << "\t"
               << (vo.variant.target_aware ? 1 : 0) << "\t" << num(vo.variant.lambda_tcl)
               << "\t" << (vo.variant.run_rl ? 1 : 0) << "\t" << num(vo.test.hr1) << "\t"
               << num(vo.test.hr5) << "\t" << num(vo.test.hr10) << "\t" << num(vo.test.ndcg5)
               << "\t" << num(vo.test.ndcg10) << "\n";

    os << "\nvariant\tndcg5_mean\tndcg5_std\n";
    if (!summary.seeds.empty()) {
        const std::size_t nv = summary.seeds.front().variants.size();
        for (std::size_t v = 0; v < nv; ++v) {
            std::vector<double> means;
            for (const SeedOutcome& so : summary.seeds)
                means.push_back(so.variants[v].test.ndcg5);
            os << summary.seeds.front().variants[v].variant.name << "\t" << num(mean_of(means))
               << "\t" << num(std_of(means)) << "\n";
        }
    }

    os << "\npair\tmean_diff\tt\tp_one_sided\tn\tb_wins\tseeds\n";
    for (const PairSummary& p : summary.pairs)
        os << p.a << "->" << p.b << "\t" << num(p.ndcg5.mean_diff) << "\t" << num(p.ndcg5.t)
           << "\t" << num(p.ndcg5.p_one_sided) << "\t" << p.ndcg5.n << "\t" << p.b_wins << "\t"
           << p.seeds << "\n";
    return os.str();
}

}  // namespace lcr::harness
