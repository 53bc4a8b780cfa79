#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lcr/harness.hpp"
#include "lcr/rng.hpp"

namespace {

namespace fs = std::filesystem;
using lcr::RunConfig;

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    bool force = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path,
                    "config file (default: $LCR_CONFIG when set)");
    cmd->add_option("--set", opts.sets, "override a config key, e.g. --set train.lr=0.01");
    cmd->add_flag("--force", opts.force, "allow writing into a non-empty output directory");
}

RunConfig load_config(const CommonOpts& opts) {
    std::string path = opts.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("LCR_CONFIG")) path = env;
    }
    RunConfig rc = path.empty() ? RunConfig{} : lcr::parse_config_file(path);
    lcr::apply_overrides(rc, opts.sets);
    return rc;
}

std::string resolved_config_text(const RunConfig& rc) {
    std::ostringstream os;
    lcr::echo_config(rc, os);
    return os.str();
}

void start_run_dir(const RunConfig& rc, bool force) {
    lcr::harness::ensure_run_dir(rc.out_dir, force);
    lcr::harness::write_text(rc.out_dir + "/resolved_config.txt", resolved_config_text(rc));
}

lcr::data::Dataset load_dataset(const RunConfig& rc) {
    if (rc.data_path.empty()) throw lcr::ConfigError("paths.data is not set");
    return lcr::data::load_log(rc.data_path);
}

int cmd_synth(const CommonOpts& opts) {
    const RunConfig rc = load_config(opts);
    if (rc.data_path.empty()) throw lcr::ConfigError("paths.data is not set");
    if (fs::exists(rc.data_path) && !opts.force)
        throw lcr::ConfigError("'" + rc.data_path + "' exists; pass --force to overwrite");
    const auto ds = lcr::data::generate_synthetic(rc.synth);
    lcr::data::save_log(rc.data_path, ds);

    std::int64_t events = 0, relevant = 0, rec_events = 0;
    for (const auto& h : ds.histories) {
        rec_events += static_cast<std::int64_t>(h.rec.size());
        for (const auto& ev : h.search) {
            ++events;
            if (lcr::data::synth_event_is_relevant(ev, ds.catalog)) ++relevant;
        }
    }
    std::cout << "wrote " << rc.data_path << "\n"
              << "users " << ds.catalog.n_users << " items " << ds.catalog.n_items << " words "
              << ds.catalog.n_words << "\n"
              << "search_events " << events << " rec_events " << rec_events << "\n"
              << "relevant_fraction " << (events ? static_cast<double>(relevant) / events : 0.0)
              << " (configured p " << rc.synth.p_relevant << ")\n";
    return 0;
}

int cmd_train(const CommonOpts& opts) {
    RunConfig rc = load_config(opts);
    rc.validate();
    start_run_dir(rc, opts.force);
    const auto ds = load_dataset(rc);
    const auto splits = lcr::data::leave_one_out_split(ds, rc.max_search, rc.max_rec);
    std::cout << "instances train " << splits.train.size() << " valid " << splits.valid.size()
              << " test " << splits.test.size() << " (skipped users "
              << splits.counts.skipped_users << ")\n";

    auto pr = lcr::harness::pretrain(rc, ds.catalog, splits.train, &std::cout);
    lcr::harness::write_text(rc.out_dir + "/train_metrics.tsv",
                             lcr::harness::epoch_records(pr.epochs));

    const auto m = lcr::model::Model::attach(pr.mcfg, pr.params);
    std::vector<std::pair<std::string, lcr::eval::MetricTable>> rows;
    rows.emplace_back("valid", lcr::eval::evaluate(m, pr.params, splits.valid, ds.catalog,
                                                   rc.eval_protocol()));
    rows.emplace_back("test", lcr::eval::evaluate(m, pr.params, splits.test, ds.catalog,
                                                  rc.eval_protocol()));
    const std::string table = lcr::harness::metric_table_text(rows);
    std::cout << table;
    lcr::harness::write_text(rc.out_dir + "/metrics.txt", table);

    const std::string ckpt =
        rc.checkpoint_path.empty() ? rc.out_dir + "/pretrained.ckpt" : rc.checkpoint_path;
    lcr::save_checkpoint(ckpt, pr.mcfg, lcr::Stage::pretrained, pr.params);
    std::cout << "checkpoint " << ckpt << "\n";
    return 0;
}

int cmd_rl(const CommonOpts& opts) {
    RunConfig rc = load_config(opts);
    rc.validate();
    if (rc.init_checkpoint.empty())
        throw lcr::ConfigError("paths.init must point at the pretrained checkpoint");
    start_run_dir(rc, opts.force);
    const auto ds = load_dataset(rc);

    lcr::nn::ParamStore params;
    const auto meta = lcr::load_checkpoint(rc.init_checkpoint, params);
    const auto m = lcr::model::Model::attach(meta.cfg, params);
    const auto splits = lcr::data::leave_one_out_split(ds, meta.cfg.max_search, meta.cfg.max_rec);

    const auto result = lcr::rl::run_grpo(m, params, splits.train, splits.valid, ds.catalog,
                                          rc.rl_run_config());
    lcr::harness::write_text(rc.out_dir + "/rl_metrics.tsv", lcr::harness::rl_records(result));
    std::cout << "best round " << result.best_round << " valid HR@1 " << result.best_valid_hr1
              << "\n";

    std::vector<std::pair<std::string, lcr::eval::MetricTable>> rows;
    rows.emplace_back("test", lcr::eval::evaluate(m, params, splits.test, ds.catalog,
                                                  rc.eval_protocol()));
    const std::string table = lcr::harness::metric_table_text(rows);
    std::cout << table;
    lcr::harness::write_text(rc.out_dir + "/metrics.txt", table);

    const std::string ckpt =
        rc.checkpoint_path.empty() ? rc.out_dir + "/rl.ckpt" : rc.checkpoint_path;
    lcr::save_checkpoint(ckpt, meta.cfg, lcr::Stage::rl, params);
    std::cout << "checkpoint " << ckpt << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& split_name) {
    RunConfig rc = load_config(opts);
    if (rc.checkpoint_path.empty())
        throw lcr::ConfigError("paths.checkpoint must point at the model to evaluate");
    const auto ds = load_dataset(rc);
    lcr::nn::ParamStore params;
    const auto meta = lcr::load_checkpoint(rc.checkpoint_path, params);
    const auto m = lcr::model::Model::attach(meta.cfg, params);
    const auto splits = lcr::data::leave_one_out_split(ds, meta.cfg.max_search, meta.cfg.max_rec);

    const auto& split = split_name == "valid" ? splits.valid : splits.test;
    std::vector<std::pair<std::string, lcr::eval::MetricTable>> rows;
    rows.emplace_back(split_name + " (" + lcr::stage_name(meta.stage) + ")",
                      lcr::eval::evaluate(m, params, split, ds.catalog, rc.eval_protocol()));
    const std::string table = lcr::harness::metric_table_text(rows);
    std::cout << table;
    if (!rc.out_dir.empty()) {
        start_run_dir(rc, opts.force);
        lcr::harness::write_text(rc.out_dir + "/metrics.txt", table);
    }
    return 0;
}

int cmd_ablate(const CommonOpts& opts, int n_seeds, bool with_trace, bool with_filter) {
    RunConfig rc = load_config(opts);
    rc.validate();
    start_run_dir(rc, opts.force);

    const auto summary = lcr::harness::run_ablation(rc, n_seeds, with_trace, with_filter,
                                                    &std::cout);
    lcr::harness::write_text(rc.out_dir + "/ablate.tsv", lcr::harness::ablate_records(summary));
    for (const auto& so : summary.seeds) {
        const std::string prefix = rc.out_dir + "/seed_" + std::to_string(so.seed);
        if (!so.trace.mean_all.empty())
            lcr::harness::write_text(prefix + "_trace.tsv", lcr::harness::trace_records(so.trace));
        if (!so.filter.empty())
            lcr::harness::write_text(prefix + "_filter.tsv",
                                     lcr::harness::filter_records(so.filter));
        lcr::harness::write_text(prefix + "_rl.tsv", lcr::harness::rl_records(so.rl_run));
    }

    std::vector<std::pair<std::string, lcr::eval::MetricTable>> rows;
    for (std::size_t v = 0; v < summary.seeds.front().variants.size(); ++v) {
        lcr::eval::MetricTable mean;
        for (const auto& so : summary.seeds) {
            const auto& t = so.variants[v].test;
            mean.hr1 += t.hr1;
            mean.hr5 += t.hr5;
            mean.hr10 += t.hr10;
            mean.ndcg5 += t.ndcg5;
            mean.ndcg10 += t.ndcg10;
            mean.instances += t.instances;
        }
        const double n = static_cast<double>(summary.seeds.size());
        mean.hr1 /= n;
        mean.hr5 /= n;
        mean.hr10 /= n;
        mean.ndcg5 /= n;
        mean.ndcg10 /= n;
        rows.emplace_back(summary.seeds.front().variants[v].variant.name, mean);
    }
    const std::string table = lcr::harness::metric_table_text(rows);
    std::cout << "\nmean over " << summary.seeds.size() << " seeds\n" << table;
    return 0;
}

int cmd_filter_analyze(const CommonOpts& opts, std::vector<double> taus) {
    RunConfig rc = load_config(opts);
    if (rc.checkpoint_path.empty())
        throw lcr::ConfigError("paths.checkpoint must point at the model to analyze");
    const auto ds = load_dataset(rc);
    lcr::nn::ParamStore params;
    const auto meta = lcr::load_checkpoint(rc.checkpoint_path, params);
    const auto m = lcr::model::Model::attach(meta.cfg, params);

    if (taus.empty()) taus = {-1.0, 0.0, 0.5, 1.0};
    RunConfig eff = rc;
    eff.max_search = meta.cfg.max_search;
    eff.max_rec = meta.cfg.max_rec;
    const auto curve = lcr::harness::filter_curve(eff, ds, m, params, taus);
    const std::string records = lcr::harness::filter_records(curve);
    std::cout << records;
    if (!rc.out_dir.empty()) {
        start_run_dir(rc, opts.force);
        lcr::harness::write_text(rc.out_dir + "/filter.tsv", records);
    }
    return 0;
}

int exit_code_for(const lcr::Error& e) {
    if (e.category == "config") return 2;
    if (e.category == "validation") return 3;
    if (e.category == "parse") return 4;
    if (e.category == "mask") return 5;
    if (e.category == "numeric") return 6;
    if (e.category == "state") return 7;
    if (e.category == "io") return 8;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"search-enhanced recommender: train, fine-tune, and evaluate"};
    app.require_subcommand(1);

    CommonOpts synth_o, train_o, rl_o, eval_o, ablate_o, filter_o;
    std::string eval_split = "test";
    int ablate_seeds = 5;
    bool ablate_no_trace = false, ablate_no_filter = false;
    std::vector<double> filter_taus;

    add_common(app.add_subcommand("synth", "generate a synthetic event log"), synth_o);
    add_common(app.add_subcommand("train", "pre-train a model on an event log"), train_o);
    add_common(app.add_subcommand("rl", "GRPO fine-tuning from a pretrained checkpoint"), rl_o);
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    add_common(eval_cmd, eval_o);
    eval_cmd->add_option("--split", eval_split, "valid or test")
        ->check(CLI::IsMember({"valid", "test"}));
    auto* ablate_cmd = app.add_subcommand("ablate", "train the variant ladder across seeds");
    add_common(ablate_cmd, ablate_o);
    ablate_cmd->add_option("--seeds", ablate_seeds, "number of seeds")->check(CLI::PositiveNumber);
    ablate_cmd->add_flag("--no-trace", ablate_no_trace, "skip the distance-trace records");
    ablate_cmd->add_flag("--no-filter", ablate_no_filter, "skip the filter-curve records");
    auto* filter_cmd =
        app.add_subcommand("filter-analyze", "search-history relevance filter curve");
    add_common(filter_cmd, filter_o);
    filter_cmd->add_option("--tau", filter_taus, "thresholds to evaluate");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("synth")) return cmd_synth(synth_o);
        if (app.got_subcommand("train")) return cmd_train(train_o);
        if (app.got_subcommand("rl")) return cmd_rl(rl_o);
        if (app.got_subcommand("eval")) return cmd_eval(eval_o, eval_split);
        if (app.got_subcommand("ablate"))
            return cmd_ablate(ablate_o, ablate_seeds, !ablate_no_trace, !ablate_no_filter);
        if (app.got_subcommand("filter-analyze")) return cmd_filter_analyze(filter_o, filter_taus);
    } catch (const lcr::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
