#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "lcr/checkpoint.hpp"
#include "lcr/config.hpp"
#include "lcr/error.hpp"
#include "lcr/harness.hpp"
#include "lcr/model.hpp"
#include "lcr/rng.hpp"

using namespace lcr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("lcr_test_" + std::to_string(Rng(std::random_device{}()).below(1u << 30)));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_all(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

TEST_CASE("config defaults, overrides, and unknown keys") {
    RunConfig rc;
    rc.validate();
    CHECK(rc.d == 64);
    CHECK(rc.epochs == 2);
    CHECK(rc.synth.n_users == 2000);

    apply_overrides(rc, {"model.d=16", "train.lr=0.003", "synth.users=100",
                         "rl.metric=ndcg5", "model.pre_layernorm=true"});
    CHECK(rc.d == 16);
    CHECK(rc.lr == 0.003);
    CHECK(rc.synth.n_users == 100);
    CHECK(rc.rl_metric == "ndcg5");
    CHECK(rc.pre_layernorm);

    CHECK_THROWS_AS(apply_overrides(rc, {"model.width=8"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(rc, {"model.d"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(rc, {"model.d=abc"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(rc, {"model.pre_layernorm=maybe"}), ConfigError);

    rc.d = 15;
    rc.heads = 2;
    CHECK_THROWS_AS(rc.validate(), ConfigError);
}

TEST_CASE("config file parsing and echo round-trip") {
    TempDir tmp;
    {
        std::ofstream out(tmp.file("run.cfg"));
        out << "# comment line\n";
        out << "model.d = 24\n";
        out << "\n";
        out << "train.epochs=5\n";
        out << "synth.p_relevant = 0.4\n";
    }
    const RunConfig rc = parse_config_file(tmp.file("run.cfg"));
    CHECK(rc.d == 24);
    CHECK(rc.epochs == 5);
    CHECK(rc.synth.p_relevant == 0.4);
    // Untouched keys keep their defaults.
    CHECK(rc.heads == 2);

    // Echo every key, re-parse, and the configs must agree exactly.
    std::ostringstream echoed;
    echo_config(rc, echoed);
    {
        std::ofstream out(tmp.file("echoed.cfg"));
        out << echoed.str();
    }
    const RunConfig back = parse_config_file(tmp.file("echoed.cfg"));
    std::ostringstream echoed2;
    echo_config(back, echoed2);
    CHECK(echoed.str() == echoed2.str());

    CHECK_THROWS_AS((void)parse_config_file(tmp.file("missing.cfg")), IoError);
    {
        std::ofstream out(tmp.file("bad.cfg"));
        out << "not a key value line\n";
    }
    CHECK_THROWS_AS((void)parse_config_file(tmp.file("bad.cfg")), ConfigError);

    // The reference text mentions every top-level key group.
    const std::string ref = config_reference();
    for (const char* key : {"model.d", "synth.users", "train.lr", "rl.gamma", "eval.negatives",
                            "paths.out"})
        CHECK(ref.find(key) != std::string::npos);
}

TEST_CASE("derived config views wire the flat keys through") {
    RunConfig rc;
    apply_overrides(rc, {"model.d=16", "model.k=3", "model.learned_agg=true",
                         "train.margin=0.75", "train.distance=cosine", "rl.n_traj=6",
                         "rl.metric=ndcg5", "eval.negatives=49", "eval.seed=11"});
    const data::Catalog cat{50, 200, 100};
    const model::ModelConfig mc = rc.model_config(cat);
    CHECK(mc.d == 16);
    CHECK(mc.K == 3);
    CHECK(mc.learned_agg);
    CHECK(mc.n_users == 50);
    CHECK(mc.n_items == 200);
    CHECK(mc.n_words == 100);

    const train::TrainHyperparams hp = rc.train_hyperparams();
    CHECK(hp.margin == 0.75);
    CHECK(hp.distance == train::Distance::cosine);

    const rl::RlRunConfig rlc = rc.rl_run_config();
    CHECK(rlc.grpo.rollout.n_traj == 6);
    CHECK(rlc.grpo.rollout.metric == rl::RewardMetric::ndcg5);
    CHECK(rlc.valid_protocol.negatives == 49);
    CHECK(rlc.valid_protocol.seed == 11);

    const eval::Protocol ep = rc.eval_protocol();
    CHECK(ep.negatives == 49);
    CHECK(ep.seed == 11);
}

TEST_CASE("run directories refuse to clobber existing output") {
    TempDir tmp;
    const std::string dir = (tmp.path / "run1").string();
    harness::ensure_run_dir(dir, false);
    CHECK(fs::is_directory(dir));
    // Empty directory: fine to reuse.
    harness::ensure_run_dir(dir, false);

    harness::write_text(dir + "/metrics.tsv", "x\n");
    CHECK_THROWS_AS(harness::ensure_run_dir(dir, false), ConfigError);
    harness::ensure_run_dir(dir, true);
    CHECK(read_all(dir + "/metrics.tsv") == "x\n");
}

TEST_CASE("checkpoint files round-trip and reject corruption") {
    TempDir tmp;
    model::ModelConfig mc;
    mc.d = 8;
    mc.heads = 2;
    mc.encoder_layers = 1;
    mc.K = 1;
    mc.max_search = 8;
    mc.max_rec = 8;
    mc.n_users = 5;
    mc.n_items = 30;
    mc.n_words = 20;
    nn::ParamStore ps;
    Rng rng(3);
    (void)model::Model::create(mc, ps, rng);

    const std::string p1 = tmp.file("a.ckpt");
    save_checkpoint(p1, mc, Stage::pretrained, ps);

    nn::ParamStore loaded;
    const CheckpointMeta meta = load_checkpoint(p1, loaded);
    CHECK(meta.stage == Stage::pretrained);
    CHECK(meta.cfg.d == 8);
    CHECK(meta.cfg.K == 1);
    CHECK(loaded.count() == ps.count());

    // Values pass through a 32-bit container, so a second save/load cycle
    // is exact: the file and the store both reproduce themselves.
    const std::string p2 = tmp.file("b.ckpt");
    save_checkpoint(p2, meta.cfg, meta.stage, loaded);
    CHECK(read_all(p1) == read_all(p2));
    nn::ParamStore loaded2;
    (void)load_checkpoint(p2, loaded2);
    CHECK(loaded2.checksum() == loaded.checksum());

    // The model attaches to reloaded parameters without complaint.
    (void)model::Model::attach(meta.cfg, loaded);

    nn::ParamStore busy;
    Rng brng(1);
    busy.create("x", 1, 1, brng, 0.0);
    CHECK_THROWS_AS((void)load_checkpoint(p1, busy), StateError);

    nn::ParamStore fresh;
    CHECK_THROWS_AS((void)load_checkpoint(tmp.file("nope.ckpt"), fresh), IoError);

    // Magic corruption.
    {
        std::string bytes = read_all(p1);
        bytes[0] = 'X';
        std::ofstream out(tmp.file("bad_magic.ckpt"), std::ios::binary);
        out << bytes;
    }
    CHECK_THROWS_AS((void)load_checkpoint(tmp.file("bad_magic.ckpt"), fresh), ParseError);

    // Truncation.
    {
        const std::string bytes = read_all(p1);
        std::ofstream out(tmp.file("short.ckpt"), std::ios::binary);
        out << bytes.substr(0, bytes.size() - 7);
    }
    CHECK_THROWS_AS((void)load_checkpoint(tmp.file("short.ckpt"), fresh), ParseError);

    // Trailing garbage.
    {
        std::string bytes = read_all(p1);
        bytes += "extra";
        std::ofstream out(tmp.file("long.ckpt"), std::ios::binary);
        out << bytes;
    }
    CHECK_THROWS_AS((void)load_checkpoint(tmp.file("long.ckpt"), fresh), ParseError);

    CHECK(stage_name(Stage::rl) == "rl");
    CHECK(parse_stage("pretrained") == Stage::pretrained);
    CHECK_THROWS_AS((void)parse_stage("finetuned"), ConfigError);
}

TEST_CASE("ablation ladder adds one capability per rung") {
    RunConfig rc;
    apply_overrides(rc, {"model.k=3", "train.lambda_tcl=0.2"});
    const auto variants = harness::ablation_variants(rc);
    REQUIRE(variants.size() == 5);

    CHECK(variants[0].name == "base");
    CHECK(variants[0].K == 0);
    CHECK(!variants[0].target_aware);
    CHECK(variants[0].lambda_tcl == 0.0);
    CHECK(!variants[0].run_rl);

    CHECK(variants[1].name == "+reason");
    CHECK(variants[1].K == 3);
    CHECK(!variants[1].target_aware);

    CHECK(variants[2].name == "+target-agg");
    CHECK(variants[2].K == 3);
    CHECK(variants[2].target_aware);
    CHECK(variants[2].lambda_tcl == 0.0);

    CHECK(variants[3].name == "+contrast");
    CHECK(variants[3].lambda_tcl == 0.2);
    CHECK(!variants[3].run_rl);

    CHECK(variants[4].name == "+rl");
    CHECK(variants[4].run_rl);
    CHECK(variants[4].lambda_tcl == 0.2);

    // variant_config projects the toggles back onto a run config.
    const RunConfig vc = harness::variant_config(rc, variants[2]);
    CHECK(vc.K == 3);
    CHECK(vc.target_aware);
    CHECK(vc.lambda_tcl == 0.0);
    const RunConfig vb = harness::variant_config(rc, variants[0]);
    CHECK(vb.K == 0);
    CHECK(!vb.target_aware);
}

TEST_CASE("record formatters emit one header and aligned rows") {
    std::vector<train::EpochMetrics> epochs(2);
    epochs[0].epoch = 1;
    epochs[0].l_rec = 0.5;
    epochs[0].instances = 10;
    epochs[0].batches = 2;
    epochs[1].epoch = 2;
    epochs[1].l_rec = 0.25;
    const std::string er = harness::epoch_records(epochs);
    std::istringstream is(er);
    std::string line;
    int rows = 0;
    std::string header;
    while (std::getline(is, line)) {
        if (rows == 0) header = line;
        ++rows;
    }
    CHECK(rows == 3);
    CHECK(header.find("epoch") != std::string::npos);
    CHECK(header.find('\t') != std::string::npos);
    CHECK(er.find("0.25") != std::string::npos);

    eval::MetricTable t;
    t.hr1 = 0.125;
    t.instances = 8;
    const std::string mt = harness::metric_table_text({{"base", t}});
    CHECK(mt.find("base") != std::string::npos);
    CHECK(mt.find("0.125") != std::string::npos);

    eval::DistanceTrace tr;
    tr.mean_all = {1.5, 1.0};
    tr.mean_search = {1.25, 0.75};
    tr.mean_rec = {1.75, 1.25};
    tr.instances = 4;
    const std::string trr = harness::trace_records(tr);
    CHECK(trr.find("step") != std::string::npos);
    CHECK(trr.find("1.25") != std::string::npos);

    std::vector<harness::FilterPoint> fps(1);
    fps[0].tau = 0.5;
    fps[0].kept_fraction = 0.25;
    const std::string fr = harness::filter_records(fps);
    CHECK(fr.find("tau") != std::string::npos);
    CHECK(fr.find("0.5") != std::string::npos);
}

TEST_CASE("pretraining runs end to end on a small config") {
    RunConfig rc;
    apply_overrides(rc, {"model.d=8", "model.k=1", "model.max_search=8", "model.max_rec=8",
                         "synth.users=40", "synth.items=60", "synth.words=40",
                         "train.epochs=1", "eval.negatives=19"});
    rc.validate();
    const data::Dataset ds = data::generate_synthetic(rc.synth);
    const data::Splits splits = data::leave_one_out_split(ds, rc.max_search, rc.max_rec);
    REQUIRE(!splits.train.empty());

    const harness::PretrainResult pr = harness::pretrain(rc, ds.catalog, splits.train, nullptr);
    CHECK(pr.epochs.size() == 1);
    CHECK(pr.epochs[0].instances == static_cast<int>(splits.train.size()));
    CHECK(pr.params.count() > 0);

    // Same config, same seed: the pretrain entry point is deterministic.
    const harness::PretrainResult pr2 = harness::pretrain(rc, ds.catalog, splits.train, nullptr);
    CHECK(pr2.params.checksum() == pr.params.checksum());
    CHECK(pr2.epochs[0].l_rec == pr.epochs[0].l_rec);

    // Warm start: dump a checkpoint, point init at it, train zero epochs,
    // and the loaded parameters come back exactly.
    TempDir tmp;
    const model::Model m = model::Model::attach(pr.mcfg, pr.params);
    save_checkpoint(tmp.file("warm.ckpt"), pr.mcfg, Stage::pretrained, pr.params);
    RunConfig warm = rc;
    warm.init_checkpoint = tmp.file("warm.ckpt");
    warm.epochs = 0;
    const harness::PretrainResult pw = harness::pretrain(warm, ds.catalog, splits.train, nullptr);
    CHECK(pw.epochs.empty());
    nn::ParamStore reloaded;
    (void)load_checkpoint(tmp.file("warm.ckpt"), reloaded);
    CHECK(pw.params.checksum() == reloaded.checksum());
}
