#include "lcr/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "lcr/error.hpp"
#include "lcr/rng.hpp"

namespace lcr {

namespace {

struct Field {
    std::string key;
    std::string help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("key '" + key + "': expected integer, got '" + v + "'");
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("key '" + key + "': expected unsigned integer, got '" + v + "'");
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + key + "': expected real number, got '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

#define INT_FIELD(KEY, MEMBER, HELP)                                            \
    Field{KEY, HELP, [](const RunConfig& c) { return std::to_string(c.MEMBER); }, \
          [](RunConfig& c, const std::string& v) { c.MEMBER = to_int(KEY, v); }}
#define U64_FIELD(KEY, MEMBER, HELP)                                            \
    Field{KEY, HELP, [](const RunConfig& c) { return std::to_string(c.MEMBER); }, \
          [](RunConfig& c, const std::string& v) { c.MEMBER = to_u64(KEY, v); }}
#define DBL_FIELD(KEY, MEMBER, HELP)                                          \
    Field{KEY, HELP, [](const RunConfig& c) { return fmt_double(c.MEMBER); }, \
          [](RunConfig& c, const std::string& v) { c.MEMBER = to_double(KEY, v); }}
#define BOOL_FIELD(KEY, MEMBER, HELP)                                                    \
    Field{KEY, HELP, [](const RunConfig& c) { return c.MEMBER ? "true" : "false"; }, \
          [](RunConfig& c, const std::string& v) { c.MEMBER = to_bool(KEY, v); }}
#define STR_FIELD(KEY, MEMBER, HELP)                               \
    Field{KEY, HELP, [](const RunConfig& c) { return c.MEMBER; }, \
          [](RunConfig& c, const std::string& v) { c.MEMBER = v; }}

const std::vector<Field>& schema() {
    static const std::vector<Field> fields = {
        INT_FIELD("model.d", d, "embedding width"),
        INT_FIELD("model.heads", heads, "attention heads"),
        INT_FIELD("model.layers", layers, "encoder layers per side"),
        INT_FIELD("model.ffn_hidden", ffn_hidden, "FFN hidden width (0 = 4*d)"),
        INT_FIELD("model.k", K, "reasoning steps"),
        INT_FIELD("model.max_search", max_search, "search-history cap"),
        INT_FIELD("model.max_rec", max_rec, "rec-history cap"),
        BOOL_FIELD("model.pre_layernorm", pre_layernorm, "pre-norm encoder blocks"),
        BOOL_FIELD("model.learned_agg", learned_agg, "learned q/k/v in aggregation"),
        BOOL_FIELD("model.target_aware", target_aware, "target-aware aggregation (else mean)"),
        INT_FIELD("synth.users", synth.n_users, "synthetic user count"),
        INT_FIELD("synth.items", synth.n_items, "synthetic item count"),
        INT_FIELD("synth.words", synth.n_words, "synthetic word count"),
        INT_FIELD("synth.latent_dim", synth.latent_dim, "latent interest dimension"),
        DBL_FIELD("synth.p_relevant", synth.p_relevant, "probability a search event is on-interest"),
        INT_FIELD("synth.min_rec", synth.min_rec, "min rec events per user"),
        INT_FIELD("synth.max_rec", synth.max_rec, "max rec events per user"),
        INT_FIELD("synth.min_search", synth.min_search, "min search events per user"),
        INT_FIELD("synth.max_search", synth.max_search, "max search events per user"),
        INT_FIELD("synth.query_words_min", synth.query_words_min, "min words per query"),
        INT_FIELD("synth.query_words_max", synth.query_words_max, "max words per query"),
        INT_FIELD("synth.clicks_min", synth.clicks_min, "min clicks per search event"),
        INT_FIELD("synth.clicks_max", synth.clicks_max, "max clicks per search event"),
        U64_FIELD("synth.seed", synth.seed, "generator seed"),
        INT_FIELD("train.epochs", epochs, "pre-training epochs"),
        INT_FIELD("train.batch_size", batch_size, "instances per optimizer step"),
        DBL_FIELD("train.lr", lr, "Adam learning rate"),
        DBL_FIELD("train.lambda_tcl", lambda_tcl, "contrastive loss weight"),
        DBL_FIELD("train.lambda_reg", lambda_reg, "L2 penalty weight"),
        DBL_FIELD("train.margin", margin, "contrastive hinge margin"),
        STR_FIELD("train.distance", distance, "contrastive distance: euclidean|cosine"),
        BOOL_FIELD("train.reg_include_embeddings", reg_include_embeddings,
                   "L2 penalty covers embedding tables"),
        INT_FIELD("rl.rounds", rl_rounds, "GRPO rounds"),
        INT_FIELD("rl.round_instances", rl_round_instances, "instances rolled out per round"),
        INT_FIELD("rl.patience", rl_patience, "rounds without validation gain before stop (0 = off)"),
        INT_FIELD("rl.n_traj", rl_n_traj, "trajectories per instance"),
        DBL_FIELD("rl.gamma", rl_gamma, "initial-state noise magnitude"),
        DBL_FIELD("rl.sigma", rl_sigma, "initial-state noise std"),
        INT_FIELD("rl.pool_negatives", rl_pool_negatives, "reward-pool negatives"),
        STR_FIELD("rl.metric", rl_metric, "reward metric: hr1|ndcg5"),
        DBL_FIELD("rl.lambda_kl", rl_lambda_kl, "KL penalty weight"),
        DBL_FIELD("rl.lr", rl_lr, "GRPO Adam learning rate"),
        DBL_FIELD("rl.kl_cap", rl_kl_cap, "alert cap on mean per-sample KL"),
        BOOL_FIELD("rl.clip_ratio", rl_clip_ratio, "PPO-style ratio clipping (off = literal objective)"),
        DBL_FIELD("rl.clip_eps", rl_clip_eps, "clip width when rl.clip_ratio"),
        INT_FIELD("eval.negatives", eval_negatives, "sampled negatives per eval instance"),
        U64_FIELD("eval.seed", eval_seed, "negative-sampling seed for evaluation"),
        U64_FIELD("seed", seed, "master seed for init, shuffles, and rollouts"),
        STR_FIELD("paths.data", data_path, "event-log path"),
        STR_FIELD("paths.out", out_dir, "run output directory"),
        STR_FIELD("paths.checkpoint", checkpoint_path, "checkpoint to read or write"),
        STR_FIELD("paths.init", init_checkpoint, "optional checkpoint to initialize training from"),
    };
    return fields;
}

#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD
#undef BOOL_FIELD
#undef STR_FIELD

const Field& find_field(const std::string& key) {
    for (const Field& f : schema())
        if (f.key == key) return f;
    throw ConfigError("unknown config key '" + key + "'");
}

void apply_pair(RunConfig& cfg, const std::string& text, const std::string& where) {
    const auto eq = text.find('=');
    if (eq == std::string::npos)
        throw ConfigError(where + ": expected key=value, got '" + text + "'");
    const std::string key = trim(text.substr(0, eq));
    const std::string value = trim(text.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    find_field(key).set(cfg, value);
}

}  // namespace

void RunConfig::validate() const {
    if (d < 1) throw ConfigError("model.d must be positive");
    if (heads < 1 || d % heads != 0) throw ConfigError("model.heads must divide model.d");
    if (layers < 1) throw ConfigError("model.layers must be at least 1");
    if (K < 0) throw ConfigError("model.k must be non-negative");
    if (max_search < 1 || max_rec < 1) throw ConfigError("history caps must be positive");
    train_hyperparams().validate();
    rl_run_config().validate();
    if (eval_negatives < 1) throw ConfigError("eval.negatives must be positive");
    if (epochs < 0) throw ConfigError("train.epochs must be non-negative");
}

model::ModelConfig RunConfig::model_config(const data::Catalog& cat) const {
    model::ModelConfig mc;
    mc.d = d;
    mc.heads = heads;
    mc.encoder_layers = layers;
    mc.ffn_hidden = ffn_hidden;
    mc.K = K;
    mc.max_search = max_search;
    mc.max_rec = max_rec;
    mc.pre_layernorm = pre_layernorm;
    mc.learned_agg = learned_agg;
    mc.n_users = cat.n_users;
    mc.n_items = cat.n_items;
    mc.n_words = cat.n_words;
    return mc;
}

train::TrainHyperparams RunConfig::train_hyperparams() const {
    train::TrainHyperparams hp;
    hp.lambda_tcl = lambda_tcl;
    hp.lambda_reg = lambda_reg;
    hp.margin = margin;
    hp.distance = train::parse_distance(distance);
    hp.lr = lr;
    hp.batch_size = batch_size;
    hp.seed = mix_seed(seed, 0x70726574ULL);
    hp.reg_include_embeddings = reg_include_embeddings;
    hp.target_aware = target_aware;
    return hp;
}

rl::RlRunConfig RunConfig::rl_run_config() const {
    rl::RlRunConfig rc;
    rc.grpo.rollout.n_traj = rl_n_traj;
    rc.grpo.rollout.gamma = rl_gamma;
    rc.grpo.rollout.sigma = rl_sigma;
    rc.grpo.rollout.pool_negatives = rl_pool_negatives;
    rc.grpo.rollout.metric = rl::parse_reward_metric(rl_metric);
    rc.grpo.rollout.target_aware = target_aware;
    rc.grpo.lambda_kl = rl_lambda_kl;
    rc.grpo.lr = rl_lr;
    rc.grpo.clip_ratio = rl_clip_ratio;
    rc.grpo.clip_eps = rl_clip_eps;
    rc.rounds = rl_rounds;
    rc.round_instances = rl_round_instances;
    rc.patience = rl_patience;
    rc.seed = mix_seed(seed, 0x726c0001ULL);
    rc.kl_cap = rl_kl_cap;
    rc.valid_protocol = eval_protocol();
    return rc;
}

eval::Protocol RunConfig::eval_protocol() const {
    eval::Protocol p;
    p.negatives = eval_negatives;
    p.seed = eval_seed;
    p.target_aware = target_aware;
    return p;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        apply_pair(cfg, line, path + ":" + std::to_string(lineno));
    }
    return cfg;
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
    for (const std::string& s : sets) apply_pair(cfg, s, "--set");
}

void echo_config(const RunConfig& cfg, std::ostream& os) {
    for (const Field& f : schema()) os << f.key << " = " << f.get(cfg) << "\n";
}

std::string config_reference() {
    const RunConfig defaults;
    std::ostringstream os;
    for (const Field& f : schema())
        os << f.key << " = " << f.get(defaults) << "  # " << f.help << "\n";
    return os.str();
}

}  // namespace lcr
