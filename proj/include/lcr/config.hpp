#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lcr/data.hpp"
#include "lcr/eval.hpp"
#include "lcr/model.hpp"
#include "lcr/objectives.hpp"
#include "lcr/rl.hpp"

namespace lcr {

// Flat key=value run configuration. Every key has a default; parsing rejects
// unknown keys. The same keys work in config files and --set overrides.
struct RunConfig {
    // model.*
    int d = 64;
    int heads = 2;
    int layers = 1;
    int ffn_hidden = 0;  // 0 means 4*d
    int K = 2;
    int max_search = 50;
    int max_rec = 50;
    bool pre_layernorm = false;
    bool learned_agg = false;
    bool target_aware = true;

    // synth.*
    data::SynthConfig synth;

    // train.*
    int epochs = 2;
    int batch_size = 32;
    double lr = 1e-3;
    double lambda_tcl = 0.1;
    double lambda_reg = 1e-6;
    double margin = 0.5;
    std::string distance = "euclidean";
    bool reg_include_embeddings = true;

    // rl.*
    int rl_rounds = 30;
    int rl_round_instances = 256;
    int rl_patience = 0;
    int rl_n_traj = 4;
    double rl_gamma = 0.1;
    double rl_sigma = 1.0;
    int rl_pool_negatives = 19;
    std::string rl_metric = "hr1";
    double rl_lambda_kl = 0.01;
    double rl_lr = 1e-4;
    double rl_kl_cap = 0.5;
    bool rl_clip_ratio = false;
    double rl_clip_eps = 0.2;

    // eval.*
    int eval_negatives = 99;
    std::uint64_t eval_seed = 7;

    // Master seed for parameter init, training shuffles, and RL rollouts.
    std::uint64_t seed = 1;

    // paths.*
    std::string data_path;
    std::string out_dir;
    std::string checkpoint_path;
    std::string init_checkpoint;

    void validate() const;

    // Derived views over the flat fields.
    model::ModelConfig model_config(const data::Catalog& cat) const;
    train::TrainHyperparams train_hyperparams() const;
    rl::RlRunConfig rl_run_config() const;
    eval::Protocol eval_protocol() const;
};

// Reads key=value lines ('#' starts a comment; blank lines skipped).
RunConfig parse_config_file(const std::string& path);

// Applies "key=value" strings on top of cfg; unknown keys throw ConfigError.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets);

// Writes every key with its resolved value, one per line, in schema order.
void echo_config(const RunConfig& cfg, std::ostream& os);

// All known keys with their default values and one-line descriptions.
std::string config_reference();

}  // namespace lcr
