#pragma once

#include <string>
#include <vector>

#include "lcr/data.hpp"
#include "lcr/eval.hpp"
#include "lcr/model.hpp"

namespace lcr::rl {

enum class RewardMetric { hr1, ndcg5 };

RewardMetric parse_reward_metric(const std::string& name);
std::string reward_metric_name(RewardMetric m);

struct RolloutConfig {
    int n_traj = 4;          // N, at least 2
    double gamma = 0.1;      // noise magnitude
    double sigma = 1.0;      // noise std, positive
    int pool_negatives = 19; // reward pool = target + this many negatives
    RewardMetric metric = RewardMetric::hr1;
    bool target_aware = true;

    void validate() const;
};

struct Trajectory {
    int index = 1;                       // 1-based; trajectory 1 is noise-free
    nn::Tensor2 init_s, init_r;          // initial reasoning states, 1 x d
    std::vector<nn::Tensor2> states_s;   // k = 0..K reasoning states per side
    std::vector<nn::Tensor2> states_r;
    nn::Tensor2 scores;                  // pool x 1 pre-sigmoid scores
    double reward = 0.0;
};

struct InstanceRollout {
    std::vector<int> pool;  // pool[0] is the target
    int target_index = 0;
    bool degenerate_pool = false;  // pool of size 1, probability forced to 1
    std::vector<Trajectory> trajectories;
};

// Samples the reward pool, then runs N reasoning trajectories under the
// given (rollout-time) parameters: trajectory 1 with the encoder-derived
// initial states, the rest with gamma * N(0, sigma^2 I) added per side.
InstanceRollout rollout(const model::Model& m, const nn::ParamStore& ps_old,
                        const data::TrainInstance& inst, const data::Catalog& cat,
                        const RolloutConfig& cfg, Rng& rng);

// Ranking reward for one trajectory's scores over its pool.
double trajectory_reward(const Trajectory& traj, const InstanceRollout& ro, RewardMetric metric);

// Standardized rewards with population std; all zero when std < 1e-8.
std::vector<double> advantages(const std::vector<double>& rewards);

// Softmax probability of the candidate at target_index given pool scores.
double softmax_at(const nn::Tensor2& scores, int target_index);

// Probability of the target under the policy defined by ps, recomputing the
// forward pass from the trajectory's stored initial states.
double target_prob(const model::Model& m, const nn::ParamStore& ps,
                   const data::TrainInstance& inst, const std::vector<int>& pool,
                   int target_index, const nn::Tensor2& init_s, const nn::Tensor2& init_r,
                   bool target_aware, bool* degenerate = nullptr);

// Per-sample KL estimate r - log r - 1 with r = p_ref / p_cur; >= 0, zero
// only when the probabilities match.
double kl_estimate(double p_ref, double p_cur);

struct GrpoConfig {
    RolloutConfig rollout;
    double lambda_kl = 0.01;
    double lr = 1e-4;
    // Ratio clipping is off by default; the objective as formulated has none.
    bool clip_ratio = false;
    double clip_eps = 0.2;

    void validate() const;
};

struct UpdateMetrics {
    int round = 0;
    double mean_reward = 0.0;  // over every trajectory in the batch
    double mean_kl = 0.0;      // over kept trajectories, at pre-step parameters
    double ratio_mean = 0.0;
    double ratio_min = 0.0;
    double ratio_max = 0.0;
    double grad_norm = 0.0;
    int kept_trajectories = 0;
    int skipped_instances = 0;
    int degenerate_pools = 0;
    double valid_hr1 = -1.0;  // filled by the round driver
};

// One gradient step on the surrogate: ascend mean over trajectories of
// (p_cur / p_old) * A - lambda_kl * kl(p_ref, p_cur). Rollouts must have
// been produced by the current ps_live (it plays pi_old for this round).
UpdateMetrics grpo_update(const model::Model& m, nn::ParamStore& ps_live,
                          const nn::ParamStore& ps_ref,
                          const std::vector<data::TrainInstance>& instances,
                          const std::vector<InstanceRollout>& rollouts,
                          const GrpoConfig& cfg);

struct RlRunConfig {
    GrpoConfig grpo;
    int rounds = 30;
    int round_instances = 256;
    int patience = 0;  // stop after this many rounds without a new best; 0 = off
    std::uint64_t seed = 1;
    double kl_cap = 0.5;
    eval::Protocol valid_protocol;

    void validate() const;
};

struct RlRunResult {
    std::vector<UpdateMetrics> rounds;  // rounds[0] is the pre-RL snapshot
    int best_round = 0;
    double best_valid_hr1 = 0.0;
};

// Full fine-tuning loop: per round, sample instances, roll out under the
// current parameters, take one update step, and track validation HR@1. The
// store is left holding the best-validation parameters (possibly the
// untouched round-0 ones).
RlRunResult run_grpo(const model::Model& m, nn::ParamStore& ps_live,
                     const std::vector<data::TrainInstance>& train,
                     const std::vector<data::TrainInstance>& valid,
                     const data::Catalog& cat, const RlRunConfig& cfg);

}  // namespace lcr::rl
