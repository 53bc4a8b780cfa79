#include "lcr/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lcr/error.hpp"
#include "lcr/rng.hpp"

namespace lcr::rl {

namespace {

constexpr double kProbEps = 1e-7;
constexpr double kOldProbFloor = 1e-12;

double clamp_prob(double p) {
    return std::min(std::max(p, kProbEps), 1.0 - kProbEps);
}

nn::Tensor2 perturb(const nn::Tensor2& h, double gamma, double sigma, Rng& rng) {
    nn::Tensor2 out = h;
    for (double& x : out.v) x += gamma * (sigma * rng.normal());
    return out;
}

}  // namespace

RewardMetric parse_reward_metric(const std::string& name) {
    if (name == "hr1") return RewardMetric::hr1;
    if (name == "ndcg5") return RewardMetric::ndcg5;
    throw ConfigError("unknown reward metric '" + name + "' (expected hr1 or ndcg5)");
}

std::string reward_metric_name(RewardMetric m) {
    return m == RewardMetric::hr1 ? "hr1" : "ndcg5";
}

void RolloutConfig::validate() const {
    if (n_traj < 2) throw ConfigError("rollout needs at least 2 trajectories");
    if (gamma < 0.0) throw ConfigError("gamma must be non-negative");
    if (sigma <= 0.0) throw ConfigError("sigma must be positive");
    if (pool_negatives < 0) throw ConfigError("pool_negatives must be non-negative");
}

void GrpoConfig::validate() const {
    rollout.validate();
    if (lambda_kl < 0.0) throw ConfigError("lambda_kl must be non-negative");
    if (lr < 0.0) throw ConfigError("rl lr must be non-negative");
    if (clip_ratio && (clip_eps <= 0.0 || clip_eps >= 1.0))
        throw ConfigError("clip_eps must be in (0,1)");
}

void RlRunConfig::validate() const {
    grpo.validate();
    if (rounds < 0) throw ConfigError("rounds must be non-negative");
    if (round_instances < 1) throw ConfigError("round_instances must be positive");
    if (patience < 0) throw ConfigError("patience must be non-negative");
    if (kl_cap <= 0.0) throw ConfigError("kl_cap must be positive");
}

InstanceRollout rollout(const model::Model& m, const nn::ParamStore& ps_old,
                        const data::TrainInstance& inst, const data::Catalog& cat,
                        const RolloutConfig& cfg, Rng& rng) {
    cfg.validate();
    InstanceRollout out;
    out.pool.push_back(inst.target);
    const auto negs = data::sample_negatives(inst, cat, cfg.pool_negatives, rng);
    out.pool.insert(out.pool.end(), negs.begin(), negs.end());
    out.target_index = 0;
    out.degenerate_pool = out.pool.size() == 1;

    nn::PlainFabric f{ps_old};
    const auto enc_s = m.encode_search(f, inst.search);
    const auto enc_r = m.encode_rec(f, inst.rec_items);

    nn::Tensor2 base_s, base_r;
    for (int i = 1; i <= cfg.n_traj; ++i) {
        Trajectory traj;
        traj.index = i;
        const nn::Tensor2* ov_s = nullptr;
        const nn::Tensor2* ov_r = nullptr;
        if (i > 1) {
            traj.init_s = perturb(base_s, cfg.gamma, cfg.sigma, rng);
            traj.init_r = perturb(base_r, cfg.gamma, cfg.sigma, rng);
            ov_s = &traj.init_s;
            ov_r = &traj.init_r;
        }
        const auto ro = m.reason(f, enc_s, enc_r, true, ov_s, ov_r);
        if (i == 1) {
            traj.init_s = ro.hs0;
            traj.init_r = ro.hr0;
            base_s = ro.hs0;
            base_r = ro.hr0;
        }
        traj.states_s.push_back(ro.hs0);
        traj.states_r.push_back(ro.hr0);
        for (const auto& h : ro.hs) traj.states_s.push_back(h);
        for (const auto& h : ro.hr) traj.states_r.push_back(h);
        traj.scores = m.candidate_logits(f, inst.user, ro, out.pool, cfg.target_aware);
        traj.reward = trajectory_reward(traj, out, cfg.metric);
        out.trajectories.push_back(std::move(traj));
    }
    return out;
}

double trajectory_reward(const Trajectory& traj, const InstanceRollout& ro, RewardMetric metric) {
    const eval::RankedList list = eval::rank_pool(traj.scores, ro.pool, ro.pool[ro.target_index]);
    return metric == RewardMetric::hr1 ? eval::hr_at_k(list, 1) : eval::ndcg_at_k(list, 5);
}

std::vector<double> advantages(const std::vector<double>& rewards) {
    if (rewards.size() < 2) throw ConfigError("advantages need at least 2 rewards");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double std_pop = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (std_pop < 1e-8) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / std_pop;
    return out;
}

double softmax_at(const nn::Tensor2& scores, int target_index) {
    if (scores.cols != 1 || scores.rows < 1)
        throw ConfigError("softmax_at: scores must be n x 1");
    if (target_index < 0 || target_index >= scores.rows)
        throw ConfigError("softmax_at: target index out of range");
    const nn::Tensor2 probs =
        nn::softmax_rows(nn::transpose(scores), nn::Mask::all(1, scores.rows));
    return probs.at(0, target_index);
}

double target_prob(const model::Model& m, const nn::ParamStore& ps,
                   const data::TrainInstance& inst, const std::vector<int>& pool,
                   int target_index, const nn::Tensor2& init_s, const nn::Tensor2& init_r,
                   bool target_aware, bool* degenerate) {
    if (degenerate) *degenerate = pool.size() == 1;
    const nn::Tensor2 scores =
        m.score_pool(ps, inst, pool, target_aware, true, &init_s, &init_r);
    return softmax_at(scores, target_index);
}

double kl_estimate(double p_ref, double p_cur) {
    const double r = p_ref / p_cur;
    return r - std::log(r) - 1.0;
}

UpdateMetrics grpo_update(const model::Model& m, nn::ParamStore& ps_live,
                          const nn::ParamStore& ps_ref,
                          const std::vector<data::TrainInstance>& instances,
                          const std::vector<InstanceRollout>& rollouts,
                          const GrpoConfig& cfg) {
    cfg.validate();
    if (instances.size() != rollouts.size())
        throw ConfigError("grpo_update: instance and rollout counts differ");
    if (instances.empty()) throw ConfigError("grpo_update: empty batch");

    UpdateMetrics metrics;
    metrics.ratio_min = 1e300;
    metrics.ratio_max = -1e300;

    // First pass decides which instances survive the old-probability floor so
    // the surviving gradients can be averaged with the right denominator.
    struct Plan {
        std::vector<double> adv;
        std::vector<double> p_old;
        bool kept = false;
    };
    std::vector<Plan> plans(instances.size());
    int kept_instances = 0;
    int total_traj = 0;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const InstanceRollout& ro = rollouts[i];
        if (ro.degenerate_pool) ++metrics.degenerate_pools;
        std::vector<double> rewards;
        rewards.reserve(ro.trajectories.size());
        for (const Trajectory& t : ro.trajectories) {
            rewards.push_back(t.reward);
            metrics.mean_reward += t.reward;
            ++total_traj;
        }
        Plan& plan = plans[i];
        plan.adv = advantages(rewards);
        plan.kept = true;
        for (const Trajectory& t : ro.trajectories) {
            const double p_old = softmax_at(t.scores, ro.target_index);
            if (!std::isfinite(p_old) || p_old <= kOldProbFloor) {
                plan.kept = false;
                break;
            }
            plan.p_old.push_back(p_old);
        }
        if (plan.kept)
            ++kept_instances;
        else
            ++metrics.skipped_instances;
    }
    metrics.mean_reward /= total_traj;
    if (kept_instances == 0) {
        metrics.ratio_min = metrics.ratio_max = 0.0;
        return metrics;
    }

    const int n_traj = cfg.rollout.n_traj;
    const double scale = 1.0 / (static_cast<double>(n_traj) * kept_instances);
    double ratio_sum = 0.0;
    double kl_sum = 0.0;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        if (!plans[i].kept) continue;
        const data::TrainInstance& inst = instances[i];
        const InstanceRollout& ro = rollouts[i];
        for (std::size_t ti = 0; ti < ro.trajectories.size(); ++ti) {
            const Trajectory& traj = ro.trajectories[ti];
            const double adv = plans[i].adv[ti];
            const double p_old = clamp_prob(plans[i].p_old[ti]);
            const double p_ref = clamp_prob(target_prob(m, ps_ref, inst, ro.pool,
                                                        ro.target_index, traj.init_s,
                                                        traj.init_r, cfg.rollout.target_aware));

            nn::Tape tape(ps_live);
            nn::TapeFabric f{tape};
            const auto fwd = m.forward_user(f, inst, true, &traj.init_s, &traj.init_r);
            const auto logits = m.candidate_logits(f, inst.user, fwd, ro.pool,
                                                   cfg.rollout.target_aware);
            const auto probs = nn::softmax_rows(nn::transpose(logits),
                                                nn::Mask::all(1, static_cast<int>(ro.pool.size())));
            const auto p_cur = nn::clamp(nn::pick(probs, 0, ro.target_index),
                                         kProbEps, 1.0 - kProbEps);

            nn::Var gain = nn::mul(p_cur, adv / p_old);
            if (cfg.clip_ratio) {
                const auto ratio = nn::mul(p_cur, 1.0 / p_old);
                const auto clipped = nn::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
                const auto a = nn::mul(ratio, adv);
                const auto b = nn::mul(clipped, adv);
                // min(a, b) written with relu so it stays differentiable.
                gain = nn::sub(b, nn::relu(nn::sub(b, a)));
            }
            // kl = p_ref/p_cur - log(p_ref/p_cur) - 1, with p_ref constant.
            const auto kl = nn::affine(
                nn::add(nn::mul(nn::reciprocal(p_cur), p_ref), nn::log_el(p_cur)),
                1.0, -std::log(p_ref) - 1.0);
            const auto loss = nn::sub(nn::mul(kl, cfg.lambda_kl), gain);
            tape.backward(loss, scale);

            const double ratio_val = p_cur.item() / p_old;
            ratio_sum += ratio_val;
            metrics.ratio_min = std::min(metrics.ratio_min, ratio_val);
            metrics.ratio_max = std::max(metrics.ratio_max, ratio_val);
            kl_sum += kl.item();
            ++metrics.kept_trajectories;
        }
    }

    metrics.ratio_mean = ratio_sum / metrics.kept_trajectories;
    metrics.mean_kl = kl_sum / metrics.kept_trajectories;
    metrics.grad_norm = ps_live.grad_norm();
    if (!std::isfinite(metrics.grad_norm))
        throw NumericError("grpo_update: non-finite gradient norm");
    nn::AdamConfig adam;
    adam.lr = cfg.lr;
    ps_live.adam_step(adam);
    ps_live.zero_grads();
    return metrics;
}

RlRunResult run_grpo(const model::Model& m, nn::ParamStore& ps_live,
                     const std::vector<data::TrainInstance>& train,
                     const std::vector<data::TrainInstance>& valid,
                     const data::Catalog& cat, const RlRunConfig& cfg) {
    cfg.validate();
    if (train.empty()) throw ConfigError("run_grpo: empty training split");

    const nn::ParamStore ps_ref = ps_live.clone_values();
    RlRunResult result;

    UpdateMetrics base;
    base.round = 0;
    base.valid_hr1 =
        eval::evaluate(m, ps_live, valid, cat, cfg.valid_protocol).hr1;
    result.rounds.push_back(base);
    result.best_round = 0;
    result.best_valid_hr1 = base.valid_hr1;
    nn::ParamStore best = ps_live.clone_values();

    int since_best = 0;
    for (int round = 1; round <= cfg.rounds; ++round) {
        Rng rng(mix_seed(cfg.seed, 0x524c726eULL, static_cast<std::uint64_t>(round)));
        std::vector<data::TrainInstance> batch;
        std::vector<InstanceRollout> rollouts;
        batch.reserve(cfg.round_instances);
        rollouts.reserve(cfg.round_instances);
        for (int b = 0; b < cfg.round_instances; ++b) {
            const auto& inst = train[rng.below(train.size())];
            batch.push_back(inst);
            rollouts.push_back(rollout(m, ps_live, inst, cat, cfg.grpo.rollout, rng));
        }
        UpdateMetrics metrics = grpo_update(m, ps_live, ps_ref, batch, rollouts, cfg.grpo);
        metrics.round = round;
        metrics.valid_hr1 =
            eval::evaluate(m, ps_live, valid, cat, cfg.valid_protocol).hr1;
        result.rounds.push_back(metrics);

        if (metrics.valid_hr1 > result.best_valid_hr1) {
            result.best_valid_hr1 = metrics.valid_hr1;
            result.best_round = round;
            best = ps_live.clone_values();
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            break;
        }
    }

    // Leave the caller's store holding the selected parameters.
    ps_live = best;
    return result;
}

}  // namespace lcr::rl
