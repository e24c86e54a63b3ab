#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dce/common.hpp"
#include "dce/config.hpp"
#include "dce/envs.hpp"
#include "dce/losses.hpp"
#include "dce/mdp.hpp"
#include "dce/net.hpp"
#include "dce/policy.hpp"

namespace dce {

/// The networks produced by training. The optional second critic pair is
/// populated only in twin_q mode.
struct Agent {
    GaussianPolicyNet policy;
    Mlp q;
    Mlp v;
    Mlp q_target;
    std::optional<Mlp> q2;
    std::optional<Mlp> q2_target;
    double log_alpha = 0.0;

    std::size_t state_dim() const { return policy.state_dim(); }
    std::size_t action_dim() const { return policy.action_dim(); }
};

inline Agent make_agent(std::size_t state_dim, std::size_t action_dim, const RVec& action_low,
                        const RVec& action_high, const std::vector<std::size_t>& hidden,
                        bool twin_q, std::uint64_t seed) {
    Rng rng(seed);
    GaussianPolicyNet policy(state_dim, hidden, action_low, action_high, rng);
    std::vector<std::size_t> q_sizes{state_dim + action_dim};
    q_sizes.insert(q_sizes.end(), hidden.begin(), hidden.end());
    q_sizes.push_back(1);
    std::vector<std::size_t> v_sizes{state_dim};
    v_sizes.insert(v_sizes.end(), hidden.begin(), hidden.end());
    v_sizes.push_back(1);
    Mlp q(q_sizes, rng);
    Mlp v(v_sizes, rng);
    Mlp q_target = q;
    Agent agent{std::move(policy),   std::move(q), std::move(v), std::move(q_target),
                std::nullopt, std::nullopt, 0.0};
    if (twin_q) {
        agent.q2 = Mlp(q_sizes, rng);
        agent.q2_target = agent.q2;
    }
    return agent;
}

struct MetricsRow {
    long epoch = 0;
    double q_loss = 0.0;
    double v_loss = 0.0;
    double policy_loss = 0.0;
    double alpha = 0.0;
    double beta = 0.0;
    double mean_q_dataset = 0.0;
    double mean_q_policy = 0.0;
    double eval_return = 0.0;
    double normalized_score = 0.0;
};

inline const char* metrics_csv_header() {
    return "epoch,q_loss,v_loss,policy_loss,alpha,beta,mean_q_dataset,mean_q_policy,"
           "eval_return,normalized_score";
}

inline std::string metrics_csv_line(const MetricsRow& r) {
    std::string out = std::to_string(r.epoch);
    for (double v : {r.q_loss, r.v_loss, r.policy_loss, r.alpha, r.beta, r.mean_q_dataset,
                     r.mean_q_policy, r.eval_return, r.normalized_score})
        out += "," + fmt_g6(v);
    return out;
}

struct TrainResult {
    Agent agent;
    std::vector<MetricsRow> metrics;
};

inline double normalized_score(double ret, double random_ref, double expert_ref) {
    if (!(expert_ref > random_ref))
        throw ConfigError("normalized_score: expert reference must exceed random reference");
    return 100.0 * (ret - random_ref) / (expert_ref - random_ref);
}

/// Mean undiscounted return of the deterministic policy over n_episodes.
inline double evaluate(const GaussianPolicyNet& policy, const ContinuousEnv& env,
                       long n_episodes, Rng& rng) {
    if (n_episodes < 1) throw ConfigError("evaluate: need at least one episode");
    auto act = [&](const RVec& s, Rng&) { return policy.act_deterministic(s); };
    double total = 0.0;
    for (long e = 0; e < n_episodes; ++e) total += episode_return(env, act, rng);
    return total / static_cast<double>(n_episodes);
}

namespace trainimpl {

inline Batch gather_batch(const OfflineDataset& data, const std::vector<std::size_t>& idx) {
    const std::size_t B = idx.size();
    Batch b;
    b.states = RMat(B, data.state_dim);
    b.actions = RMat(B, data.action_dim);
    b.rewards = RVec(B);
    b.next_states = RMat(B, data.state_dim);
    b.done = RVec(B);
    for (std::size_t r = 0; r < B; ++r) {
        const Transition& t = data.items[idx[r]];
        for (std::size_t c = 0; c < data.state_dim; ++c) {
            b.states(r, c) = static_cast<real>(t.state[c]);
            b.next_states(r, c) = static_cast<real>(t.next_state[c]);
        }
        for (std::size_t c = 0; c < data.action_dim; ++c)
            b.actions(r, c) = static_cast<real>(t.action[c]);
        b.rewards[r] = static_cast<real>(t.reward);
        b.done[r] = t.done ? real(1) : real(0);
    }
    return b;
}

inline void shuffle(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.below(i))]);
}

/// Uniform batches without replacement: walks a shuffled permutation and
/// reshuffles whenever fewer than a full batch remains.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, Rng& rng)
        : batch_(std::min(batch_size, n)), rng_(rng), perm_(n), cursor_(n) {
        for (std::size_t i = 0; i < n; ++i) perm_[i] = i;
    }

    std::vector<std::size_t> next() {
        if (cursor_ + batch_ > perm_.size()) {
            shuffle(perm_, rng_);
            cursor_ = 0;
        }
        std::vector<std::size_t> out(perm_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                     perm_.begin() + static_cast<std::ptrdiff_t>(cursor_ + batch_));
        cursor_ += batch_;
        return out;
    }

private:
    std::size_t batch_;
    Rng& rng_;
    std::vector<std::size_t> perm_;
    std::size_t cursor_;
};

inline double mean_q_on(const Mlp& q, const RMat& states, const RMat& actions) {
    RMat vals = q.forward(concat_cols(states, actions));
    double sum = 0.0;
    for (std::size_t i = 0; i < vals.rows; ++i) sum += static_cast<double>(vals(i, 0));
    return sum / static_cast<double>(vals.rows);
}

inline void check_finite(double value, const char* what) {
    if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace trainimpl

/// Offline training: per gradient step update V, update Q (per critic
/// mode), soft-update the target critic, update the policy, then the
/// temperature when it is automatic. The penalty coefficient follows the
/// schedule at epoch boundaries. Fully deterministic given config.seed.
///
/// In phased mode each epoch runs all critic updates first, then the same
/// number of policy updates, instead of interleaving them step by step.
///
/// With an environment the policy is evaluated after every epoch and
/// normalized against that environment's reference returns; without one
/// the two evaluation columns are recorded as NaN.
inline TrainResult train(const TrainConfig& cfg, const OfflineDataset& data,
                         const ContinuousEnv* env = nullptr) {
    validate_config(cfg);
    if (data.empty()) throw ConfigError("train: dataset is empty");
    if (env != nullptr) {
        if (env->state_dim() != data.state_dim || env->action_dim() != data.action_dim)
            throw ConfigError("train: dataset dimensions do not match environment " +
                              env->name());
    }

    RVec low, high;
    if (env != nullptr) {
        low = env->action_low();
        high = env->action_high();
    } else {
        DatasetStats stats = dataset_stats(data);
        low.resize(data.action_dim);
        high.resize(data.action_dim);
        for (std::size_t d = 0; d < data.action_dim; ++d) {
            low[d] = static_cast<real>(stats.action_min[d]);
            high[d] = static_cast<real>(stats.action_max[d]);
            if (!(low[d] < high[d])) {
                low[d] = static_cast<real>(stats.action_min[d] - 1.0);
                high[d] = static_cast<real>(stats.action_max[d] + 1.0);
            }
        }
    }

    Agent agent = make_agent(data.state_dim, data.action_dim, low, high, cfg.hidden,
                             cfg.twin_q, split_seed(cfg.seed, 0));
    const double target_entropy = -static_cast<double>(data.action_dim);
    if (cfg.alpha_mode == AlphaMode::fixed) agent.log_alpha = std::log(cfg.alpha_value);

    AdamConfig adam_q{static_cast<real>(cfg.lr_q)};
    AdamConfig adam_v{static_cast<real>(cfg.lr_v)};
    AdamConfig adam_pi{static_cast<real>(cfg.lr_pi)};
    AdamState opt_q(agent.q.param_count(), adam_q);
    AdamState opt_v(agent.v.param_count(), adam_v);
    AdamState opt_pi(agent.policy.param_count(), adam_pi);
    std::optional<AdamState> opt_q2;
    if (cfg.twin_q) opt_q2.emplace(agent.q2->param_count(), adam_q);
    AdamState opt_alpha(1, adam_pi);

    Rng rng_train(split_seed(cfg.seed, 1));
    Rng rng_probe(split_seed(cfg.seed, 2));

    std::vector<std::size_t> probe_idx(data.size());
    for (std::size_t i = 0; i < probe_idx.size(); ++i) probe_idx[i] = i;
    trainimpl::shuffle(probe_idx, rng_probe);
    probe_idx.resize(std::min<std::size_t>(1024, data.size()));
    Batch probe = trainimpl::gather_batch(data, probe_idx);

    std::optional<ReferenceReturns> refs;
    if (env != nullptr) refs = reference_returns(*env);

    TrainResult result{std::move(agent), {}};
    Agent& a = result.agent;
    if (cfg.steps_per_epoch == 0 || cfg.epochs == 0) return result;

    trainimpl::BatchSampler sampler(data.size(), static_cast<std::size_t>(cfg.batch_size),
                                    rng_train);

    auto alpha_now = [&]() { return std::exp(a.log_alpha); };

    auto update_critic = [&](const Batch& batch, double beta_eff, double& q_loss_out,
                             double& v_loss_out) {
        if (cfg.critic_mode == CriticMode::dce || cfg.critic_mode == CriticMode::no_penalty) {
            LossOutput vout;
            if (cfg.twin_q) {
                RMat in = concat_cols(batch.states, batch.actions);
                RMat t1 = a.q_target.forward(in);
                RMat t2 = a.q2_target->forward(in);
                RVec targets(batch.size());
                for (std::size_t i = 0; i < batch.size(); ++i)
                    targets[i] = std::min(t1(i, 0), t2(i, 0));
                vout = v_loss_from_targets(batch.states, targets, a.v, cfg.tau);
            } else {
                vout = v_loss(batch, a.q_target, a.v, cfg.tau);
            }
            trainimpl::check_finite(vout.value, "v loss");
            opt_v.step(a.v.param_views(), vout.v_grad->views());
            v_loss_out = vout.value;

            LossOutput qout = q_loss_dce(batch, a.v, a.q, a.policy, beta_eff, cfg.gamma,
                                         rng_train,
                                         static_cast<std::size_t>(cfg.penalty_samples));
            trainimpl::check_finite(qout.value, "q loss");
            opt_q.step(a.q.param_views(), qout.q_grad->views());
            q_loss_out = qout.value;
            if (cfg.twin_q) {
                LossOutput q2out = q_loss_dce(batch, a.v, *a.q2, a.policy, beta_eff, cfg.gamma,
                                              rng_train,
                                              static_cast<std::size_t>(cfg.penalty_samples));
                trainimpl::check_finite(q2out.value, "q2 loss");
                opt_q2->step(a.q2->param_views(), q2out.q_grad->views());
            }
        } else {
            // cql_variant and no_v share the Q-only update: bootstrap from
            // the target critic at a fresh policy action, penalize
            // policy-action Q-values, and leave V untouched.
            v_loss_out = 0.0;
            LossOutput qout =
                q_loss_cql_variant(batch, a.q_target, a.q, a.policy, beta_eff, cfg.gamma,
                                   rng_train);
            trainimpl::check_finite(qout.value, "q loss");
            opt_q.step(a.q.param_views(), qout.q_grad->views());
            q_loss_out = qout.value;
            if (cfg.twin_q) {
                LossOutput q2out =
                    q_loss_cql_variant(batch, *a.q2_target, *a.q2, a.policy, beta_eff,
                                       cfg.gamma, rng_train);
                trainimpl::check_finite(q2out.value, "q2 loss");
                opt_q2->step(a.q2->param_views(), q2out.q_grad->views());
            }
        }
        soft_update(a.q_target.param_views(), std::as_const(a.q).param_views(),
                    static_cast<real>(cfg.upsilon));
        if (cfg.twin_q)
            soft_update(a.q2_target->param_views(), std::as_const(*a.q2).param_views(),
                        static_cast<real>(cfg.upsilon));
    };

    auto update_policy = [&](const Batch& batch, double& policy_loss_out) {
        LossOutput pout = policy_loss_sac(batch.states, a.q, a.policy, alpha_now(), rng_train);
        trainimpl::check_finite(pout.value, "policy loss");
        opt_pi.step(a.policy.param_views(), pout.policy_grad->views());
        policy_loss_out = pout.value;
        if (cfg.alpha_mode == AlphaMode::auto_tune) {
            LossOutput aout =
                alpha_loss_from_mean_logp(pout.mean_log_prob, a.log_alpha, target_entropy);
            trainimpl::check_finite(aout.value, "alpha loss");
            real la = static_cast<real>(a.log_alpha);
            real lg = static_cast<real>(*aout.log_alpha_grad);
            opt_alpha.step({std::span<real>(&la, 1)}, {std::span<const real>(&lg, 1)});
            a.log_alpha = static_cast<double>(la);
        }
    };

    auto with_context = [](long epoch, long step, auto&& fn) {
        try {
            fn();
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                               ", step " + std::to_string(step));
        }
    };

    for (long epoch = 0; epoch < cfg.epochs; ++epoch) {
        double beta_eff = cfg.critic_mode == CriticMode::no_penalty
                              ? 0.0
                              : beta_at(cfg.beta_schedule, epoch);
        double q_loss_sum = 0.0, v_loss_sum = 0.0, policy_loss_sum = 0.0;

        if (cfg.phased) {
            for (long step = 0; step < cfg.steps_per_epoch; ++step) {
                Batch batch = trainimpl::gather_batch(data, sampler.next());
                double ql = 0.0, vl = 0.0;
                with_context(epoch, step, [&] { update_critic(batch, beta_eff, ql, vl); });
                q_loss_sum += ql;
                v_loss_sum += vl;
            }
            for (long step = 0; step < cfg.steps_per_epoch; ++step) {
                Batch batch = trainimpl::gather_batch(data, sampler.next());
                double pl = 0.0;
                with_context(epoch, step, [&] { update_policy(batch, pl); });
                policy_loss_sum += pl;
            }
        } else {
            for (long step = 0; step < cfg.steps_per_epoch; ++step) {
                Batch batch = trainimpl::gather_batch(data, sampler.next());
                double ql = 0.0, vl = 0.0, pl = 0.0;
                with_context(epoch, step, [&] {
                    update_critic(batch, beta_eff, ql, vl);
                    update_policy(batch, pl);
                });
                q_loss_sum += ql;
                v_loss_sum += vl;
                policy_loss_sum += pl;
            }
        }

        MetricsRow row;
        row.epoch = epoch;
        double n_steps = static_cast<double>(cfg.steps_per_epoch);
        row.q_loss = q_loss_sum / n_steps;
        row.v_loss = v_loss_sum / n_steps;
        row.policy_loss = policy_loss_sum / n_steps;
        row.alpha = alpha_now();
        row.beta = beta_eff;
        row.mean_q_dataset = trainimpl::mean_q_on(a.q, probe.states, probe.actions);
        Rng rng_policy_probe(split_seed(split_seed(cfg.seed, 3), static_cast<std::uint64_t>(epoch)));
        PolicySample ps = a.policy.sample(probe.states, rng_policy_probe);
        row.mean_q_policy = trainimpl::mean_q_on(a.q, probe.states, ps.actions);
        if (env != nullptr) {
            Rng rng_eval(split_seed(split_seed(cfg.seed, 4), static_cast<std::uint64_t>(epoch)));
            row.eval_return = evaluate(a.policy, *env, cfg.eval_episodes, rng_eval);
            row.normalized_score =
                normalized_score(row.eval_return, refs->random_ref, refs->expert_ref);
        } else {
            row.eval_return = std::numeric_limits<double>::quiet_NaN();
            row.normalized_score = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(row.mean_q_dataset) || !std::isfinite(row.mean_q_policy))
            throw NumericError("non-finite Q metric at epoch " + std::to_string(epoch));
        result.metrics.push_back(row);
    }
    return result;
}

}  // namespace dce
