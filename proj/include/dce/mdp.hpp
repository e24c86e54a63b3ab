#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dce/common.hpp"

namespace dce {

/// Finite MDP with dense transition and reward tables.
///
/// Layout: trans[s][a][s2] is the probability of landing in s2 after taking
/// action a in state s; reward[s][a] is the (deterministic) immediate reward.
struct TabularMdp {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    double gamma = 0.99;
    std::vector<std::vector<std::vector<double>>> trans;  // [S][A][S]
    std::vector<std::vector<double>> reward;              // [S][A]
    std::vector<double> initial_dist;                     // [S]

    TabularMdp() = default;
    TabularMdp(std::size_t s, std::size_t a, double g)
        : n_states(s), n_actions(a), gamma(g),
          trans(s, std::vector<std::vector<double>>(a, std::vector<double>(s, 0.0))),
          reward(s, std::vector<double>(a, 0.0)),
          initial_dist(s, 1.0 / static_cast<double>(s)) {}

    /// Throws ConfigError unless every transition row is a probability
    /// distribution (within 1e-9) and gamma lies in (0, 1).
    void validate() const {
        if (!(gamma > 0.0 && gamma < 1.0))
            throw ConfigError("gamma must lie in (0, 1)");
        if (n_states == 0 || n_actions == 0)
            throw ConfigError("MDP needs at least one state and one action");
        auto check_dist = [](const std::vector<double>& p, const char* what) {
            double sum = 0.0;
            for (double x : p) {
                if (x < 0.0) throw ConfigError(std::string(what) + " has a negative entry");
                sum += x;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ConfigError(std::string(what) + " does not sum to 1");
        };
        check_dist(initial_dist, "initial distribution");
        for (const auto& per_state : trans)
            for (const auto& row : per_state) check_dist(row, "transition row");
    }
};

/// One tabular transition, as produced by sample_episode.
struct DiscreteStep {
    std::size_t state;
    std::size_t action;
    double reward;
    std::size_t next_state;
};

/// Count statistics of a tabular dataset: everything the empirical model
/// needs, nothing else.
struct DiscreteDataset {
    std::size_t n_states = 0;
    std::size_t n_actions = 0;
    std::vector<std::vector<long>> visit_counts;                   // [S][A]
    std::vector<std::vector<std::vector<long>>> transition_counts; // [S][A][S]
    std::vector<std::vector<double>> reward_sums;                  // [S][A]

    DiscreteDataset() = default;
    DiscreteDataset(std::size_t s, std::size_t a)
        : n_states(s), n_actions(a),
          visit_counts(s, std::vector<long>(a, 0)),
          transition_counts(s, std::vector<std::vector<long>>(a, std::vector<long>(s, 0))),
          reward_sums(s, std::vector<double>(a, 0.0)) {}

    void record(const DiscreteStep& t) {
        visit_counts[t.state][t.action] += 1;
        transition_counts[t.state][t.action][t.next_state] += 1;
        reward_sums[t.state][t.action] += t.reward;
    }

    long total_count() const {
        long n = 0;
        for (const auto& row : visit_counts)
            for (long c : row) n += c;
        return n;
    }
};

/// One continuous-control transition.
struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;
    std::vector<double> next_state;
    bool done = false;
};

/// Label of the policy that produced a dataset. The numeric values are the
/// on-disk codes and must not be reordered.
enum class BehaviorTier : std::uint8_t { random = 0, medium = 1, expert = 2, mixed = 3, custom = 4 };

inline const char* tier_name(BehaviorTier t) {
    switch (t) {
        case BehaviorTier::random: return "random";
        case BehaviorTier::medium: return "medium";
        case BehaviorTier::expert: return "expert";
        case BehaviorTier::mixed: return "mixed";
        case BehaviorTier::custom: return "custom";
    }
    throw ConfigError("unknown behavior tier code");
}

inline BehaviorTier tier_from_name(const std::string& name) {
    for (auto t : {BehaviorTier::random, BehaviorTier::medium, BehaviorTier::expert,
                   BehaviorTier::mixed, BehaviorTier::custom})
        if (name == tier_name(t)) return t;
    throw ConfigError("unknown tier '" + name + "'; valid: random, medium, expert, mixed, custom");
}

/// Fixed collection of continuous transitions used for offline training.
struct OfflineDataset {
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::vector<Transition> items;
    BehaviorTier behavior_tag = BehaviorTier::custom;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

/// Summary statistics of an offline dataset.
struct DatasetStats {
    std::size_t count = 0;
    double reward_mean = 0.0;
    double reward_min = 0.0;
    double reward_max = 0.0;
    std::vector<double> action_min;  // per dimension
    std::vector<double> action_max;
};

inline DatasetStats dataset_stats(const OfflineDataset& data) {
    if (data.empty()) throw ConfigError("dataset is empty");
    DatasetStats st;
    st.count = data.size();
    st.reward_min = st.reward_max = data.items[0].reward;
    st.action_min.assign(data.action_dim, std::numeric_limits<double>::infinity());
    st.action_max.assign(data.action_dim, -std::numeric_limits<double>::infinity());
    double sum = 0.0;
    for (const Transition& t : data.items) {
        sum += t.reward;
        st.reward_min = std::min(st.reward_min, t.reward);
        st.reward_max = std::max(st.reward_max, t.reward);
        for (std::size_t d = 0; d < data.action_dim; ++d) {
            st.action_min[d] = std::min(st.action_min[d], t.action[d]);
            st.action_max[d] = std::max(st.action_max[d], t.action[d]);
        }
    }
    st.reward_mean = sum / static_cast<double>(st.count);
    return st;
}

/// Stochastic tabular policy: weights[s][a], rows summing to 1.
using TabularPolicy = std::vector<std::vector<double>>;

inline TabularPolicy uniform_policy(std::size_t n_states, std::size_t n_actions) {
    return TabularPolicy(n_states,
                         std::vector<double>(n_actions, 1.0 / static_cast<double>(n_actions)));
}

inline std::size_t sample_index(const std::vector<double>& dist, Rng& rng) {
    double u = rng.uniform01();
    double acc = 0.0;
    for (std::size_t i = 0; i < dist.size(); ++i) {
        acc += dist[i];
        if (u < acc) return i;
    }
    return dist.size() - 1;  // guard against rounding at the tail
}

/// Rolls out one episode of exactly max_steps transitions. The MDPs here have
/// no terminal states, so episode length is governed by the step budget alone
/// and nothing follows the final step.
inline std::vector<DiscreteStep> sample_episode(const TabularMdp& mdp,
                                                const TabularPolicy& policy,
                                                std::size_t max_steps, Rng& rng) {
    std::vector<DiscreteStep> episode;
    episode.reserve(max_steps);
    std::size_t s = sample_index(mdp.initial_dist, rng);
    for (std::size_t t = 0; t < max_steps; ++t) {
        std::size_t a = sample_index(policy[s], rng);
        std::size_t s2 = sample_index(mdp.trans[s][a], rng);
        episode.push_back({s, a, mdp.reward[s][a], s2});
        s = s2;
    }
    return episode;
}

/// Accumulates n_steps of experience under the given policy into count form.
inline DiscreteDataset collect_discrete(const TabularMdp& mdp, const TabularPolicy& policy,
                                        std::size_t n_steps, std::size_t steps_per_episode,
                                        Rng& rng) {
    DiscreteDataset data(mdp.n_states, mdp.n_actions);
    std::size_t remaining = n_steps;
    while (remaining > 0) {
        std::size_t len = std::min(steps_per_episode, remaining);
        for (const DiscreteStep& t : sample_episode(mdp, policy, len, rng)) data.record(t);
        remaining -= len;
    }
    return data;
}

/// Cycles over the policy's in-support pairs in a fixed order, drawing each
/// next state from the true kernel, so every pair's count grows evenly with
/// the budget and coverage holds whenever it is at least the support size.
inline DiscreteDataset collect_per_pair(const TabularMdp& mdp, const TabularPolicy& policy,
                                        std::size_t n_samples, Rng& rng) {
    std::vector<std::pair<std::size_t, std::size_t>> support;
    for (std::size_t s = 0; s < mdp.n_states; ++s)
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            if (policy[s][a] > 0.0) support.push_back({s, a});
    if (support.empty()) throw ConfigError("data policy has empty support");
    DiscreteDataset data(mdp.n_states, mdp.n_actions);
    for (std::size_t i = 0; i < n_samples; ++i) {
        auto [s, a] = support[i % support.size()];
        std::size_t s2 = sample_index(mdp.trans[s][a], rng);
        data.record({s, a, mdp.reward[s][a], s2});
    }
    return data;
}

/// How empirical_mdp fills in state-action pairs that the data never visits.
enum class UnvisitedFallback { self_loop, uniform };

/// Maximum-likelihood tabular model from counts. Unvisited pairs become
/// reward-0 self-loops by default (absorbing, pessimistic-neutral), or
/// uniform transitions when requested.
inline TabularMdp empirical_mdp(const DiscreteDataset& data, double gamma,
                                UnvisitedFallback fallback = UnvisitedFallback::self_loop) {
    TabularMdp mdp(data.n_states, data.n_actions, gamma);
    for (std::size_t s = 0; s < data.n_states; ++s) {
        for (std::size_t a = 0; a < data.n_actions; ++a) {
            long n = data.visit_counts[s][a];
            if (n == 0) {
                if (fallback == UnvisitedFallback::self_loop) {
                    mdp.trans[s][a][s] = 1.0;
                } else {
                    std::fill(mdp.trans[s][a].begin(), mdp.trans[s][a].end(),
                              1.0 / static_cast<double>(data.n_states));
                }
                mdp.reward[s][a] = 0.0;
                continue;
            }
            for (std::size_t s2 = 0; s2 < data.n_states; ++s2)
                mdp.trans[s][a][s2] =
                    static_cast<double>(data.transition_counts[s][a][s2]) / static_cast<double>(n);
            mdp.reward[s][a] = data.reward_sums[s][a] / static_cast<double>(n);
        }
    }
    return mdp;
}

/// Random dense MDP: Dirichlet(1) transition rows, rewards uniform in
/// [-1, 1], uniform initial distribution.
inline TabularMdp random_mdp(std::size_t n_states, std::size_t n_actions, double gamma,
                             Rng& rng) {
    TabularMdp mdp(n_states, n_actions, gamma);
    for (std::size_t s = 0; s < n_states; ++s) {
        for (std::size_t a = 0; a < n_actions; ++a) {
            double sum = 0.0;
            for (std::size_t s2 = 0; s2 < n_states; ++s2) {
                double e = -std::log(1.0 - rng.uniform01());
                mdp.trans[s][a][s2] = e;
                sum += e;
            }
            for (std::size_t s2 = 0; s2 < n_states; ++s2) mdp.trans[s][a][s2] /= sum;
            mdp.reward[s][a] = rng.uniform(-1.0, 1.0);
        }
    }
    return mdp;
}

/// Random stochastic policy with full support (Dirichlet(1) rows).
inline TabularPolicy random_policy(std::size_t n_states, std::size_t n_actions, Rng& rng) {
    TabularPolicy pi(n_states, std::vector<double>(n_actions, 0.0));
    for (std::size_t s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (std::size_t a = 0; a < n_actions; ++a) {
            double e = -std::log(1.0 - rng.uniform01());
            pi[s][a] = e;
            sum += e;
        }
        for (std::size_t a = 0; a < n_actions; ++a) pi[s][a] /= sum;
    }
    return pi;
}

}  // namespace dce
