#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dce/common.hpp"
#include "dce/mdp.hpp"

namespace dce {

struct StepResult {
    RVec next_state;
    double reward = 0.0;
    bool done = false;
};

/// Episodic continuous-control environment. step is a pure function of
/// (state, action); episode termination is time-based only, so rollout
/// loops mark done at the horizon themselves.
class ContinuousEnv {
public:
    virtual ~ContinuousEnv() = default;
    virtual std::string name() const = 0;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual RVec action_low() const = 0;
    virtual RVec action_high() const = 0;
    virtual std::size_t horizon() const = 0;
    virtual double r_max() const = 0;
    virtual RVec reset(Rng& rng) const = 0;
    virtual StepResult step(const RVec& state, const RVec& action) const = 0;
    virtual RVec expert_action(const RVec& state) const = 0;
};

namespace detail {
inline double clampd(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }
}  // namespace detail

/// Point on a line segment; the action nudges it, the reward is the
/// distance to the origin.
class PointReach1D final : public ContinuousEnv {
public:
    std::string name() const override { return "point1d"; }
    std::size_t state_dim() const override { return 1; }
    std::size_t action_dim() const override { return 1; }
    RVec action_low() const override { return {real(-0.2)}; }
    RVec action_high() const override { return {real(0.2)}; }
    std::size_t horizon() const override { return 50; }
    double r_max() const override { return 1.0; }

    RVec reset(Rng& rng) const override {
        return {static_cast<real>(2.0 * rng.uniform01() - 1.0)};
    }

    StepResult step(const RVec& state, const RVec& action) const override {
        double a = detail::clampd(static_cast<double>(action[0]), -0.2, 0.2);
        double x = detail::clampd(static_cast<double>(state[0]) + a, -1.0, 1.0);
        return {{static_cast<real>(x)}, -std::fabs(x), false};
    }

    RVec expert_action(const RVec& state) const override {
        return {static_cast<real>(detail::clampd(-static_cast<double>(state[0]), -0.2, 0.2))};
    }
};

/// Damped point mass on the unit square driven toward the goal (0.5, 0.5);
/// the reward is the distance to the goal after the move.
class PointMass2D final : public ContinuousEnv {
public:
    static constexpr double kDt = 0.05;
    static constexpr double kGoalX = 0.5;
    static constexpr double kGoalY = 0.5;

    std::string name() const override { return "point2d"; }
    std::size_t state_dim() const override { return 4; }
    std::size_t action_dim() const override { return 2; }
    RVec action_low() const override { return {real(-1), real(-1)}; }
    RVec action_high() const override { return {real(1), real(1)}; }
    std::size_t horizon() const override { return 100; }
    double r_max() const override { return 2.0 * std::sqrt(2.0); }

    RVec reset(Rng& rng) const override {
        return {static_cast<real>(2.0 * rng.uniform01() - 1.0),
                static_cast<real>(2.0 * rng.uniform01() - 1.0), real(0), real(0)};
    }

    StepResult step(const RVec& state, const RVec& action) const override {
        double p[2] = {static_cast<double>(state[0]), static_cast<double>(state[1])};
        double v[2] = {static_cast<double>(state[2]), static_cast<double>(state[3])};
        double np[2], nv[2];
        for (int d = 0; d < 2; ++d) {
            double a = detail::clampd(static_cast<double>(action[d]), -1.0, 1.0);
            nv[d] = detail::clampd(0.95 * v[d] + kDt * a, -0.5, 0.5);
            np[d] = detail::clampd(p[d] + kDt * nv[d], -1.0, 1.0);
        }
        double reward = -std::hypot(np[0] - kGoalX, np[1] - kGoalY);
        return {{static_cast<real>(np[0]), static_cast<real>(np[1]), static_cast<real>(nv[0]),
                 static_cast<real>(nv[1])},
                reward,
                false};
    }

    RVec expert_action(const RVec& state) const override {
        RVec a(2);
        const double goal[2] = {kGoalX, kGoalY};
        for (int d = 0; d < 2; ++d) {
            double raw = 4.0 * (goal[d] - static_cast<double>(state[d])) -
                         2.0 * static_cast<double>(state[2 + d]);
            a[d] = static_cast<real>(detail::clampd(raw, -1.0, 1.0));
        }
        return a;
    }
};

inline std::unique_ptr<ContinuousEnv> make_env(const std::string& name) {
    if (name == "point1d") return std::make_unique<PointReach1D>();
    if (name == "point2d") return std::make_unique<PointMass2D>();
    throw ConfigError("unknown env '" + name + "'; valid: point1d, point2d");
}

/// Data-collection policy: uniform noise, a proportional controller, or the
/// controller with Gaussian exploration noise.
struct BehaviorPolicy {
    enum class Kind { random, medium, expert } kind = Kind::random;
    double noise_sigma = 0.1;
};

inline RVec behavior_action(const BehaviorPolicy& policy, const ContinuousEnv& env,
                            const RVec& state, Rng& rng) {
    RVec low = env.action_low(), high = env.action_high();
    if (policy.kind == BehaviorPolicy::Kind::random) {
        RVec a(env.action_dim());
        for (std::size_t d = 0; d < a.size(); ++d)
            a[d] = static_cast<real>(static_cast<double>(low[d]) +
                                     (static_cast<double>(high[d]) - static_cast<double>(low[d])) *
                                         rng.uniform01());
        return a;
    }
    RVec a = env.expert_action(state);
    if (policy.kind == BehaviorPolicy::Kind::medium) {
        for (std::size_t d = 0; d < a.size(); ++d) {
            double noisy = static_cast<double>(a[d]) + policy.noise_sigma * rng.gaussian();
            a[d] = static_cast<real>(detail::clampd(noisy, static_cast<double>(low[d]),
                                                    static_cast<double>(high[d])));
        }
    }
    return a;
}

/// Sum of rewards over one full-horizon episode, acting through `act`,
/// a callable (state, rng) -> action.
template <typename ActFn>
double episode_return(const ContinuousEnv& env, ActFn&& act, Rng& rng) {
    RVec s = env.reset(rng);
    double total = 0.0;
    for (std::size_t t = 0; t < env.horizon(); ++t) {
        StepResult r = env.step(s, act(s, rng));
        total += r.reward;
        s = std::move(r.next_state);
    }
    return total;
}

namespace detail {

inline void collect_transitions(const ContinuousEnv& env, const BehaviorPolicy& policy,
                                std::size_t n, Rng& rng, OfflineDataset& out) {
    std::size_t collected = 0;
    while (collected < n) {
        RVec s = env.reset(rng);
        for (std::size_t t = 0; t < env.horizon() && collected < n; ++t) {
            RVec a = behavior_action(policy, env, s, rng);
            StepResult r = env.step(s, a);
            Transition tr;
            tr.state.assign(s.begin(), s.end());
            tr.action.assign(a.begin(), a.end());
            tr.reward = r.reward;
            tr.next_state.assign(r.next_state.begin(), r.next_state.end());
            tr.done = (t + 1 == env.horizon());
            out.items.push_back(std::move(tr));
            s = std::move(r.next_state);
            ++collected;
        }
    }
}

}  // namespace detail

/// Roll out the tier's behavior policy until exactly n_transitions are
/// recorded; the mixed tier is half medium, half expert.
inline OfflineDataset generate_dataset(const ContinuousEnv& env, BehaviorTier tier,
                                       std::size_t n_transitions, std::uint64_t seed) {
    if (n_transitions < 1) throw ConfigError("generate_dataset: need at least one transition");
    if (tier == BehaviorTier::custom)
        throw ConfigError("generate_dataset: 'custom' is a file label, not a collectable tier");
    OfflineDataset data;
    data.state_dim = env.state_dim();
    data.action_dim = env.action_dim();
    data.behavior_tag = tier;
    Rng rng(seed);
    if (tier == BehaviorTier::mixed) {
        std::size_t half = n_transitions / 2;
        detail::collect_transitions(env, {BehaviorPolicy::Kind::medium, 0.1}, half, rng, data);
        detail::collect_transitions(env, {BehaviorPolicy::Kind::expert, 0.0},
                                    n_transitions - half, rng, data);
        return data;
    }
    BehaviorPolicy policy;
    switch (tier) {
        case BehaviorTier::random: policy = {BehaviorPolicy::Kind::random, 0.0}; break;
        case BehaviorTier::medium: policy = {BehaviorPolicy::Kind::medium, 0.1}; break;
        default: policy = {BehaviorPolicy::Kind::expert, 0.0}; break;
    }
    detail::collect_transitions(env, policy, n_transitions, rng, data);
    return data;
}

struct ReferenceReturns {
    double random_ref = 0.0;
    double expert_ref = 0.0;
};

/// Monte-Carlo mean returns of the random and expert behavior policies,
/// the anchors for normalized scores. With a cache directory the result is
/// persisted and reused, keyed by env, episode count, and seed.
inline ReferenceReturns reference_returns(const ContinuousEnv& env, std::size_t n_episodes = 1000,
                                          std::uint64_t seed = 20240501,
                                          const std::string& cache_dir = "") {
    std::string cache_path;
    if (!cache_dir.empty()) {
        std::ostringstream name;
        name << cache_dir << "/refs_" << env.name() << "_" << n_episodes << "_" << seed << ".txt";
        cache_path = name.str();
        std::ifstream in(cache_path);
        ReferenceReturns cached;
        if (in >> cached.random_ref >> cached.expert_ref) return cached;
    }
    ReferenceReturns refs;
    Rng rng(seed);
    BehaviorPolicy random_pi{BehaviorPolicy::Kind::random, 0.0};
    BehaviorPolicy expert_pi{BehaviorPolicy::Kind::expert, 0.0};
    auto act_random = [&](const RVec& s, Rng& r) { return behavior_action(random_pi, env, s, r); };
    auto act_expert = [&](const RVec& s, Rng& r) { return behavior_action(expert_pi, env, s, r); };
    for (std::size_t e = 0; e < n_episodes; ++e)
        refs.random_ref += episode_return(env, act_random, rng) / static_cast<double>(n_episodes);
    for (std::size_t e = 0; e < n_episodes; ++e)
        refs.expert_ref += episode_return(env, act_expert, rng) / static_cast<double>(n_episodes);
    if (!cache_path.empty()) {
        std::ofstream out(cache_path);
        // Full round-trip precision, so runs that hit the cache see exactly
        // the anchors the first run computed.
        if (out) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", refs.random_ref, refs.expert_ref);
            out << buf;
        }
    }
    return refs;
}

}  // namespace dce
