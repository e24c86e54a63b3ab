#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dce/common.hpp"
#include "dce/net.hpp"

namespace dce {

constexpr real kLogStdMin = real(-20);
constexpr real kLogStdMax = real(2);

/// log(1 - tanh(u)^2) evaluated without cancellation:
/// 2 * (log 2 - u - softplus(-2u)).
inline double log1m_tanh_sq(double u) {
    double x = -2.0 * u;
    double sp = x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    return 2.0 * (std::log(2.0) - u - sp);
}

/// Everything produced by one reparameterized draw, kept so the policy
/// gradient can be assembled afterwards.
struct PolicySample {
    MlpTape trunk_tape;
    RMat feat;         // trunk output
    RMat mean;         // head outputs
    RMat log_std_raw;  // before clamping
    RMat log_std;      // clamped
    RMat eps;          // standard normal draws
    RMat u;            // mean + std * eps
    RMat th;           // tanh(u)
    RMat actions;      // rescaled into bounds
    RVec log_probs;    // per row, squash-corrected
};

struct PolicyGrads {
    MlpGrads trunk;
    LayerGrads mean_head;
    LayerGrads log_std_head;

    std::vector<std::span<const real>> views() const {
        std::vector<std::span<const real>> v = trunk.views();
        v.emplace_back(mean_head.w.a);
        v.emplace_back(mean_head.b);
        v.emplace_back(log_std_head.w.a);
        v.emplace_back(log_std_head.b);
        return v;
    }
};

/// Tanh-squashed diagonal Gaussian policy: a shared ReLU trunk feeds linear
/// mean and log-std heads; samples are squashed by tanh and rescaled into the
/// action box, with the matching change-of-variables term in the log-density.
class GaussianPolicyNet {
public:
    GaussianPolicyNet() = default;

    GaussianPolicyNet(std::size_t state_dim, const std::vector<std::size_t>& hidden,
                      RVec action_low, RVec action_high, Rng& rng)
        : low_(std::move(action_low)), high_(std::move(action_high)) {
        if (hidden.empty()) throw ConfigError("policy needs at least one hidden layer");
        if (low_.size() != high_.size() || low_.empty())
            throw ConfigError("action bounds must be non-empty and equal-sized");
        for (std::size_t d = 0; d < low_.size(); ++d)
            if (!(low_[d] < high_[d]))
                throw ConfigError("action lower bound must be below upper bound");
        std::vector<std::size_t> trunk_sizes;
        trunk_sizes.push_back(state_dim);
        for (std::size_t h : hidden) trunk_sizes.push_back(h);
        trunk_ = Mlp(trunk_sizes, rng, /*relu_output=*/true);
        mean_head_ = DenseLayer(hidden.back(), low_.size(), rng);
        log_std_head_ = DenseLayer(hidden.back(), low_.size(), rng);
    }

    std::size_t state_dim() const { return trunk_.in_dim(); }
    std::size_t action_dim() const { return low_.size(); }
    const RVec& action_low() const { return low_; }
    const RVec& action_high() const { return high_; }
    const Mlp& trunk() const { return trunk_; }
    const DenseLayer& mean_head() const { return mean_head_; }
    const DenseLayer& log_std_head() const { return log_std_head_; }

    real center(std::size_t d) const { return (low_[d] + high_[d]) / real(2); }
    real half_range(std::size_t d) const { return (high_[d] - low_[d]) / real(2); }

    /// Mode of the squashed distribution; used for evaluation rollouts.
    RVec act_deterministic(const RVec& state) const {
        RMat x(1, state.size());
        for (std::size_t i = 0; i < state.size(); ++i) x(0, i) = state[i];
        RMat feat = trunk_.forward(x);
        RMat mean;
        dense_forward(mean_head_, feat, mean);
        RVec a(action_dim());
        for (std::size_t d = 0; d < action_dim(); ++d)
            a[d] = center(d) +
                   half_range(d) * static_cast<real>(std::tanh(static_cast<double>(mean(0, d))));
        return a;
    }

    /// Batched reparameterized draw with full cache. Deterministic given the
    /// rng state; eps is consumed row-major.
    PolicySample sample(const RMat& states, Rng& rng) const {
        PolicySample s;
        s.feat = trunk_.forward(states, s.trunk_tape);
        dense_forward(mean_head_, s.feat, s.mean);
        dense_forward(log_std_head_, s.feat, s.log_std_raw);
        const std::size_t B = states.rows, D = action_dim();
        s.log_std = RMat(B, D);
        s.eps = RMat(B, D);
        s.u = RMat(B, D);
        s.th = RMat(B, D);
        s.actions = RMat(B, D);
        s.log_probs.assign(B, real(0));
        for (std::size_t r = 0; r < B; ++r) {
            double lp = 0.0;
            for (std::size_t d = 0; d < D; ++d) {
                real raw = s.log_std_raw(r, d);
                real ls = raw < kLogStdMin ? kLogStdMin : (raw > kLogStdMax ? kLogStdMax : raw);
                s.log_std(r, d) = ls;
                double sd = std::exp(static_cast<double>(ls));
                double e = rng.gaussian();
                s.eps(r, d) = static_cast<real>(e);
                double uu = static_cast<double>(s.mean(r, d)) + sd * e;
                s.u(r, d) = static_cast<real>(uu);
                double t = std::tanh(uu);
                s.th(r, d) = static_cast<real>(t);
                s.actions(r, d) = center(d) + half_range(d) * static_cast<real>(t);
                lp += -0.5 * e * e - static_cast<double>(ls) - 0.5 * std::log(2.0 * kPi) -
                      std::log(static_cast<double>(half_range(d))) - log1m_tanh_sq(uu);
            }
            s.log_probs[r] = static_cast<real>(lp);
        }
        return s;
    }

    std::pair<RVec, real> sample_one(const RVec& state, Rng& rng) const {
        RMat x(1, state.size());
        for (std::size_t i = 0; i < state.size(); ++i) x(0, i) = state[i];
        PolicySample s = sample(x, rng);
        RVec a(action_dim());
        for (std::size_t d = 0; d < action_dim(); ++d) a[d] = s.actions(0, d);
        return {a, s.log_probs[0]};
    }

    /// Log-density of an arbitrary in-bounds action under the current policy
    /// at the given state. Actions on or outside the box edge have density
    /// zero, reported as -infinity.
    double log_prob(const RVec& state, const RVec& action) const {
        RMat x(1, state.size());
        for (std::size_t i = 0; i < state.size(); ++i) x(0, i) = state[i];
        RMat feat = trunk_.forward(x);
        RMat mean, log_std_raw;
        dense_forward(mean_head_, feat, mean);
        dense_forward(log_std_head_, feat, log_std_raw);
        double lp = 0.0;
        for (std::size_t d = 0; d < action_dim(); ++d) {
            double z = (static_cast<double>(action[d]) - static_cast<double>(center(d))) /
                       static_cast<double>(half_range(d));
            if (!(z > -1.0 && z < 1.0)) return -std::numeric_limits<double>::infinity();
            double u = 0.5 * std::log((1.0 + z) / (1.0 - z));
            real raw = log_std_raw(0, d);
            real ls = raw < kLogStdMin ? kLogStdMin : (raw > kLogStdMax ? kLogStdMax : raw);
            double sd = std::exp(static_cast<double>(ls));
            double e = (u - static_cast<double>(mean(0, d))) / sd;
            lp += -0.5 * e * e - static_cast<double>(ls) - 0.5 * std::log(2.0 * kPi) -
                  std::log(static_cast<double>(half_range(d))) - log1m_tanh_sq(u);
        }
        return lp;
    }

    /// Backward pass through the sampling path. dlogp weights each row's
    /// log-probability; dact is dL/d(action). Either may be empty (treated
    /// as zero).
    PolicyGrads backward(const PolicySample& s, const RVec& dlogp, const RMat& dact) const {
        const std::size_t B = s.actions.rows, D = action_dim();
        RMat dmean(B, D, 0), dls_raw(B, D, 0);
        for (std::size_t r = 0; r < B; ++r) {
            real glp = dlogp.empty() ? real(0) : dlogp[r];
            for (std::size_t d = 0; d < D; ++d) {
                real ga = dact.a.empty() ? real(0) : dact(r, d);
                real t = s.th(r, d);
                // d log pi / d u is 2 tanh(u); d action / d u is h (1 - tanh^2).
                real du = glp * real(2) * t + ga * half_range(d) * (real(1) - t * t);
                dmean(r, d) = du;
                real raw = s.log_std_raw(r, d);
                if (raw > kLogStdMin && raw < kLogStdMax) {
                    real sd = static_cast<real>(std::exp(static_cast<double>(s.log_std(r, d))));
                    dls_raw(r, d) = -glp + du * sd * s.eps(r, d);
                }
            }
        }
        PolicyGrads g;
        g.mean_head = LayerGrads(mean_head_);
        g.log_std_head = LayerGrads(log_std_head_);
        RMat dfeat_mean, dfeat_ls;
        dense_backward(mean_head_, s.feat, dmean, g.mean_head, &dfeat_mean);
        dense_backward(log_std_head_, s.feat, dls_raw, g.log_std_head, &dfeat_ls);
        for (std::size_t k = 0; k < dfeat_mean.a.size(); ++k) dfeat_mean.a[k] += dfeat_ls.a[k];
        g.trunk = trunk_.backward(s.trunk_tape, dfeat_mean);
        return g;
    }

    std::size_t param_count() const {
        return trunk_.param_count() + mean_head_.param_count() + log_std_head_.param_count();
    }

    std::vector<std::span<real>> param_views() {
        std::vector<std::span<real>> v = trunk_.param_views();
        v.emplace_back(mean_head_.w.a);
        v.emplace_back(mean_head_.b);
        v.emplace_back(log_std_head_.w.a);
        v.emplace_back(log_std_head_.b);
        return v;
    }

    std::vector<std::span<const real>> param_views() const {
        std::vector<std::span<const real>> v = trunk_.param_views();
        v.emplace_back(mean_head_.w.a);
        v.emplace_back(mean_head_.b);
        v.emplace_back(log_std_head_.w.a);
        v.emplace_back(log_std_head_.b);
        return v;
    }

private:
    Mlp trunk_;
    DenseLayer mean_head_;
    DenseLayer log_std_head_;
    RVec low_, high_;
};

}  // namespace dce
