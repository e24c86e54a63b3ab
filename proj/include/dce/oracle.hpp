#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "dce/common.hpp"
#include "dce/mdp.hpp"

namespace dce {

/// tau-expectile of a weighted discrete sample, found by bisection.
///
/// The expectile m is the root of F(m) = sum_i w_i * psi(v_i - m) with
/// psi(u) = tau*u for u >= 0 and (1-tau)*u otherwise. F is continuous and
/// strictly decreasing, F(min v) >= 0 >= F(max v), so the root is unique and
/// bracketed by the sample range. Bisection runs until the bracket has no
/// representable midpoint, i.e. to full double precision.
inline double expectile_scalar(const std::vector<double>& values,
                               const std::vector<double>& weights, double tau) {
    if (values.empty() || values.size() != weights.size())
        throw ConfigError("expectile_scalar: values and weights must be non-empty and equal-sized");
    if (!(tau > 0.0 && tau < 1.0)) throw ConfigError("expectile_scalar: tau must lie in (0, 1)");
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo == hi) return lo;
    auto F = [&](double m) {
        double acc = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            double u = values[i] - m;
            acc += weights[i] * (u >= 0.0 ? tau * u : (1.0 - tau) * u);
        }
        return acc;
    };
    for (int it = 0; it < 200; ++it) {
        double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (F(mid) >= 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Q and V tables produced by a fixed-point solve, with the sweep count and
/// the final max-norm update.
struct ValueTables {
    std::vector<std::vector<double>> q;  // [S][A]
    std::vector<double> v;               // [S]
    long iterations = 0;
    double residual = 0.0;
};

/// Solves the penalized fixed point by alternating sweeps
///
///   V(s)    <- tau-expectile of Q(s, .) under the data policy's weights
///   Q(s, a) <- R(s, a) + gamma * sum_s' T(s, a, s') V(s') - beta
///
/// starting from zero tables. The penalty is subtracted uniformly from every
/// pair, matching the idealized analysis this oracle exists to check.
/// Convergence is the max-norm of the update across both tables in a sweep.
inline ValueTables dce_fixed_point(const TabularMdp& mdp, const TabularPolicy& data_policy,
                                   double beta, double tau, double tol = 1e-12,
                                   long max_sweeps = 1000000) {
    mdp.validate();
    if (data_policy.size() != mdp.n_states)
        throw ConfigError("data policy has the wrong number of states");
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    ValueTables out;
    out.q.assign(S, std::vector<double>(A, 0.0));
    out.v.assign(S, 0.0);
    double delta = 0.0;
    for (long sweep = 1; sweep <= max_sweeps; ++sweep) {
        delta = 0.0;
        for (std::size_t s = 0; s < S; ++s) {
            double nv = expectile_scalar(out.q[s], data_policy[s], tau);
            delta = std::max(delta, std::abs(nv - out.v[s]));
            out.v[s] = nv;
        }
        for (std::size_t s = 0; s < S; ++s) {
            for (std::size_t a = 0; a < A; ++a) {
                double ev = 0.0;
                const auto& row = mdp.trans[s][a];
                for (std::size_t s2 = 0; s2 < S; ++s2) ev += row[s2] * out.v[s2];
                double nq = mdp.reward[s][a] + mdp.gamma * ev - beta;
                delta = std::max(delta, std::abs(nq - out.q[s][a]));
                out.q[s][a] = nq;
            }
        }
        if (delta < tol) {
            out.iterations = sweep;
            out.residual = delta;
            return out;
        }
    }
    throw ConvergenceError(delta, max_sweeps);
}

/// Unpenalized fixed point: same sweeps with beta = 0.
inline ValueTables baseline_fixed_point(const TabularMdp& mdp, const TabularPolicy& data_policy,
                                        double tau, double tol = 1e-12,
                                        long max_sweeps = 1000000) {
    return dce_fixed_point(mdp, data_policy, 0.0, tau, tol, max_sweeps);
}

/// Truncated discounted-sum factor: sum_{k=0}^{n} gamma^k, or its limit
/// 1/(1-gamma) when n is absent (infinite).
inline double horizon_factor(double gamma, std::optional<long> n) {
    if (!n) return 1.0 / (1.0 - gamma);
    return (1.0 - std::pow(gamma, static_cast<double>(*n) + 1.0)) / (1.0 - gamma);
}

/// Predicted downward shift of Q after n value sweeps with penalty beta.
inline double theoretical_offset(double gamma, double beta, std::optional<long> n) {
    return horizon_factor(gamma, n) * beta;
}

/// Comparison of the measured shift against the predicted one.
struct OffsetReport {
    double beta = 0.0;
    double gamma = 0.0;
    long n = 0;  // sweep count of the baseline run
    double predicted_offset = 0.0;
    double max_abs_deviation = 0.0;
    ValueTables baseline;
    ValueTables penalized;
    std::vector<std::vector<double>> deviation;  // [S][A], in-support pairs
    std::vector<std::vector<bool>> in_support;   // data-policy weight > 0
};

/// Runs both fixed points at tau = 0.5 (the mean, the regime the shift
/// prediction is derived for) and reports the worst in-support disagreement
/// between the measured Q* - Q and the predicted offset.
inline OffsetReport verify_offset(const TabularMdp& mdp, const TabularPolicy& data_policy,
                                  double beta, double tol = 1e-12, long max_sweeps = 1000000) {
    OffsetReport rep;
    rep.beta = beta;
    rep.gamma = mdp.gamma;
    rep.baseline = baseline_fixed_point(mdp, data_policy, 0.5, tol, max_sweeps);
    rep.penalized = dce_fixed_point(mdp, data_policy, beta, 0.5, tol, max_sweeps);
    rep.n = rep.baseline.iterations;
    rep.predicted_offset = theoretical_offset(mdp.gamma, beta, rep.n);
    const std::size_t S = mdp.n_states, A = mdp.n_actions;
    rep.deviation.assign(S, std::vector<double>(A, 0.0));
    rep.in_support.assign(S, std::vector<bool>(A, false));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            if (data_policy[s][a] <= 0.0) continue;
            rep.in_support[s][a] = true;
            double measured = rep.baseline.q[s][a] - rep.penalized.q[s][a];
            rep.deviation[s][a] = std::abs(measured - rep.predicted_offset);
            rep.max_abs_deviation = std::max(rep.max_abs_deviation, rep.deviation[s][a]);
        }
    }
    return rep;
}

/// Whether a policy maximizing the penalized Q would still pick the
/// out-of-distribution action a' over the in-distribution action a, given
/// that a' received n1 penalty applications against n for a.
inline bool ood_selection_threshold(double q_star_a, double q_star_a_prime, long n, long n1,
                                    double gamma, double beta) {
    double gap = (horizon_factor(gamma, n) - horizon_factor(gamma, n1)) * beta;
    return q_star_a_prime > q_star_a + gap;
}

/// Constants entering the deviation bound between the dataset fixed point and
/// the true-model fixed point.
struct BoundParams {
    double n_mu = 1.0;   // per-pair sample count under the data distribution
    double n_pi = 1.0;   // per-pair sample count under the learned policy
    double c_r = 1.0;    // reward concentration constant
    double c_t = 1.0;    // transition concentration constant
    double r_max = 1.0;  // reward magnitude bound
    double tau = 0.5;    // expectile level of the V target
    double delta = 0.05; // confidence level the constants correspond to
};

/// Penalty-mismatch part of the deviation bound: how far the two fixed points
/// can drift apart because penalties are sampled under different action
/// distributions.
inline double sampling_deviation_bound(const BoundParams& p, double gamma, long n, double beta) {
    return (p.n_mu / p.n_pi) * horizon_factor(gamma, n) * beta;
}

/// Finite-sample part of the deviation bound for a pair observed `count`
/// times.
inline double concentration_term(const BoundParams& p, double gamma, long count) {
    if (count <= 0) return std::numeric_limits<double>::infinity();
    double coeff = p.c_r + gamma * p.c_t * 2.0 * p.r_max * p.tau / (1.0 - gamma);
    return coeff / std::sqrt(static_cast<double>(count));
}

/// Full per-pair upper bound: penalty mismatch plus concentration.
inline double full_upper_bound(const BoundParams& p, double gamma, long n, double beta,
                               long count) {
    return sampling_deviation_bound(p, gamma, n, beta) + concentration_term(p, gamma, count);
}

struct BoundCheckRow {
    std::size_t state = 0;
    std::size_t action = 0;
    long count = 0;
    double deviation = 0.0;
    double bound = 0.0;
    bool violated = false;
};

struct BoundCheckReport {
    long n = 0;  // sweep count of the true-model run, used in the bound
    double max_abs_deviation = 0.0;
    double min_bound = 0.0;
    long violations = 0;
    std::vector<BoundCheckRow> rows;
};

/// Samples a per-pair dataset from the true model, fits the
/// maximum-likelihood model, solves the penalized fixed point on both, and
/// checks each visited pair's |Qhat - Q| against full_upper_bound.
///
/// Requires the data to cover every in-support pair of the data policy, so
/// the sample budget must be at least the support size.
inline BoundCheckReport empirical_bound_check(const TabularMdp& mdp,
                                              const TabularPolicy& data_policy, double beta,
                                              const BoundParams& params, std::size_t n_samples,
                                              Rng& rng, double tol = 1e-12,
                                              long max_sweeps = 1000000) {
    DiscreteDataset data = collect_per_pair(mdp, data_policy, n_samples, rng);
    for (std::size_t s = 0; s < mdp.n_states; ++s)
        for (std::size_t a = 0; a < mdp.n_actions; ++a)
            if (data_policy[s][a] > 0.0 && data.visit_counts[s][a] == 0)
                throw ConfigError("dataset misses in-support pair (" + std::to_string(s) + ", " +
                                  std::to_string(a) + "); increase the sample budget");
    TabularMdp model = empirical_mdp(data, mdp.gamma);
    ValueTables truth = dce_fixed_point(mdp, data_policy, beta, params.tau, tol, max_sweeps);
    ValueTables fitted = dce_fixed_point(model, data_policy, beta, params.tau, tol, max_sweeps);
    BoundCheckReport rep;
    rep.n = truth.iterations;
    rep.min_bound = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
        for (std::size_t a = 0; a < mdp.n_actions; ++a) {
            long count = data.visit_counts[s][a];
            if (count == 0) continue;
            BoundCheckRow row;
            row.state = s;
            row.action = a;
            row.count = count;
            row.deviation = std::abs(fitted.q[s][a] - truth.q[s][a]);
            row.bound = full_upper_bound(params, mdp.gamma, rep.n, beta, count);
            row.violated = row.deviation > row.bound;
            rep.max_abs_deviation = std::max(rep.max_abs_deviation, row.deviation);
            rep.min_bound = std::min(rep.min_bound, row.bound);
            if (row.violated) rep.violations += 1;
            rep.rows.push_back(row);
        }
    }
    return rep;
}

}  // namespace dce
