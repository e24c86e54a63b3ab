#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "dce/common.hpp"
#include "dce/net.hpp"
#include "dce/policy.hpp"

namespace dce {

/// One minibatch of continuous transitions in matrix form.
struct Batch {
    RMat states;       // [B x S]
    RMat actions;      // [B x D]
    RVec rewards;      // [B]
    RMat next_states;  // [B x S]
    RVec done;         // [B], 0 or 1

    std::size_t size() const { return states.rows; }
};

inline RMat concat_cols(const RMat& a, const RMat& b) {
    RMat out(a.rows, a.cols + b.cols);
    for (std::size_t r = 0; r < a.rows; ++r) {
        real* o = out.row(r);
        const real* ar = a.row(r);
        const real* br = b.row(r);
        for (std::size_t c = 0; c < a.cols; ++c) o[c] = ar[c];
        for (std::size_t c = 0; c < b.cols; ++c) o[a.cols + c] = br[c];
    }
    return out;
}

/// Loss value plus the gradients it exposes. A loss only ever produces
/// gradients for the network it trains; every other input is treated as
/// data (detached), even when the loss value depends on it.
struct LossOutput {
    double value = 0.0;
    std::optional<MlpGrads> q_grad;
    std::optional<MlpGrads> v_grad;
    std::optional<PolicyGrads> policy_grad;
    std::optional<double> log_alpha_grad;
    double mean_log_prob = 0.0;  // filled by the policy loss, reused for alpha
};

/// Asymmetric squared error: weight tau above zero, 1 - tau below.
inline double expectile_loss(double u, double tau) {
    double w = u >= 0.0 ? tau : 1.0 - tau;
    return w * u * u;
}

inline void accumulate(MlpGrads& into, const MlpGrads& from) {
    for (std::size_t l = 0; l < into.layers.size(); ++l) {
        for (std::size_t i = 0; i < into.layers[l].w.a.size(); ++i)
            into.layers[l].w.a[i] += from.layers[l].w.a[i];
        for (std::size_t i = 0; i < into.layers[l].b.size(); ++i)
            into.layers[l].b[i] += from.layers[l].b[i];
    }
}

/// Expectile regression of V toward fixed per-row targets.
inline LossOutput v_loss_from_targets(const RMat& states, const RVec& targets, const Mlp& v,
                                      double tau) {
    const std::size_t B = states.rows;
    MlpTape tape;
    RMat v_out = v.forward(states, tape);
    RMat upstream(B, 1, real(0));
    LossOutput out;
    for (std::size_t i = 0; i < B; ++i) {
        double u = static_cast<double>(targets[i]) - static_cast<double>(v_out(i, 0));
        double w = u >= 0.0 ? tau : 1.0 - tau;
        out.value += w * u * u / static_cast<double>(B);
        upstream(i, 0) = static_cast<real>(-2.0 * w * u / static_cast<double>(B));
    }
    out.v_grad = v.backward(tape, upstream);
    return out;
}

/// V-function loss: expectile regression of V(s) toward the target network's
/// Q(s, a) at the dataset action. Produces gradients for V only.
inline LossOutput v_loss(const Batch& batch, const Mlp& q_target, const Mlp& v, double tau) {
    RMat q_vals = q_target.forward(concat_cols(batch.states, batch.actions));
    RVec targets(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = q_vals(i, 0);
    return v_loss_from_targets(batch.states, targets, v, tau);
}

/// Q-function loss: squared TD error toward r + gamma * V(s') plus
/// beta times the mean Q at policy-sampled actions for the batch states.
/// Produces gradients for Q only; V and the policy are data here.
///
/// The penalty draws `penalty_samples` actions per state from the current
/// policy (one by default). Both the data rows and the penalty rows go
/// through Q in a single pass.
inline LossOutput q_loss_dce(const Batch& batch, const Mlp& v, const Mlp& q,
                             const GaussianPolicyNet& policy, double beta, double gamma,
                             Rng& rng, std::size_t penalty_samples = 1) {
    if (penalty_samples == 0) throw ConfigError("q_loss_dce: need at least one penalty sample");
    const std::size_t B = batch.size();
    RMat v_next = v.forward(batch.next_states);

    RMat data_in = concat_cols(batch.states, batch.actions);
    RMat all_in(B * (1 + penalty_samples), data_in.cols);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t c = 0; c < data_in.cols; ++c) all_in(r, c) = data_in(r, c);
    for (std::size_t k = 0; k < penalty_samples; ++k) {
        PolicySample ps = policy.sample(batch.states, rng);
        for (std::size_t r = 0; r < B; ++r) {
            std::size_t row = B * (1 + k) + r;
            for (std::size_t c = 0; c < batch.states.cols; ++c)
                all_in(row, c) = batch.states(r, c);
            for (std::size_t c = 0; c < ps.actions.cols; ++c)
                all_in(row, batch.states.cols + c) = ps.actions(r, c);
        }
    }

    MlpTape tape;
    RMat q_out = q.forward(all_in, tape);
    RMat upstream(q_out.rows, 1, real(0));
    LossOutput out;
    for (std::size_t i = 0; i < B; ++i) {
        double target = static_cast<double>(batch.rewards[i]) +
                        gamma * (1.0 - static_cast<double>(batch.done[i])) *
                            static_cast<double>(v_next(i, 0));
        double diff = target - static_cast<double>(q_out(i, 0));
        out.value += diff * diff / static_cast<double>(B);
        upstream(i, 0) = static_cast<real>(-2.0 * diff / static_cast<double>(B));
    }
    double pen_scale = beta / static_cast<double>(B * penalty_samples);
    for (std::size_t i = B; i < q_out.rows; ++i) {
        out.value += pen_scale * static_cast<double>(q_out(i, 0));
        upstream(i, 0) = static_cast<real>(pen_scale);
    }
    out.q_grad = q.backward(tape, upstream);
    return out;
}

/// Q-only conservative variant: the Bellman target bootstraps from the
/// target network at a fresh policy action instead of from V, and the
/// penalty weight is its own coefficient. With alpha_cql = 0 and a target
/// network that happens to equal V on next states, this coincides with
/// q_loss_dce at beta = 0.
inline LossOutput q_loss_cql_variant(const Batch& batch, const Mlp& q_target, const Mlp& q,
                                     const GaussianPolicyNet& policy, double alpha_cql,
                                     double gamma, Rng& rng) {
    const std::size_t B = batch.size();
    // Bootstrap actions are drawn first, penalty actions second; keep this
    // order stable, it defines the rng stream.
    PolicySample boot = policy.sample(batch.next_states, rng);
    RMat boot_q = q_target.forward(concat_cols(batch.next_states, boot.actions));
    PolicySample pen = policy.sample(batch.states, rng);

    RMat data_in = concat_cols(batch.states, batch.actions);
    RMat pen_in = concat_cols(batch.states, pen.actions);
    RMat all_in(2 * B, data_in.cols);
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t c = 0; c < data_in.cols; ++c) {
            all_in(r, c) = data_in(r, c);
            all_in(B + r, c) = pen_in(r, c);
        }

    MlpTape tape;
    RMat q_out = q.forward(all_in, tape);
    RMat upstream(2 * B, 1, real(0));
    LossOutput out;
    for (std::size_t i = 0; i < B; ++i) {
        double target = static_cast<double>(batch.rewards[i]) +
                        gamma * (1.0 - static_cast<double>(batch.done[i])) *
                            static_cast<double>(boot_q(i, 0));
        double diff = target - static_cast<double>(q_out(i, 0));
        out.value += diff * diff / static_cast<double>(B);
        upstream(i, 0) = static_cast<real>(-2.0 * diff / static_cast<double>(B));
        out.value += alpha_cql * static_cast<double>(q_out(B + i, 0)) / static_cast<double>(B);
        upstream(B + i, 0) = static_cast<real>(alpha_cql / static_cast<double>(B));
    }
    out.q_grad = q.backward(tape, upstream);
    return out;
}

/// Policy loss: mean of alpha * log pi(a'|s) - Q(s, a') over reparameterized
/// draws. Gradients flow to the policy only, both directly through the
/// log-density and through Q's action input; Q's own parameters are data.
inline LossOutput policy_loss_sac(const RMat& states, const Mlp& q,
                                  const GaussianPolicyNet& policy, double alpha, Rng& rng) {
    const std::size_t B = states.rows;
    PolicySample ps = policy.sample(states, rng);
    MlpTape tape;
    RMat q_out = q.forward(concat_cols(states, ps.actions), tape);
    LossOutput out;
    RVec dlogp(B, static_cast<real>(alpha / static_cast<double>(B)));
    RMat q_upstream(B, 1, static_cast<real>(-1.0 / static_cast<double>(B)));
    for (std::size_t i = 0; i < B; ++i) {
        out.value += (alpha * static_cast<double>(ps.log_probs[i]) -
                      static_cast<double>(q_out(i, 0))) /
                     static_cast<double>(B);
        out.mean_log_prob += static_cast<double>(ps.log_probs[i]) / static_cast<double>(B);
    }
    RMat dq_input;
    q.backward(tape, q_upstream, &dq_input);
    RMat dact(B, policy.action_dim());
    for (std::size_t r = 0; r < B; ++r)
        for (std::size_t d = 0; d < policy.action_dim(); ++d)
            dact(r, d) = dq_input(r, states.cols + d);
    out.policy_grad = policy.backward(ps, dlogp, dact);
    return out;
}

/// Temperature loss on the scalar log_alpha given a measured mean
/// log-probability: descending it raises alpha while entropy sits below the
/// target and lowers it otherwise.
inline LossOutput alpha_loss_from_mean_logp(double mean_logp, double log_alpha,
                                            double target_entropy) {
    LossOutput out;
    double a = std::exp(log_alpha);
    out.value = -a * (mean_logp + target_entropy);
    out.log_alpha_grad = -a * (mean_logp + target_entropy);
    out.mean_log_prob = mean_logp;
    return out;
}

/// Temperature loss with its own policy draw (log-probabilities detached).
inline LossOutput alpha_loss(const RMat& states, const GaussianPolicyNet& policy,
                             double log_alpha, double target_entropy, Rng& rng) {
    PolicySample ps = policy.sample(states, rng);
    double mean_logp = 0.0;
    for (real lp : ps.log_probs)
        mean_logp += static_cast<double>(lp) / static_cast<double>(ps.log_probs.size());
    return alpha_loss_from_mean_logp(mean_logp, log_alpha, target_entropy);
}

}  // namespace dce
