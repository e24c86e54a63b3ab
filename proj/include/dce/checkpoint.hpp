#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dce/common.hpp"
#include "dce/io.hpp"
#include "dce/trainer.hpp"

namespace dce {

namespace ckptimpl {

inline void push_views(std::vector<Tensor>& out, std::vector<std::span<const real>> views,
                       const std::vector<std::size_t>& sizes) {
    // views alternate weight, bias per layer; sizes gives the layer widths.
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        Tensor w;
        w.dims = {static_cast<std::uint64_t>(sizes[l + 1]), static_cast<std::uint64_t>(sizes[l])};
        const auto& wv = views[2 * l];
        w.values.assign(wv.begin(), wv.end());
        out.push_back(std::move(w));
        Tensor b;
        b.dims = {static_cast<std::uint64_t>(sizes[l + 1])};
        const auto& bv = views[2 * l + 1];
        b.values.assign(bv.begin(), bv.end());
        out.push_back(std::move(b));
    }
}

inline std::size_t pull_views(const std::vector<Tensor>& tensors, std::size_t at,
                              std::vector<std::span<real>> views) {
    for (auto& view : views) {
        if (at >= tensors.size()) throw IoError("checkpoint has too few tensors");
        const Tensor& t = tensors[at++];
        if (t.values.size() != view.size())
            throw IoError("checkpoint tensor " + std::to_string(at - 1) +
                          " has wrong element count");
        for (std::size_t i = 0; i < view.size(); ++i) view[i] = static_cast<real>(t.values[i]);
    }
    return at;
}

inline std::vector<std::size_t> mlp_sizes(std::size_t in_dim,
                                          const std::vector<std::size_t>& hidden,
                                          std::size_t out_dim) {
    std::vector<std::size_t> sizes{in_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out_dim);
    return sizes;
}

}  // namespace ckptimpl

/// Tensor layout: meta [state_dim, action_dim, hidden count, hidden sizes],
/// action low, action high, then policy trunk/mean head/log-std head, the
/// Q, V, and target-Q networks layer by layer (weight then bias), and
/// log_alpha. Twin critics are not persisted; checkpoints capture the
/// networks evaluation needs.
inline std::vector<Tensor> agent_to_tensors(const Agent& agent,
                                            const std::vector<std::size_t>& hidden) {
    const std::size_t S = agent.state_dim(), D = agent.action_dim();
    std::vector<Tensor> out;
    Tensor meta;
    meta.dims = {static_cast<std::uint64_t>(3 + hidden.size())};
    meta.values = {static_cast<double>(S), static_cast<double>(D),
                   static_cast<double>(hidden.size())};
    for (std::size_t h : hidden) meta.values.push_back(static_cast<double>(h));
    out.push_back(std::move(meta));

    Tensor low, high;
    low.dims = high.dims = {static_cast<std::uint64_t>(D)};
    for (std::size_t d = 0; d < D; ++d) {
        low.values.push_back(static_cast<double>(agent.policy.action_low()[d]));
        high.values.push_back(static_cast<double>(agent.policy.action_high()[d]));
    }
    out.push_back(std::move(low));
    out.push_back(std::move(high));

    auto policy_views = agent.policy.param_views();
    std::vector<std::size_t> trunk_sizes{S};
    trunk_sizes.insert(trunk_sizes.end(), hidden.begin(), hidden.end());
    std::vector<std::span<const real>> trunk_views(policy_views.begin(),
                                                   policy_views.end() - 4);
    std::vector<std::span<const real>> mean_views(policy_views.end() - 4,
                                                  policy_views.end() - 2);
    std::vector<std::span<const real>> log_std_views(policy_views.end() - 2,
                                                     policy_views.end());
    std::vector<std::size_t> head_sizes{hidden.back(), D};
    ckptimpl::push_views(out, trunk_views, trunk_sizes);
    ckptimpl::push_views(out, mean_views, head_sizes);
    ckptimpl::push_views(out, log_std_views, head_sizes);

    ckptimpl::push_views(out, agent.q.param_views(), ckptimpl::mlp_sizes(S + D, hidden, 1));
    ckptimpl::push_views(out, agent.v.param_views(), ckptimpl::mlp_sizes(S, hidden, 1));
    ckptimpl::push_views(out, agent.q_target.param_views(),
                         ckptimpl::mlp_sizes(S + D, hidden, 1));

    Tensor la;
    la.dims = {1};
    la.values = {agent.log_alpha};
    out.push_back(std::move(la));
    return out;
}

struct LoadedAgent {
    Agent agent;
    std::vector<std::size_t> hidden;
};

inline LoadedAgent agent_from_tensors(const std::vector<Tensor>& tensors) {
    if (tensors.size() < 4) throw IoError("checkpoint has too few tensors");
    const Tensor& meta = tensors[0];
    if (meta.values.size() < 3) throw IoError("checkpoint meta tensor is malformed");
    std::size_t S = static_cast<std::size_t>(meta.values[0]);
    std::size_t D = static_cast<std::size_t>(meta.values[1]);
    std::size_t n_hidden = static_cast<std::size_t>(meta.values[2]);
    if (S < 1 || D < 1 || n_hidden < 1 || meta.values.size() != 3 + n_hidden)
        throw IoError("checkpoint meta tensor is malformed");
    std::vector<std::size_t> hidden(n_hidden);
    for (std::size_t i = 0; i < n_hidden; ++i) {
        hidden[i] = static_cast<std::size_t>(meta.values[3 + i]);
        if (hidden[i] < 1) throw IoError("checkpoint meta tensor is malformed");
    }
    if (tensors[1].values.size() != D || tensors[2].values.size() != D)
        throw IoError("checkpoint action bounds have wrong dimension");
    RVec low(D), high(D);
    for (std::size_t d = 0; d < D; ++d) {
        low[d] = static_cast<real>(tensors[1].values[d]);
        high[d] = static_cast<real>(tensors[2].values[d]);
    }

    LoadedAgent loaded{make_agent(S, D, low, high, hidden, false, 0), hidden};
    Agent& a = loaded.agent;
    std::size_t at = 3;
    at = ckptimpl::pull_views(tensors, at, a.policy.param_views());
    at = ckptimpl::pull_views(tensors, at, a.q.param_views());
    at = ckptimpl::pull_views(tensors, at, a.v.param_views());
    at = ckptimpl::pull_views(tensors, at, a.q_target.param_views());
    if (at + 1 != tensors.size())
        throw IoError("checkpoint tensor count does not match its meta header");
    if (tensors[at].values.size() != 1) throw IoError("checkpoint log_alpha must be a scalar");
    a.log_alpha = tensors[at].values[0];
    return loaded;
}

inline void save_agent(const Agent& agent, const std::vector<std::size_t>& hidden,
                       const std::string& path) {
    save_tensors(agent_to_tensors(agent, hidden), path);
}

inline LoadedAgent load_agent(const std::string& path) {
    return agent_from_tensors(load_tensors(path));
}

}  // namespace dce
