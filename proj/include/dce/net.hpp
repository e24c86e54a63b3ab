#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dce/common.hpp"

namespace dce {

/// Fully connected layer, weights stored [out x in] so a forward pass is a
/// row-by-row dot product.
struct DenseLayer {
    RMat w;
    RVec b;

    DenseLayer() = default;
    DenseLayer(std::size_t in, std::size_t out, Rng& rng) : w(out, in), b(out) {
        // Uniform fan-in scaling for weights and biases.
        real k = static_cast<real>(1.0 / std::sqrt(static_cast<double>(in)));
        for (real& x : w.a) x = static_cast<real>(rng.uniform(-k, k));
        for (real& x : b) x = static_cast<real>(rng.uniform(-k, k));
    }

    std::size_t in_dim() const { return w.cols; }
    std::size_t out_dim() const { return w.rows; }
    std::size_t param_count() const { return w.size() + b.size(); }
};

struct LayerGrads {
    RMat w;
    RVec b;

    LayerGrads() = default;
    explicit LayerGrads(const DenseLayer& l) : w(l.w.rows, l.w.cols, 0), b(l.b.size(), 0) {}
};

/// y = x W^T + b for a batch of rows.
inline void dense_forward(const DenseLayer& l, const RMat& x, RMat& y) {
    y = RMat(x.rows, l.out_dim());
    for (std::size_t r = 0; r < x.rows; ++r) {
        const real* xr = x.row(r);
        real* yr = y.row(r);
        for (std::size_t o = 0; o < l.out_dim(); ++o) {
            const real* wr = l.w.row(o);
            real acc = l.b[o];
            for (std::size_t i = 0; i < l.in_dim(); ++i) acc += wr[i] * xr[i];
            yr[o] = acc;
        }
    }
}

/// Accumulates parameter gradients for a layer given dL/dy, and optionally
/// produces dL/dx.
inline void dense_backward(const DenseLayer& l, const RMat& x, const RMat& dy, LayerGrads& g,
                           RMat* dx) {
    for (std::size_t r = 0; r < x.rows; ++r) {
        const real* xr = x.row(r);
        const real* dyr = dy.row(r);
        for (std::size_t o = 0; o < l.out_dim(); ++o) {
            real d = dyr[o];
            if (d == real(0)) continue;
            g.b[o] += d;
            real* gw = g.w.row(o);
            for (std::size_t i = 0; i < l.in_dim(); ++i) gw[i] += d * xr[i];
        }
    }
    if (dx) {
        *dx = RMat(x.rows, l.in_dim(), 0);
        for (std::size_t r = 0; r < x.rows; ++r) {
            const real* dyr = dy.row(r);
            real* dxr = dx->row(r);
            for (std::size_t o = 0; o < l.out_dim(); ++o) {
                real d = dyr[o];
                if (d == real(0)) continue;
                const real* wr = l.w.row(o);
                for (std::size_t i = 0; i < l.in_dim(); ++i) dxr[i] += d * wr[i];
            }
        }
    }
}

/// Forward-pass records needed to run a backward pass: the input to every
/// layer and every pre-activation.
struct MlpTape {
    std::vector<RMat> inputs;   // inputs[i] feeds layer i; size L
    std::vector<RMat> preacts;  // preacts[i] is layer i before activation; size L
    RMat output;                // network output (after output activation if any)
};

struct MlpGrads {
    std::vector<LayerGrads> layers;

    std::vector<std::span<const real>> views() const {
        std::vector<std::span<const real>> v;
        for (const LayerGrads& g : layers) {
            v.emplace_back(g.w.a);
            v.emplace_back(g.b);
        }
        return v;
    }
};

/// Multi-layer perceptron with ReLU hidden activations. The output layer is
/// linear unless relu_output is set (used for feature trunks).
class Mlp {
public:
    Mlp() = default;

    /// sizes = {in, hidden..., out}; needs at least one layer.
    Mlp(const std::vector<std::size_t>& sizes, Rng& rng, bool relu_output = false)
        : sizes_(sizes), relu_output_(relu_output) {
        if (sizes.size() < 2) throw ConfigError("Mlp needs at least input and output sizes");
        for (std::size_t i = 0; i + 1 < sizes.size(); ++i)
            layers_.emplace_back(sizes[i], sizes[i + 1], rng);
    }

    std::size_t in_dim() const { return sizes_.front(); }
    std::size_t out_dim() const { return sizes_.back(); }
    const std::vector<std::size_t>& sizes() const { return sizes_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    RMat forward(const RMat& x) const {
        RMat cur = x, next;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            dense_forward(layers_[i], cur, next);
            if (i + 1 < layers_.size() || relu_output_)
                for (real& v : next.a) v = v > real(0) ? v : real(0);
            cur = std::move(next);
        }
        return cur;
    }

    RMat forward(const RMat& x, MlpTape& tape) const {
        tape.inputs.clear();
        tape.preacts.clear();
        RMat cur = x, next;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            tape.inputs.push_back(cur);
            dense_forward(layers_[i], cur, next);
            tape.preacts.push_back(next);
            if (i + 1 < layers_.size() || relu_output_)
                for (real& v : next.a) v = v > real(0) ? v : real(0);
            cur = std::move(next);
        }
        tape.output = cur;
        return cur;
    }

    /// Backpropagates dL/d(output); returns parameter gradients and, when dx
    /// is non-null, dL/d(input) as well.
    MlpGrads backward(const MlpTape& tape, const RMat& upstream, RMat* dx = nullptr) const {
        if (tape.inputs.size() != layers_.size())
            throw ConfigError("tape does not match network depth");
        MlpGrads grads;
        grads.layers.reserve(layers_.size());
        for (const DenseLayer& l : layers_) grads.layers.emplace_back(l);
        RMat dy = upstream;
        for (std::size_t i = layers_.size(); i-- > 0;) {
            if (i + 1 < layers_.size() || relu_output_) {
                const RMat& pre = tape.preacts[i];
                for (std::size_t k = 0; k < dy.a.size(); ++k)
                    if (pre.a[k] <= real(0)) dy.a[k] = real(0);
            }
            RMat dxi;
            bool need_dx = i > 0 || dx != nullptr;
            dense_backward(layers_[i], tape.inputs[i], dy, grads.layers[i],
                           need_dx ? &dxi : nullptr);
            dy = std::move(dxi);
        }
        if (dx) *dx = std::move(dy);
        return grads;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const DenseLayer& l : layers_) n += l.param_count();
        return n;
    }

    std::vector<std::span<real>> param_views() {
        std::vector<std::span<real>> v;
        for (DenseLayer& l : layers_) {
            v.emplace_back(l.w.a);
            v.emplace_back(l.b);
        }
        return v;
    }

    std::vector<std::span<const real>> param_views() const {
        std::vector<std::span<const real>> v;
        for (const DenseLayer& l : layers_) {
            v.emplace_back(l.w.a);
            v.emplace_back(l.b);
        }
        return v;
    }

private:
    std::vector<std::size_t> sizes_;
    bool relu_output_ = false;
    std::vector<DenseLayer> layers_;
};

struct AdamConfig {
    real lr = real(3e-4);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
};

/// First and second moment accumulators for one parameter set.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(std::size_t n_params, AdamConfig cfg = {})
        : cfg_(cfg), m_(n_params, 0), v_(n_params, 0) {
        if (!(cfg.lr > real(0))) throw ConfigError("Adam learning rate must be positive");
    }

    const AdamConfig& config() const { return cfg_; }
    long step_count() const { return t_; }
    std::size_t param_count() const { return m_.size(); }

    /// One bias-corrected Adam update applied in place to `params`.
    void step(std::vector<std::span<real>> params, std::vector<std::span<const real>> grads) {
        if (params.size() != grads.size())
            throw ConfigError("Adam: parameter/gradient tensor counts differ");
        std::size_t total = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (params[i].size() != grads[i].size())
                throw ConfigError("Adam: parameter/gradient tensor shapes differ");
            total += params[i].size();
        }
        if (total != m_.size()) throw ConfigError("Adam: state sized for a different network");
        for (std::size_t i = 0; i < grads.size(); ++i)
            for (std::size_t k = 0; k < grads[i].size(); ++k)
                if (!std::isfinite(static_cast<double>(grads[i][k])))
                    throw NumericError("Adam: non-finite gradient in tensor " +
                                       std::to_string(i) + " at index " + std::to_string(k));
        t_ += 1;
        real bc1 = real(1) - static_cast<real>(std::pow(static_cast<double>(cfg_.beta1), t_));
        real bc2 = real(1) - static_cast<real>(std::pow(static_cast<double>(cfg_.beta2), t_));
        std::size_t off = 0;
        for (std::size_t i = 0; i < params.size(); ++i) {
            std::span<real> p = params[i];
            std::span<const real> g = grads[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                real& m = m_[off + k];
                real& v = v_[off + k];
                m = cfg_.beta1 * m + (real(1) - cfg_.beta1) * g[k];
                v = cfg_.beta2 * v + (real(1) - cfg_.beta2) * g[k] * g[k];
                real mh = m / bc1;
                real vh = v / bc2;
                p[k] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
            }
            off += p.size();
        }
    }

private:
    AdamConfig cfg_;
    long t_ = 0;
    RVec m_, v_;
};

inline void adam_step(AdamState& state, std::vector<std::span<real>> params,
                      std::vector<std::span<const real>> grads) {
    state.step(std::move(params), std::move(grads));
}

/// Polyak averaging: target <- (1 - upsilon) * target + upsilon * online.
inline void soft_update(std::vector<std::span<real>> target,
                        std::vector<std::span<const real>> online, real upsilon) {
    if (!(upsilon > real(0) && upsilon <= real(1)))
        throw ConfigError("soft_update: upsilon must lie in (0, 1]");
    if (target.size() != online.size())
        throw ConfigError("soft_update: tensor counts differ");
    for (std::size_t i = 0; i < target.size(); ++i) {
        if (target[i].size() != online[i].size())
            throw ConfigError("soft_update: tensor shapes differ");
        for (std::size_t k = 0; k < target[i].size(); ++k)
            target[i][k] = (real(1) - upsilon) * target[i][k] + upsilon * online[i][k];
    }
}

}  // namespace dce
