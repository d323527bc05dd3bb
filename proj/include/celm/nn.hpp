#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "celm/error.hpp"
#include "celm/rng.hpp"
#include "celm/tensor.hpp"

namespace celm {

/// Fully connected layer: y = W x + b with W stored [out x in].
struct DenseLayer {
    Tensor weights;
    Tensor bias;

    DenseLayer() = default;
    DenseLayer(Tensor w, Tensor b) : weights(std::move(w)), bias(std::move(b)) {
        if (weights.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weights.dim(0)) {
            throw DimensionError("dense layer: weights " + shape_string(weights.shape()) + " incompatible with bias " +
                                 shape_string(bias.shape()));
        }
    }
    DenseLayer(std::size_t in, std::size_t out) : weights({out, in}), bias({out}) {}

    std::size_t in_dim() const { return weights.dim(1); }
    std::size_t out_dim() const { return weights.dim(0); }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Per-parameter buffers laid out exactly like an MlpModel's layers.
using Gradients = std::vector<DenseLayer>;

/// Stack of dense layers with ReLU between all but the last. The last layer is the
/// classifier head; everything before it is the backbone.
class MlpModel {
public:
    MlpModel() = default;

    explicit MlpModel(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) throw DimensionError("model needs at least one layer");
        for (std::size_t l = 1; l < layers_.size(); ++l) {
            if (layers_[l].in_dim() != layers_[l - 1].out_dim()) {
                throw DimensionError("layer " + std::to_string(l) + " expects input " +
                                     std::to_string(layers_[l].in_dim()) + " but previous layer emits " +
                                     std::to_string(layers_[l - 1].out_dim()));
            }
        }
    }

    /// Fan-in scaled uniform init: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    /// `dims` lists input width, hidden widths, then the class count.
    static MlpModel random(std::span<const std::size_t> dims, Rng& rng) {
        if (dims.size() < 2) throw DimensionError("model dims need at least input and output width");
        std::vector<DenseLayer> layers;
        for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
            DenseLayer layer(dims[l], dims[l + 1]);
            const Real bound = std::sqrt(1.0 / static_cast<Real>(dims[l]));
            std::uniform_real_distribution<Real> dist(-bound, bound);
            for (auto& w : layer.weights.values()) w = dist(rng);
            for (auto& b : layer.bias.values()) b = dist(rng);
            layers.push_back(std::move(layer));
        }
        return MlpModel(std::move(layers));
    }

    static MlpModel random(std::initializer_list<std::size_t> dims, Rng& rng) {
        std::vector<std::size_t> d(dims);
        return random(std::span<const std::size_t>(d), rng);
    }

    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }
    std::size_t num_layers() const noexcept { return layers_.size(); }
    std::size_t head_index() const noexcept { return layers_.size() - 1; }
    std::size_t input_dim() const { return layers_.front().in_dim(); }
    std::size_t num_classes() const { return layers_.back().out_dim(); }

    std::size_t num_parameters() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
        return n;
    }

    /// Parameters concatenated layer by layer (weights then bias).
    std::vector<Real> flatten() const {
        std::vector<Real> out;
        out.reserve(num_parameters());
        for (const auto& l : layers_) {
            out.insert(out.end(), l.weights.values().begin(), l.weights.values().end());
            out.insert(out.end(), l.bias.values().begin(), l.bias.values().end());
        }
        return out;
    }

    /// FNV-1a over the raw parameter bytes; equal iff bitwise-equal parameters (modulo collisions).
    std::uint64_t checksum() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (Real v : flatten()) {
            unsigned char bytes[sizeof(Real)];
            std::memcpy(bytes, &v, sizeof(Real));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
        return h;
    }

    bool same_architecture(const MlpModel& other) const {
        if (layers_.size() != other.layers_.size()) return false;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            if (layers_[l].weights.shape() != other.layers_[l].weights.shape()) return false;
        }
        return true;
    }

    Gradients zeros_like() const {
        Gradients g;
        g.reserve(layers_.size());
        for (const auto& l : layers_) g.emplace_back(l.in_dim(), l.out_dim());
        return g;
    }

    friend bool operator==(const MlpModel&, const MlpModel&) = default;

private:
    std::vector<DenseLayer> layers_;
};

namespace detail {

/// Pre-activations of every layer plus post-ReLU activations of hidden layers.
struct ForwardCache {
    std::vector<Tensor> pre;   // pre[l]: [B x out_l]
    std::vector<Tensor> post;  // post[l]: input to layer l; post[0] is x
};

inline Tensor as_batch(const Tensor& x, std::size_t in_dim) {
    if (x.rank() == 1) {
        if (x.dim(0) != in_dim) {
            throw DimensionError("input width " + std::to_string(x.dim(0)) + " != model input " +
                                 std::to_string(in_dim));
        }
        return Tensor({1, in_dim}, x.values());
    }
    if (x.rank() != 2 || x.dim(1) != in_dim) {
        throw DimensionError("input shape " + shape_string(x.shape()) + " incompatible with model input " +
                             std::to_string(in_dim));
    }
    return x;
}

inline Tensor affine(const DenseLayer& layer, const Tensor& in) {
    const std::size_t batch = in.rows();
    const std::size_t out = layer.out_dim();
    const std::size_t width = layer.in_dim();
    Tensor z({batch, out});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto x = in.row(b);
        for (std::size_t o = 0; o < out; ++o) {
            const Real* w = &layer.weights.values()[o * width];
            Real s = layer.bias[o];
            for (std::size_t i = 0; i < width; ++i) s += w[i] * x[i];
            z(b, o) = s;
        }
    }
    return z;
}

inline ForwardCache forward_cached(const MlpModel& model, const Tensor& batch) {
    ForwardCache cache;
    cache.post.push_back(batch);
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Tensor z = affine(layers[l], cache.post.back());
        if (l + 1 < layers.size()) {
            Tensor a = z;
            for (auto& v : a.values()) v = v > 0.0 ? v : 0.0;
            cache.pre.push_back(std::move(z));
            cache.post.push_back(std::move(a));
        } else {
            cache.pre.push_back(std::move(z));
        }
    }
    return cache;
}

/// Reverse pass from dL/dlogits. Fills `grads` when non-null; returns dL/dx.
inline Tensor backward(const MlpModel& model, const ForwardCache& cache, Tensor upstream, Gradients* grads) {
    const auto& layers = model.layers();
    for (std::size_t l = layers.size(); l-- > 0;) {
        const DenseLayer& layer = layers[l];
        const Tensor& in = cache.post[l];
        const std::size_t batch = in.rows();
        const std::size_t out = layer.out_dim();
        const std::size_t width = layer.in_dim();
        if (grads) {
            DenseLayer& g = (*grads)[l];
            for (std::size_t b = 0; b < batch; ++b) {
                const auto x = in.row(b);
                for (std::size_t o = 0; o < out; ++o) {
                    const Real d = upstream(b, o);
                    if (d == 0.0) continue;
                    g.bias[o] += d;
                    Real* gw = &g.weights.values()[o * width];
                    for (std::size_t i = 0; i < width; ++i) gw[i] += d * x[i];
                }
            }
        }
        Tensor down({batch, width});
        for (std::size_t b = 0; b < batch; ++b) {
            auto dx = down.row(b);
            for (std::size_t o = 0; o < out; ++o) {
                const Real d = upstream(b, o);
                if (d == 0.0) continue;
                const Real* w = &layer.weights.values()[o * width];
                for (std::size_t i = 0; i < width; ++i) dx[i] += d * w[i];
            }
        }
        if (l > 0) {
            const Tensor& pre = cache.pre[l - 1];
            for (std::size_t k = 0; k < down.size(); ++k) {
                if (pre[k] <= 0.0) down[k] = 0.0;
            }
        }
        upstream = std::move(down);
    }
    return upstream;
}

}  // namespace detail

/// Logits for a batch [B x in] (or a single [in] vector, returned as [1 x K]).
inline Tensor forward(const MlpModel& model, const Tensor& x) {
    Tensor batch = detail::as_batch(x, model.input_dim());
    Tensor h = std::move(batch);
    const auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        h = detail::affine(layers[l], h);
        if (l + 1 < layers.size()) {
            for (auto& v : h.values()) v = v > 0.0 ? v : 0.0;
        }
    }
    return h;
}

/// Row-wise argmax of logits.
inline std::vector<std::size_t> predict(const MlpModel& model, const Tensor& x) {
    const Tensor logits = forward(model, x);
    std::vector<std::size_t> out(logits.rows());
    for (std::size_t b = 0; b < logits.rows(); ++b) {
        const auto r = logits.row(b);
        out[b] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
}

struct LossAndGrad {
    Real loss = 0.0;
    Gradients grads;
};

/// Mean softmax cross-entropy over the batch and its gradient for every parameter.
/// Labels are zero-based class indices.
inline LossAndGrad loss_and_param_grad(const MlpModel& model, const Tensor& x, std::span<const std::size_t> labels) {
    const Tensor batch = detail::as_batch(x, model.input_dim());
    const std::size_t n = batch.rows();
    const std::size_t k = model.num_classes();
    if (labels.size() != n) {
        throw DimensionError("label count " + std::to_string(labels.size()) + " != batch size " + std::to_string(n));
    }
    for (std::size_t y : labels) {
        if (y >= k) throw DomainError("label " + std::to_string(y + 1) + " outside 1.." + std::to_string(k));
    }

    const auto cache = detail::forward_cached(model, batch);
    const Tensor& logits = cache.pre.back();
    Tensor upstream({n, k});
    Real loss = 0.0;
    const Real inv_n = 1.0 / static_cast<Real>(n);
    for (std::size_t b = 0; b < n; ++b) {
        const auto z = logits.row(b);
        const Real zmax = *std::max_element(z.begin(), z.end());
        Real denom = 0.0;
        for (Real v : z) denom += std::exp(v - zmax);
        const Real log_denom = std::log(denom);
        loss += -(z[labels[b]] - zmax - log_denom);
        for (std::size_t c = 0; c < k; ++c) {
            const Real p = std::exp(z[c] - zmax - log_denom);
            upstream(b, c) = (p - (c == labels[b] ? 1.0 : 0.0)) * inv_n;
        }
    }

    LossAndGrad out;
    out.loss = loss * inv_n;
    out.grads = model.zeros_like();
    detail::backward(model, cache, std::move(upstream), &out.grads);
    return out;
}

/// Ascent direction of s_c(x) - lambda * ||x||^2 with respect to each row of x.
///
/// `x` is [B x in] with one target class per row, or a single [in] vector with one
/// target. The result has the same shape as `x`.
/// When `objective` is non-null it receives s_c(x) - lambda * ||x||^2 per row, evaluated
/// at the input (before any step).
inline Tensor input_grad(const MlpModel& model, const Tensor& x, std::span<const std::size_t> targets, Real lambda,
                         std::vector<Real>* objective = nullptr) {
    const Tensor batch = detail::as_batch(x, model.input_dim());
    const std::size_t n = batch.rows();
    const std::size_t k = model.num_classes();
    if (targets.size() != n) throw DimensionError("one target class per input row required");
    if (lambda < 0.0) throw DomainError("regularization weight must be nonnegative");

    const auto cache = detail::forward_cached(model, batch);
    Tensor upstream({n, k});
    for (std::size_t b = 0; b < n; ++b) {
        if (targets[b] >= k) throw DomainError("target class outside model output range");
        upstream(b, targets[b]) = 1.0;
    }
    if (objective) {
        objective->resize(n);
        for (std::size_t b = 0; b < n; ++b) {
            (*objective)[b] = cache.pre.back()(b, targets[b]) - lambda * squared_norm(batch.row(b));
        }
    }
    Tensor g = detail::backward(model, cache, std::move(upstream), nullptr);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] -= 2.0 * lambda * batch[i];
    if (x.rank() == 1) return Tensor(x.shape(), std::move(g.values()));
    return g;
}

inline Tensor input_grad(const MlpModel& model, const Tensor& x, std::size_t target, Real lambda) {
    const std::size_t t[1] = {target};
    return input_grad(model, x, std::span<const std::size_t>(t), lambda);
}

/// s_c(x) - lambda * ||x||^2 per row.
inline std::vector<Real> logit_objective(const MlpModel& model, const Tensor& x, std::span<const std::size_t> targets,
                                         Real lambda) {
    const Tensor batch = detail::as_batch(x, model.input_dim());
    const Tensor logits = forward(model, batch);
    std::vector<Real> out(batch.rows());
    for (std::size_t b = 0; b < batch.rows(); ++b) {
        out[b] = logits(b, targets[b]) - lambda * squared_norm(batch.row(b));
    }
    return out;
}

/// Plain gradient descent: p <- p - lr * g.
class Sgd {
public:
    explicit Sgd(Real learning_rate) : lr_(learning_rate) {
        if (!(learning_rate >= 0.0)) throw DomainError("learning rate must be nonnegative");
    }

    Real learning_rate() const noexcept { return lr_; }
    std::size_t step_count() const noexcept { return steps_; }

    void step(Tensor& param, const Tensor& grad) {
        require_same_shape(param, grad, "sgd step");
        apply(param, grad);
        ++steps_;
    }

    void step(MlpModel& model, const Gradients& grads) {
        auto& layers = model.layers();
        if (grads.size() != layers.size()) throw DimensionError("gradient layout does not match model");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            require_same_shape(layers[l].weights, grads[l].weights, "sgd step");
            require_same_shape(layers[l].bias, grads[l].bias, "sgd step");
            apply(layers[l].weights, grads[l].weights);
            apply(layers[l].bias, grads[l].bias);
        }
        ++steps_;
    }

private:
    void apply(Tensor& p, const Tensor& g) const {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * g[i];
    }

    Real lr_;
    std::size_t steps_ = 0;
};

/// Adam used for gradient *ascent* on a single tensor. Moments start at zero and
/// take the shape of the first tensor stepped.
class Adam {
public:
    explicit Adam(Real learning_rate, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
        if (!(learning_rate > 0.0)) throw DomainError("Adam learning rate must be positive");
    }

    std::size_t step_count() const noexcept { return steps_; }
    const Tensor& first_moment() const noexcept { return m_; }
    const Tensor& second_moment() const noexcept { return v_; }

    void reset() {
        m_ = Tensor();
        v_ = Tensor();
        steps_ = 0;
    }

    void ascend(Tensor& x, const Tensor& grad) {
        require_same_shape(x, grad, "adam step");
        if (m_.shape() != x.shape()) {
            m_ = Tensor(x.shape());
            v_ = Tensor(x.shape());
        }
        ++steps_;
        const Real t = static_cast<Real>(steps_);
        const Real c1 = 1.0 - std::pow(beta1_, t);
        const Real c2 = 1.0 - std::pow(beta2_, t);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const Real g = grad[i];
            m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
            v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
            const Real mhat = m_[i] / c1;
            const Real vhat = v_[i] / c2;
            x[i] += lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }

private:
    Real lr_, beta1_, beta2_, eps_;
    Tensor m_, v_;
    std::size_t steps_ = 0;
};

/// Client learning rate: `base` until `decay_round`, then `base * factor`.
/// A decay round of 0 disables the decay.
struct StepSchedule {
    Real base = 0.1;
    std::size_t decay_round = 0;
    Real factor = 0.1;

    Real at(std::size_t round) const {
        return (decay_round > 0 && round > decay_round) ? base * factor : base;
    }
};

}  // namespace celm
