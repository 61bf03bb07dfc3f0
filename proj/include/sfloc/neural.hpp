// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense feed-forward networks with batched backpropagation. Samples are
// matrix columns.

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfloc/common.hpp"

namespace sfloc::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, linear };
enum class Mode { train, eval };

struct LayerSpec {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    Activation activation = Activation::relu;
    double dropout_rate = 0.0;  ///< applied to this layer's output in train mode
};

struct DenseLayer {
    LayerSpec spec;
    Matrix weights;  ///< output_dim x input_dim
    Vector bias;
};

class Network {
public:
    Network() = default;

    /// He-uniform weights (limit sqrt(6 / fan_in)), zero biases.
    static Network build(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
        validate_chain(specs);
        Network net;
        Rng rng = make_rng(seed, 0x11e7);
        for (const auto& s : specs) {
            DenseLayer l{s, Matrix(s.output_dim, s.input_dim), Vector::Zero(static_cast<Eigen::Index>(s.output_dim))};
            const double limit = std::sqrt(6.0 / static_cast<double>(s.input_dim));
            std::uniform_real_distribution<double> u(-limit, limit);
            // Fill column-major explicitly so the draw order is fixed.
            for (Eigen::Index j = 0; j < l.weights.cols(); ++j)
                for (Eigen::Index i = 0; i < l.weights.rows(); ++i) l.weights(i, j) = u(rng);
            net.layers_.push_back(std::move(l));
        }
        return net;
    }

    static Network zeros(const std::vector<LayerSpec>& specs) {
        validate_chain(specs);
        Network net;
        for (const auto& s : specs)
            net.layers_.push_back({s, Matrix::Zero(s.output_dim, s.input_dim),
                                   Vector::Zero(static_cast<Eigen::Index>(s.output_dim))});
        return net;
    }

    static Network from_layers(std::vector<DenseLayer> layers) {
        std::vector<LayerSpec> specs;
        for (const auto& l : layers) {
            if (static_cast<std::size_t>(l.weights.rows()) != l.spec.output_dim ||
                static_cast<std::size_t>(l.weights.cols()) != l.spec.input_dim ||
                static_cast<std::size_t>(l.bias.size()) != l.spec.output_dim)
                throw DimensionMismatch("layer parameters do not match their spec");
            specs.push_back(l.spec);
        }
        validate_chain(specs);
        Network net;
        net.layers_ = std::move(layers);
        return net;
    }

    std::size_t input_dim() const { return layers_.front().spec.input_dim; }
    std::size_t output_dim() const { return layers_.back().spec.output_dim; }
    std::size_t depth() const { return layers_.size(); }
    const std::vector<DenseLayer>& layers() const { return layers_; }
    std::vector<DenseLayer>& layers() { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
        return n;
    }

    bool all_finite() const {
        for (const auto& l : layers_)
            if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
        return true;
    }

private:
    static void validate_chain(const std::vector<LayerSpec>& specs) {
        if (specs.empty()) throw std::invalid_argument("network needs at least one layer");
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            if (s.input_dim == 0 || s.output_dim == 0) throw std::invalid_argument("layer dimensions must be positive");
            if (!(s.dropout_rate >= 0.0 && s.dropout_rate < 1.0))
                throw std::invalid_argument("dropout rate must be in [0, 1)");
            if (i > 0 && specs[i - 1].output_dim != s.input_dim)
                throw DimensionMismatch("layer " + std::to_string(i) + " input does not match previous output");
        }
    }

    std::vector<DenseLayer> layers_;
};

/// ReLU hidden stack with a linear head. `dropout[i]` applies after hidden layer i.
inline std::vector<LayerSpec> mlp_specs(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                        std::size_t output_dim, const std::vector<double>& dropout = {}) {
    std::vector<LayerSpec> specs;
    std::size_t prev = input_dim;
    for (std::size_t i = 0; i < hidden.size(); ++i) {
        specs.push_back({prev, hidden[i], Activation::relu, i < dropout.size() ? dropout[i] : 0.0});
        prev = hidden[i];
    }
    specs.push_back({prev, output_dim, Activation::linear, 0.0});
    return specs;
}

/// Activations retained by a train-mode forward pass.
struct ForwardCache {
    std::vector<Matrix> inputs;       ///< input to each layer
    std::vector<Matrix> preactivations;
    std::vector<Matrix> masks;        ///< scaled keep-masks; empty when the layer has no dropout
    Matrix output;
};

namespace detail {

inline void check_input(const Network& net, const Matrix& x) {
    if (static_cast<std::size_t>(x.rows()) != net.input_dim())
        throw DimensionMismatch("input has " + std::to_string(x.rows()) + " rows, network expects " +
                                std::to_string(net.input_dim()));
}

inline void activate(Activation a, Matrix& z) {
    if (a == Activation::relu) z = z.cwiseMax(0.0);
}

}  // namespace detail

/// Eval-mode forward: deterministic, dropout is the identity.
inline Matrix forward(const Network& net, const Matrix& x) {
    detail::check_input(net, x);
    Matrix a = x;
    for (const auto& l : net.layers()) {
        Matrix z(l.weights.rows(), a.cols());
        z.noalias() = l.weights * a;
        z.colwise() += l.bias;
        detail::activate(l.spec.activation, z);
        a = std::move(z);
    }
    return a;
}

inline Vector forward(const Network& net, const Vector& x) {
    return forward(net, Matrix(x)).col(0);
}

/// Train-mode forward with caller-provided dropout masks (one per layer,
/// empty for none). Used directly by gradient checks to freeze the masks.
inline Matrix forward_with_masks(const Network& net, const Matrix& x, const std::vector<Matrix>& masks,
                                 ForwardCache& cache) {
    detail::check_input(net, x);
    if (masks.size() != net.depth()) throw DimensionMismatch("need one mask slot per layer");
    cache.inputs.clear();
    cache.preactivations.clear();
    cache.masks = masks;
    Matrix a = x;
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const auto& l = net.layers()[i];
        cache.inputs.push_back(a);
        Matrix z(l.weights.rows(), a.cols());
        z.noalias() = l.weights * a;
        z.colwise() += l.bias;
        cache.preactivations.push_back(z);
        detail::activate(l.spec.activation, z);
        if (masks[i].size() != 0) {
            if (masks[i].rows() != z.rows() || masks[i].cols() != z.cols())
                throw DimensionMismatch("dropout mask shape mismatch");
            z.array() *= masks[i].array();
        }
        a = std::move(z);
    }
    cache.output = a;
    return a;
}

/// Draws inverted-dropout masks: each unit kept with probability 1 - p and
/// scaled by 1 / (1 - p).
inline std::vector<Matrix> draw_dropout_masks(const Network& net, Eigen::Index batch, Rng& rng) {
    std::vector<Matrix> masks(net.depth());
    for (std::size_t i = 0; i < net.depth(); ++i) {
        const double p = net.layers()[i].spec.dropout_rate;
        if (p <= 0.0) continue;
        std::bernoulli_distribution keep(1.0 - p);
        const double scale = 1.0 / (1.0 - p);
        Matrix m(net.layers()[i].weights.rows(), batch);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, j) = keep(rng) ? scale : 0.0;
        masks[i] = std::move(m);
    }
    return masks;
}

inline Matrix forward(const Network& net, const Matrix& x, Mode mode, Rng& rng, ForwardCache& cache) {
    if (mode == Mode::eval) {
        cache.masks.assign(net.depth(), Matrix());
        return forward_with_masks(net, x, cache.masks, cache);
    }
    return forward_with_masks(net, x, draw_dropout_masks(net, x.cols(), rng), cache);
}

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> bias;

    bool all_finite() const {
        for (const auto& w : weights)
            if (!w.allFinite()) return false;
        for (const auto& b : bias)
            if (!b.allFinite()) return false;
        return true;
    }
};

/// Reverse-mode gradients of a scalar loss given dLoss/dOutput.
inline Gradients backward(const Network& net, const ForwardCache& cache, const Matrix& output_grad) {
    if (cache.inputs.size() != net.depth()) throw std::logic_error("backward needs a train-mode forward cache");
    if (output_grad.rows() != cache.output.rows() || output_grad.cols() != cache.output.cols())
        throw DimensionMismatch("output gradient shape mismatch");
    Gradients g;
    g.weights.resize(net.depth());
    g.bias.resize(net.depth());
    Matrix delta = output_grad;
    for (std::size_t k = net.depth(); k-- > 0;) {
        const auto& l = net.layers()[k];
        if (cache.masks[k].size() != 0) delta.array() *= cache.masks[k].array();
        if (l.spec.activation == Activation::relu)
            delta.array() *= (cache.preactivations[k].array() > 0.0).cast<double>();
        g.weights[k].noalias() = delta * cache.inputs[k].transpose();
        g.bias[k] = delta.rowwise().sum();
        if (k > 0) {
            Matrix prev(l.weights.cols(), delta.cols());
            prev.noalias() = l.weights.transpose() * delta;
            delta = std::move(prev);
        }
    }
    return g;
}

struct LossResult {
    double value = 0.0;
    Matrix grad;  ///< dLoss/dPrediction
};

/// Mean absolute error over all entries; subgradient sign(p - t) / count, 0 at p == t.
inline LossResult mae_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionMismatch("prediction/target shape mismatch");
    const double n = static_cast<double>(pred.size());
    const Matrix diff = pred - target;
    LossResult r;
    r.value = diff.cwiseAbs().sum() / n;
    r.grad = diff.unaryExpr([n](double d) { return d > 0.0 ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0); });
    return r;
}

/// Mean squared error over all entries; gradient 2 (p - t) / count.
inline LossResult mse_loss(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols())
        throw DimensionMismatch("prediction/target shape mismatch");
    const double n = static_cast<double>(pred.size());
    const Matrix diff = pred - target;
    LossResult r;
    r.value = diff.squaredNorm() / n;
    r.grad = (2.0 / n) * diff;
    return r;
}

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam; moments start at zero.
class Adam {
public:
    Adam() = default;
    Adam(const Network& net, AdamConfig config) : config_(config) {
        if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
        if (!(config.beta1 > 0.0 && config.beta1 < 1.0) || !(config.beta2 > 0.0 && config.beta2 < 1.0))
            throw std::invalid_argument("Adam decay rates must be in (0, 1)");
        for (const auto& l : net.layers()) {
            m_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
            v_w_.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
            m_b_.push_back(Vector::Zero(l.bias.size()));
            v_b_.push_back(Vector::Zero(l.bias.size()));
        }
    }

    const AdamConfig& config() const { return config_; }
    std::uint64_t step_count() const { return steps_; }

    void step(Network& net, const Gradients& g) {
        if (g.weights.size() != net.depth() || g.bias.size() != net.depth())
            throw DimensionMismatch("gradient layer count mismatch");
        for (std::size_t k = 0; k < net.depth(); ++k) {
            const auto& l = net.layers()[k];
            if (g.weights[k].rows() != l.weights.rows() || g.weights[k].cols() != l.weights.cols() ||
                g.bias[k].size() != l.bias.size())
                throw DimensionMismatch("gradient shape mismatch at layer " + std::to_string(k));
        }
        if (!g.all_finite()) throw TrainingDivergence("non-finite gradient passed to Adam");

        ++steps_;
        const double b1 = config_.beta1, b2 = config_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        const double lr = config_.learning_rate, eps = config_.epsilon;
        for (std::size_t k = 0; k < net.depth(); ++k) {
            auto& l = net.layers()[k];
            update(l.weights.array(), m_w_[k].array(), v_w_[k].array(), g.weights[k].array(), b1, b2, c1, c2, lr, eps);
            update(l.bias.array(), m_b_[k].array(), v_b_[k].array(), g.bias[k].array(), b1, b2, c1, c2, lr, eps);
        }
    }

private:
    template <typename P, typename M, typename G>
    static void update(P&& p, M&& m, M&& v, const G& g, double b1, double b2, double c1, double c2, double lr,
                       double eps) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.square();
        p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
    }

    AdamConfig config_;
    std::uint64_t steps_ = 0;
    std::vector<Matrix> m_w_, v_w_;
    std::vector<Vector> m_b_, v_b_;
};

}  // namespace sfloc::nn
