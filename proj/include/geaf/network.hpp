#pragma once

// Dense feed-forward binary classifier with per-layer expression activations.
//
// Layout for h hidden layers: n_features -> 8 (input layer), h x (8 -> 8),
// 8 -> 1 (output layer); h + 2 activations, or h + 1 when the output layer
// uses the fixed logistic function. Trained on binary cross-entropy with Adam.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "geaf/dataset.hpp"
#include "geaf/error.hpp"
#include "geaf/expr.hpp"
#include "geaf/matrix.hpp"

namespace geaf {

enum class OutputActivation : std::uint8_t { evolved, fixed_sigmoid };

inline std::string_view to_string(OutputActivation a) { return a == OutputActivation::evolved ? "evolved" : "fixed_sigmoid"; }

inline constexpr double kProbabilityClamp = 1e-7;

struct NetworkConfig {
    std::size_t n_features = 1;
    std::size_t hidden_layers = 1;
    std::size_t nodes_per_hidden = 8;
    std::size_t max_epochs = 50;
    std::size_t batch_size = 4;
    std::size_t early_stop_patience = 5;
    double early_stop_min_delta = 1e-4;
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-7;
    OutputActivation output_activation = OutputActivation::evolved;

    /// Number of evolved activations this architecture consumes.
    std::size_t activation_count() const {
        return hidden_layers + (output_activation == OutputActivation::evolved ? 2 : 1);
    }

    void validate() const {
        if (hidden_layers < 1 || hidden_layers > 3) throw ConfigError("hidden_layers must be in [1,3]");
        if (n_features < 1 || nodes_per_hidden < 1 || max_epochs < 1 || batch_size < 1 || early_stop_patience < 1)
            throw ConfigError("network counts must be at least 1");
        if (!(learning_rate > 0.0) || !(epsilon > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("invalid optimizer constants");
        if (!(early_stop_min_delta >= 0.0)) throw ConfigError("early_stop_min_delta must be non-negative");
    }
};

struct DenseLayer {
    Matrix weights;  // fan_in x fan_out
    std::vector<double> bias;
    std::optional<ActivationExpr> activation;  // empty: logistic

    std::size_t fan_in() const { return weights.rows; }
    std::size_t fan_out() const { return weights.cols; }
};

struct Network {
    NetworkConfig config;
    std::vector<DenseLayer> layers;
};

inline double glorot_limit(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

/// Glorot-uniform weights, zero biases; deterministic under `seed`.
inline Network init_network(const NetworkConfig& config, std::span<const ActivationExpr> activations, std::uint64_t seed) {
    config.validate();
    if (activations.size() != config.activation_count())
        throw ConfigError("expected " + std::to_string(config.activation_count()) + " activations, got " +
                          std::to_string(activations.size()));

    std::vector<std::size_t> widths{config.n_features};
    for (std::size_t i = 0; i < config.hidden_layers + 1; ++i) widths.push_back(config.nodes_per_hidden);
    widths.push_back(1);

    Network net;
    net.config = config;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        DenseLayer layer;
        layer.weights = Matrix(widths[l], widths[l + 1]);
        layer.bias.assign(widths[l + 1], 0.0);
        const double lim = glorot_limit(widths[l], widths[l + 1]);
        std::uniform_real_distribution<double> dist(-lim, lim);
        for (double& w : layer.weights.data) w = dist(rng);
        if (l < activations.size()) layer.activation = activations[l];
        net.layers.push_back(std::move(layer));
    }
    return net;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

namespace detail {

struct LayerCache {
    Matrix input;   // activations entering the layer
    Matrix output;  // activations leaving it
    Matrix slope;   // d output / d pre-activation
    bool guard_tripped = false;
};

inline Matrix affine(const Matrix& X, const DenseLayer& layer) {
    Matrix Z(X.rows, layer.fan_out());
    for (std::size_t r = 0; r < X.rows; ++r) {
        for (std::size_t j = 0; j < layer.fan_out(); ++j) Z(r, j) = layer.bias[j];
        for (std::size_t k = 0; k < layer.fan_in(); ++k) {
            const double x = X(r, k);
            for (std::size_t j = 0; j < layer.fan_out(); ++j) Z(r, j) += x * layer.weights(k, j);
        }
    }
    return Z;
}

/// Forward pass keeping what backpropagation needs.
inline std::vector<LayerCache> forward_cached(const Network& net, const Matrix& X) {
    std::vector<LayerCache> caches(net.layers.size());
    const Matrix* in = &X;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        LayerCache& c = caches[l];
        c.input = *in;
        Matrix Z = affine(*in, layer);
        c.output = Matrix(Z.rows, Z.cols);
        c.slope = Matrix(Z.rows, Z.cols);
        if (layer.activation) {
            const EvalStatus st = evaluate_with_derivative(*layer.activation, Z.data, c.output.data, c.slope.data, false);
            c.guard_tripped = st != EvalStatus::ok;
        } else {
            for (std::size_t i = 0; i < Z.data.size(); ++i) {
                const double p = logistic(Z.data[i]);
                c.output.data[i] = p;
                c.slope.data[i] = p * (1.0 - p);
            }
        }
        in = &c.output;
    }
    return caches;
}

}  // namespace detail

struct ForwardResult {
    std::vector<double> probabilities;
    bool guard_tripped = false;
};

inline ForwardResult forward(const Network& net, const Matrix& batch) {
    if (batch.cols != net.config.n_features)
        throw Error("forward: batch has " + std::to_string(batch.cols) + " columns, network expects " +
                    std::to_string(net.config.n_features));
    ForwardResult out;
    Matrix A = batch;
    for (const DenseLayer& layer : net.layers) {
        Matrix Z = detail::affine(A, layer);
        if (layer.activation) {
            EvalOutcome o = evaluate(*layer.activation, Z.data);
            out.guard_tripped = out.guard_tripped || !o.ok();
            Z.data = std::move(o.values);
        } else {
            for (double& z : Z.data) z = logistic(z);
        }
        A = std::move(Z);
    }
    out.probabilities = std::move(A.data);
    return out;
}

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(std::span<const double> p, std::span<const int> y) {
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pc = std::clamp(p[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
        total += y[i] == 1 ? -std::log(pc) : -std::log(1.0 - pc);
    }
    return total / static_cast<double>(p.size());
}

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> bias;
};

struct LossGradient {
    double loss = 0.0;
    Gradients grad;
    bool guard_tripped = false;
};

/// Batch loss and its gradient with respect to every weight and bias.
inline LossGradient loss_and_gradient(const Network& net, const Matrix& X, std::span<const int> y) {
    auto caches = detail::forward_cached(net, X);
    const Matrix& out = caches.back().output;
    const std::size_t B = X.rows;

    LossGradient lg;
    lg.loss = bce_loss(out.data, y);
    for (const auto& c : caches) lg.guard_tripped = lg.guard_tripped || c.guard_tripped;

    // dL/dp; zero where the clamp is active.
    Matrix dA(B, 1);
    for (std::size_t i = 0; i < B; ++i) {
        const double p = out.data[i];
        if (p > kProbabilityClamp && p < 1.0 - kProbabilityClamp) {
            dA.data[i] = (y[i] == 1 ? -1.0 / p : 1.0 / (1.0 - p)) / static_cast<double>(B);
        } else {
            dA.data[i] = std::isfinite(p) ? 0.0 : p;
        }
    }

    const std::size_t L = net.layers.size();
    lg.grad.weights.resize(L);
    lg.grad.bias.resize(L);
    for (std::size_t l = L; l-- > 0;) {
        const DenseLayer& layer = net.layers[l];
        const detail::LayerCache& c = caches[l];
        Matrix dZ = dA;
        for (std::size_t i = 0; i < dZ.data.size(); ++i) dZ.data[i] *= c.slope.data[i];

        Matrix& gW = lg.grad.weights[l];
        gW = Matrix(layer.fan_in(), layer.fan_out());
        auto& gb = lg.grad.bias[l];
        gb.assign(layer.fan_out(), 0.0);
        for (std::size_t r = 0; r < B; ++r) {
            for (std::size_t j = 0; j < layer.fan_out(); ++j) {
                const double d = dZ(r, j);
                gb[j] += d;
                for (std::size_t k = 0; k < layer.fan_in(); ++k) gW(k, j) += c.input(r, k) * d;
            }
        }
        if (l == 0) break;
        Matrix prev(B, layer.fan_in());
        for (std::size_t r = 0; r < B; ++r)
            for (std::size_t k = 0; k < layer.fan_in(); ++k) {
                double s = 0.0;
                for (std::size_t j = 0; j < layer.fan_out(); ++j) s += dZ(r, j) * layer.weights(k, j);
                prev(r, k) = s;
            }
        dA = std::move(prev);
    }
    return lg;
}

inline double loss(const Network& net, const Matrix& X, std::span<const int> y) {
    return bce_loss(forward(net, X).probabilities, y);
}

/// Label 1 iff probability >= 0.5.
inline int threshold_label(double p) { return p >= 0.5 ? 1 : 0; }

inline std::vector<int> predict_labels(const Network& net, const Matrix& X) {
    const auto f = forward(net, X);
    std::vector<int> out(f.probabilities.size());
    std::transform(f.probabilities.begin(), f.probabilities.end(), out.begin(), threshold_label);
    return out;
}

/// Stops after `patience` consecutive epochs without the loss dropping more
/// than `min_delta` below the best seen.
class EarlyStopping {
public:
    EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

    /// Records one epoch; true means stop.
    bool update(double epoch_loss) {
        if (epoch_loss < best_ - min_delta_) {
            best_ = epoch_loss;
            wait_ = 0;
            return false;
        }
        return ++wait_ >= patience_;
    }

    double best() const { return best_; }

private:
    std::size_t patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t wait_ = 0;
};

enum class FailureKind : std::uint8_t { none, nan_loss, non_finite_weights };

inline std::string_view to_string(FailureKind k) {
    switch (k) {
        case FailureKind::none: return "none";
        case FailureKind::nan_loss: return "nan_loss";
        case FailureKind::non_finite_weights: return "non_finite_weights";
    }
    return "?";
}

struct TrainReport {
    std::size_t epochs_run = 0;
    double final_loss = 0.0;
    double validation_accuracy = 0.0;
    bool failed = false;
    FailureKind failure_kind = FailureKind::none;
    std::size_t total_batches = 0;
    std::size_t guarded_batches = 0;  // batches where some activation tripped its guard
    bool validation_guarded = false;  // the validation forward pass tripped a guard
    std::vector<double> epoch_losses;

    bool every_batch_guarded() const { return total_batches > 0 && guarded_batches == total_batches; }
};

namespace detail {

inline bool all_finite(const Network& net) {
    for (const auto& l : net.layers) {
        for (double w : l.weights.data)
            if (!std::isfinite(w)) return false;
        for (double b : l.bias)
            if (!std::isfinite(b)) return false;
    }
    return true;
}

class Adam {
public:
    explicit Adam(const Network& net) {
        for (const auto& l : net.layers) {
            m_w_.emplace_back(l.weights.data.size(), 0.0);
            v_w_.emplace_back(l.weights.data.size(), 0.0);
            m_b_.emplace_back(l.bias.size(), 0.0);
            v_b_.emplace_back(l.bias.size(), 0.0);
        }
    }

    void step(Network& net, const Gradients& g) {
        const NetworkConfig& c = net.config;
        ++t_;
        const double t = static_cast<double>(t_);
        const double lr_t = c.learning_rate * std::sqrt(1.0 - std::pow(c.beta2, t)) / (1.0 - std::pow(c.beta1, t));
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            update(net.layers[l].weights.data, g.weights[l].data, m_w_[l], v_w_[l], c, lr_t);
            update(net.layers[l].bias, g.bias[l], m_b_[l], v_b_[l], c, lr_t);
        }
    }

private:
    static void update(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                       const NetworkConfig& c, double lr_t) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            w[i] -= lr_t * m[i] / (std::sqrt(v[i]) + c.epsilon);
        }
    }

    std::vector<std::vector<double>> m_w_, v_w_, m_b_, v_b_;
    std::uint64_t t_ = 0;
};

}  // namespace detail

/// Mini-batch Adam on binary cross-entropy. Sample order is reshuffled every
/// epoch from `seed`. A non-finite loss or parameter aborts training at once.
inline TrainReport train(Network& net, const DataPart& train_part, const DataPart& val_part, std::uint64_t seed) {
    const NetworkConfig& cfg = net.config;
    if (train_part.size() == 0 || val_part.size() == 0) throw Error("train: empty training or validation part");
    if (cfg.batch_size > train_part.size()) throw ConfigError("batch_size exceeds the training set size");

    TrainReport rep;
    detail::Adam adam(net);
    EarlyStopping stopper(cfg.early_stop_patience, cfg.early_stop_min_delta);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(train_part.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const std::size_t n = train_part.size();
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t end = std::min(n, start + cfg.batch_size);
            std::span<const std::size_t> idx(order.data() + start, end - start);
            const Matrix Xb = train_part.X.select_rows(idx);
            std::vector<int> yb;
            yb.reserve(idx.size());
            for (auto i : idx) yb.push_back(train_part.y[i]);

            const LossGradient lg = loss_and_gradient(net, Xb, yb);
            ++rep.total_batches;
            if (lg.guard_tripped) ++rep.guarded_batches;
            if (!std::isfinite(lg.loss)) {
                rep.failed = true;
                rep.failure_kind = FailureKind::nan_loss;
                rep.final_loss = lg.loss;
                rep.epochs_run = epoch + 1;
                return rep;
            }
            adam.step(net, lg.grad);
            if (!detail::all_finite(net)) {
                rep.failed = true;
                rep.failure_kind = FailureKind::non_finite_weights;
                rep.final_loss = lg.loss;
                rep.epochs_run = epoch + 1;
                return rep;
            }
            loss_sum += lg.loss;
            ++batches;
        }
        const double epoch_loss = loss_sum / static_cast<double>(batches);
        rep.epoch_losses.push_back(epoch_loss);
        rep.final_loss = epoch_loss;
        rep.epochs_run = epoch + 1;
        if (stopper.update(epoch_loss)) break;
    }

    const auto val = forward(net, val_part.X);
    rep.validation_guarded = val.guard_tripped;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < val.probabilities.size(); ++i)
        correct += threshold_label(val.probabilities[i]) == val_part.y[i] ? 1 : 0;
    rep.validation_accuracy = static_cast<double>(correct) / static_cast<double>(val.probabilities.size());
    return rep;
}

/// Text record of configuration, activations and every parameter at full precision.
inline std::string dump_model(const Network& net) {
    std::ostringstream out;
    const NetworkConfig& c = net.config;
    out << "network n_features=" << c.n_features << " hidden_layers=" << c.hidden_layers
        << " nodes_per_hidden=" << c.nodes_per_hidden << " output_activation=" << to_string(c.output_activation) << '\n';
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const DenseLayer& layer = net.layers[l];
        out << "layer " << l << ' ' << layer.fan_in() << 'x' << layer.fan_out() << " activation "
            << (layer.activation ? to_text(*layer.activation) : std::string("sigmoid")) << '\n';
        out << "weights";
        for (double w : layer.weights.data) out << ' ' << format_number(w);
        out << "\nbias";
        for (double b : layer.bias) out << ' ' << format_number(b);
        out << '\n';
    }
    return out.str();
}

}  // namespace geaf
