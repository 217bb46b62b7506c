#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "episodic_maml/errors.hpp"
#include "episodic_maml/rng.hpp"

namespace episodic_maml {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ArgumentError("unknown activation '" + s + "' (expected relu or tanh)");
}

// Fully-connected network shape: input_dim -> hidden_widths... -> output_dim.
// Hidden layers apply the activation; the output layer is linear and the class
// distribution is softmax(logits), taken inside the loss.
struct MlpArchitecture {
    int input_dim = 0;
    std::vector<int> hidden_widths{80, 80, 80};
    int output_dim = 0;
    Activation activation = Activation::relu;

    int layer_count() const { return static_cast<int>(hidden_widths.size()) + 1; }

    // widths of all layer boundaries: input, hidden..., output
    std::vector<int> layer_widths() const {
        std::vector<int> w;
        w.reserve(hidden_widths.size() + 2);
        w.push_back(input_dim);
        w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
        w.push_back(output_dim);
        return w;
    }

    std::size_t parameter_count() const {
        const auto w = layer_widths();
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < w.size(); ++l)
            n += static_cast<std::size_t>(w[l + 1]) * w[l] + w[l + 1];
        return n;
    }

    void validate() const {
        if (input_dim < 1) throw ArgumentError("architecture: input_dim must be >= 1");
        if (output_dim < 1) throw ArgumentError("architecture: output_dim must be >= 1");
        for (int h : hidden_widths)
            if (h < 1) throw ArgumentError("architecture: hidden widths must be >= 1");
    }

    bool operator==(const MlpArchitecture&) const = default;
};

// Network weights, stored flat. Layout per layer l: weight matrix (out x in,
// row-major) followed by bias vector (out). Gradients, meta-gradients and HVP
// operands use the same flat layout ("parameter-shaped vectors").
struct MlpParameters {
    MlpArchitecture arch;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }

    std::size_t weight_offset(int layer) const {
        const auto w = arch.layer_widths();
        std::size_t off = 0;
        for (int l = 0; l < layer; ++l)
            off += static_cast<std::size_t>(w[l + 1]) * w[l] + w[l + 1];
        return off;
    }

    std::size_t bias_offset(int layer) const {
        const auto w = arch.layer_widths();
        return weight_offset(layer) + static_cast<std::size_t>(w[layer + 1]) * w[layer];
    }

    std::span<double> weight(int layer) {
        const auto w = arch.layer_widths();
        return {values.data() + weight_offset(layer),
                static_cast<std::size_t>(w[layer + 1]) * w[layer]};
    }
    std::span<const double> weight(int layer) const {
        const auto w = arch.layer_widths();
        return {values.data() + weight_offset(layer),
                static_cast<std::size_t>(w[layer + 1]) * w[layer]};
    }
    std::span<double> bias(int layer) {
        const auto w = arch.layer_widths();
        return {values.data() + bias_offset(layer), static_cast<std::size_t>(w[layer + 1])};
    }
    std::span<const double> bias(int layer) const {
        const auto w = arch.layer_widths();
        return {values.data() + bias_offset(layer), static_cast<std::size_t>(w[layer + 1])};
    }

    bool all_finite() const {
        return std::all_of(values.begin(), values.end(),
                           [](double v) { return std::isfinite(v); });
    }

    bool operator==(const MlpParameters&) const = default;
};

// A block of labeled rows: features is size() x feature_dim row-major, labels
// hold local class indices in [0, n_classes).
struct LabeledBatch {
    int feature_dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    int size() const { return static_cast<int>(labels.size()); }

    std::span<const double> row(int i) const {
        return {features.data() + static_cast<std::size_t>(i) * feature_dim,
                static_cast<std::size_t>(feature_dim)};
    }
};

namespace detail {

inline void check_batch(const MlpParameters& params, const LabeledBatch& batch) {
    if (batch.feature_dim != params.arch.input_dim)
        throw ShapeError("batch feature width " + std::to_string(batch.feature_dim) +
                         " does not match network input_dim " +
                         std::to_string(params.arch.input_dim));
    if (batch.features.size() !=
        static_cast<std::size_t>(batch.size()) * batch.feature_dim)
        throw ShapeError("batch feature buffer size inconsistent with label count");
}

inline void check_labels(const LabeledBatch& batch, int n_classes) {
    for (int y : batch.labels)
        if (y < 0 || y >= n_classes)
            throw ArgumentError("label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(n_classes) + ")");
}

inline double activate(double z, Activation a) {
    return a == Activation::relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// derivative expressed through the post-activation value
inline double activate_prime_from_output(double out, Activation a) {
    return a == Activation::relu ? (out > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

// Activations at every layer boundary; layers[0] is the input copy and
// layers.back() holds the pre-softmax logits.
struct ForwardTrace {
    std::vector<std::vector<double>> layers;
};

inline ForwardTrace forward_trace(const MlpParameters& params, const LabeledBatch& batch) {
    check_batch(params, batch);
    const auto widths = params.arch.layer_widths();
    const int n = batch.size();
    const int n_layers = params.arch.layer_count();

    ForwardTrace trace;
    trace.layers.resize(n_layers + 1);
    trace.layers[0] = batch.features;

    for (int l = 0; l < n_layers; ++l) {
        const int in = widths[l];
        const int out = widths[l + 1];
        const auto w = params.weight(l);
        const auto b = params.bias(l);
        const bool last = l == n_layers - 1;
        const std::vector<double>& src = trace.layers[l];
        std::vector<double>& dst = trace.layers[l + 1];
        dst.resize(static_cast<std::size_t>(n) * out);
        for (int r = 0; r < n; ++r) {
            const double* a = src.data() + static_cast<std::size_t>(r) * in;
            double* z = dst.data() + static_cast<std::size_t>(r) * out;
            for (int o = 0; o < out; ++o) {
                const double* wr = w.data() + static_cast<std::size_t>(o) * in;
                double acc = b[o];
                for (int i = 0; i < in; ++i) acc += wr[i] * a[i];
                z[o] = last ? acc : activate(acc, params.arch.activation);
            }
        }
    }
    return trace;
}

}  // namespace detail

// softmax of one logit row, numerically stable
inline std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    const double m = *std::max_element(p.begin(), p.end());
    double sum = 0.0;
    for (double& v : p) {
        v = std::exp(v - m);
        sum += v;
    }
    for (double& v : p) v /= sum;
    return p;
}

// Mean categorical negative log-likelihood of logits (n x n_classes row-major)
// against labels. Probabilities are floored at 1e-12 inside the log, so the
// result is always finite and >= 0.
inline double nll_from_logits(const std::vector<double>& logits,
                              const std::vector<int>& labels, int n_classes) {
    if (n_classes < 1) throw ArgumentError("nll: n_classes must be >= 1");
    if (logits.size() != labels.size() * static_cast<std::size_t>(n_classes))
        throw ShapeError("nll: logits size does not match labels x n_classes");
    static const double kLogFloor = std::log(1e-12);
    const int n = static_cast<int>(labels.size());
    double total = 0.0;
    for (int r = 0; r < n; ++r) {
        const int y = labels[r];
        if (y < 0 || y >= n_classes)
            throw ArgumentError("label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(n_classes) + ")");
        const double* z = logits.data() + static_cast<std::size_t>(r) * n_classes;
        const double m = *std::max_element(z, z + n_classes);
        double lse = 0.0;
        for (int c = 0; c < n_classes; ++c) lse += std::exp(z[c] - m);
        double logp = z[y] - m - std::log(lse);
        if (logp < kLogFloor) logp = kLogFloor;
        total += -logp;
    }
    return total / n;
}

/// Seeded fan-based uniform initialization: weights ~ U[-s, s] with
/// s = sqrt(6 / (fan_in + fan_out)) per layer, biases zero.
inline MlpParameters init_parameters(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    MlpParameters params;
    params.arch = arch;
    params.values.assign(arch.parameter_count(), 0.0);
    Rng rng(seed);
    const auto widths = arch.layer_widths();
    for (int l = 0; l < arch.layer_count(); ++l) {
        const double s = std::sqrt(6.0 / (widths[l] + widths[l + 1]));
        for (double& w : params.weight(l)) w = rng.uniform(-s, s);
        // biases stay zero
    }
    return params;
}

/// Batch forward pass; returns logits, n x output_dim row-major.
inline std::vector<double> forward(const MlpParameters& params, const LabeledBatch& batch) {
    return std::move(detail::forward_trace(params, batch).layers.back());
}

/// Mean cross-entropy loss of the batch under softmax(forward(params, batch)).
inline double loss(const MlpParameters& params, const LabeledBatch& batch) {
    detail::check_labels(batch, params.arch.output_dim);
    return nll_from_logits(forward(params, batch), batch.labels, params.arch.output_dim);
}

struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad;  // parameter-shaped, flat layout of MlpParameters
};

/// Loss and its exact gradient w.r.t. every weight and bias (backpropagation).
inline LossGradient loss_gradient(const MlpParameters& params, const LabeledBatch& batch) {
    detail::check_labels(batch, params.arch.output_dim);
    const auto widths = params.arch.layer_widths();
    const int n = batch.size();
    const int n_layers = params.arch.layer_count();
    const int n_out = params.arch.output_dim;

    auto trace = detail::forward_trace(params, batch);

    LossGradient result;
    result.loss = nll_from_logits(trace.layers.back(), batch.labels, n_out);
    result.grad.assign(params.size(), 0.0);

    // dL/dlogits = (softmax - onehot) / n, per row
    std::vector<double> delta = trace.layers.back();
    for (int r = 0; r < n; ++r) {
        double* z = delta.data() + static_cast<std::size_t>(r) * n_out;
        const double m = *std::max_element(z, z + n_out);
        double sum = 0.0;
        for (int c = 0; c < n_out; ++c) {
            z[c] = std::exp(z[c] - m);
            sum += z[c];
        }
        for (int c = 0; c < n_out; ++c) z[c] /= sum;
        z[batch.labels[r]] -= 1.0;
        for (int c = 0; c < n_out; ++c) z[c] /= n;
    }

    std::vector<double> delta_prev;
    for (int l = n_layers - 1; l >= 0; --l) {
        const int in = widths[l];
        const int out = widths[l + 1];
        const auto w = params.weight(l);
        double* gw = result.grad.data() + params.weight_offset(l);
        double* gb = result.grad.data() + params.bias_offset(l);
        const std::vector<double>& act = trace.layers[l];

        for (int r = 0; r < n; ++r) {
            const double* d = delta.data() + static_cast<std::size_t>(r) * out;
            const double* a = act.data() + static_cast<std::size_t>(r) * in;
            for (int o = 0; o < out; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                gb[o] += dv;
                double* gwr = gw + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) gwr[i] += dv * a[i];
            }
        }

        if (l == 0) break;
        delta_prev.assign(static_cast<std::size_t>(n) * in, 0.0);
        for (int r = 0; r < n; ++r) {
            const double* d = delta.data() + static_cast<std::size_t>(r) * out;
            double* dp = delta_prev.data() + static_cast<std::size_t>(r) * in;
            for (int o = 0; o < out; ++o) {
                const double dv = d[o];
                if (dv == 0.0) continue;
                const double* wr = w.data() + static_cast<std::size_t>(o) * in;
                for (int i = 0; i < in; ++i) dp[i] += dv * wr[i];
            }
            for (int i = 0; i < in; ++i)
                dp[i] *= detail::activate_prime_from_output(act[static_cast<std::size_t>(r) * in + i],
                                                            params.arch.activation);
        }
        delta.swap(delta_prev);
    }
    return result;
}

/// H·v for the loss Hessian H at params, by central differencing of
/// loss_gradient along v. The step r = 1e-5 (1 + ||theta||inf) / ||v||inf
/// keeps the probe displacement r·v at a fixed magnitude, so scaling v by a
/// power of two scales the result exactly.
inline std::vector<double> hessian_vector_product(const MlpParameters& params,
                                                  const LabeledBatch& batch,
                                                  std::span<const double> v) {
    if (v.size() != params.size())
        throw ShapeError("hvp: vector size " + std::to_string(v.size()) +
                         " does not match parameter count " + std::to_string(params.size()));

    double theta_inf = 0.0;
    for (double t : params.values) theta_inf = std::max(theta_inf, std::abs(t));
    double v_inf = 0.0;
    for (double x : v) v_inf = std::max(v_inf, std::abs(x));
    if (v_inf == 0.0) return std::vector<double>(params.size(), 0.0);

    const double r = 1e-5 * (1.0 + theta_inf) / v_inf;
    MlpParameters plus = params;
    MlpParameters minus = params;
    for (std::size_t j = 0; j < params.size(); ++j) {
        plus.values[j] += r * v[j];
        minus.values[j] -= r * v[j];
    }
    const auto g_plus = loss_gradient(plus, batch).grad;
    const auto g_minus = loss_gradient(minus, batch).grad;
    std::vector<double> hv(params.size());
    for (std::size_t j = 0; j < params.size(); ++j)
        hv[j] = (g_plus[j] - g_minus[j]) / (2.0 * r);
    return hv;
}

}  // namespace episodic_maml
