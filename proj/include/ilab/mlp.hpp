#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ilab/errors.hpp"

namespace ilab {

enum class Activation { relu, tanh };

inline const char* to_string(Activation a) {
    return a == Activation::relu ? "relu" : "tanh";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw ConfigError("unknown activation '" + s + "' (expected relu or tanh)");
}

/// All model weights and biases as one flat vector. Layout is frozen so the
/// serialized form is portable across runs: for each layer in order, the
/// weight matrix row-major (out x in), then the biases (out).
using ParameterVector = std::vector<double>;

/// Fully-connected feed-forward net. Hidden layers use `activation`; the
/// output layer emits raw logits (no softmax).
struct MLPArchitecture {
    std::vector<int> layer_sizes; // input, hidden..., output
    Activation activation = Activation::relu;

    void validate() const {
        if (layer_sizes.size() < 2)
            throw ConfigError("architecture needs at least 2 layers (input and output)");
        for (int s : layer_sizes)
            if (s <= 0) throw ConfigError("architecture layer sizes must be positive");
    }

    size_t num_layers() const { return layer_sizes.size() - 1; } // weight layers
    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    int last_hidden_size() const { return layer_sizes[layer_sizes.size() - 2]; }

    size_t param_count() const {
        size_t n = 0;
        for (size_t l = 0; l + 1 < layer_sizes.size(); ++l)
            n += static_cast<size_t>(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
        return n;
    }

    /// Offset of layer l's weight block in the flat parameter vector.
    size_t weight_offset(size_t l) const {
        size_t off = 0;
        for (size_t k = 0; k < l; ++k)
            off += static_cast<size_t>(layer_sizes[k]) * layer_sizes[k + 1] + layer_sizes[k + 1];
        return off;
    }

    size_t bias_offset(size_t l) const {
        return weight_offset(l) + static_cast<size_t>(layer_sizes[l]) * layer_sizes[l + 1];
    }

    std::string describe() const {
        std::string s;
        for (size_t i = 0; i < layer_sizes.size(); ++i) {
            if (i) s += '-';
            s += std::to_string(layer_sizes[i]);
        }
        s += ' ';
        s += to_string(activation);
        return s;
    }

    bool operator==(const MLPArchitecture&) const = default;
};

inline void check_params(const ParameterVector& params, const MLPArchitecture& arch) {
    if (params.size() != arch.param_count())
        throw ConfigError("parameter vector length " + std::to_string(params.size()) +
                          " does not match architecture (" +
                          std::to_string(arch.param_count()) + " expected)");
}

inline void check_input(std::span<const double> input, const MLPArchitecture& arch) {
    if (input.size() != static_cast<size_t>(arch.input_size()))
        throw ConfigError("input length " + std::to_string(input.size()) +
                          " does not match architecture input size " +
                          std::to_string(arch.input_size()));
}

inline double activate(Activation a, double x) {
    if (a == Activation::relu) return x > 0.0 ? x : 0.0;
    return std::tanh(x);
}

/// Derivative in terms of the activation value (both relu and tanh allow it).
/// relu uses g'(0) = 0.
inline double activate_deriv_from_value(Activation a, double y) {
    if (a == Activation::relu) return y > 0.0 ? 1.0 : 0.0;
    return 1.0 - y * y;
}

/// Scratch buffers for forward/backward passes; reusable across calls so hot
/// loops (Hessian assembly, batch gradients) do not allocate per example.
struct MLPWorkspace {
    std::vector<std::vector<double>> act;   // act[l] = activations of layer l (act[0] = input)
    std::vector<double> delta, delta_prev;

    void resize(const MLPArchitecture& arch) {
        act.resize(arch.layer_sizes.size());
        for (size_t l = 0; l < arch.layer_sizes.size(); ++l)
            act[l].resize(arch.layer_sizes[l]);
        size_t widest = 0;
        for (int s : arch.layer_sizes) widest = std::max(widest, static_cast<size_t>(s));
        delta.resize(widest);
        delta_prev.resize(widest);
    }
};

/// Forward pass filling ws.act; returns nothing, logits end up in ws.act.back().
inline void forward_into(const ParameterVector& params, const MLPArchitecture& arch,
                         std::span<const double> input, MLPWorkspace& ws) {
    ws.resize(arch);
    std::copy(input.begin(), input.end(), ws.act[0].begin());
    for (size_t l = 0; l < arch.num_layers(); ++l) {
        const int in = arch.layer_sizes[l];
        const int out = arch.layer_sizes[l + 1];
        const double* w = params.data() + arch.weight_offset(l);
        const double* b = params.data() + arch.bias_offset(l);
        const double* x = ws.act[l].data();
        double* y = ws.act[l + 1].data();
        const bool last = (l + 1 == arch.num_layers());
        for (int o = 0; o < out; ++o) {
            const double* row = w + static_cast<size_t>(o) * in;
            double s = b[o];
            for (int i = 0; i < in; ++i) s += row[i] * x[i];
            y[o] = last ? s : activate(arch.activation, s);
        }
    }
}

/// Pre-activation logits of the output layer.
inline std::vector<double> forward(const ParameterVector& params, const MLPArchitecture& arch,
                                   std::span<const double> input) {
    arch.validate();
    check_params(params, arch);
    check_input(input, arch);
    MLPWorkspace ws;
    forward_into(params, arch, input, ws);
    return ws.act.back();
}

/// Activations of the final hidden layer (the feature map used by RPS).
inline std::vector<double> features(const ParameterVector& params, const MLPArchitecture& arch,
                                    std::span<const double> input) {
    arch.validate();
    check_params(params, arch);
    check_input(input, arch);
    if (arch.num_layers() < 2)
        throw ConfigError("architecture has no hidden layer to take features from");
    MLPWorkspace ws;
    forward_into(params, arch, input, ws);
    return ws.act[ws.act.size() - 2];
}

/// Cross-entropy of softmax(logits) against `label`, natural log,
/// stabilized by max-subtraction.
inline double loss(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<size_t>(label) >= logits.size())
        throw ConfigError("label " + std::to_string(label) + " out of range for " +
                          std::to_string(logits.size()) + " logits");
    double m = logits[0];
    for (double z : logits) {
        if (!std::isfinite(z)) throw NumericError("non-finite logit in loss");
        m = std::max(m, z);
    }
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - m);
    return std::log(sum) - (logits[label] - m);
}

/// Softmax probabilities (same stabilization as loss()).
inline std::vector<double> softmax(std::span<const double> logits) {
    double m = logits[0];
    for (double z : logits) {
        if (!std::isfinite(z)) throw NumericError("non-finite logit in softmax");
        m = std::max(m, z);
    }
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

/// Argmax class; ties resolved to the lowest index.
inline int predict_class(const ParameterVector& params, const MLPArchitecture& arch,
                         std::span<const double> input) {
    auto logits = forward(params, arch, input);
    int best = 0;
    for (size_t c = 1; c < logits.size(); ++c)
        if (logits[c] > logits[best]) best = static_cast<int>(c);
    return best;
}

/// Adds scale * d(cross-entropy)/d(params) for one example into `out`.
/// No weight-decay term here; callers add it once per batch (or per example)
/// so batch means keep a single decay contribution.
/// Returns the example's loss.
inline double add_loss_gradient(const ParameterVector& params, const MLPArchitecture& arch,
                                std::span<const double> input, int label,
                                double scale, ParameterVector& out, MLPWorkspace& ws) {
    forward_into(params, arch, input, ws);
    const auto& logits = ws.act.back();
    double loss_value = loss(logits, label);

    // delta = softmax(logits) - onehot(label)
    auto p = softmax(logits);
    const size_t L = arch.num_layers();
    for (size_t c = 0; c < p.size(); ++c) ws.delta[c] = p[c];
    ws.delta[static_cast<size_t>(label)] -= 1.0;

    for (size_t l = L; l-- > 0;) {
        const int in = arch.layer_sizes[l];
        const int out_n = arch.layer_sizes[l + 1];
        const double* w = params.data() + arch.weight_offset(l);
        const double* x = ws.act[l].data();
        double* gw = out.data() + arch.weight_offset(l);
        double* gb = out.data() + arch.bias_offset(l);
        for (int o = 0; o < out_n; ++o) {
            const double d = scale * ws.delta[o];
            double* grow = gw + static_cast<size_t>(o) * in;
            for (int i = 0; i < in; ++i) grow[i] += d * x[i];
            gb[o] += d;
        }
        if (l > 0) {
            // propagate through weights then the activation of layer l
            for (int i = 0; i < in; ++i) {
                double s = 0.0;
                for (int o = 0; o < out_n; ++o)
                    s += w[static_cast<size_t>(o) * in + i] * ws.delta[o];
                ws.delta_prev[i] = s * activate_deriv_from_value(arch.activation, x[i]);
            }
            std::swap(ws.delta, ws.delta_prev);
        }
    }
    return loss_value;
}

inline void check_gradient_finite(const ParameterVector& g, const MLPArchitecture& arch) {
    for (size_t l = 0; l < arch.num_layers(); ++l) {
        const size_t lo = arch.weight_offset(l);
        const size_t end = arch.bias_offset(l) + arch.layer_sizes[l + 1];
        for (size_t k = lo; k < end; ++k)
            if (!std::isfinite(g[k]))
                throw NumericError("non-finite gradient in layer " + std::to_string(l));
    }
}

/// Analytic gradient of [cross-entropy + (weight_decay/2)*||params||^2].
inline ParameterVector per_example_gradient(const ParameterVector& params,
                                            const MLPArchitecture& arch,
                                            std::span<const double> input, int label,
                                            double weight_decay) {
    arch.validate();
    check_params(params, arch);
    check_input(input, arch);
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    ParameterVector g(params.size(), 0.0);
    MLPWorkspace ws;
    add_loss_gradient(params, arch, input, label, 1.0, g, ws);
    if (weight_decay != 0.0)
        for (size_t k = 0; k < g.size(); ++k) g[k] += weight_decay * params[k];
    check_gradient_finite(g, arch);
    return g;
}

} // namespace ilab
