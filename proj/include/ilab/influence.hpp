#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ilab/dataset.hpp"
#include "ilab/errors.hpp"
#include "ilab/hessian.hpp"
#include "ilab/mlp.hpp"
#include "ilab/parallel.hpp"
#include "ilab/trainer.hpp"

namespace ilab {

enum class Method {
    loo,
    infl_fn,
    tracein_ideal,
    tracein_cp,
    rps,
    grad_dot,
    grad_cos,
};

inline const char* to_string(Method m) {
    switch (m) {
        case Method::loo: return "loo";
        case Method::infl_fn: return "infl_fn";
        case Method::tracein_ideal: return "tracein_ideal";
        case Method::tracein_cp: return "tracein_cp";
        case Method::rps: return "rps";
        case Method::grad_dot: return "grad_dot";
        default: return "grad_cos";
    }
}

inline Method method_from_string(const std::string& s) {
    for (Method m : {Method::loo, Method::infl_fn, Method::tracein_ideal, Method::tracein_cp,
                     Method::rps, Method::grad_dot, Method::grad_cos})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown influence method '" + s + "'");
}

/// Dense test x train score matrix for one method and one model.
///
/// Sign convention, shared by every method: positive = proponent (the
/// training example reduces the test loss; removing it would raise it).
struct InfluenceMatrix {
    Method method = Method::grad_dot;
    size_t n_test = 0;
    size_t n_train = 0;
    std::vector<double> scores; // row-major, n_test * n_train
    std::vector<uint32_t> train_ids;
    std::vector<uint32_t> test_ids;
    uint64_t model_fingerprint = 0;

    InfluenceMatrix() = default;
    InfluenceMatrix(Method m, const Dataset& train, const Dataset& test, uint64_t fingerprint)
        : method(m), n_test(test.size()), n_train(train.size()),
          scores(n_test * n_train, 0.0), model_fingerprint(fingerprint) {
        train_ids.reserve(n_train);
        for (const Example& ex : train.examples) train_ids.push_back(ex.id);
        test_ids.reserve(n_test);
        for (const Example& ex : test.examples) test_ids.push_back(ex.id);
    }

    double& at(size_t test_row, size_t train_col) { return scores[test_row * n_train + train_col]; }
    double at(size_t test_row, size_t train_col) const { return scores[test_row * n_train + train_col]; }
    std::span<const double> row(size_t test_row) const {
        return {scores.data() + test_row * n_train, n_train};
    }

    void check_finite() const {
        for (double v : scores)
            if (!std::isfinite(v)) throw NumericError(std::string(to_string(method)) +
                                                      ": non-finite influence score");
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
    const double ab = dot(a, b);
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0; // zero-gradient convention
    double c = ab / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

namespace detail {

/// Per-example loss gradients (no weight decay: influence methods score the
/// plain loss; the training objective's decay term belongs to the optimizer
/// and to the Hessian, not to the example being scored).
/// Row-major n x p block.
inline std::vector<double> gradient_block(const ParameterVector& params,
                                          const MLPArchitecture& arch,
                                          const Dataset& ds) {
    const size_t p = params.size();
    std::vector<double> block(ds.size() * p, 0.0);
    MLPWorkspace ws;
    ParameterVector g(p);
    for (size_t i = 0; i < ds.size(); ++i) {
        std::fill(g.begin(), g.end(), 0.0);
        const Example& ex = ds.examples[i];
        add_loss_gradient(params, arch, ex.pixels, ex.label, 1.0, g, ws);
        std::copy(g.begin(), g.end(), block.begin() + i * p);
    }
    return block;
}

} // namespace detail

using ProgressFn = std::function<void(size_t done, size_t total)>;

/// Leave-one-out: one full training plus one retraining per training
/// example. score[j][i] = L_without_i(test_j) - L_full(test_j).
inline InfluenceMatrix loo(const TrainConfig& config, const Dataset& train_set,
                           const Dataset& test_set, int jobs = 1,
                           const ProgressFn& progress = {}) {
    config.validate();
    TrainedModel full = train(config, train_set, test_set);

    InfluenceMatrix m(Method::loo, train_set, test_set, full.fingerprint);
    std::vector<double> base_loss(test_set.size());
    {
        MLPWorkspace ws;
        for (size_t j = 0; j < test_set.size(); ++j) {
            forward_into(full.final_params, config.arch, test_set.examples[j].pixels, ws);
            base_loss[j] = loss(ws.act.back(), test_set.examples[j].label);
        }
    }

    std::atomic<size_t> done{0};
    parallel_for(train_set.size(), jobs, [&](size_t i) {
        TrainConfig c = config;
        c.record_step_trace = false; // retrains need only final parameters
        TrainedModel without;
        try {
            without = loo_retrain(c, train_set, static_cast<uint32_t>(i), test_set);
        } catch (const NumericError& e) {
            throw NumericError("loo: retrain without id " +
                               std::to_string(train_set.examples[i].id) + " diverged: " + e.what());
        }
        MLPWorkspace ws;
        for (size_t j = 0; j < test_set.size(); ++j) {
            forward_into(without.final_params, config.arch, test_set.examples[j].pixels, ws);
            m.at(j, i) = loss(ws.act.back(), test_set.examples[j].label) - base_loss[j];
        }
        if (progress) progress(done.fetch_add(1) + 1, train_set.size());
    });
    m.check_finite();
    return m;
}

/// Influence functions with an exact damped solve:
/// score[j][i] = grad_test_j^T (H + damping I)^-1 grad_train_i,
/// H assembled from the mean training loss (weight decay included).
inline InfluenceMatrix influence_function(const TrainedModel& model, const Dataset& train_set,
                                          const Dataset& test_set, double damping,
                                          size_t hessian_cap = kDefaultHessianCap) {
    if (damping <= 0.0) throw ConfigError("influence_function: damping must be positive");
    const MLPArchitecture& arch = model.config.arch;
    DenseMatrix h = assemble_hessian(model.final_params, arch, train_set.examples,
                                     model.config.weight_decay, hessian_cap);
    for (size_t k = 0; k < h.n; ++k) h.at(k, k) += damping;
    try {
        cholesky_factor(h);
    } catch (const NumericError&) {
        throw NumericError("influence_function: damped Hessian factorization failed; "
                           "increase the damping factor");
    }

    const size_t p = model.final_params.size();
    auto train_grads = detail::gradient_block(model.final_params, arch, train_set);
    // (H + damping I)^-1 g_train for every column
    std::vector<double> solved(train_set.size() * p);
    for (size_t i = 0; i < train_set.size(); ++i) {
        std::vector<double> b(train_grads.begin() + i * p, train_grads.begin() + (i + 1) * p);
        auto x = cholesky_solve(h, std::move(b));
        std::copy(x.begin(), x.end(), solved.begin() + i * p);
    }
    auto test_grads = detail::gradient_block(model.final_params, arch, test_set);

    InfluenceMatrix m(Method::infl_fn, train_set, test_set, model.fingerprint);
    for (size_t j = 0; j < test_set.size(); ++j)
        for (size_t i = 0; i < train_set.size(); ++i)
            m.at(j, i) = dot({test_grads.data() + j * p, p}, {solved.data() + i * p, p});
    m.check_finite();
    return m;
}

/// Per-step attribution from a batch-1 trace:
/// score[j][i] = sum over steps taken on example i of
///              [L(test_j | W_t) - L(test_j | W_t+1)].
/// Rows telescope: summing a row gives L(test_j | W_init) - L(test_j | W_final).
inline InfluenceMatrix tracein_ideal(const TrainConfig& config, const StepTrace& trace,
                                     const Dataset& train_set, const Dataset& test_set,
                                     uint64_t fingerprint) {
    if (trace.steps.empty())
        throw ConfigError("tracein_ideal: empty step trace "
                          "(retrain with batch_size=1 and record_step_trace)");
    InfluenceMatrix m(Method::tracein_ideal, train_set, test_set, fingerprint);

    std::vector<double> prev_loss(test_set.size());
    MLPWorkspace ws;
    for (size_t j = 0; j < test_set.size(); ++j) {
        forward_into(trace.initial_params, config.arch, test_set.examples[j].pixels, ws);
        prev_loss[j] = loss(ws.act.back(), test_set.examples[j].label);
    }
    for (const StepRecord& rec : trace.steps) {
        if (rec.example_id >= train_set.size())
            throw DataError("tracein_ideal: trace example id " + std::to_string(rec.example_id) +
                            " not in training set");
        for (size_t j = 0; j < test_set.size(); ++j) {
            forward_into(rec.params_after, config.arch, test_set.examples[j].pixels, ws);
            const double after = loss(ws.act.back(), test_set.examples[j].label);
            m.at(j, rec.example_id) += prev_loss[j] - after;
            prev_loss[j] = after;
        }
    }
    m.check_finite();
    return m;
}

inline InfluenceMatrix tracein_ideal(const TrainedModel& model, const Dataset& train_set,
                                     const Dataset& test_set) {
    if (!model.step_trace)
        throw ConfigError("tracein_ideal: model has no step trace "
                          "(retrain with batch_size=1 and record_step_trace)");
    return tracein_ideal(model.config, *model.step_trace, train_set, test_set, model.fingerprint);
}

/// Checkpoint TraceIn: score[j][i] = sum_k eta_k * g_train_i(W_k) . g_test_j(W_k).
inline InfluenceMatrix tracein_cp(const std::vector<Checkpoint>& checkpoints,
                                  const MLPArchitecture& arch, const Dataset& train_set,
                                  const Dataset& test_set, uint64_t fingerprint) {
    if (checkpoints.empty()) throw ConfigError("tracein_cp: no checkpoints");
    for (const Checkpoint& cp : checkpoints)
        if (cp.params.size() != arch.param_count())
            throw ConfigError("tracein_cp: checkpoint parameter count does not match architecture");

    InfluenceMatrix m(Method::tracein_cp, train_set, test_set, fingerprint);
    const size_t p = arch.param_count();
    for (const Checkpoint& cp : checkpoints) {
        auto train_grads = detail::gradient_block(cp.params, arch, train_set);
        auto test_grads = detail::gradient_block(cp.params, arch, test_set);
        for (size_t j = 0; j < test_set.size(); ++j)
            for (size_t i = 0; i < train_set.size(); ++i)
                m.at(j, i) += cp.learning_rate * dot({test_grads.data() + j * p, p},
                                                     {train_grads.data() + i * p, p});
    }
    m.check_finite();
    return m;
}

inline InfluenceMatrix tracein_cp(const TrainedModel& model, const Dataset& train_set,
                                  const Dataset& test_set) {
    return tracein_cp(model.checkpoints, model.config.arch, train_set, test_set,
                      model.fingerprint);
}

/// Gradient dot products at the final parameters.
inline InfluenceMatrix grad_dot(const TrainedModel& model, const Dataset& train_set,
                                const Dataset& test_set) {
    const size_t p = model.final_params.size();
    auto train_grads = detail::gradient_block(model.final_params, model.config.arch, train_set);
    auto test_grads = detail::gradient_block(model.final_params, model.config.arch, test_set);
    InfluenceMatrix m(Method::grad_dot, train_set, test_set, model.fingerprint);
    for (size_t j = 0; j < test_set.size(); ++j)
        for (size_t i = 0; i < train_set.size(); ++i)
            m.at(j, i) = dot({test_grads.data() + j * p, p}, {train_grads.data() + i * p, p});
    m.check_finite();
    return m;
}

/// Cosine similarity of the same gradients; zero-norm gradients score 0.
inline InfluenceMatrix grad_cos(const TrainedModel& model, const Dataset& train_set,
                                const Dataset& test_set) {
    const size_t p = model.final_params.size();
    auto train_grads = detail::gradient_block(model.final_params, model.config.arch, train_set);
    auto test_grads = detail::gradient_block(model.final_params, model.config.arch, test_set);
    InfluenceMatrix m(Method::grad_cos, train_set, test_set, model.fingerprint);
    for (size_t j = 0; j < test_set.size(); ++j)
        for (size_t i = 0; i < train_set.size(); ++i)
            m.at(j, i) = cosine({test_grads.data() + j * p, p}, {train_grads.data() + i * p, p});
    m.check_finite();
    return m;
}

// ---------------------------------------------------------------------------
// Representer point selection
// ---------------------------------------------------------------------------

/// Result of refitting the output layer on frozen last-hidden features with
/// an L2 penalty lambda * ||W||^2 (no bias: the representer identity
/// Phi(x) = sum_i alpha_i f_i^T f(x) then holds exactly at stationarity).
struct RpsRefit {
    std::vector<double> weights;      // classes x features, row-major
    std::vector<double> alphas;       // train x classes: -1/(2 lambda n) dL/dPhi
    std::vector<double> train_feats;  // train x features
    size_t n_classes = 0;
    size_t n_features = 0;
    double final_grad_norm = 0.0;
};

namespace detail {

/// Newton refit of a bias-free linear softmax head on fixed features.
/// Objective: (1/n) sum CE + lambda ||W||^2. Deterministic.
inline RpsRefit fit_output_layer(const std::vector<double>& feats, const std::vector<int>& labels,
                                 size_t n, size_t d, size_t c, double lambda,
                                 double tol = 1e-9, int max_iter = 200) {
    RpsRefit fit;
    fit.n_classes = c;
    fit.n_features = d;
    fit.train_feats = feats;
    std::vector<double>& w = fit.weights;
    w.assign(c * d, 0.0);
    const size_t p = c * d;

    std::vector<double> grad(p), probs(n * c), logits(c);
    for (int iter = 0; iter < max_iter; ++iter) {
        // gradient of mean CE + 2 lambda W
        std::fill(grad.begin(), grad.end(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            const double* f = feats.data() + i * d;
            for (size_t k = 0; k < c; ++k)
                logits[k] = dot({w.data() + k * d, d}, {f, d});
            auto pr = softmax(logits);
            std::copy(pr.begin(), pr.end(), probs.begin() + i * c);
            for (size_t k = 0; k < c; ++k) {
                const double delta = (pr[k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0)) / n;
                double* grow = grad.data() + k * d;
                for (size_t q = 0; q < d; ++q) grow[q] += delta * f[q];
            }
        }
        for (size_t k = 0; k < p; ++k) grad[k] += 2.0 * lambda * w[k];
        fit.final_grad_norm = l2_norm(grad);
        if (fit.final_grad_norm < tol) break;

        // Newton step on the exact Hessian (p x p, p = classes * features)
        DenseMatrix hess(p);
        for (size_t i = 0; i < n; ++i) {
            const double* f = feats.data() + i * d;
            const double* pr = probs.data() + i * c;
            for (size_t k1 = 0; k1 < c; ++k1)
                for (size_t k2 = 0; k2 < c; ++k2) {
                    const double s = (pr[k1] * ((k1 == k2 ? 1.0 : 0.0) - pr[k2])) / n;
                    if (s == 0.0) continue;
                    for (size_t q1 = 0; q1 < d; ++q1) {
                        double* row = hess.a.data() + (k1 * d + q1) * p + k2 * d;
                        const double fq1 = s * f[q1];
                        for (size_t q2 = 0; q2 < d; ++q2) row[q2] += fq1 * f[q2];
                    }
                }
        }
        for (size_t k = 0; k < p; ++k) hess.at(k, k) += 2.0 * lambda;
        cholesky_factor(hess);
        auto step = cholesky_solve(hess, grad);
        for (size_t k = 0; k < p; ++k) w[k] -= step[k];
    }

    // alpha_i(k) = -1/(2 lambda n) * dL_i/dPhi_k at the refit solution
    fit.alphas.assign(n * c, 0.0);
    const double coeff = -1.0 / (2.0 * lambda * static_cast<double>(n));
    for (size_t i = 0; i < n; ++i) {
        const double* f = feats.data() + i * d;
        for (size_t k = 0; k < c; ++k)
            logits[k] = dot({w.data() + k * d, d}, {f, d});
        auto pr = softmax(logits);
        for (size_t k = 0; k < c; ++k)
            fit.alphas[i * c + k] =
                coeff * (pr[k] - (static_cast<int>(k) == labels[i] ? 1.0 : 0.0));
    }
    return fit;
}

inline std::vector<double> feature_block(const ParameterVector& params,
                                         const MLPArchitecture& arch, const Dataset& ds) {
    const size_t d = static_cast<size_t>(arch.last_hidden_size());
    std::vector<double> block(ds.size() * d);
    MLPWorkspace ws;
    for (size_t i = 0; i < ds.size(); ++i) {
        forward_into(params, arch, ds.examples[i].pixels, ws);
        const auto& f = ws.act[ws.act.size() - 2];
        std::copy(f.begin(), f.end(), block.begin() + i * d);
    }
    return block;
}

} // namespace detail

/// score[j][i] = alpha_i(c_j) * f(train_i)^T f(test_j), with c_j the class
/// the refit head predicts for test_j and
/// alpha_i = -1/(2 lambda n) dL/dPhi at train_i.
inline InfluenceMatrix rps(const TrainedModel& model, const Dataset& train_set,
                           const Dataset& test_set, double lambda,
                           RpsRefit* refit_out = nullptr) {
    if (lambda <= 0.0)
        throw ConfigError("rps: lambda must be positive (the formula divides by lambda)");
    const MLPArchitecture& arch = model.config.arch;
    if (arch.num_layers() < 2)
        throw ConfigError("rps: architecture has no hidden layer");
    const size_t d = static_cast<size_t>(arch.last_hidden_size());
    const size_t c = static_cast<size_t>(arch.output_size());
    const size_t n = train_set.size();

    auto train_feats = detail::feature_block(model.final_params, arch, train_set);
    std::vector<int> labels(n);
    for (size_t i = 0; i < n; ++i) labels[i] = train_set.examples[i].label;
    RpsRefit fit = detail::fit_output_layer(train_feats, labels, n, d, c, lambda, 1e-9);
    if (fit.final_grad_norm >= 1e-7)
        throw NumericError("rps: output-layer refit did not reach gradient norm < 1e-7");

    auto test_feats = detail::feature_block(model.final_params, arch, test_set);
    InfluenceMatrix m(Method::rps, train_set, test_set, model.fingerprint);
    std::vector<double> logits(c);
    for (size_t j = 0; j < test_set.size(); ++j) {
        const double* fj = test_feats.data() + j * d;
        for (size_t k = 0; k < c; ++k)
            logits[k] = dot({fit.weights.data() + k * d, d}, {fj, d});
        size_t pred = 0;
        for (size_t k = 1; k < c; ++k)
            if (logits[k] > logits[pred]) pred = k;
        for (size_t i = 0; i < n; ++i)
            m.at(j, i) = fit.alphas[i * c + pred] *
                         dot({train_feats.data() + i * d, d}, {fj, d});
    }
    m.check_finite();
    if (refit_out) *refit_out = std::move(fit);
    return m;
}

} // namespace ilab
