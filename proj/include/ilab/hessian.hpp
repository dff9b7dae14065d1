#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "ilab/dataset.hpp"
#include "ilab/errors.hpp"
#include "ilab/mlp.hpp"

namespace ilab {

inline double l2_norm(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Mean of per-example loss gradients over `examples`, plus weight_decay * params.
inline ParameterVector mean_gradient(const ParameterVector& params, const MLPArchitecture& arch,
                                     const std::vector<Example>& examples, double weight_decay) {
    if (examples.empty()) throw ConfigError("mean_gradient: empty training set");
    ParameterVector g(params.size(), 0.0);
    MLPWorkspace ws;
    const double scale = 1.0 / static_cast<double>(examples.size());
    for (const Example& ex : examples)
        add_loss_gradient(params, arch, ex.pixels, ex.label, scale, g, ws);
    if (weight_decay != 0.0)
        for (size_t k = 0; k < g.size(); ++k) g[k] += weight_decay * params[k];
    check_gradient_finite(g, arch);
    return g;
}

/// Central finite-difference Hessian-vector product of any gradient field:
/// (g(x + h v) - g(x - h v)) / (2 h), h = 1e-4 / max(1, ||v||).
template <typename GradFn>
ParameterVector fd_hvp(GradFn&& grad, const ParameterVector& x, const ParameterVector& v) {
    const double h = 1e-4 / std::max(1.0, l2_norm(v));
    ParameterVector xp = x, xm = x;
    for (size_t k = 0; k < x.size(); ++k) {
        xp[k] += h * v[k];
        xm[k] -= h * v[k];
    }
    ParameterVector gp = grad(xp);
    ParameterVector gm = grad(xm);
    ParameterVector out(x.size());
    const double inv = 1.0 / (2.0 * h);
    for (size_t k = 0; k < x.size(); ++k) {
        out[k] = (gp[k] - gm[k]) * inv;
        if (!std::isfinite(out[k])) throw NumericError("non-finite Hessian-vector product");
    }
    return out;
}

/// H v for the mean training loss (weight decay included in the objective).
inline ParameterVector hvp(const ParameterVector& params, const MLPArchitecture& arch,
                           const std::vector<Example>& train, const ParameterVector& v,
                           double weight_decay) {
    check_params(params, arch);
    if (v.size() != params.size())
        throw ConfigError("hvp: direction length does not match parameter count");
    return fd_hvp([&](const ParameterVector& theta) {
        return mean_gradient(theta, arch, train, weight_decay);
    }, params, v);
}

constexpr size_t kDefaultHessianCap = 5000;

/// Square matrix in row-major storage.
struct DenseMatrix {
    size_t n = 0;
    std::vector<double> a; // n*n

    DenseMatrix() = default;
    explicit DenseMatrix(size_t dim) : n(dim), a(dim * dim, 0.0) {}
    double& at(size_t r, size_t c) { return a[r * n + c]; }
    double at(size_t r, size_t c) const { return a[r * n + c]; }
};

/// Full p x p Hessian of the mean training loss, column by column via hvp,
/// then symmetrized as (H + H^T)/2.
inline DenseMatrix assemble_hessian(const ParameterVector& params, const MLPArchitecture& arch,
                                    const std::vector<Example>& train, double weight_decay,
                                    size_t cap = kDefaultHessianCap) {
    check_params(params, arch);
    if (train.empty()) throw ConfigError("assemble_hessian: empty training set");
    const size_t p = params.size();
    if (p > cap)
        throw ConfigError("assemble_hessian: parameter count " + std::to_string(p) +
                          " exceeds cap " + std::to_string(cap) +
                          "; use a smaller architecture or raise the cap");
    DenseMatrix h(p);
    ParameterVector e(p, 0.0);
    for (size_t c = 0; c < p; ++c) {
        e[c] = 1.0;
        ParameterVector col = hvp(params, arch, train, e, weight_decay);
        e[c] = 0.0;
        for (size_t r = 0; r < p; ++r) h.at(r, c) = col[r];
    }
    for (size_t r = 0; r < p; ++r)
        for (size_t c = r + 1; c < p; ++c) {
            const double s = 0.5 * (h.at(r, c) + h.at(c, r));
            h.at(r, c) = s;
            h.at(c, r) = s;
        }
    return h;
}

/// In-place lower Cholesky; throws NumericError on a non-positive pivot.
inline void cholesky_factor(DenseMatrix& m) {
    const size_t n = m.n;
    double* a = m.a.data();
    for (size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0.0) || !std::isfinite(d))
            throw NumericError("Cholesky factorization failed (matrix not positive definite)");
        const double lj = std::sqrt(d);
        a[j * n + j] = lj;
        const double inv = 1.0 / lj;
        for (size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            const double* ri = a + i * n;
            const double* rj = a + j * n;
            for (size_t k = 0; k < j; ++k) s -= ri[k] * rj[k];
            a[i * n + j] = s * inv;
        }
        for (size_t k = j + 1; k < n; ++k) a[j * n + k] = 0.0;
    }
}

/// Solves L L^T x = b given the factor from cholesky_factor.
inline std::vector<double> cholesky_solve(const DenseMatrix& l, std::vector<double> b) {
    const size_t n = l.n;
    if (b.size() != n) throw ConfigError("cholesky_solve: dimension mismatch");
    const double* a = l.a.data();
    for (size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
        b[i] = s / a[i * n + i];
    }
    for (size_t i = n; i-- > 0;) {
        double s = b[i];
        for (size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
        b[i] = s / a[i * n + i];
    }
    return b;
}

} // namespace ilab
