#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace pvi {

// All reductions below run sequentially in index order, so results are
// bitwise reproducible for identical inputs.

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) noexcept { return std::sqrt(dot(a, a)); }

inline double norm_inf(std::span<const double> a) noexcept {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

struct CgResult {
    int iterations = 0;
    double relative_residual = 0.0;
    bool converged = false;
};

/**
 * Conjugate gradients for a symmetric positive definite operator given as
 * a callable `op(x, y)` computing y = A x. `x` holds the initial guess on
 * entry and the solution on exit.
 */
template <class Op>
CgResult conjugate_gradient(Op&& op, std::span<const double> b, std::span<double> x, double rel_tol,
                            int max_iter) {
    const std::size_t n = b.size();
    std::vector<double> r(n), p(n), ap(n);
    op(std::span<const double>(x.data(), n), std::span<double>(ap));
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
    const double bnorm = norm2(b);
    CgResult res;
    if (bnorm == 0.0) {
        for (auto& v : x) v = 0.0;
        res.converged = true;
        return res;
    }
    double rr = dot(r, r);
    res.relative_residual = std::sqrt(rr) / bnorm;
    if (res.relative_residual <= rel_tol) {
        res.converged = true;
        return res;
    }
    p = r;
    for (int it = 1; it <= max_iter; ++it) {
        op(std::span<const double>(p), std::span<double>(ap));
        const double pap = dot(p, ap);
        if (!(pap > 0.0)) break;
        const double alpha = rr / pap;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        const double rr_new = dot(r, r);
        res.iterations = it;
        res.relative_residual = std::sqrt(rr_new) / bnorm;
        if (res.relative_residual <= rel_tol) {
            res.converged = true;
            return res;
        }
        const double beta = rr_new / rr;
        rr = rr_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    }
    return res;
}

/// Rayleigh-quotient power iteration for the largest eigenvalue of a
/// symmetric positive semidefinite operator. Deterministic start vector.
template <class Op>
double power_iteration(Op&& op, std::size_t n, int iterations = 30) {
    std::vector<double> v(n), w(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    double lambda = 0.0;
    for (int it = 0; it < iterations; ++it) {
        const double nv = norm2(v);
        if (nv == 0.0) return 0.0;
        for (auto& e : v) e /= nv;
        op(std::span<const double>(v), std::span<double>(w));
        lambda = dot(v, w);
        v.swap(w);
    }
    return lambda;
}

} // namespace pvi
