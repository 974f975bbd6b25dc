#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pvi/errors.hpp"
#include "pvi/grid.hpp"

namespace pvi {

/// Coefficient a(x, t, v) where v holds the frozen state's components at x.
using CoefficientFn = std::function<double(const Point&, double, std::span<const double>)>;

enum class OperatorKind { Application1, Application2 };

struct OperatorBounds {
    double a_star = 1.0;  ///< lower bound of every diffusion coefficient
    double a_upper = 1.0; ///< upper bound of every diffusion coefficient
    double b_star = 0.0;  ///< reaction satisfies -b_star <= b
    double b_upper = 0.0; ///< reaction satisfies b <= b_upper
};

/**
 * Quasi-linear operator A(t, v, u):
 *   <A(t,v,u), xi> = sum_i int a_i(x,t,v) grad u_i . grad xi_i + int b(x,t,v) u . xi
 * Application1 has two components and no reaction; Application2 has one
 * component and a reaction term.
 */
struct SemimonotoneOp {
    OperatorKind kind = OperatorKind::Application1;
    std::vector<CoefficientFn> diffusion;
    std::optional<CoefficientFn> reaction;
    OperatorBounds bounds;

    int components() const noexcept { return static_cast<int>(diffusion.size()); }

    static SemimonotoneOp application1(CoefficientFn a1, CoefficientFn a2, double a_star, double a_upper) {
        SemimonotoneOp op;
        op.kind = OperatorKind::Application1;
        op.diffusion = {std::move(a1), std::move(a2)};
        op.bounds = {a_star, a_upper, 0.0, 0.0};
        op.validate();
        return op;
    }

    static SemimonotoneOp application2(CoefficientFn a, CoefficientFn b, OperatorBounds bounds) {
        SemimonotoneOp op;
        op.kind = OperatorKind::Application2;
        op.diffusion = {std::move(a)};
        op.reaction = std::move(b);
        op.bounds = bounds;
        op.validate();
        return op;
    }

    /// Scalar heat operator with constant diffusion; useful as a reference.
    static SemimonotoneOp constant_diffusion(int components, double a) {
        SemimonotoneOp op;
        op.kind = components == 2 ? OperatorKind::Application1 : OperatorKind::Application2;
        for (int c = 0; c < components; ++c)
            op.diffusion.push_back([a](const Point&, double, std::span<const double>) { return a; });
        op.bounds = {a, a, 0.0, 0.0};
        op.validate();
        return op;
    }

    void validate() const {
        if (diffusion.empty()) throw DomainError("operator needs at least one diffusion coefficient");
        if (!(bounds.a_star > 0.0) || bounds.a_upper < bounds.a_star)
            throw DomainError("operator bounds need 0 < a_star <= a_upper");
        if (bounds.b_star < 0.0 || bounds.b_upper < 0.0) throw DomainError("reaction bounds must be nonnegative");
        if (kind == OperatorKind::Application1 && (diffusion.size() != 2 || reaction))
            throw DomainError("Application1 operator has two diffusion coefficients and no reaction");
        if (kind == OperatorKind::Application2 && diffusion.size() != 1)
            throw DomainError("Application2 operator has one diffusion coefficient");
    }
};

/// A(t, v, .) with coefficients sampled at a fixed (t, v). Linear and
/// symmetric in the mass inner product.
class FrozenOperator {
public:
    FrozenOperator(Field diffusion, std::optional<Field> reaction)
        : diffusion_(std::move(diffusion)), reaction_(std::move(reaction)) {}

    const Grid& grid() const noexcept { return diffusion_.grid(); }
    int components() const noexcept { return diffusion_.components(); }
    const Field& diffusion() const noexcept { return diffusion_; }
    const std::optional<Field>& reaction() const noexcept { return reaction_; }

    Field apply(const Field& u) const {
        if (!(u.grid() == grid()) || u.components() != components())
            throw DimensionError("FrozenOperator::apply: field shape mismatch");
        Field out = stiffness_apply(diffusion_, u);
        if (reaction_)
            for (int c = 0; c < u.components(); ++c)
                for (std::size_t k = 0; k < u.nodes(); ++k) out(c, k) += (*reaction_)(0, k) * u(c, k);
        return out;
    }

    /// Raw nodal action on one component, for matrix-free solvers.
    void apply_component(int c, std::span<const double> u, std::span<double> out) const {
        detail::stiffness_component(grid(), diffusion_.component(c), u, out);
        if (reaction_)
            for (std::size_t k = 0; k < u.size(); ++k) out[k] += (*reaction_)(0, k) * u[k];
    }

    /// Gershgorin bound on the largest eigenvalue of the nodal matrix.
    double gershgorin_bound() const {
        const Grid& g = grid();
        double amax = 0.0;
        for (double v : diffusion_.values()) amax = std::max(amax, v);
        double s = 0.0;
        for (int a = 0; a < g.dim(); ++a) s += 4.0 * amax / (g.h(a) * g.h(a));
        double bmax = 0.0;
        if (reaction_)
            for (double v : reaction_->values()) bmax = std::max(bmax, std::abs(v));
        return s + bmax;
    }

    double reaction_min() const {
        if (!reaction_) return 0.0;
        double m = 0.0;
        for (double v : reaction_->values()) m = std::min(m, v);
        return m;
    }

private:
    Field diffusion_;
    std::optional<Field> reaction_;
};

/// Samples the coefficients at (x, t, v(x)) and checks them against the
/// declared bounds.
inline FrozenOperator freeze(const SemimonotoneOp& op, const Grid& g, double t, const Field& v) {
    if (!(v.grid() == g) || v.components() != op.components())
        throw DimensionError("freeze: state does not match operator components or grid");
    const auto& b = op.bounds;
    constexpr double slack = 1e-12;
    Field diff(g, op.components());
    std::optional<Field> react;
    if (op.reaction) react.emplace(g, 1);
    std::vector<double> vx(op.components());
    for (std::size_t k = 0; k < g.nodes(); ++k) {
        const Point p = g.node_point(k);
        for (int c = 0; c < op.components(); ++c) vx[c] = v(c, k);
        for (int c = 0; c < op.components(); ++c) {
            const double a = op.diffusion[c](p, t, vx);
            if (!(a >= b.a_star - slack && a <= b.a_upper + slack)) {
                std::ostringstream msg;
                msg << "freeze: diffusion a_" << (c + 1) << " = " << a << " outside [" << b.a_star << ", "
                    << b.a_upper << "] at node " << k << " (x=" << p.x << ", y=" << p.y << ")";
                throw CoefficientBoundsError(msg.str(), k);
            }
            diff(c, k) = a;
        }
        if (react) {
            const double r = (*op.reaction)(p, t, vx);
            if (!(r >= -b.b_star - slack && r <= b.b_upper + slack)) {
                std::ostringstream msg;
                msg << "freeze: reaction b = " << r << " outside [" << -b.b_star << ", " << b.b_upper << "] at node "
                    << k;
                throw CoefficientBoundsError(msg.str(), k);
            }
            (*react)(0, k) = r;
        }
    }
    return FrozenOperator(std::move(diff), std::move(react));
}

// ---------------------------------------------------------------------------
// Boundedness (a), coercivity (b) and monotonicity (c), probed at random.

/// Declared constants for |A u|_{V*} <= c1 |u|_V + c2 and <A u, u> >= c3 |u|_V^2 - c4.
struct ConditionConstants {
    double c1 = 0.0;
    double c2 = 0.0;
    double c3 = 0.0;
    double c4 = 0.0;
};

/**
 * Constants derived from the declared bounds and the discrete Poincare
 * constant C_P: the reaction enters as |(b u, xi)_H| <= max(b) C_P^2 |u|_V |xi|_V
 * and (b u, u)_H >= -b_star C_P^2 |u|_V^2, so
 *   c1 = a_upper + max(b_star, b_upper) C_P^2,  c3 = a_star - b_star C_P^2,
 * with c2 = c4 = 0 for this linear-in-u reaction.
 */
inline ConditionConstants declared_constants(const SemimonotoneOp& op, const Grid& g) {
    const double cp2 = std::pow(poincare_constant(g), 2);
    const auto& b = op.bounds;
    const double bmax = op.reaction ? std::max(b.b_star, b.b_upper) : 0.0;
    const double bneg = op.reaction ? b.b_star : 0.0;
    return {b.a_upper + bmax * cp2, 0.0, b.a_star - bneg * cp2, 0.0};
}

struct ConditionReport {
    ConditionConstants declared;
    double max_bound_ratio = 0.0;    ///< max (|A u|_{V*} - c2) / |u|_V
    double min_coercivity = 0.0;     ///< min (<A u,u> + c4) / |u|_V^2
    double min_monotone_gap = 0.0;   ///< min <A u1 - A u2, u1 - u2> / |u1-u2|_V^2
    bool bounded = true;
    bool coercive = true;
    bool monotone = true;
    int trials = 0;
    std::string witness;

    bool passed() const noexcept { return bounded && coercive && monotone; }
};

/**
 * Random probing of conditions (a)-(c). Each trial draws t in [0, t_final],
 * a state v with amplitude up to v_amplitude and test fields u, u2.
 */
inline ConditionReport check_conditions(const SemimonotoneOp& op, const Grid& g, int trials, std::mt19937_64& rng,
                                        double t_final = 1.0, double v_amplitude = 3.0) {
    if (trials < 1) throw DomainError("check_conditions: need at least one trial");
    ConditionReport rep;
    rep.declared = declared_constants(op, g);
    rep.trials = trials;
    rep.max_bound_ratio = 0.0;
    rep.min_coercivity = std::numeric_limits<double>::infinity();
    rep.min_monotone_gap = std::numeric_limits<double>::infinity();
    if (!(rep.declared.c3 > 0.0)) {
        rep.coercive = false;
        rep.witness = "declared coercivity constant c3 = a_star - b_star*C_P^2 is not positive";
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_real_distribution<double> sym(-1.0, 1.0);
    const int nc = op.components();
    auto random_field = [&](double amp) {
        Field f(g, nc);
        for (auto& x : f.values()) x = amp * sym(rng);
        return f;
    };
    for (int trial = 0; trial < trials; ++trial) {
        const double t = t_final * unit(rng);
        const Field v = random_field(v_amplitude * unit(rng));
        const FrozenOperator A = freeze(op, g, t, v);
        const Field u1 = random_field(1.0 + 9.0 * unit(rng));
        const Field u2 = random_field(1.0 + 9.0 * unit(rng));

        const double uv = norm_v(u1);
        const Field au = A.apply(u1);
        const double dual = dual_norm_wstar(au);
        const double ratio = (dual - rep.declared.c2) / uv;
        rep.max_bound_ratio = std::max(rep.max_bound_ratio, ratio);
        if (dual > rep.declared.c1 * uv + rep.declared.c2 + 1e-10 * (1.0 + dual) && rep.bounded) {
            rep.bounded = false;
            rep.witness = "condition (a) violated at trial " + std::to_string(trial) + ", t=" + std::to_string(t);
        }

        const double pair = mass_inner(au, u1);
        rep.min_coercivity = std::min(rep.min_coercivity, (pair + rep.declared.c4) / (uv * uv));
        if (pair < rep.declared.c3 * uv * uv - rep.declared.c4 - 1e-10 * (1.0 + std::abs(pair)) && rep.coercive) {
            rep.coercive = false;
            rep.witness = "condition (b) violated at trial " + std::to_string(trial) + ", t=" + std::to_string(t);
        }

        const Field w = u1 - u2;
        const double gap = mass_inner(A.apply(u1) - A.apply(u2), w);
        const double wv = norm_v(w);
        rep.min_monotone_gap = std::min(rep.min_monotone_gap, gap / (wv * wv));
        if (gap < -1e-12 * (1.0 + wv * wv) && rep.monotone) {
            rep.monotone = false;
            rep.witness = "condition (c) violated at trial " + std::to_string(trial) + ", t=" + std::to_string(t);
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Built-in coefficient shapes.

namespace coefficients {

inline double sq_norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return s;
}

inline CoefficientFn constant(double a) {
    return [a](const Point&, double, std::span<const double>) { return a; };
}

/// a0 + beta / (1 + |v|^2)
inline CoefficientFn rational(double a0, double beta) {
    return [a0, beta](const Point&, double, std::span<const double> v) { return a0 + beta / (1.0 + sq_norm(v)); };
}

/// a0 + slope * sum(v), clipped to [lo, hi]
inline CoefficientFn affine_clipped(double a0, double slope, double lo, double hi) {
    return [=](const Point&, double, std::span<const double> v) {
        double s = 0.0;
        for (double e : v) s += e;
        return std::clamp(a0 + slope * s, lo, hi);
    };
}

} // namespace coefficients
} // namespace pvi
