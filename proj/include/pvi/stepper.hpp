#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pvi/constraints.hpp"
#include "pvi/errors.hpp"
#include "pvi/grid.hpp"
#include "pvi/linalg.hpp"
#include "pvi/operators.hpp"

namespace pvi {

struct SolverConfig {
    double tol_inner = 1e-10;  ///< relative KKT residual of each per-step QP
    double tol_outer = 1e-8;   ///< fixed-point tolerance in discrete L2(0,T;H)
    int max_inner = 200000;
    int max_outer = 50;
    double relaxation = 1.0;   ///< Picard relaxation factor in (0, 1]

    void validate() const {
        if (!(tol_inner > 0.0) || !(tol_outer > 0.0)) throw DomainError("solver tolerances must be positive");
        if (max_inner < 1 || max_outer < 1) throw DomainError("solver iteration caps must be at least 1");
        if (!(relaxation > 0.0 && relaxation <= 1.0)) throw DomainError("relaxation must lie in (0, 1]");
    }
};

/// Source term f(t) as a nodal field.
using FieldFn = std::function<Field(double)>;

inline FieldFn zero_source(const Grid& g, int components) {
    return [g, components](double) { return Field(g, components); };
}

/// Samples per-component space-time functions into a FieldFn.
inline FieldFn sampled_source(const Grid& g, std::vector<SpaceTimeFn> fns) {
    return [g, fns = std::move(fns)](double t) {
        return Field::from_function(g, static_cast<int>(fns.size()),
                                    [&](int c, const Point& p) { return fns[c](p, t); });
    };
}

/// Solution of one implicit step together with what is needed to warm-start
/// the same step later.
struct StepResult {
    Field u;
    std::vector<double> dual; ///< cell multipliers (gradient bound only)
    int iterations = 0;
    double residual = 0.0;
};

/**
 * The time-discrete solution u^0..u^M with per-step residuals
 *   l^m = f^m - A^m u^m - (u^m - u^{m-1}) / tau,
 * which lie in minus the normal cone of K(t_m) at u^m.
 */
struct Trajectory {
    Grid grid;
    TimeGrid time;
    std::vector<Field> states;       ///< u^0 .. u^M
    std::vector<Field> residuals;    ///< l^1 .. l^M stored at index 1..M (index 0 is zero)
    std::vector<Field> source;       ///< f^1 .. f^M stored at index 1..M
    std::vector<Field> frozen_along; ///< v^1 .. v^M used to freeze the coefficients
    std::vector<std::vector<double>> duals;
    std::vector<int> inner_iterations;

    int steps() const noexcept { return time.steps(); }
    int components() const noexcept { return states.empty() ? 1 : states.front().components(); }
};

namespace detail {

inline double kkt_scale(const Field& c) { return std::max(1.0, norm_sup(c)); }

// Q u = u / tau + A u, component-wise.
inline Field qp_apply(const FrozenOperator& A, double tau, const Field& u) {
    Field out = A.apply(u);
    const auto uv = u.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] += uv[i] / tau;
    return out;
}

inline Field solve_shifted(const FrozenOperator& A, double shift, const Field& rhs, const Field& guess,
                           double rel_tol) {
    Field x = guess;
    const int cap = static_cast<int>(10 * rhs.nodes()) + 50;
    for (int c = 0; c < rhs.components(); ++c) {
        auto op = [&](std::span<const double> in, std::span<double> out) {
            A.apply_component(c, in, out);
            for (std::size_t k = 0; k < in.size(); ++k) out[k] += shift * in[k];
        };
        const auto res = conjugate_gradient(op, rhs.component(c), x.component(c), rel_tol, cap);
        if (!res.converged) throw SolverError("step: inner CG did not converge", res.relative_residual);
    }
    return x;
}

inline StepResult step_unconstrained(const Field& u_prev, const FrozenOperator& A, const Field& c, double tau,
                                     const Field& guess) {
    StepResult r;
    r.u = solve_shifted(A, 1.0 / tau, c, guess, 1e-14);
    r.residual = norm_sup(qp_apply(A, tau, r.u) - c) / kkt_scale(c);
    (void)u_prev;
    return r;
}

// Accelerated projected gradient (FISTA with gradient-based adaptive
// restart) for min 1/2 u.Qu - c.u over a pointwise set.
inline StepResult step_projected_gradient(const ConstraintSet& K, double t, const FrozenOperator& A, const Field& c,
                                          double tau, const SolverConfig& cfg, const Field& start) {
    const auto n = c.size();
    auto op = [&](std::span<const double> in, std::span<double> out) {
        Field f(c.grid(), c.components(), std::vector<double>(in.begin(), in.end()));
        Field q = qp_apply(A, tau, f);
        std::copy(q.values().begin(), q.values().end(), out.begin());
    };
    const double upper = 1.0 / tau + A.gershgorin_bound();
    const double lip = std::min(upper, 1.1 * power_iteration(op, n));
    const double scale = kkt_scale(c);

    auto grad = [&](const Field& u) { return qp_apply(A, tau, u) - c; };
    auto residual = [&](const Field& u, const Field& g) {
        Field trial = u - (1.0 / lip) * g;
        return lip * norm_sup(u - project(K, t, trial)) / scale;
    };

    StepResult r;
    Field x = project(K, t, start);
    {
        const double res0 = residual(x, grad(x));
        if (res0 <= cfg.tol_inner) {
            r.u = std::move(x);
            r.residual = res0;
            return r;
        }
    }
    Field y = x;
    double tk = 1.0;
    double last = 0.0;
    for (int it = 1; it <= cfg.max_inner; ++it) {
        const Field gy = grad(y);
        Field x_new = project(K, t, y - (1.0 / lip) * gy);
        // restart when the momentum direction opposes the gradient step
        double restart = 0.0;
        {
            const auto a = y.values();
            const auto b = x_new.values();
            const auto p = x.values();
            for (std::size_t i = 0; i < n; ++i) restart += (a[i] - b[i]) * (b[i] - p[i]);
        }
        double t_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        if (restart > 0.0) {
            tk = 1.0;
            t_new = 1.0;
        }
        const double beta = (tk - 1.0) / t_new;
        y = x_new + beta * (x_new - x);
        x = std::move(x_new);
        tk = t_new;
        if (it % 5 == 0 || it == cfg.max_inner) {
            last = residual(x, grad(x));
            r.iterations = it;
            if (last <= cfg.tol_inner) {
                r.u = std::move(x);
                r.residual = last;
                return r;
            }
        }
    }
    throw SolverError("step: projected gradient exceeded max_inner", last);
}

// KKT residual of (u, q) for min 1/2 u.Qu - c.u s.t. |(Du)_c| <= psi_c:
// stationarity Qu - c + D^T q = 0 and q in N_C(Du) <=> Du = P_C(Du + q).
inline double gradient_kkt_residual(const FrozenOperator& A, double tau, const Field& c, const Field& u,
                                    const std::vector<double>& q, const std::vector<double>& psi, double psi_scale) {
    const Grid& g = u.grid();
    const auto dtq = gradient_adjoint(g, q);
    Field stat = qp_apply(A, tau, u) - c;
    for (std::size_t k = 0; k < dtq.size(); ++k) stat(0, k) += dtq[k];
    const double r1 = norm_sup(stat) / kkt_scale(c);

    const auto du = forward_gradient(g, u.component(0));
    const int d = g.dim();
    double r2 = 0.0;
    for (std::size_t cell = 0; cell < g.cells(); ++cell) {
        double w[2] = {0.0, 0.0};
        double m = 0.0;
        for (int a = 0; a < d; ++a) {
            w[a] = du[cell * d + a] + q[cell * d + a];
            m += w[a] * w[a];
        }
        m = std::sqrt(m);
        const double s = m > psi[cell] ? psi[cell] / m : 1.0;
        for (int a = 0; a < d; ++a) r2 = std::max(r2, std::abs(du[cell * d + a] - s * w[a]));
    }
    return std::max(r1, r2 / psi_scale);
}

/**
 * ADMM for the gradient-bound QP, splitting z = Du. The u-update is an exact
 * CG solve with (Q + beta D^T D); the z-update is a per-cell projection onto
 * the ball |z| <= psi. beta is rebalanced from the primal and dual residuals.
 * The returned dual is the multiplier q = beta w.
 */
inline StepResult step_admm(const ConstraintSet& K, double t, const FrozenOperator& A, const Field& c, double tau,
                            const SolverConfig& cfg, const Field& start, const std::vector<double>* dual_start) {
    const Grid& g = c.grid();
    const int d = g.dim();
    const std::size_t nq = g.cells() * d;
    const auto psi = K.cell_values(t);
    double psi_scale = 1.0;
    for (double p : psi) psi_scale = std::max(psi_scale, p);

    StepResult r;
    Field u = pull_into(K, t, start);
    std::vector<double> q = dual_start && dual_start->size() == nq ? *dual_start : std::vector<double>(nq, 0.0);
    double last = gradient_kkt_residual(A, tau, c, u, q, psi, psi_scale);
    if (last <= cfg.tol_inner) {
        r.u = std::move(u);
        r.dual = std::move(q);
        r.residual = last;
        return r;
    }

    auto project_cells = [&](std::vector<double>& z) {
        for (std::size_t cell = 0; cell < g.cells(); ++cell) {
            double m = 0.0;
            for (int a = 0; a < d; ++a) m += z[cell * d + a] * z[cell * d + a];
            m = std::sqrt(m);
            if (m > psi[cell])
                for (int a = 0; a < d; ++a) z[cell * d + a] *= psi[cell] / m;
        }
    };

    const double mu = 1.0 / tau + A.reaction_min();
    const double dnorm2 = gradient_norm_sq_bound(g);
    double beta = std::sqrt(mu * (mu + A.gershgorin_bound())) / dnorm2;
    std::vector<double> z = forward_gradient(g, u.component(0));
    project_cells(z);
    std::vector<double> w(nq);
    for (std::size_t i = 0; i < nq; ++i) w[i] = q[i] / beta;

    const int cap = static_cast<int>(10 * g.nodes()) + 50;
    Field rhs(g, 1);
    for (int it = 1; it <= cfg.max_inner; ++it) {
        std::vector<double> zw(nq);
        for (std::size_t i = 0; i < nq; ++i) zw[i] = z[i] - w[i];
        const auto dt = gradient_adjoint(g, zw);
        for (std::size_t k = 0; k < g.nodes(); ++k) rhs(0, k) = c(0, k) + beta * dt[k];
        auto op = [&](std::span<const double> in, std::span<double> out) {
            A.apply_component(0, in, out);
            const auto dtd = gradient_adjoint(g, forward_gradient(g, in));
            for (std::size_t k = 0; k < in.size(); ++k) out[k] += in[k] / tau + beta * dtd[k];
        };
        conjugate_gradient(op, rhs.component(0), u.component(0), 1e-14, cap);

        const auto du = forward_gradient(g, u.component(0));
        std::vector<double> z_old = z;
        for (std::size_t i = 0; i < nq; ++i) z[i] = du[i] + w[i];
        project_cells(z);
        double rp = 0.0;
        for (std::size_t i = 0; i < nq; ++i) {
            w[i] += du[i] - z[i];
            rp = std::max(rp, std::abs(du[i] - z[i]));
        }
        std::vector<double> dz(nq);
        for (std::size_t i = 0; i < nq; ++i) dz[i] = z[i] - z_old[i];
        const double rd = beta * norm_inf(gradient_adjoint(g, dz));

        for (std::size_t i = 0; i < nq; ++i) q[i] = beta * w[i];
        last = gradient_kkt_residual(A, tau, c, u, q, psi, psi_scale);
        r.iterations = it;
        if (last <= cfg.tol_inner) {
            r.u = std::move(u);
            r.dual = std::move(q);
            r.residual = last;
            return r;
        }
        const double rp_rel = rp / psi_scale;
        const double rd_rel = rd / kkt_scale(c);
        if (rp_rel > 10.0 * rd_rel) {
            beta *= 2.0;
            for (auto& e : w) e *= 0.5;
        } else if (rd_rel > 10.0 * rp_rel) {
            beta *= 0.5;
            for (auto& e : w) e *= 2.0;
        }
    }
    throw SolverError("step: ADMM iteration exceeded max_inner", last);
}

} // namespace detail

/**
 * One implicit Euler step: the minimiser over K(t) of
 *   1/(2 tau) |u - u_prev|_H^2 + 1/2 <A u, u> - (f, u)_H,
 * i.e. the discrete elliptic variational inequality. `warm` optionally
 * supplies a starting point (and dual) from an earlier solve of the same step.
 */
inline StepResult step(const Field& u_prev, const ConstraintSet& K, double t, const FrozenOperator& A, const Field& f,
                       double tau, const SolverConfig& cfg, const StepResult* warm = nullptr) {
    if (!u_prev.finite()) throw DomainError("step: previous state is not finite");
    u_prev.require_same_shape(f, "step");
    if (!(A.grid() == u_prev.grid()) || A.components() != u_prev.components())
        throw DimensionError("step: operator does not match the state");
    if (!(tau > 0.0)) throw DomainError("step: tau must be positive");
    K.check_admissible(t);

    Field c = f;
    {
        auto cv = c.values();
        const auto pv = u_prev.values();
        for (std::size_t i = 0; i < cv.size(); ++i) cv[i] += pv[i] / tau;
    }
    const Field& start = warm ? warm->u : u_prev;
    StepResult r;
    switch (K.family()) {
    case Family::Unconstrained: r = detail::step_unconstrained(u_prev, A, c, tau, start); break;
    case Family::GradientBound:
        r = detail::step_admm(K, t, A, c, tau, cfg, start, warm ? &warm->dual : nullptr);
        break;
    default: r = detail::step_projected_gradient(K, t, A, c, tau, cfg, start); break;
    }
    if (!r.u.finite()) throw SolverError("step: solution is not finite", r.residual);
    return r;
}

namespace detail {

inline Field initial_state(const Field& u0, const ConstraintSet& K) {
    if (!u0.finite()) throw DomainError("initial datum is not finite");
    if (K.family() == Family::Unconstrained) return u0;
    if (K.family() == Family::GradientBound) {
        if (violation(K, 0.0, u0) > 1e-8) throw PreconditionError("initial datum is not in the closure of K(0)");
        return pull_into(K, 0.0, u0);
    }
    Field p = project(K, 0.0, u0);
    if (norm_sup(p - u0) > 1e-8) throw PreconditionError("initial datum is not in the closure of K(0)");
    return p;
}

} // namespace detail

/// Residual l^m = f^m - A^m u^m - (u^m - u^{m-1}) / tau.
inline Field step_residual(const Field& u, const Field& u_prev, const FrozenOperator& A, const Field& f, double tau) {
    Field l = f - A.apply(u);
    l -= (1.0 / tau) * (u - u_prev);
    return l;
}

/**
 * Marches the implicit scheme with coefficients frozen along v: step m uses
 * A(t_m, v^m, .). `v_at(m)` supplies v^m for m = 1..M.
 */
inline Trajectory solve_frozen(const std::function<Field(int)>& v_at, const Field& u0, const ConstraintSet& K,
                               const SemimonotoneOp& op, const FieldFn& f, const TimeGrid& tg,
                               const SolverConfig& cfg, const Trajectory* warm = nullptr) {
    cfg.validate();
    if (!(u0.grid() == K.grid())) throw DimensionError("solve_frozen: initial datum is not on the set's grid");
    if (u0.components() != op.components()) throw DimensionError("solve_frozen: operator/state component mismatch");
    const Grid& g = u0.grid();
    const int M = tg.steps();
    const double tau = tg.tau();

    Trajectory traj;
    traj.grid = g;
    traj.time = tg;
    traj.states.reserve(M + 1);
    traj.states.push_back(detail::initial_state(u0, K));
    traj.residuals.assign(1, Field(g, u0.components()));
    traj.source.assign(1, Field(g, u0.components()));
    traj.frozen_along.assign(1, traj.states.front());
    traj.duals.assign(1, {});
    traj.inner_iterations.assign(1, 0);

    const bool can_warm = warm && warm->steps() == M && warm->grid == g;
    for (int m = 1; m <= M; ++m) {
        const double t = tg.t(m);
        Field v = v_at(m);
        const FrozenOperator A = freeze(op, g, t, v);
        Field fm = f(t);
        if (!fm.same_shape(u0)) throw DimensionError("solve_frozen: source has the wrong shape");
        std::optional<StepResult> hint;
        if (can_warm) hint = StepResult{warm->states[m], warm->duals[m], 0, 0.0};
        StepResult r;
        try {
            r = step(traj.states.back(), K, t, A, fm, tau, cfg, hint ? &*hint : nullptr);
        } catch (const SolverError& e) {
            throw SolverError("step " + std::to_string(m) + ": " + e.what(), e.last_residual());
        } catch (const InfeasibleError& e) {
            throw InfeasibleError("step " + std::to_string(m) + ": " + e.what());
        }
        traj.residuals.push_back(step_residual(r.u, traj.states.back(), A, fm, tau));
        traj.states.push_back(std::move(r.u));
        traj.source.push_back(std::move(fm));
        traj.frozen_along.push_back(std::move(v));
        traj.duals.push_back(std::move(r.dual));
        traj.inner_iterations.push_back(r.iterations);
    }
    return traj;
}

/// Coefficients frozen along a fixed trajectory v.
inline Trajectory solve_frozen(const Trajectory& v, const Field& u0, const ConstraintSet& K, const SemimonotoneOp& op,
                               const FieldFn& f, const TimeGrid& tg, const SolverConfig& cfg,
                               const Trajectory* warm = nullptr) {
    if (v.steps() != tg.steps()) throw DimensionError("solve_frozen: v has a different time grid");
    return solve_frozen([&v](int m) { return v.states[m]; }, u0, K, op, f, tg, cfg, warm);
}

/// Coefficients frozen at a time-constant state v.
inline Trajectory solve_frozen(const Field& v, const Field& u0, const ConstraintSet& K, const SemimonotoneOp& op,
                               const FieldFn& f, const TimeGrid& tg, const SolverConfig& cfg,
                               const Trajectory* warm = nullptr) {
    return solve_frozen([&v](int) { return v; }, u0, K, op, f, tg, cfg, warm);
}

/// Recomputes l^m from the stored states, sources and freezing states.
inline Trajectory recover_residuals(Trajectory traj, const SemimonotoneOp& op) {
    const double tau = traj.time.tau();
    traj.residuals.assign(1, Field(traj.grid, traj.components()));
    for (int m = 1; m <= traj.steps(); ++m) {
        const FrozenOperator A = freeze(op, traj.grid, traj.time.t(m), traj.frozen_along[m]);
        traj.residuals.push_back(step_residual(traj.states[m], traj.states[m - 1], A, traj.source[m], tau));
    }
    return traj;
}

/// sqrt(tau * sum_{m=1..M} |a^m - b^m|_H^2)
inline double l2_h_distance(const Trajectory& a, const Trajectory& b) {
    if (a.steps() != b.steps()) throw DimensionError("l2_h_distance: step count mismatch");
    double s = 0.0;
    for (int m = 1; m <= a.steps(); ++m) {
        const double d = norm_h(a.states[m] - b.states[m]);
        s += d * d;
    }
    return std::sqrt(a.time.tau() * s);
}

struct QuasilinearResult {
    Trajectory trajectory;
    std::vector<double> history; ///< ||u^(k) - u^(k-1)||_{L2(0,T;H)} for k = 1, 2, ...
    int iterations = 0;
};

/**
 * Picard iteration on the solution map S: u^(0) = S(u0), then
 * v^(k) = w u^(k-1) + (1-w) v^(k-1), u^(k) = S(v^(k)) until the discrete
 * L2(0,T;H) increment drops below tol_outer. Existence of a fixed point does
 * not guarantee convergence of this iteration, so failure throws with the
 * full residual history.
 */
inline QuasilinearResult solve_quasilinear(const Field& u0, const ConstraintSet& K, const SemimonotoneOp& op,
                                           const FieldFn& f, const TimeGrid& tg, const SolverConfig& cfg) {
    cfg.validate();
    QuasilinearResult out;
    const Field start = detail::initial_state(u0, K);
    Trajectory v;
    v.grid = u0.grid();
    v.time = tg;
    v.states.assign(tg.steps() + 1, start);

    Trajectory u = solve_frozen(v, start, K, op, f, tg, cfg);
    for (int k = 1; k <= cfg.max_outer; ++k) {
        if (cfg.relaxation == 1.0) {
            v.states = u.states;
        } else {
            for (int m = 0; m <= tg.steps(); ++m)
                v.states[m] = cfg.relaxation * u.states[m] + (1.0 - cfg.relaxation) * v.states[m];
        }
        Trajectory next = solve_frozen(v, start, K, op, f, tg, cfg, &u);
        const double r = l2_h_distance(next, u);
        out.history.push_back(r);
        u = std::move(next);
        if (r <= cfg.tol_outer) {
            out.iterations = k;
            out.trajectory = std::move(u);
            return out;
        }
    }
    throw NonConvergenceError("solve_quasilinear: no convergence within max_outer iterations", out.history);
}

} // namespace pvi
