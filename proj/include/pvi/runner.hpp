#pragma once

#include <random>
#include <string>
#include <vector>

#include "pvi/constraints.hpp"
#include "pvi/diagnostics.hpp"
#include "pvi/errors.hpp"
#include "pvi/grid.hpp"
#include "pvi/operators.hpp"
#include "pvi/scenario.hpp"
#include "pvi/stepper.hpp"

namespace pvi {

struct RunResult {
    Trajectory trajectory;
    std::vector<double> history;
    int outer_iterations = 0;
};

/// Quasi-linear solve of the scenario, with the constraint obstacle shifted
/// by `offset`.
inline RunResult solve_scenario(const Scenario& s, double offset = 0.0) {
    const ConstraintSet K = s.constraint(offset);
    auto q = solve_quasilinear(s.initial_state(), K, s.op(), s.source_fn(), s.time(), s.solver);
    return {std::move(q.trajectory), std::move(q.history), q.iterations};
}

namespace detail {

// Smooth random perturbation: a few sine modes with N(0,1) weights.
inline Field smooth_perturbation(const Grid& g, int comps, double amplitude, std::mt19937_64& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Field out(g, comps);
    for (int mode = 1; mode <= 3; ++mode)
        for (int c = 0; c < comps; ++c) {
            const double w = amplitude * nd(rng) / mode;
            for (std::size_t k = 0; k < g.nodes(); ++k) {
                const Point p = g.node_point(k);
                double s = std::sin(mode * std::numbers::pi * p.x / g.extent(0));
                if (g.dim() == 2) s *= std::sin(std::numbers::pi * p.y / g.extent(1));
                out(c, k) += w * s;
            }
        }
    return out;
}

} // namespace detail

/**
 * Second run for the two-solution inequality: same constraint and the same
 * frozen coefficients as `base`, perturbed initial datum (pulled into K(0))
 * and perturbed source.
 */
inline Trajectory perturbed_companion(const Scenario& s, const Trajectory& base, std::mt19937_64& rng) {
    const ConstraintSet K = s.constraint();
    const Grid g = s.grid();
    const int comps = s.components();
    const double scale = std::max(1.0, norm_sup(base.states.back()));
    Field u0 = pull_into(K, 0.0, base.states.front() + detail::smooth_perturbation(g, comps, 0.2 * scale, rng));
    const Field df = detail::smooth_perturbation(g, comps, 0.2 * std::max(1.0, s.source.amplitude), rng);
    const FieldFn f0 = s.source_fn();
    FieldFn f = [f0, df](double t) { return f0(t) + df; };
    return solve_frozen([&base](int m) { return base.frozen_along[m]; }, u0, K, s.op(), f, s.time(), s.solver);
}

/// The enabled diagnostics of the scenario on its solution.
inline DiagnosticsReport diagnose(const Scenario& s, const Trajectory& traj, std::mt19937_64& rng) {
    const auto& d = s.diagnostics;
    const ConstraintSet K = s.constraint();
    DiagnosticsReport rep;
    if (d.constraint || d.complementarity) {
        DiagnosticsReport t = trajectory_checks(traj, K, d.complementarity_probes, rng);
        if (!d.constraint) t.flags.erase("constraint_satisfied");
        if (!d.complementarity) t.flags.erase("complementarity");
        rep.merge(t);
    }
    if (d.energy) {
        const EnergyBound e = energy_bound(traj, declared_constants(s.op(), s.grid()));
        rep.values["energy_lhs"] = e.lhs;
        rep.values["energy_m2"] = e.m2;
        rep.flags["energy_bound"] = e.passed;
    }
    ZParams zp;
    if (d.z_membership || d.tv_bound) zp = measure_z_params(traj, K);
    if (d.z_membership) rep.merge(z_membership(traj, zp));
    if (d.tv_bound) rep.merge(tv_bound(traj, zp));
    if (d.vi) {
        const auto probes = vi_probe_family(traj, K, d.z_membership || d.tv_bound ? zp.kappa : 0.0);
        const double scale = vi_scale(traj);
        const double g = global_vi_margin(traj, probes);
        const double i = interval_vi_margin(traj, probes, d.vi_intervals, rng);
        rep.values["global_vi_margin"] = g;
        rep.values["interval_vi_margin"] = i;
        rep.flags["global_vi"] = g >= -1e-7 * scale;
        rep.flags["interval_vi"] = i >= -1e-7 * scale;
    }
    if (d.contraction && d.contraction_pairs > 0) {
        double worst = std::numeric_limits<double>::infinity();
        bool ok = true;
        for (int i = 0; i < d.contraction_pairs; ++i) {
            const Trajectory other = perturbed_companion(s, traj, rng);
            const ContractionReport c = contraction_check(traj, other);
            worst = std::min(worst, c.worst_margin / c.scale);
            ok = ok && c.passed;
        }
        rep.values["contraction_margin"] = worst;
        rep.flags["contraction"] = ok;
    }
    return rep;
}

enum class RefineMode { Time, Space, Constraint };

inline RefineMode parse_refine_mode(const std::string& s) {
    if (s == "time") return RefineMode::Time;
    if (s == "space") return RefineMode::Space;
    if (s == "constraint") return RefineMode::Constraint;
    throw ConfigError("--refine: expected time, space or constraint");
}

namespace detail {

// H-distance on the coarse grid between coarse states and the fine states
// restricted to coinciding nodes (fine n = 2 (n + 1) - 1).
inline double restricted_distance(const Field& coarse, const Field& fine) {
    const Grid& gc = coarse.grid();
    const Grid& gf = fine.grid();
    Field r(gc, coarse.components());
    const int n = gc.n();
    const int nf = gf.n();
    for (int c = 0; c < coarse.components(); ++c)
        for (std::size_t k = 0; k < gc.nodes(); ++k) {
            const int i = static_cast<int>(k % n), j = static_cast<int>(k / n);
            const std::size_t kf = gc.dim() == 1 ? static_cast<std::size_t>(2 * i + 1)
                                                 : static_cast<std::size_t>(2 * i + 1) + static_cast<std::size_t>(nf) * (2 * j + 1);
            r(c, k) = coarse(c, k) - fine(c, kf);
        }
    return norm_h(r);
}

} // namespace detail

/**
 * Refinement table. constraint: u_n with the obstacle offset by
 * approximation_offset(n), n = 2, 4, .., 2^levels, against the limit run.
 * time / space: level i doubles the step count / interior cells i-1 times
 * and is compared with level i+1 at the coarse time points / nodes.
 */
inline std::vector<ConvergenceRow> compare_scenario(const Scenario& s, RefineMode mode, int levels) {
    if (levels < 1) throw ConfigError("--levels: must be at least 1");
    std::vector<ConvergenceRow> rows;
    if (mode == RefineMode::Constraint) {
        const Trajectory ref = solve_scenario(s).trajectory;
        std::vector<int> ns;
        for (int i = 1; i <= levels; ++i) ns.push_back(1 << i);
        return convergence_study([&](int n) { return solve_scenario(s, s.approximation_offset(n)).trajectory; }, ref,
                                 ns);
    }
    std::vector<Scenario> chain;
    for (int i = 0; i <= levels; ++i) {
        Scenario c = s;
        if (mode == RefineMode::Time) c.steps = s.steps << i;
        else c.n = ((s.n + 1) << i) - 1;
        chain.push_back(c);
    }
    std::vector<Trajectory> runs;
    for (const auto& c : chain) runs.push_back(solve_scenario(c).trajectory);
    for (int i = 0; i < levels; ++i) {
        const Trajectory& a = runs[i];
        const Trajectory& b = runs[i + 1];
        double d = 0.0;
        for (int m = 0; m <= a.steps(); ++m) {
            if (mode == RefineMode::Time) d = std::max(d, norm_h(a.states[m] - b.states[2 * m]));
            else d = std::max(d, detail::restricted_distance(a.states[m], b.states[m]));
        }
        ConvergenceRow r;
        r.n = mode == RefineMode::Time ? chain[i].steps : chain[i].n;
        r.distance = d;
        r.energy_pairing = z_measures(a).f_duality_integral;
        rows.push_back(r);
    }
    return rows;
}

} // namespace pvi
