#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pvi/constraints.hpp"
#include "pvi/errors.hpp"
#include "pvi/grid.hpp"
#include "pvi/operators.hpp"
#include "pvi/stepper.hpp"

namespace pvi {

// Time quadrature: every integral over (0,T) pairs quantities at t_m with
// weight tau, m = 1..M, which is the pairing the implicit scheme produces.

/// Flat set of named scalars and pass flags; the diagnostics.json payload.
struct DiagnosticsReport {
    std::map<std::string, double> values;
    std::map<std::string, bool> flags;

    bool passed() const {
        return std::all_of(flags.begin(), flags.end(), [](const auto& kv) { return kv.second; });
    }
    void merge(const DiagnosticsReport& o) {
        for (const auto& [k, v] : o.values) values[k] = v;
        for (const auto& [k, v] : o.flags) flags[k] = v;
    }
};

/// f_Z^m = f^m - A^m u^m = (u^m - u^{m-1}) / tau + l^m, the datum of the
/// constrained Cauchy problem u' + dI_K(u) = f_Z.
inline Field constrained_datum(const Trajectory& traj, int m) {
    Field fz = traj.residuals.at(m);
    fz += (1.0 / traj.time.tau()) * (traj.states[m] - traj.states[m - 1]);
    return fz;
}

/// sum_m ||u^m - u^{m-1}||_{W*}: Var_{W*} of the piecewise-constant trajectory.
inline double tv_wstar(const Trajectory& traj) {
    double s = 0.0;
    for (std::size_t m = 1; m < traj.states.size(); ++m) s += dual_norm_wstar(traj.states[m] - traj.states[m - 1]);
    return s;
}

inline double sup_h_norm(const Trajectory& traj) {
    double s = 0.0;
    for (const auto& u : traj.states) s = std::max(s, norm_h(u));
    return s;
}

inline double l2_v_norm(const Trajectory& traj) {
    double s = 0.0;
    for (int m = 1; m <= traj.steps(); ++m) {
        const double v = norm_v(traj.states[m]);
        s += v * v;
    }
    return std::sqrt(traj.time.tau() * s);
}

/// The four quantities bounded by M0 in the definition of Z(kappa, M0, u0).
struct ZMeasures {
    double lp_v_norm = 0.0;
    double sup_h_norm = 0.0;
    double f_duality_integral = 0.0;
    double f_l1_wstar = 0.0;

    double max() const { return std::max({lp_v_norm, sup_h_norm, f_duality_integral, f_l1_wstar}); }
};

inline ZMeasures z_measures(const Trajectory& traj) {
    ZMeasures z;
    z.lp_v_norm = l2_v_norm(traj);
    z.sup_h_norm = sup_h_norm(traj);
    const double tau = traj.time.tau();
    for (int m = 1; m <= traj.steps(); ++m) {
        const Field fz = constrained_datum(traj, m);
        z.f_duality_integral += tau * mass_inner(fz, traj.states[m]);
        z.f_l1_wstar += tau * dual_norm_wstar(fz);
    }
    return z;
}

struct ZParams {
    double kappa = 0.0;
    double m0 = 0.0;
    Field u0;
};

/// M0 + M0/kappa + |u0|_H^2 / (2 kappa).
inline double c_star(const ZParams& zp) {
    if (!(zp.kappa > 0.0)) return std::numeric_limits<double>::infinity();
    if (std::isinf(zp.kappa)) return zp.m0;
    const double u0 = norm_h(zp.u0);
    return zp.m0 + zp.m0 / zp.kappa + u0 * u0 / (2.0 * zp.kappa);
}

/**
 * Left minus right side of the discrete VI
 *   sum_{m1<m<=m2} (eta^m - eta^{m-1}, u^m - eta^m) - tau (f_Z^m, u^m - eta^m)
 *     + 1/2 |u^{m2} - eta^{m2}|^2  <=  1/2 |u^{m1} - eta^{m1}|^2
 * for eta given at t_0..t_M. With m1 = 0 and the end term dropped this is the
 * global inequality. Returns rhs - lhs (nonnegative when it holds).
 */
inline double vi_margin(const Trajectory& traj, const std::vector<Field>& eta, int m1, int m2, bool end_term) {
    const double tau = traj.time.tau();
    double lhs = 0.0;
    for (int m = m1 + 1; m <= m2; ++m) {
        const Field w = traj.states[m] - eta[m];
        lhs += mass_inner(eta[m] - eta[m - 1], w) - tau * mass_inner(constrained_datum(traj, m), w);
    }
    if (end_term) {
        const double e = norm_h(traj.states[m2] - eta[m2]);
        lhs += 0.5 * e * e;
    }
    const double r = norm_h(traj.states[m1] - eta[m1]);
    return 0.5 * r * r - lhs;
}

inline double vi_scale(const Trajectory& traj) {
    const double s = sup_h_norm(traj);
    return std::max(1.0, s * s);
}

/**
 * Membership of the trajectory in Z(kappa, M0, u0) with f := f_Z. The VI part
 * is tested against eta = +-kappa w for the unit-V-ball maximisers w, held
 * constant in time.
 */
inline DiagnosticsReport z_membership(const Trajectory& traj, const ZParams& zp) {
    DiagnosticsReport rep;
    const ZMeasures z = z_measures(traj);
    const double slack = 1e-12 * std::max(1.0, zp.m0);
    rep.values["lp_v_norm"] = z.lp_v_norm;
    rep.values["sup_h_norm"] = z.sup_h_norm;
    rep.values["f_duality_integral"] = z.f_duality_integral;
    rep.values["f_l1_wstar"] = z.f_l1_wstar;
    rep.values["kappa"] = zp.kappa;
    rep.values["m0"] = zp.m0;
    rep.flags["z_lp_v_norm"] = z.lp_v_norm <= zp.m0 + slack;
    rep.flags["z_sup_h_norm"] = z.sup_h_norm <= zp.m0 + slack;
    rep.flags["z_f_duality_integral"] = z.f_duality_integral <= zp.m0 + slack;
    rep.flags["z_f_l1_wstar"] = z.f_l1_wstar <= zp.m0 + slack;

    double margin = std::numeric_limits<double>::infinity();
    if (zp.kappa > 0.0 && std::isfinite(zp.kappa)) {
        const Family fam = traj.components() == 2 ? Family::VectorL1Obstacle : Family::LowerObstacle;
        const auto probes = energy_ball_probes(traj.grid, traj.components(), fam);
        std::vector<Field> eta(traj.states.size());
        for (const auto& w : probes) {
            std::fill(eta.begin(), eta.end(), zp.kappa * w);
            margin = std::min(margin, vi_margin(traj, eta, 0, traj.steps(), false));
        }
    }
    rep.values["vi_margin"] = margin;
    rep.flags["z_vi"] = margin >= -1e-7 * vi_scale(traj);
    return rep;
}

/// kappa = min over t_m of the energy-ball kappa of K(t_m); M0 = the largest
/// measured Z quantity, so the run is a member of Z(kappa, M0, u0).
inline ZParams measure_z_params(const Trajectory& traj, const ConstraintSet& K) {
    ZParams zp;
    zp.u0 = traj.states.front();
    zp.m0 = z_measures(traj).max();
    if (K.family() == Family::Unconstrained) {
        zp.kappa = std::numeric_limits<double>::infinity();
        return zp;
    }
    const auto probes = energy_ball_probes(traj.grid, traj.components(), K.family());
    zp.kappa = std::numeric_limits<double>::infinity();
    for (int m = 0; m <= traj.steps(); ++m) zp.kappa = std::min(zp.kappa, estimate_kappa(K, traj.time.t(m), probes));
    return zp;
}

/// Var_{W*} against C*(kappa, M0, |u0|_H).
inline DiagnosticsReport tv_bound(const Trajectory& traj, const ZParams& zp) {
    DiagnosticsReport rep;
    const double tv = tv_wstar(traj);
    const double cs = c_star(zp);
    rep.values["tv_wstar"] = tv;
    rep.values["c_star_bound"] = cs;
    rep.flags["tv_wstar_le_c_star"] = tv <= cs * (1.0 + 1e-12);
    return rep;
}

struct EnergyBound {
    double lhs = 0.0; ///< sup_t |u|_H + ||u||_{L2(0,T;V)}
    double m2 = 0.0;
    bool passed = false;
};

/**
 * M2 = 2 {1 + 2 c4 T + |u0|_H^2 + c5 int |f|_{V*}^2} with c5 = 1/c3 (p = 2),
 * evaluated with the source f^m of the run.
 */
inline EnergyBound energy_bound(const Trajectory& traj, const ConditionConstants& c) {
    if (!(c.c3 > 0.0)) throw PreconditionError("energy_bound: c3 must be positive");
    EnergyBound e;
    e.lhs = sup_h_norm(traj) + l2_v_norm(traj);
    double f2 = 0.0;
    for (int m = 1; m <= traj.steps(); ++m) {
        const double fw = dual_norm_wstar(traj.source[m]);
        f2 += traj.time.tau() * fw * fw;
    }
    const double u0 = norm_h(traj.states.front());
    e.m2 = 2.0 * (1.0 + 2.0 * c.c4 * traj.time.t_final() + u0 * u0 + f2 / c.c3);
    e.passed = e.lhs <= e.m2;
    return e;
}

struct ContractionReport {
    double worst_margin = std::numeric_limits<double>::infinity();
    double scale = 1.0;
    std::size_t pairs = 0;
    bool passed = true;
};

/**
 * 1/2 |w^{m2}|^2 <= 1/2 |w^{m1}|^2 + tau sum_{m1<m<=m2} (f1^m - f2^m, w^m),
 * w = u1 - u2, over all pairs m1 < m2 (a stratified index sample when
 * M > 200). f_i is the constrained datum f_Z of each run.
 */
inline ContractionReport contraction_check(const Trajectory& a, const Trajectory& b, double tol = 1e-8) {
    if (!(a.grid == b.grid) || !(a.time == b.time) || a.components() != b.components())
        throw DimensionError("contraction_check: trajectories are not comparable");
    const int M = a.steps();
    const double tau = a.time.tau();
    std::vector<double> half_w2(M + 1), prefix(M + 1, 0.0);
    double scale = 1.0;
    for (int m = 0; m <= M; ++m) {
        const Field w = a.states[m] - b.states[m];
        const double nw = norm_h(w);
        half_w2[m] = 0.5 * nw * nw;
        scale = std::max({scale, norm_h(a.states[m]) * norm_h(a.states[m]), norm_h(b.states[m]) * norm_h(b.states[m])});
        if (m > 0)
            prefix[m] = prefix[m - 1] + tau * mass_inner(constrained_datum(a, m) - constrained_datum(b, m), w);
    }
    std::vector<int> idx;
    if (M <= 200) {
        for (int m = 0; m <= M; ++m) idx.push_back(m);
    } else {
        for (int s = 0; s <= 200; ++s) idx.push_back(static_cast<int>(std::lround(static_cast<double>(s) * M / 200.0)));
    }
    ContractionReport rep;
    rep.scale = scale;
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = i + 1; j < idx.size(); ++j) {
            const int m1 = idx[i], m2 = idx[j];
            const double margin = half_w2[m1] + (prefix[m2] - prefix[m1]) - half_w2[m2];
            rep.worst_margin = std::min(rep.worst_margin, margin);
            ++rep.pairs;
        }
    rep.passed = rep.worst_margin >= -tol * scale;
    return rep;
}

/**
 * Test functions eta in K(t_m) for the VI checks: time-constant members of
 * every K(t_m) (kappa-scaled unit-ball maximisers, and zero when admissible),
 * eps_map images of the solution (c0 = -1, sigma0 = 0, eps in {0.05, 0.1})
 * and the three-point time average of the solution, each pulled into K(t_m).
 */
inline std::vector<std::vector<Field>> vi_probe_family(const Trajectory& traj, const ConstraintSet& K, double kappa) {
    const int M = traj.steps();
    const Grid& g = traj.grid;
    const int comps = traj.components();
    std::vector<std::vector<Field>> out;

    auto in_all = [&](const Field& z) {
        for (int m = 0; m <= M; ++m)
            if (!contains(K, traj.time.t(m), z, 1e-12)) return false;
        return true;
    };
    std::vector<Field> constants{Field(g, comps)};
    if (K.family() != Family::Unconstrained && std::isfinite(kappa) && kappa > 0.0) {
        const auto probes = energy_ball_probes(g, comps, K.family());
        const std::size_t stride = std::max<std::size_t>(1, probes.size() / 8);
        for (std::size_t i = 0; i < probes.size(); i += stride) constants.push_back((0.999 * kappa) * probes[i]);
    }
    for (const auto& c : constants)
        if (in_all(c)) out.emplace_back(M + 1, c);

    auto pulled = [&](auto&& make) {
        std::vector<Field> eta;
        eta.reserve(M + 1);
        for (int m = 0; m <= M; ++m) eta.push_back(pull_into(K, traj.time.t(m), make(m)));
        return eta;
    };
    for (double eps : {0.05, 0.1}) {
        const EpsilonShift F(-1.0, obstacles::constant(0.0), eps);
        out.push_back(pulled([&](int m) { return eps_map(F, traj.time.t(m), traj.states[m]); }));
    }
    out.push_back(pulled([&](int m) {
        const int lo = std::max(0, m - 1), hi = std::min(M, m + 1);
        Field s(g, comps);
        for (int j = lo; j <= hi; ++j) s += traj.states[j];
        return (1.0 / (hi - lo + 1)) * s;
    }));
    return out;
}

/// Worst margin of the global VI over the probe family.
inline double global_vi_margin(const Trajectory& traj, const std::vector<std::vector<Field>>& probes) {
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& eta : probes) worst = std::min(worst, vi_margin(traj, eta, 0, traj.steps(), false));
    return worst;
}

/// Worst margin of the interval VI over `intervals` random (m1, m2) pairs.
inline double interval_vi_margin(const Trajectory& traj, const std::vector<std::vector<Field>>& probes, int intervals,
                                 std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, traj.steps());
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < intervals; ++i) {
        int m1 = pick(rng), m2 = pick(rng);
        if (m1 > m2) std::swap(m1, m2);
        for (const auto& eta : probes) worst = std::min(worst, vi_margin(traj, eta, m1, m2, true));
    }
    return worst;
}

/// Trajectory invariants: constraint slack and complementarity of l^m against
/// `probes` random members of K(t_m).
inline DiagnosticsReport trajectory_checks(const Trajectory& traj, const ConstraintSet& K, int probes,
                                           std::mt19937_64& rng) {
    DiagnosticsReport rep;
    double worst_violation = 0.0;
    double worst_comp = -std::numeric_limits<double>::infinity();
    double scale = 1.0;
    for (int m = 0; m <= traj.steps(); ++m) {
        worst_violation = std::max(worst_violation, violation(K, traj.time.t(m), traj.states[m]));
        if (m == 0) continue;
        const double lm = norm_h(traj.residuals[m]);
        scale = std::max(scale, lm * std::max(1.0, norm_h(traj.states[m])));
        if (K.family() == Family::Unconstrained) {
            worst_comp = std::max(worst_comp, lm);
            continue;
        }
        for (int i = 0; i < probes; ++i) {
            const Field xi = detail::random_member(K, traj.time.t(m), traj.components(), rng);
            worst_comp = std::max(worst_comp, mass_inner(traj.residuals[m], xi - traj.states[m]));
        }
    }
    rep.values["constraint_violation"] = worst_violation;
    rep.values["complementarity"] = worst_comp;
    rep.flags["constraint_satisfied"] = worst_violation <= 1e-8;
    rep.flags["complementarity"] = worst_comp <= 1e-8 * scale;
    return rep;
}

struct ConvergenceRow {
    int n = 0;
    double distance = 0.0;       ///< max_m |u_n^m - u_ref^m|_H
    double energy_pairing = 0.0; ///< tau sum_m (f_Z,n^m, u_n^m)_H
};

/// C([0,T];H) distance: max over steps of the H-norm difference.
inline double sup_h_distance(const Trajectory& a, const Trajectory& b) {
    if (a.steps() != b.steps()) throw DimensionError("sup_h_distance: step count mismatch");
    double d = 0.0;
    for (int m = 0; m <= a.steps(); ++m) d = std::max(d, norm_h(a.states[m] - b.states[m]));
    return d;
}

/// One row per n in `ns`: distance of solve(n) to the reference run.
inline std::vector<ConvergenceRow> convergence_study(const std::function<Trajectory(int)>& solve,
                                                     const Trajectory& reference, const std::vector<int>& ns) {
    std::vector<ConvergenceRow> rows;
    for (int n : ns) {
        const Trajectory t = solve(n);
        ConvergenceRow r;
        r.n = n;
        r.distance = sup_h_distance(t, reference);
        r.energy_pairing = z_measures(t).f_duality_integral;
        rows.push_back(r);
    }
    return rows;
}

inline bool strictly_decreasing(const std::vector<ConvergenceRow>& rows) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (!(rows[i].distance < rows[i - 1].distance)) return false;
    return true;
}

/// Non-increase up to `slack`.
inline bool non_increasing(const std::vector<ConvergenceRow>& rows, double slack = 1e-10) {
    for (std::size_t i = 1; i < rows.size(); ++i)
        if (rows[i].distance > rows[i - 1].distance + slack) return false;
    return true;
}

} // namespace pvi
