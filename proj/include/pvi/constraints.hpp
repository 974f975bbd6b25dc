#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pvi/errors.hpp"
#include "pvi/grid.hpp"
#include "pvi/obstacles.hpp"

namespace pvi {

enum class Family { Unconstrained, LowerObstacle, UpperObstacle, VectorL1Obstacle, GradientBound };

inline const char* to_string(Family f) noexcept {
    switch (f) {
    case Family::Unconstrained: return "unconstrained";
    case Family::LowerObstacle: return "lower_obstacle";
    case Family::UpperObstacle: return "upper_obstacle";
    case Family::VectorL1Obstacle: return "vector_l1";
    case Family::GradientBound: return "gradient_bound";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Forward-difference gradient on cells, used by the gradient-bound family.
// Cell c sits on an (n+1)-wide lattice; its gradient is stored at
// out[c*dim + axis]. Boundary values are zero.

inline std::vector<double> forward_gradient(const Grid& g, std::span<const double> u) {
    const int n = g.n();
    const int m = n + 1;
    std::vector<double> out(g.cells() * g.dim(), 0.0);
    auto val = [&](int i, int j) -> double {
        // lattice coordinates; interior nodes are 1..n
        if (i < 1 || i > n || j < 1 || j > n) return 0.0;
        return u[(i - 1) + n * (j - 1)];
    };
    if (g.dim() == 1) {
        const double ih = 1.0 / g.h(0);
        for (int c = 0; c < m; ++c) {
            const double ul = c >= 1 ? u[c - 1] : 0.0;
            const double ur = c < n ? u[c] : 0.0;
            out[c] = (ur - ul) * ih;
        }
        return out;
    }
    const double ihx = 1.0 / g.h(0);
    const double ihy = 1.0 / g.h(1);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            const auto c = static_cast<std::size_t>(i + m * j);
            out[2 * c] = (val(i + 1, j) - val(i, j)) * ihx;
            out[2 * c + 1] = (val(i, j + 1) - val(i, j)) * ihy;
        }
    return out;
}

/// Euclidean adjoint of forward_gradient.
inline std::vector<double> gradient_adjoint(const Grid& g, std::span<const double> q) {
    const int n = g.n();
    const int m = n + 1;
    std::vector<double> out(g.nodes(), 0.0);
    if (g.dim() == 1) {
        const double ih = 1.0 / g.h(0);
        for (int c = 0; c < m; ++c) {
            if (c < n) out[c] += q[c] * ih;
            if (c >= 1) out[c - 1] -= q[c] * ih;
        }
        return out;
    }
    const double ihx = 1.0 / g.h(0);
    const double ihy = 1.0 / g.h(1);
    auto add = [&](int i, int j, double v) {
        if (i < 1 || i > n || j < 1 || j > n) return;
        out[(i - 1) + n * (j - 1)] += v;
    };
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < m; ++i) {
            const auto c = static_cast<std::size_t>(i + m * j);
            add(i + 1, j, q[2 * c] * ihx);
            add(i, j, -q[2 * c] * ihx);
            add(i, j + 1, q[2 * c + 1] * ihy);
            add(i, j, -q[2 * c + 1] * ihy);
        }
    return out;
}

/// Squared operator-norm bound of forward_gradient.
inline double gradient_norm_sq_bound(const Grid& g) {
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) s += 4.0 / (g.h(a) * g.h(a));
    return s;
}

inline std::vector<double> cell_magnitudes(const Grid& g, std::span<const double> grad) {
    std::vector<double> mag(g.cells());
    for (std::size_t c = 0; c < mag.size(); ++c) {
        double s = 0.0;
        for (int a = 0; a < g.dim(); ++a) s += grad[c * g.dim() + a] * grad[c * g.dim() + a];
        mag[c] = std::sqrt(s);
    }
    return mag;
}

/// Euclidean projection of a small vector onto the l1 ball of the given radius.
template <std::size_t K>
void project_l1_ball(std::array<double, K>& z, std::size_t k, double radius) {
    double l1 = 0.0;
    for (std::size_t i = 0; i < k; ++i) l1 += std::abs(z[i]);
    if (l1 <= radius) return;
    if (radius <= 0.0) {
        for (std::size_t i = 0; i < k; ++i) z[i] = 0.0;
        return;
    }
    std::array<double, K> mu{};
    for (std::size_t i = 0; i < k; ++i) mu[i] = std::abs(z[i]);
    std::sort(mu.begin(), mu.begin() + k, std::greater<>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        cumsum += mu[j];
        const double cand = (cumsum - radius) / static_cast<double>(j + 1);
        if (mu[j] - cand > 0.0) theta = cand;
    }
    for (std::size_t i = 0; i < k; ++i) {
        const double a = std::max(std::abs(z[i]) - theta, 0.0);
        z[i] = z[i] < 0.0 ? -a : a;
    }
}

/**
 * Time-dependent convex set K(t) on a grid. Obstacles are sampled at nodes
 * (pointwise families) or at cell centres (gradient bound). Immutable after
 * construction.
 */
class ConstraintSet {
public:
    static ConstraintSet unconstrained(const Grid& g) { return ConstraintSet(Family::Unconstrained, g, {}, 0.0); }

    /// { z : z >= rho(., t) }. The boundary trace must satisfy rho <= 0 at t = 0
    /// (and is rechecked at every time the stepper visits).
    static ConstraintSet lower_obstacle(const Grid& g, SpaceTimeFn rho) {
        ConstraintSet k(Family::LowerObstacle, g, std::move(rho), 0.0);
        k.check_admissible(0.0);
        return k;
    }

    static ConstraintSet upper_obstacle(const Grid& g, SpaceTimeFn rho) {
        ConstraintSet k(Family::UpperObstacle, g, std::move(rho), 0.0);
        k.check_admissible(0.0);
        return k;
    }

    /// { [z_1, z_2, ...] : sum_i |z_i| <= psi(., t) } with psi >= c_psi > 0.
    static ConstraintSet vector_l1(const Grid& g, SpaceTimeFn psi, double c_psi, double horizon = 0.0) {
        ConstraintSet k(Family::VectorL1Obstacle, g, std::move(psi), c_psi);
        k.validate_lower_bound(horizon);
        return k;
    }

    /// { z : |grad z| <= psi(., t) } with psi >= c_psi > 0, checked per cell.
    static ConstraintSet gradient_bound(const Grid& g, SpaceTimeFn psi, double c_psi, double horizon = 0.0) {
        ConstraintSet k(Family::GradientBound, g, std::move(psi), c_psi);
        k.validate_lower_bound(horizon);
        return k;
    }

    Family family() const noexcept { return family_; }
    const Grid& grid() const noexcept { return grid_; }
    double c_psi() const noexcept { return c_psi_; }
    const SpaceTimeFn& obstacle() const noexcept { return obstacle_; }

    bool is_pointwise() const noexcept {
        return family_ == Family::LowerObstacle || family_ == Family::UpperObstacle ||
               family_ == Family::VectorL1Obstacle;
    }

    std::vector<double> node_values(double t) const {
        std::vector<double> v(grid_.nodes());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = obstacle_(grid_.node_point(k), t);
        return v;
    }

    std::vector<double> cell_values(double t) const {
        std::vector<double> v(grid_.cells());
        for (std::size_t c = 0; c < v.size(); ++c) v[c] = obstacle_(grid_.cell_point(c), t);
        return v;
    }

    /// Throws InfeasibleError when K(t) cannot contain a field with zero
    /// Dirichlet trace, naming the offending boundary point.
    void check_admissible(double t) const {
        if (family_ == Family::LowerObstacle || family_ == Family::UpperObstacle) {
            const double sign = family_ == Family::LowerObstacle ? 1.0 : -1.0;
            for (const auto& p : grid_.boundary_points()) {
                const double r = obstacle_(p, t);
                if (sign * r > 1e-12)
                    throw InfeasibleError(std::string(to_string(family_)) + " incompatible with zero boundary data at (" +
                                          std::to_string(p.x) + ", " + std::to_string(p.y) +
                                          "), t=" + std::to_string(t) + ": obstacle=" + std::to_string(r));
            }
        } else if (family_ == Family::VectorL1Obstacle || family_ == Family::GradientBound) {
            const auto vals = family_ == Family::GradientBound ? cell_values(t) : node_values(t);
            for (std::size_t i = 0; i < vals.size(); ++i)
                if (!(vals[i] >= c_psi_))
                    throw InfeasibleError(std::string(to_string(family_)) + ": psi below c_psi at sample " +
                                          std::to_string(i) + ", t=" + std::to_string(t));
        }
    }

private:
    ConstraintSet(Family f, const Grid& g, SpaceTimeFn fn, double c_psi)
        : family_(f), grid_(g), obstacle_(std::move(fn)), c_psi_(c_psi) {
        if (f != Family::Unconstrained && !obstacle_) throw DomainError("constraint set needs an obstacle function");
    }

    void validate_lower_bound(double horizon) const {
        if (!(c_psi_ > 0.0)) throw DomainError("c_psi must be positive");
        const int samples = horizon > 0.0 ? 11 : 1;
        for (int s = 0; s < samples; ++s) {
            const double t = samples == 1 ? 0.0 : horizon * s / (samples - 1);
            check_admissible(t);
        }
    }

    Family family_;
    Grid grid_;
    SpaceTimeFn obstacle_;
    double c_psi_;
};

// ---------------------------------------------------------------------------

inline void require_grid(const ConstraintSet& K, const Field& z, const char* where) {
    if (!(K.grid() == z.grid())) throw DimensionError(std::string(where) + ": field is not on the set's grid");
    if (K.family() == Family::GradientBound && z.components() != 1)
        throw DimensionError(std::string(where) + ": gradient bound applies to scalar fields");
}

/// Largest violation of the defining inequality of K(t); <= 0 means inside.
inline double violation(const ConstraintSet& K, double t, const Field& z) {
    require_grid(K, z, "violation");
    const Grid& g = z.grid();
    double worst = -std::numeric_limits<double>::infinity();
    switch (K.family()) {
    case Family::Unconstrained: return worst;
    case Family::LowerObstacle:
    case Family::UpperObstacle: {
        const auto rho = K.node_values(t);
        const double sign = K.family() == Family::LowerObstacle ? 1.0 : -1.0;
        for (int c = 0; c < z.components(); ++c)
            for (std::size_t k = 0; k < g.nodes(); ++k) worst = std::max(worst, sign * (rho[k] - z(c, k)));
        return worst;
    }
    case Family::VectorL1Obstacle: {
        const auto psi = K.node_values(t);
        for (std::size_t k = 0; k < g.nodes(); ++k) {
            double l1 = 0.0;
            for (int c = 0; c < z.components(); ++c) l1 += std::abs(z(c, k));
            worst = std::max(worst, l1 - psi[k]);
        }
        return worst;
    }
    case Family::GradientBound: {
        const auto psi = K.cell_values(t);
        const auto mag = cell_magnitudes(g, forward_gradient(g, z.component(0)));
        for (std::size_t c = 0; c < mag.size(); ++c) worst = std::max(worst, mag[c] - psi[c]);
        return worst;
    }
    }
    return worst;
}

/// Membership test z in K(t) up to an absolute tolerance.
inline bool contains(const ConstraintSet& K, double t, const Field& z, double tol = 0.0) {
    if (K.family() == Family::Unconstrained) return true;
    return violation(K, t, z) <= tol;
}

/// Nodewise H-projection onto K(t). Not available for the gradient bound,
/// whose constraint couples neighbouring nodes.
inline Field project(const ConstraintSet& K, double t, const Field& z) {
    require_grid(K, z, "project");
    Field out = z;
    const Grid& g = z.grid();
    switch (K.family()) {
    case Family::Unconstrained: return out;
    case Family::LowerObstacle: {
        const auto rho = K.node_values(t);
        for (int c = 0; c < z.components(); ++c)
            for (std::size_t k = 0; k < g.nodes(); ++k) out(c, k) = std::max(z(c, k), rho[k]);
        return out;
    }
    case Family::UpperObstacle: {
        const auto rho = K.node_values(t);
        for (int c = 0; c < z.components(); ++c)
            for (std::size_t k = 0; k < g.nodes(); ++k) out(c, k) = std::min(z(c, k), rho[k]);
        return out;
    }
    case Family::VectorL1Obstacle: {
        if (z.components() > 4) throw DimensionError("project: at most 4 components supported");
        const auto psi = K.node_values(t);
        const auto nc = static_cast<std::size_t>(z.components());
        for (std::size_t k = 0; k < g.nodes(); ++k) {
            std::array<double, 4> v{};
            for (std::size_t c = 0; c < nc; ++c) v[c] = z(static_cast<int>(c), k);
            project_l1_ball(v, nc, psi[k]);
            for (std::size_t c = 0; c < nc; ++c) out(static_cast<int>(c), k) = v[c];
        }
        return out;
    }
    case Family::GradientBound:
        throw UnsupportedProjectionError("project: gradient-bound sets have no nodewise projection");
    }
    return out;
}

/// Brings z into K(t): projection for pointwise families, radial scaling
/// towards 0 (which lies in every gradient-bound set) otherwise.
inline Field pull_into(const ConstraintSet& K, double t, const Field& z) {
    if (K.family() != Family::GradientBound) return project(K, t, z);
    const Grid& g = z.grid();
    const auto psi = K.cell_values(t);
    const auto mag = cell_magnitudes(g, forward_gradient(g, z.component(0)));
    double theta = 1.0;
    for (std::size_t c = 0; c < mag.size(); ++c)
        if (mag[c] > psi[c]) theta = std::min(theta, psi[c] / mag[c]);
    return theta * z;
}

// ---------------------------------------------------------------------------
// epsilon-shift maps F_eps(t) z = (1 + eps c0) z + eps sigma0(t).

struct EpsilonShift {
    double c0 = 0.0;
    SpaceTimeFn sigma0 = obstacles::constant(0.0);
    double epsilon = 0.0;

    EpsilonShift() = default;
    EpsilonShift(double c0_, SpaceTimeFn sigma0_, double eps) : c0(c0_), sigma0(std::move(sigma0_)), epsilon(eps) {
        if (!(eps >= 0.0 && eps < 1.0)) throw DomainError("epsilon must lie in [0, 1)");
    }
};

inline Field eps_map(const EpsilonShift& F, double t, const Field& z) {
    if (F.epsilon == 0.0) return z;
    Field out = z;
    const Grid& g = z.grid();
    const double s = 1.0 + F.epsilon * F.c0;
    for (int c = 0; c < z.components(); ++c)
        for (std::size_t k = 0; k < g.nodes(); ++k)
            out(c, k) = s * z(c, k) + F.epsilon * F.sigma0(g.node_point(k), t);
    return out;
}

/// F_eps(t)^2 z = z + 2 eps c0 z + eps^2 c0^2 z + eps^2 c0 sigma0 + 2 eps sigma0.
inline Field eps_map_squared(const EpsilonShift& F, double t, const Field& z) {
    if (F.epsilon == 0.0) return z;
    Field out = z;
    const Grid& g = z.grid();
    const double e = F.epsilon;
    const double c0 = F.c0;
    for (int c = 0; c < z.components(); ++c)
        for (std::size_t k = 0; k < g.nodes(); ++k) {
            const double zz = z(c, k);
            const double sig = F.sigma0(g.node_point(k), t);
            out(c, k) = zz + 2.0 * e * c0 * zz + e * e * c0 * c0 * zz + e * e * c0 * sig + 2.0 * e * sig;
        }
    return out;
}

struct InclusionResult {
    bool included = true;
    std::optional<Field> witness;
    int probes_checked = 0;
};

namespace detail {

inline Field random_field(const Grid& g, int comps, std::mt19937_64& rng, double amplitude) {
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    Field f(g, comps);
    for (auto& v : f.values()) v = u(rng);
    return f;
}

// Fields that saturate the defining inequality of K(t): the extreme members
// of the pointwise families and maximal-slope members of the gradient bound.
inline std::vector<Field> saturating_fields(const ConstraintSet& K, double t, int comps, std::mt19937_64& rng) {
    const Grid& g = K.grid();
    std::vector<Field> out;
    switch (K.family()) {
    case Family::Unconstrained: break;
    case Family::LowerObstacle:
    case Family::UpperObstacle: {
        const auto rho = K.node_values(t);
        Field f(g, comps);
        for (int c = 0; c < comps; ++c)
            for (std::size_t k = 0; k < g.nodes(); ++k) f(c, k) = rho[k];
        out.push_back(f);
        break;
    }
    case Family::VectorL1Obstacle: {
        const auto psi = K.node_values(t);
        std::vector<std::vector<double>> patterns;
        if (comps == 1) {
            patterns = {{1.0}, {-1.0}};
        } else {
            for (int c = 0; c < comps; ++c) {
                std::vector<double> p(comps, 0.0), q(comps, 0.0);
                p[c] = 1.0;
                q[c] = -1.0;
                patterns.push_back(p);
                patterns.push_back(q);
            }
            for (double s1 : {1.0, -1.0})
                for (double s2 : {1.0, -1.0}) {
                    std::vector<double> p(comps, 0.0);
                    p[0] = 0.5 * s1;
                    p[1] = 0.5 * s2;
                    patterns.push_back(p);
                }
        }
        for (const auto& pat : patterns) {
            Field f(g, comps);
            for (int c = 0; c < comps; ++c)
                for (std::size_t k = 0; k < g.nodes(); ++k) f(c, k) = pat[c] * psi[k];
            out.push_back(f);
        }
        break;
    }
    case Family::GradientBound: {
        const auto psi = K.cell_values(t);
        for (int r = 0; r < 4; ++r) {
            Field f = random_field(g, 1, rng, 1.0);
            const auto mag = cell_magnitudes(g, forward_gradient(g, f.component(0)));
            double ratio = 0.0;
            for (std::size_t c = 0; c < mag.size(); ++c) ratio = std::max(ratio, mag[c] / psi[c]);
            out.push_back((1.0 / ratio) * f);
        }
        break;
    }
    }
    return out;
}

inline Field random_member(const ConstraintSet& K, double t, int comps, std::mt19937_64& rng) {
    const Grid& g = K.grid();
    switch (K.family()) {
    case Family::Unconstrained: return random_field(g, comps, rng, 1.0);
    case Family::LowerObstacle:
    case Family::UpperObstacle: {
        const auto rho = K.node_values(t);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const double sign = K.family() == Family::LowerObstacle ? 1.0 : -1.0;
        Field f(g, comps);
        for (int c = 0; c < comps; ++c)
            for (std::size_t k = 0; k < g.nodes(); ++k) f(c, k) = rho[k] + sign * u(rng);
        return f;
    }
    case Family::VectorL1Obstacle: {
        double scale = 0.0;
        for (double v : K.node_values(t)) scale = std::max(scale, v);
        return project(K, t, random_field(g, comps, rng, 2.0 * scale));
    }
    case Family::GradientBound: {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const auto sat = saturating_fields(K, t, 1, rng);
        return u(rng) * sat.front();
    }
    }
    return Field(g, comps);
}

} // namespace detail

/**
 * Checks F_eps(t)(K_from(t)) subset K_to(t) on a finite probe family: the
 * fields saturating K_from plus `samples` random members of K_from. Returns
 * the first mapped probe that falls outside K_to as a witness.
 */
inline InclusionResult check_inclusion(const EpsilonShift& F, const ConstraintSet& K_from, const ConstraintSet& K_to,
                                       double t, int samples, int components, std::mt19937_64& rng) {
    if (!(K_from.grid() == K_to.grid())) throw DimensionError("check_inclusion: sets live on different grids");
    InclusionResult res;
    auto probes = detail::saturating_fields(K_from, t, components, rng);
    for (int s = 0; s < samples; ++s) probes.push_back(detail::random_member(K_from, t, components, rng));
    for (const auto& p : probes) {
        ++res.probes_checked;
        Field mapped = eps_map(F, t, p);
        if (!contains(K_to, t, mapped, 1e-12)) {
            res.included = false;
            res.witness = std::move(mapped);
            return res;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Strong-class modulus: for z in K(s) build z~ in K(t) with
//   |z~ - z|_H <= |a(t)-a(s)| (1 + |z|_V),  |z~|_V^2 - |z|_V^2 <= |b(t)-b(s)| (1 + |z|_V^2).

struct StrongClassCert {
    double alpha_increment = 0.0;
    double beta_increment = 0.0;
    Field shifted;
};

inline StrongClassCert strong_modulus(const ConstraintSet& K, double s, double t, const Field& z) {
    require_grid(K, z, "strong_modulus");
    if (!contains(K, s, z, 1e-10)) throw PreconditionError("strong_modulus: z is not in K(s)");
    const Grid& g = z.grid();
    StrongClassCert cert;
    switch (K.family()) {
    case Family::Unconstrained: cert.shifted = z; break;
    case Family::LowerObstacle:
    case Family::UpperObstacle: {
        Field d(g, z.components());
        for (int c = 0; c < z.components(); ++c)
            for (std::size_t k = 0; k < g.nodes(); ++k) {
                const Point p = g.node_point(k);
                d(c, k) = K.obstacle()(p, t) - K.obstacle()(p, s);
            }
        cert.shifted = z + d;
        const double dv = norm_v(d);
        cert.alpha_increment = norm_h(d);
        // 2(z,d)_V + |d|_V^2 <= (|d|_V + |d|_V^2)(1 + |z|_V^2)
        cert.beta_increment = dv + dv * dv;
        break;
    }
    case Family::VectorL1Obstacle:
    case Family::GradientBound: {
        const auto ps = K.family() == Family::GradientBound ? K.cell_values(s) : K.node_values(s);
        const auto pt = K.family() == Family::GradientBound ? K.cell_values(t) : K.node_values(t);
        double modulus = 0.0;
        for (std::size_t i = 0; i < ps.size(); ++i) modulus = std::max(modulus, std::abs(ps[i] - pt[i]));
        const double ratio = modulus / K.c_psi();
        if (ratio >= 1.0) throw NotApplicableError("strong_modulus: |psi(s)-psi(t)| exceeds c_psi");
        cert.shifted = (1.0 - ratio) * z;
        cert.alpha_increment = ratio * poincare_constant(g);
        cert.beta_increment = 0.0;
        break;
    }
    }
    // Postconditions.
    const double zv = norm_v(z);
    const double slack = 1e-12 * (1.0 + zv * zv);
    if (!contains(K, t, cert.shifted, 1e-10)) throw Error("strong_modulus: shifted field left K(t)");
    if (norm_h(cert.shifted - z) > cert.alpha_increment * (1.0 + zv) + slack)
        throw Error("strong_modulus: H-increment bound violated");
    const double sv = norm_v(cert.shifted);
    if (sv * sv - zv * zv > cert.beta_increment * (1.0 + zv * zv) + slack)
        throw Error("strong_modulus: V-energy bound violated");
    return cert;
}

// ---------------------------------------------------------------------------
// kappa-ball condition kappa B_W(0) subset K(t).

/// Shapes used as probes: a centred tent, a sine bump and a trapezoidal plateau.
enum class ProbeNorm {
    Sup,       ///< normalised to unit max of the nodal l1 magnitude
    Lipschitz, ///< normalised to unit max cell-gradient magnitude (scalar fields)
};

inline std::vector<Field> shape_probes(const Grid& g, int comps, ProbeNorm norm) {
    auto tent = [&](const Point& p) {
        double v = 1.0;
        v *= 1.0 - std::abs(2.0 * p.x / g.extent(0) - 1.0);
        if (g.dim() == 2) v *= 1.0 - std::abs(2.0 * p.y / g.extent(1) - 1.0);
        return v;
    };
    auto bump = [&](const Point& p) {
        double v = std::sin(std::numbers::pi * p.x / g.extent(0));
        if (g.dim() == 2) v *= std::sin(std::numbers::pi * p.y / g.extent(1));
        return v;
    };
    auto plateau = [&](const Point& p) { return std::min(1.0, 3.0 * tent(p)); };

    std::vector<Field> base;
    for (auto fn : {std::function<double(const Point&)>(tent), std::function<double(const Point&)>(bump),
                    std::function<double(const Point&)>(plateau)})
        base.push_back(Field::from_function(g, 1, [&](int, const Point& p) { return fn(p); }));

    std::vector<Field> out;
    for (const auto& b : base) {
        std::vector<std::vector<double>> patterns;
        if (comps == 1) patterns = {{1.0}, {-1.0}};
        else
            for (double s1 : {1.0, -1.0}) {
                patterns.push_back({s1, 0.0});
                patterns.push_back({0.0, s1});
                patterns.push_back({0.5 * s1, 0.5});
                patterns.push_back({0.5 * s1, -0.5});
            }
        for (const auto& pat : patterns) {
            Field f(g, comps);
            for (int c = 0; c < comps; ++c)
                for (std::size_t k = 0; k < g.nodes(); ++k) f(c, k) = pat[c] * b(0, k);
            double scale = 0.0;
            if (norm == ProbeNorm::Sup) {
                for (std::size_t k = 0; k < g.nodes(); ++k) {
                    double l1 = 0.0;
                    for (int c = 0; c < comps; ++c) l1 += std::abs(f(c, k));
                    scale = std::max(scale, l1);
                }
            } else {
                if (comps != 1) throw DimensionError("shape_probes: Lipschitz normalisation needs scalar fields");
                for (double m : cell_magnitudes(g, forward_gradient(g, f.component(0)))) scale = std::max(scale, m);
            }
            out.push_back((1.0 / scale) * f);
        }
    }
    return out;
}

/**
 * Exact maximisers over the unit ball of |.|_V, the predual of the discrete
 * H^{-1} norm. For pointwise families these are normalised discrete Green's
 * functions; for the gradient bound they are A1^{-1} D_c^T d with d the
 * top eigenvector of D_c A1^{-1} D_c^T. Any K(t) containing all scaled probes
 * therefore contains the whole scaled ball.
 */
inline std::vector<Field> energy_ball_probes(const Grid& g, int comps, Family family) {
    std::vector<Field> out;
    auto normalise = [](Field f) {
        const double nv = norm_v(f);
        return (1.0 / nv) * f;
    };
    if (family == Family::GradientBound) {
        if (comps != 1) throw DimensionError("energy_ball_probes: gradient family needs scalar fields");
        const int d = g.dim();
        for (std::size_t c = 0; c < g.cells(); ++c) {
            std::vector<Field> dirs;
            for (int a = 0; a < d; ++a) {
                std::vector<double> q(g.cells() * d, 0.0);
                q[c * d + a] = 1.0;
                Field rhs(g, 1, gradient_adjoint(g, q));
                if (norm_sup(rhs) == 0.0) {
                    dirs.push_back(rhs);
                    continue;
                }
                dirs.push_back(laplacian_solve(rhs));
            }
            Field best(g, 1);
            if (d == 1) {
                best = dirs[0];
            } else {
                // 2x2 matrix M_ab = e_a^T D_c A^{-1} D_c^T e_b.
                const auto gx = forward_gradient(g, dirs[0].component(0));
                const auto gy = forward_gradient(g, dirs[1].component(0));
                const double m00 = gx[c * 2], m01 = gy[c * 2], m11 = gy[c * 2 + 1];
                const double tr = m00 + m11;
                const double det = m00 * m11 - m01 * m01;
                const double lam = 0.5 * tr + std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
                double vx = m01, vy = lam - m00;
                if (std::abs(vx) + std::abs(vy) < 1e-14 * (std::abs(lam) + 1.0)) {
                    vx = m00 >= m11 ? 1.0 : 0.0;
                    vy = m00 >= m11 ? 0.0 : 1.0;
                }
                best = vx * dirs[0] + vy * dirs[1];
                if (norm_sup(best) == 0.0) best = dirs[0];
            }
            if (norm_sup(best) == 0.0) continue;
            Field p = normalise(best);
            out.push_back(p);
            out.push_back(-1.0 * p);
        }
        return out;
    }
    for (std::size_t k = 0; k < g.nodes(); ++k) {
        Field e(g, 1);
        e(0, k) = 1.0;
        const Field green = laplacian_solve(e);
        if (comps == 1) {
            Field p = normalise(green);
            out.push_back(p);
            out.push_back(-1.0 * p);
            continue;
        }
        for (int c = 0; c < comps; ++c)
            for (double s : {1.0, -1.0}) {
                Field f(g, comps);
                for (std::size_t j = 0; j < g.nodes(); ++j) f(c, j) = s * green(0, j);
                out.push_back(normalise(f));
            }
        if (comps >= 2)
            for (double s1 : {1.0, -1.0})
                for (double s2 : {1.0, -1.0}) {
                    Field f(g, comps);
                    for (std::size_t j = 0; j < g.nodes(); ++j) {
                        f(0, j) = s1 * green(0, j);
                        f(1, j) = s2 * green(0, j);
                    }
                    out.push_back(normalise(f));
                }
    }
    return out;
}

/**
 * Largest kappa (bisection, 1e-6 relative) with kappa * w in K(t) for every
 * probe w. Returns the feasible end of the final bracket, 0 if no positive
 * scale is feasible and +inf for unconstrained sets.
 */
inline double estimate_kappa(const ConstraintSet& K, double t, const std::vector<Field>& probes) {
    if (K.family() == Family::Unconstrained) return std::numeric_limits<double>::infinity();
    auto feasible = [&](double kappa) {
        for (const auto& w : probes)
            if (!contains(K, t, kappa * w, 0.0)) return false;
        return true;
    };
    double lo = 0.0;
    double hi = 1.0;
    if (feasible(hi)) {
        lo = hi;
        while (feasible(hi * 2.0)) {
            hi *= 2.0;
            lo = hi;
            if (hi > 1e12) return std::numeric_limits<double>::infinity();
        }
        hi *= 2.0;
    } else {
        while (!feasible(hi * 0.5)) {
            hi *= 0.5;
            if (hi < 1e-12) return 0.0;
        }
        lo = hi * 0.5;
    }
    while (hi - lo > 1e-6 * hi) {
        const double mid = 0.5 * (lo + hi);
        if (feasible(mid)) lo = mid;
        else hi = mid;
    }
    return lo;
}

/// kappa over the unit ball of the W* proxy predual (energy_ball_probes).
inline double estimate_kappa(const ConstraintSet& K, double t) {
    const int comps = K.family() == Family::VectorL1Obstacle ? 2 : 1;
    return estimate_kappa(K, t, energy_ball_probes(K.grid(), comps, K.family()));
}

} // namespace pvi
