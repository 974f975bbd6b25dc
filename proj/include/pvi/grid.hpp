#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pvi/errors.hpp"
#include "pvi/linalg.hpp"

namespace pvi {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

/**
 * Uniform tensor grid on [0, Lx] (1D) or [0, Lx] x [0, Ly] (2D) with
 * homogeneous Dirichlet data. Only the n (or n*n) interior nodes carry
 * unknowns; boundary values are identically zero and never stored.
 *
 * Node k of a 2D grid is (i, j) with k = i + n*j, located at
 * ((i+1)*hx, (j+1)*hy).
 */
class Grid {
public:
    Grid() = default;

    Grid(int dim, int n, std::array<double, 2> extent = {1.0, 1.0})
        : dim_(dim), n_(n), extent_(extent) {
        if (dim != 1 && dim != 2) throw DomainError("grid dimension must be 1 or 2");
        if (n < 1) throw DomainError("grid needs at least one interior node per axis");
        if (!(extent[0] > 0.0) || (dim == 2 && !(extent[1] > 0.0)))
            throw DomainError("grid extent must be positive");
        if (dim == 1) extent_[1] = 1.0;
    }

    static Grid line(int n, double length = 1.0) { return Grid(1, n, {length, 1.0}); }
    static Grid rectangle(int n, double lx = 1.0, double ly = 1.0) { return Grid(2, n, {lx, ly}); }

    int dim() const noexcept { return dim_; }
    int n() const noexcept { return n_; }
    double extent(int axis) const noexcept { return extent_[axis]; }
    double h(int axis = 0) const noexcept { return extent_[axis] / (n_ + 1); }

    /// Volume of one grid cell, i.e. the nodal quadrature weight.
    double cell_volume() const noexcept { return dim_ == 1 ? h(0) : h(0) * h(1); }

    std::size_t nodes() const noexcept {
        return dim_ == 1 ? static_cast<std::size_t>(n_) : static_cast<std::size_t>(n_) * n_;
    }

    /// Number of forward-difference cells, boundary-adjacent ones included.
    std::size_t cells() const noexcept {
        const auto m = static_cast<std::size_t>(n_ + 1);
        return dim_ == 1 ? m : m * m;
    }

    Point node_point(std::size_t k) const noexcept {
        if (dim_ == 1) return {(static_cast<double>(k) + 1.0) * h(0), 0.0};
        const auto i = k % n_;
        const auto j = k / n_;
        return {(static_cast<double>(i) + 1.0) * h(0), (static_cast<double>(j) + 1.0) * h(1)};
    }

    /// Centre of forward-difference cell c (cells are indexed like nodes
    /// on an (n+1)-wide lattice starting at the lower-left boundary node).
    Point cell_point(std::size_t c) const noexcept {
        if (dim_ == 1) return {(static_cast<double>(c) + 0.5) * h(0), 0.0};
        const auto m = static_cast<std::size_t>(n_ + 1);
        return {(static_cast<double>(c % m) + 0.5) * h(0), (static_cast<double>(c / m) + 0.5) * h(1)};
    }

    /// Points on the boundary at which obstacle traces are checked.
    std::vector<Point> boundary_points() const {
        std::vector<Point> pts;
        if (dim_ == 1) {
            pts.push_back({0.0, 0.0});
            pts.push_back({extent_[0], 0.0});
            return pts;
        }
        for (int i = 0; i <= n_ + 1; ++i) {
            const double x = i * h(0);
            const double y = i * h(1);
            pts.push_back({x, 0.0});
            pts.push_back({x, extent_[1]});
            pts.push_back({0.0, y});
            pts.push_back({extent_[0], y});
        }
        return pts;
    }

    /// Measure of the domain as seen by nodal quadrature.
    double discrete_measure() const noexcept { return static_cast<double>(nodes()) * cell_volume(); }

    friend bool operator==(const Grid& a, const Grid& b) noexcept {
        return a.dim_ == b.dim_ && a.n_ == b.n_ && a.extent_[0] == b.extent_[0] &&
               (a.dim_ == 1 || a.extent_[1] == b.extent_[1]);
    }

private:
    int dim_ = 1;
    int n_ = 1;
    std::array<double, 2> extent_{1.0, 1.0};
};

/**
 * Nodal values of a 1- or 2-component function on a Grid.
 * Storage is component-major: value(c, k) = values()[c * nodes + k].
 */
class Field {
public:
    Field() = default;

    Field(const Grid& grid, int components, double fill = 0.0)
        : grid_(grid), components_(components),
          values_(static_cast<std::size_t>(components) * grid.nodes(), fill) {
        if (components < 1) throw DimensionError("field needs at least one component");
    }

    Field(const Grid& grid, int components, std::vector<double> values)
        : grid_(grid), components_(components), values_(std::move(values)) {
        if (components < 1) throw DimensionError("field needs at least one component");
        if (values_.size() != static_cast<std::size_t>(components) * grid.nodes())
            throw DimensionError("field value count does not match grid");
    }

    template <class Fn>
    static Field from_function(const Grid& grid, int components, Fn&& fn) {
        Field f(grid, components);
        for (int c = 0; c < components; ++c)
            for (std::size_t k = 0; k < grid.nodes(); ++k) f(c, k) = fn(c, grid.node_point(k));
        return f;
    }

    const Grid& grid() const noexcept { return grid_; }
    int components() const noexcept { return components_; }
    std::size_t nodes() const noexcept { return grid_.nodes(); }
    std::size_t size() const noexcept { return values_.size(); }

    double& operator()(int c, std::size_t k) noexcept { return values_[c * grid_.nodes() + k]; }
    double operator()(int c, std::size_t k) const noexcept { return values_[c * grid_.nodes() + k]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::vector<double>& data() noexcept { return values_; }
    const std::vector<double>& data() const noexcept { return values_; }

    std::span<double> component(int c) noexcept {
        return std::span<double>(values_).subspan(c * grid_.nodes(), grid_.nodes());
    }
    std::span<const double> component(int c) const noexcept {
        return std::span<const double>(values_).subspan(c * grid_.nodes(), grid_.nodes());
    }

    bool finite() const noexcept {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    bool same_shape(const Field& o) const noexcept {
        return components_ == o.components_ && grid_ == o.grid_;
    }

    void require_same_shape(const Field& o, const char* where) const {
        if (!same_shape(o)) throw DimensionError(std::string(where) + ": field shape mismatch");
    }

    Field& operator+=(const Field& o) {
        require_same_shape(o, "operator+=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    Field& operator-=(const Field& o) {
        require_same_shape(o, "operator-=");
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    Field& operator*=(double s) noexcept {
        for (auto& v : values_) v *= s;
        return *this;
    }

    friend Field operator+(Field a, const Field& b) { return a += b; }
    friend Field operator-(Field a, const Field& b) { return a -= b; }
    friend Field operator*(double s, Field a) { return a *= s; }
    friend Field operator*(Field a, double s) { return a *= s; }

private:
    Grid grid_;
    int components_ = 1;
    std::vector<double> values_;
};

/// Uniform partition of [0, T] into M steps.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t_final, int steps) : t_final_(t_final), steps_(steps) {
        if (!(t_final > 0.0)) throw DomainError("t_final must be positive");
        if (steps < 1) throw DomainError("time grid needs at least one step");
    }

    double t_final() const noexcept { return t_final_; }
    int steps() const noexcept { return steps_; }
    double tau() const noexcept { return t_final_ / steps_; }
    double t(int m) const noexcept { return m == steps_ ? t_final_ : m * tau(); }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
        return a.t_final_ == b.t_final_ && a.steps_ == b.steps_;
    }

private:
    double t_final_ = 1.0;
    int steps_ = 1;
};

// ---------------------------------------------------------------------------
// Discrete norm triple V, H, W*.

/// (u, v)_H = h^dim * sum u.v
inline double mass_inner(const Field& u, const Field& v) {
    u.require_same_shape(v, "mass_inner");
    double s = 0.0;
    const auto a = u.values();
    const auto b = v.values();
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return u.grid().cell_volume() * s;
}

inline double norm_h(const Field& u) { return std::sqrt(std::max(0.0, mass_inner(u, u))); }

inline double norm_sup(const Field& u) noexcept {
    double m = 0.0;
    for (double v : u.values()) m = std::max(m, std::abs(v));
    return m;
}

namespace detail {

// -div(a grad u) on one component with face-averaged coefficients. A face
// between an interior node and the boundary takes the interior value.
inline void stiffness_component(const Grid& g, std::span<const double> a, std::span<const double> u,
                                std::span<double> out) {
    const int n = g.n();
    if (g.dim() == 1) {
        const double ih2 = 1.0 / (g.h(0) * g.h(0));
        for (int i = 0; i < n; ++i) {
            const double ui = u[i];
            const double ul = i > 0 ? u[i - 1] : 0.0;
            const double ur = i + 1 < n ? u[i + 1] : 0.0;
            const double al = i > 0 ? 0.5 * (a[i] + a[i - 1]) : a[i];
            const double ar = i + 1 < n ? 0.5 * (a[i] + a[i + 1]) : a[i];
            out[i] = ih2 * (al * (ui - ul) + ar * (ui - ur));
        }
        return;
    }
    const double ihx2 = 1.0 / (g.h(0) * g.h(0));
    const double ihy2 = 1.0 / (g.h(1) * g.h(1));
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int k = i + n * j;
            const double ui = u[k];
            const double ak = a[k];
            const double uw = i > 0 ? u[k - 1] : 0.0;
            const double ue = i + 1 < n ? u[k + 1] : 0.0;
            const double us = j > 0 ? u[k - n] : 0.0;
            const double un = j + 1 < n ? u[k + n] : 0.0;
            const double aw = i > 0 ? 0.5 * (ak + a[k - 1]) : ak;
            const double ae = i + 1 < n ? 0.5 * (ak + a[k + 1]) : ak;
            const double as = j > 0 ? 0.5 * (ak + a[k - n]) : ak;
            const double an = j + 1 < n ? 0.5 * (ak + a[k + n]) : ak;
            out[k] = ihx2 * (aw * (ui - uw) + ae * (ui - ue)) + ihy2 * (as * (ui - us) + an * (ui - un));
        }
    }
}

inline void unit_stiffness_component(const Grid& g, std::span<const double> u, std::span<double> out) {
    const std::vector<double> ones(g.nodes(), 1.0);
    stiffness_component(g, ones, u, out);
}

} // namespace detail

/**
 * Nodal action of -div(a grad u), applied component by component. The
 * coefficient field must have either one component (shared) or as many
 * components as u.
 */
inline Field stiffness_apply(const Field& a, const Field& u) {
    if (!(a.grid() == u.grid())) throw DimensionError("stiffness_apply: grid mismatch");
    if (a.components() != 1 && a.components() != u.components())
        throw DimensionError("stiffness_apply: coefficient component count mismatch");
    for (double v : a.values())
        if (!(v > 0.0)) throw DomainError("stiffness_apply: coefficient must be positive");
    Field out(u.grid(), u.components());
    for (int c = 0; c < u.components(); ++c)
        detail::stiffness_component(u.grid(), a.component(a.components() == 1 ? 0 : c), u.component(c),
                                    out.component(c));
    return out;
}

/// Unit-coefficient stiffness, the discrete Dirichlet Laplacian.
inline Field laplacian_apply(const Field& u) {
    Field out(u.grid(), u.components());
    for (int c = 0; c < u.components(); ++c)
        detail::unit_stiffness_component(u.grid(), u.component(c), out.component(c));
    return out;
}

/// |u|_V^2 = (A1 u, u)_H with the unit-coefficient stiffness A1.
inline double norm_v(const Field& u) { return std::sqrt(std::max(0.0, mass_inner(laplacian_apply(u), u))); }

/// Solves A1 w = f component-wise by conjugate gradients.
inline Field laplacian_solve(const Field& f, double rel_tol = 1e-12) {
    Field w(f.grid(), f.components());
    const Grid& g = f.grid();
    const auto cap = static_cast<int>(10 * g.nodes());
    for (int c = 0; c < f.components(); ++c) {
        auto op = [&g](std::span<const double> x, std::span<double> y) {
            detail::unit_stiffness_component(g, x, y);
        };
        const auto res = conjugate_gradient(op, f.component(c), w.component(c), rel_tol, cap);
        if (!res.converged)
            throw SolverError("laplacian_solve: CG did not converge", res.relative_residual);
    }
    return w;
}

/// ||f||_{W*,h}^2 = f^T A1^{-1} f, the discrete H^{-1} norm.
inline double dual_norm_wstar(const Field& f) {
    if (norm_sup(f) == 0.0) return 0.0;
    return std::sqrt(std::max(0.0, mass_inner(f, laplacian_solve(f))));
}

/// Smallest eigenvalue of the unit Dirichlet stiffness (closed form).
inline double laplacian_min_eigenvalue(const Grid& g) {
    double lam = 0.0;
    for (int axis = 0; axis < g.dim(); ++axis) {
        const double h = g.h(axis);
        const double s = std::sin(std::numbers::pi * h / (2.0 * g.extent(axis)));
        lam += 4.0 / (h * h) * s * s;
    }
    return lam;
}

/// Discrete Poincare constant: |u|_H <= C_P |u|_V.
inline double poincare_constant(const Grid& g) { return 1.0 / std::sqrt(laplacian_min_eigenvalue(g)); }

} // namespace pvi
