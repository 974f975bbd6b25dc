#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pvi/constraints.hpp"
#include "pvi/errors.hpp"
#include "pvi/grid.hpp"
#include "pvi/obstacles.hpp"
#include "pvi/operators.hpp"
#include "pvi/stepper.hpp"

namespace pvi {

/// Named built-in obstacle shape; `table` reads x[,y],t,value from a CSV file.
struct ObstacleSpec {
    std::string kind = "constant";
    double value = 1.0;
    double slope = 0.0;
    double base = 1.0;
    double amplitude = 0.0;
    double speed = 0.0;
    double width = 0.1;
    double x0 = 0.5;
    double curvature = 0.0;
    double cx = 0.5;
    double cy = 0.5;
    std::string table;

    SpaceTimeFn build(int dim) const {
        if (kind == "constant") return obstacles::constant(value);
        if (kind == "linear_in_t") return obstacles::linear_in_t(value, slope);
        if (kind == "traveling_bump") return obstacles::traveling_bump(base, amplitude, speed, width, x0);
        if (kind == "notch") return obstacles::notch(base, curvature, {cx, dim == 2 ? cy : 0.0});
        if (kind == "table") return obstacles::from_table(obstacles::ObstacleTable::load_csv(table));
        throw ConfigError("[constraint] obstacle: unknown kind '" + kind + "'");
    }
};

struct CoefficientSpec {
    std::string kind = "constant";
    double a0 = 1.0;
    double beta = 0.0;
    double slope = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    bool depends_on_state() const { return kind != "constant" && (beta != 0.0 || slope != 0.0); }

    CoefficientFn build(const std::string& section) const {
        if (kind == "constant") return coefficients::constant(a0);
        if (kind == "rational") return coefficients::rational(a0, beta);
        if (kind == "affine_clipped") return coefficients::affine_clipped(a0, slope, lo, hi);
        throw ConfigError("[" + section + "] coefficient: unknown kind '" + kind + "'");
    }
};

/// Source f_c(x,t) = amplitude_c * s(x) * g(t) with s = sin(pi x/L)[sin(pi y/L)]
/// and g = 1 (steady) or cos(2 pi frequency t) (oscillating).
struct SourceSpec {
    std::string kind = "zero";
    std::string temporal = "steady";
    double amplitude = 0.0;
    double amplitude2 = 0.0;
    double frequency = 1.0;
};

struct InitialSpec {
    std::string kind = "zero";
    double amplitude = 0.0;
};

struct DiagnosticsToggles {
    bool constraint = true;
    bool complementarity = true;
    bool energy = true;
    bool z_membership = true;
    bool tv_bound = true;
    bool vi = true;
    bool contraction = true;
    int contraction_pairs = 5;
    int vi_intervals = 20;
    int complementarity_probes = 10;
};

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"application1", "application2", "example31", "example32",
                                                "unconstrained"};
    return names;
}

struct Scenario {
    std::string name = "unconstrained";
    std::uint64_t seed = 1;
    int dim = 1;
    int n = 32;
    double extent_x = 1.0;
    double extent_y = 1.0;
    double t_final = 0.5;
    int steps = 100;
    Family family = Family::Unconstrained;
    ObstacleSpec obstacle;
    double c_psi = 1.0;
    CoefficientSpec diffusion;
    std::optional<CoefficientSpec> reaction;
    OperatorBounds bounds;
    InitialSpec initial;
    SourceSpec source;
    SolverConfig solver;
    DiagnosticsToggles diagnostics;

    int components() const { return name == "application1" ? 2 : 1; }

    Grid grid() const { return dim == 1 ? Grid::line(n, extent_x) : Grid::rectangle(n, extent_x, extent_y); }
    TimeGrid time() const { return TimeGrid(t_final, steps); }

    /// The constraint with its obstacle shifted by `offset` (psi + offset or
    /// rho + offset).
    ConstraintSet constraint(double offset = 0.0) const {
        const Grid g = grid();
        if (family == Family::Unconstrained) return ConstraintSet::unconstrained(g);
        SpaceTimeFn fn = obstacle.build(dim);
        if (offset != 0.0) fn = obstacles::shifted(std::move(fn), offset);
        switch (family) {
        case Family::LowerObstacle: return ConstraintSet::lower_obstacle(g, fn);
        case Family::UpperObstacle: return ConstraintSet::upper_obstacle(g, fn);
        case Family::VectorL1Obstacle: return ConstraintSet::vector_l1(g, fn, c_psi, t_final);
        case Family::GradientBound: return ConstraintSet::gradient_bound(g, fn, c_psi, t_final);
        default: break;
        }
        throw ConfigError("[constraint] family: unsupported");
    }

    /// Offset of the n-th approximating constraint: psi_n = psi + 1/n for the
    /// l1 and gradient families, rho_n = rho - 1/n for both obstacle families.
    double approximation_offset(int level_n) const {
        const double d = 1.0 / level_n;
        return family == Family::VectorL1Obstacle || family == Family::GradientBound ? d : -d;
    }

    SemimonotoneOp op() const {
        const CoefficientFn a = diffusion.build("operator");
        if (components() == 2) return SemimonotoneOp::application1(a, a, bounds.a_star, bounds.a_upper);
        SemimonotoneOp o;
        o.kind = OperatorKind::Application2;
        o.diffusion = {a};
        if (reaction) o.reaction = reaction->build("operator");
        o.bounds = bounds;
        o.validate();
        return o;
    }

    bool state_dependent() const { return diffusion.depends_on_state() || (reaction && reaction->depends_on_state()); }

    double shape(const Point& p) const {
        double s = std::sin(std::numbers::pi * p.x / extent_x);
        if (dim == 2) s *= std::sin(std::numbers::pi * p.y / extent_y);
        return s;
    }

    Field initial_state() const {
        const Grid g = grid();
        if (initial.kind == "zero") return Field(g, components());
        if (initial.kind == "sine")
            return Field::from_function(g, components(), [&](int, const Point& p) { return initial.amplitude * shape(p); });
        throw ConfigError("[initial] kind: unknown '" + initial.kind + "'");
    }

    FieldFn source_fn() const {
        const Grid g = grid();
        const int comps = components();
        if (source.kind == "zero") return zero_source(g, comps);
        if (source.kind != "sine") throw ConfigError("[source] kind: unknown '" + source.kind + "'");
        const SourceSpec s = source;
        const Scenario self = *this;
        return [g, comps, s, self](double t) {
            const double gt = s.temporal == "oscillating" ? std::cos(2.0 * std::numbers::pi * s.frequency * t) : 1.0;
            return Field::from_function(g, comps, [&](int c, const Point& p) {
                return (c == 0 ? s.amplitude : s.amplitude2) * self.shape(p) * gt;
            });
        };
    }

    /// Cross-field consistency, checked before any computation.
    void validate() const {
        auto fail = [](const std::string& what) { throw ConfigError(what); };
        bool known = false;
        for (const auto& s : scenario_names()) known = known || s == name;
        if (!known) fail("[scenario] name: unknown scenario '" + name + "'");
        if (dim != 1 && dim != 2) fail("[grid] dim: must be 1 or 2");
        if (n < 1) fail("[grid] n: must be at least 1");
        if (!(extent_x > 0.0) || !(extent_y > 0.0)) fail("[grid] extent: must be positive");
        if (!(t_final > 0.0)) fail("[time] t_final: must be positive");
        if (steps < 1) fail("[time] steps: must be at least 1");
        const std::map<std::string, Family> expected{{"application1", Family::VectorL1Obstacle},
                                                     {"application2", Family::GradientBound},
                                                     {"example31", Family::LowerObstacle},
                                                     {"example32", Family::UpperObstacle},
                                                     {"unconstrained", Family::Unconstrained}};
        if (expected.at(name) != family)
            fail("[constraint] family: scenario " + name + " requires " + to_string(expected.at(name)));
        if (name == "application2" && !reaction) fail("[operator] reaction: application2 requires a reaction term");
        if (name != "application2" && reaction) fail("[operator] reaction: only application2 has a reaction term");
        if ((family == Family::VectorL1Obstacle || family == Family::GradientBound) && !(c_psi > 0.0))
            fail("[constraint] c_psi: must be positive");
        if (source.temporal != "steady" && source.temporal != "oscillating")
            fail("[source] temporal: must be steady or oscillating");
        try {
            solver.validate();
            (void)op();
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            fail(std::string("[solver/operator] ") + e.what());
        }
    }
};

namespace detail {

/// Typed access to a parsed INI tree that rejects unknown sections and keys.
class IniReader {
public:
    explicit IniReader(boost::property_tree::ptree tree) : tree_(std::move(tree)) {}

    template <class T>
    void get(const std::string& section, const std::string& key, T& out) {
        used_.insert(section + "." + key);
        const auto node = tree_.get_child_optional(boost::property_tree::ptree::path_type(section + "." + key, '.'));
        if (!node) return;
        const std::string text = node->data();
        if constexpr (std::is_same_v<T, std::string>) {
            out = text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1" || text == "yes") out = true;
            else if (text == "false" || text == "0" || text == "no") out = false;
            else throw ConfigError("[" + section + "] " + key + ": expected a boolean, got '" + text + "'");
        } else {
            std::istringstream is(text);
            T v{};
            is >> v;
            if (!is || !(is >> std::ws).eof())
                throw ConfigError("[" + section + "] " + key + ": cannot parse '" + text + "'");
            out = v;
        }
    }

    bool has(const std::string& section, const std::string& key) const {
        return static_cast<bool>(
            tree_.get_child_optional(boost::property_tree::ptree::path_type(section + "." + key, '.')));
    }

    void reject_unknown() const {
        for (const auto& [section, body] : tree_) {
            if (body.empty() && !body.data().empty())
                throw ConfigError("key '" + section + "' must live inside a [section]");
            for (const auto& [key, value] : body)
                if (!used_.count(section + "." + key)) throw ConfigError("[" + section + "] " + key + ": unknown key");
        }
    }

private:
    boost::property_tree::ptree tree_;
    std::set<std::string> used_;
};

inline Family parse_family(const std::string& s) {
    if (s == "none") return Family::Unconstrained;
    if (s == "lower_obstacle") return Family::LowerObstacle;
    if (s == "upper_obstacle") return Family::UpperObstacle;
    if (s == "vector_l1") return Family::VectorL1Obstacle;
    if (s == "gradient_bound") return Family::GradientBound;
    throw ConfigError("[constraint] family: unknown '" + s + "'");
}

inline void read_coefficient(IniReader& r, const std::string& section, const std::string& prefix,
                             CoefficientSpec& c) {
    r.get(section, prefix, c.kind);
    r.get(section, prefix + "_a0", c.a0);
    r.get(section, prefix + "_beta", c.beta);
    r.get(section, prefix + "_slope", c.slope);
    r.get(section, prefix + "_lo", c.lo);
    r.get(section, prefix + "_hi", c.hi);
}

} // namespace detail

/**
 * Parses an INI scenario. Sections: scenario, grid, time, constraint,
 * operator, initial, source, solver, diagnostics (see configs/ for the keys).
 * Errors name the offending section and key, or the line for syntax errors.
 */
inline Scenario parse_scenario(std::istream& in, const std::string& source_name = "<config>") {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(source_name + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    detail::IniReader r(std::move(tree));
    Scenario s;
    r.get("scenario", "name", s.name);
    r.get("scenario", "seed", s.seed);

    r.get("grid", "dim", s.dim);
    r.get("grid", "n", s.n);
    r.get("grid", "extent", s.extent_x);
    s.extent_y = s.extent_x;
    r.get("grid", "extent_y", s.extent_y);

    r.get("time", "t_final", s.t_final);
    const bool has_steps = r.has("time", "steps");
    r.get("time", "steps", s.steps);
    if (r.has("time", "tau")) {
        double tau = 0.0;
        r.get("time", "tau", tau);
        if (!(tau > 0.0)) throw ConfigError("[time] tau: must be positive");
        const int m = static_cast<int>(std::lround(s.t_final / tau));
        if (m < 1 || std::abs(m * tau - s.t_final) > 1e-9 * s.t_final)
            throw ConfigError("[time] tau: must divide t_final into whole steps");
        if (has_steps && m != s.steps) throw ConfigError("[time] tau: inconsistent with steps");
        s.steps = m;
    }

    std::string family = "none";
    r.get("constraint", "family", family);
    s.family = detail::parse_family(family);
    auto& o = s.obstacle;
    r.get("constraint", "obstacle", o.kind);
    r.get("constraint", "value", o.value);
    r.get("constraint", "slope", o.slope);
    r.get("constraint", "base", o.base);
    r.get("constraint", "amplitude", o.amplitude);
    r.get("constraint", "speed", o.speed);
    r.get("constraint", "width", o.width);
    r.get("constraint", "x0", o.x0);
    r.get("constraint", "curvature", o.curvature);
    r.get("constraint", "cx", o.cx);
    r.get("constraint", "cy", o.cy);
    r.get("constraint", "table", o.table);
    r.get("constraint", "c_psi", s.c_psi);

    detail::read_coefficient(r, "operator", "diffusion", s.diffusion);
    if (r.has("operator", "reaction")) {
        CoefficientSpec b;
        b.a0 = 0.0;
        detail::read_coefficient(r, "operator", "reaction", b);
        if (b.kind != "none") s.reaction = b;
    }
    r.get("operator", "a_star", s.bounds.a_star);
    r.get("operator", "a_upper", s.bounds.a_upper);
    r.get("operator", "b_star", s.bounds.b_star);
    r.get("operator", "b_upper", s.bounds.b_upper);

    r.get("initial", "kind", s.initial.kind);
    r.get("initial", "amplitude", s.initial.amplitude);

    r.get("source", "kind", s.source.kind);
    r.get("source", "temporal", s.source.temporal);
    r.get("source", "amplitude", s.source.amplitude);
    s.source.amplitude2 = -s.source.amplitude;
    r.get("source", "amplitude2", s.source.amplitude2);
    r.get("source", "frequency", s.source.frequency);

    r.get("solver", "tol_inner", s.solver.tol_inner);
    r.get("solver", "tol_outer", s.solver.tol_outer);
    r.get("solver", "max_inner", s.solver.max_inner);
    r.get("solver", "max_outer", s.solver.max_outer);
    r.get("solver", "relaxation", s.solver.relaxation);

    auto& d = s.diagnostics;
    r.get("diagnostics", "constraint", d.constraint);
    r.get("diagnostics", "complementarity", d.complementarity);
    r.get("diagnostics", "energy", d.energy);
    r.get("diagnostics", "z_membership", d.z_membership);
    r.get("diagnostics", "tv_bound", d.tv_bound);
    r.get("diagnostics", "vi", d.vi);
    r.get("diagnostics", "contraction", d.contraction);
    r.get("diagnostics", "contraction_pairs", d.contraction_pairs);
    r.get("diagnostics", "vi_intervals", d.vi_intervals);
    r.get("diagnostics", "complementarity_probes", d.complementarity_probes);

    r.reject_unknown();
    s.validate();
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse_scenario(in, path);
}

/// The shipped scenarios as INI text (the files under configs/ mirror these).
inline std::string builtin_scenario_text(const std::string& name) {
    static const std::map<std::string, std::string> texts{
        {"application1", R"([scenario]
name = application1
seed = 7
[grid]
dim = 1
n = 32
[time]
t_final = 0.5
steps = 100
[constraint]
family = vector_l1
obstacle = constant
value = 1.0
c_psi = 1.0
[operator]
diffusion = rational
diffusion_a0 = 1.0
diffusion_beta = 0.5
a_star = 1.0
a_upper = 1.5
[source]
kind = sine
amplitude = 40
amplitude2 = -25
)"},
        {"application1_notch", R"([scenario]
name = application1
seed = 9
[grid]
dim = 1
n = 32
[time]
t_final = 0.5
steps = 100
[constraint]
family = vector_l1
obstacle = notch
base = 1.0
curvature = 2000
cx = 0.5
c_psi = 1.0
[operator]
diffusion = rational
diffusion_a0 = 1.0
diffusion_beta = 0.5
a_star = 1.0
a_upper = 1.5
[source]
kind = sine
amplitude = 5000
amplitude2 = -3000
)"},
        {"application2", R"([scenario]
name = application2
seed = 11
[grid]
dim = 1
n = 32
[time]
t_final = 0.5
steps = 100
[constraint]
family = gradient_bound
obstacle = linear_in_t
value = 1.0
slope = 0.5
c_psi = 1.0
[operator]
diffusion = rational
diffusion_a0 = 1.5
diffusion_beta = 0.5
reaction = affine_clipped
reaction_a0 = 0.0
reaction_slope = -0.5
reaction_lo = -1.0
reaction_hi = 1.0
a_star = 1.5
a_upper = 2.0
b_star = 1.0
b_upper = 1.0
[source]
kind = sine
amplitude = 30
)"},
        {"example31", R"([scenario]
name = example31
seed = 3
[grid]
dim = 1
n = 32
[time]
t_final = 0.5
steps = 100
[constraint]
family = lower_obstacle
obstacle = traveling_bump
base = -1.0
amplitude = 0.8
speed = 0.4
width = 0.08
x0 = 0.3
[operator]
diffusion = constant
diffusion_a0 = 1.0
a_star = 1.0
a_upper = 1.0
[source]
kind = sine
amplitude = -60
)"},
        {"example32", R"([scenario]
name = example32
seed = 5
[grid]
dim = 1
n = 32
[time]
t_final = 0.5
steps = 100
[constraint]
family = upper_obstacle
obstacle = notch
base = 1.0
curvature = 2000
cx = 0.5
[operator]
diffusion = constant
diffusion_a0 = 1.0
a_star = 1.0
a_upper = 1.0
[source]
kind = sine
amplitude = 5000
)"},
        {"unconstrained", R"([scenario]
name = unconstrained
seed = 1
[grid]
dim = 1
n = 32
[time]
t_final = 0.5
steps = 100
[constraint]
family = none
[operator]
diffusion = constant
diffusion_a0 = 1.0
a_star = 1.0
a_upper = 1.0
)"},
    };
    const auto it = texts.find(name);
    if (it == texts.end()) throw ConfigError("no built-in scenario '" + name + "'");
    return it->second;
}

inline Scenario builtin_scenario(const std::string& name) {
    std::istringstream in(builtin_scenario_text(name));
    return parse_scenario(in, name);
}

} // namespace pvi
