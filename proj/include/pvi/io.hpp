#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pvi/diagnostics.hpp"
#include "pvi/errors.hpp"
#include "pvi/grid.hpp"
#include "pvi/stepper.hpp"

namespace pvi::io {

/// Shortest text that reads back to the same double.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_field_rows(std::ostream& os, const Grid& g, int step, double t, const Field& f) {
    for (int c = 0; c < f.components(); ++c)
        for (std::size_t k = 0; k < g.nodes(); ++k) {
            const Point p = g.node_point(k);
            os << step << ',' << fmt(t) << ',' << fmt(p.x) << ',';
            if (g.dim() == 2) os << fmt(p.y) << ',';
            os << c << ',' << fmt(f(c, k)) << '\n';
        }
}

inline std::string field_header(const Grid& g) {
    return g.dim() == 2 ? "step,t,x,y,component,value\n" : "step,t,x,component,value\n";
}

/// fields.csv: u^0..u^M in long format.
inline void write_fields_csv(std::ostream& os, const Trajectory& traj) {
    os << field_header(traj.grid);
    for (int m = 0; m <= traj.steps(); ++m) write_field_rows(os, traj.grid, m, traj.time.t(m), traj.states[m]);
}

/// residuals.csv: l^1..l^M in long format.
inline void write_residuals_csv(std::ostream& os, const Trajectory& traj) {
    os << field_header(traj.grid);
    for (int m = 1; m <= traj.steps(); ++m) write_field_rows(os, traj.grid, m, traj.time.t(m), traj.residuals[m]);
}

inline void write_outer_history_csv(std::ostream& os, const std::vector<double>& history) {
    os << "iteration,residual\n";
    for (std::size_t k = 0; k < history.size(); ++k) os << k + 1 << ',' << fmt(history[k]) << '\n';
}

inline std::vector<double> read_outer_history_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line != "iteration,residual") throw ConfigError("outer history: bad header");
    std::vector<double> out;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError("outer history: malformed row");
        out.push_back(std::stod(line.substr(comma + 1)));
    }
    return out;
}

/**
 * Reads a long-format field table back into per-step fields on `g`. Node
 * indices are recovered from the coordinates; every (step, component, node)
 * must appear exactly once.
 */
inline std::vector<Field> read_field_csv(std::istream& is, const Grid& g, int components, int first_step,
                                         int last_step) {
    std::string line;
    if (!std::getline(is, line) || line + "\n" != field_header(g))
        throw ConfigError("field table: header does not match the grid dimension");
    const int steps = last_step - first_step + 1;
    std::vector<Field> out(steps, Field(g, components));
    std::vector<char> seen(static_cast<std::size_t>(steps) * components * g.nodes(), 0);
    const int n = g.n();
    auto index = [&](double x, int axis) {
        const long i = std::lround(x / g.h(axis)) - 1;
        if (i < 0 || i >= n) throw ConfigError("field table: coordinate is not an interior node");
        return static_cast<std::size_t>(i);
    };
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cols.push_back(cell);
        if (cols.size() != static_cast<std::size_t>(g.dim() == 2 ? 6 : 5))
            throw ConfigError("field table:" + std::to_string(lineno) + ": wrong column count");
        const int step = std::stoi(cols[0]);
        const int comp = std::stoi(cols[g.dim() == 2 ? 4 : 3]);
        const double value = std::stod(cols.back());
        std::size_t k = index(std::stod(cols[2]), 0);
        if (g.dim() == 2) k += static_cast<std::size_t>(n) * index(std::stod(cols[3]), 1);
        if (step < first_step || step > last_step || comp < 0 || comp >= components)
            throw ConfigError("field table:" + std::to_string(lineno) + ": step or component out of range");
        const std::size_t slot = (static_cast<std::size_t>(step - first_step) * components + comp) * g.nodes() + k;
        if (seen[slot]) throw ConfigError("field table:" + std::to_string(lineno) + ": duplicate entry");
        seen[slot] = 1;
        out[step - first_step](comp, k) = value;
    }
    for (char s : seen)
        if (!s) throw ConfigError("field table: missing entries");
    return out;
}

/// Scalars as numbers (non-finite as null), flags as booleans prefixed
/// "pass_", plus an overall "passed".
inline nlohmann::ordered_json to_json(const DiagnosticsReport& rep) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : rep.values) {
        if (std::isfinite(v)) j[k] = v;
        else j[k] = nullptr;
    }
    for (const auto& [k, v] : rep.flags) j["pass_" + k] = v;
    j["passed"] = rep.passed();
    return j;
}

inline void write_diagnostics_json(std::ostream& os, const DiagnosticsReport& rep) {
    os << to_json(rep).dump(2) << '\n';
}

inline void write_convergence_csv(std::ostream& os, const std::string& mode, const std::vector<ConvergenceRow>& rows) {
    os << "mode,level,n,distance,energy_pairing,decreasing\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const bool dec = i == 0 || rows[i].distance < rows[i - 1].distance;
        os << mode << ',' << i + 1 << ',' << rows[i].n << ',' << fmt(rows[i].distance) << ','
           << fmt(rows[i].energy_pairing) << ',' << (dec ? 1 : 0) << '\n';
    }
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path);
    return os;
}

} // namespace pvi::io
