#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "pvi/errors.hpp"
#include "pvi/grid.hpp"

namespace pvi {

/// Scalar function of position and time, e.g. an obstacle rho(x,t) or psi(x,t).
using SpaceTimeFn = std::function<double(const Point&, double)>;

namespace obstacles {

inline SpaceTimeFn constant(double value) {
    return [value](const Point&, double) { return value; };
}

inline SpaceTimeFn linear_in_t(double value, double slope) {
    return [value, slope](const Point&, double t) { return value + slope * t; };
}

/// base + amplitude * exp(-(x - x0 - speed t)^2 / (2 width^2)); in 2D the bump
/// is a ridge travelling along x.
inline SpaceTimeFn traveling_bump(double base, double amplitude, double speed, double width, double x0) {
    return [=](const Point& p, double t) {
        const double d = p.x - x0 - speed * t;
        return base + amplitude * std::exp(-d * d / (2.0 * width * width));
    };
}

/// base + curvature * |p - centre|^2: a paraboloid with its minimum at the centre.
inline SpaceTimeFn notch(double base, double curvature, Point centre) {
    return [=](const Point& p, double) {
        const double dx = p.x - centre.x;
        const double dy = p.y - centre.y;
        return base + curvature * (dx * dx + dy * dy);
    };
}

inline SpaceTimeFn shifted(SpaceTimeFn fn, double offset) {
    return [fn = std::move(fn), offset](const Point& p, double t) { return fn(p, t) + offset; };
}

inline SpaceTimeFn scaled(SpaceTimeFn fn, double factor) {
    return [fn = std::move(fn), factor](const Point& p, double t) { return factor * fn(p, t); };
}

/**
 * Obstacle sampled in a table with rows x[,y],t,value. Evaluation takes the
 * nearest sampled point in space and interpolates linearly in time (clamped
 * outside the sampled time range).
 */
class ObstacleTable {
public:
    struct Sample {
        Point p;
        double value;
    };

    void add(double t, Point p, double value) { slices_[t].push_back({p, value}); }

    bool empty() const noexcept { return slices_.empty(); }

    double operator()(const Point& p, double t) const {
        if (slices_.empty()) throw DomainError("obstacle table is empty");
        auto hi = slices_.lower_bound(t);
        if (hi == slices_.end()) return nearest(std::prev(hi)->second, p);
        if (hi == slices_.begin() || hi->first == t) return nearest(hi->second, p);
        auto lo = std::prev(hi);
        const double w = (t - lo->first) / (hi->first - lo->first);
        return (1.0 - w) * nearest(lo->second, p) + w * nearest(hi->second, p);
    }

    /// Parses CSV text with a mandatory header row: x,t,value or x,y,t,value.
    static ObstacleTable parse_csv(std::istream& in, const std::string& name = "<table>") {
        ObstacleTable table;
        std::string line;
        if (!std::getline(in, line)) throw ConfigError(name + ": missing header row");
        const auto header = split(line);
        const bool two_d = header.size() == 4;
        if (header.size() != 3 && !two_d) throw ConfigError(name + ": header must be x,t,value or x,y,t,value");
        int lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line == "\r") continue;
            const auto cols = split(line);
            if (cols.size() != header.size())
                throw ConfigError(name + ":" + std::to_string(lineno) + ": wrong column count");
            try {
                const double x = std::stod(cols[0]);
                const double y = two_d ? std::stod(cols[1]) : 0.0;
                const double t = std::stod(cols[two_d ? 2 : 1]);
                const double v = std::stod(cols[two_d ? 3 : 2]);
                table.add(t, {x, y}, v);
            } catch (const std::logic_error&) {
                throw ConfigError(name + ":" + std::to_string(lineno) + ": not a number");
            }
        }
        if (table.empty()) throw ConfigError(name + ": no data rows");
        return table;
    }

    static ObstacleTable load_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open obstacle table " + path);
        return parse_csv(in, path);
    }

private:
    static std::vector<std::string> split(const std::string& line) {
        std::vector<std::string> out;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            if (!cell.empty() && cell.back() == '\r') cell.pop_back();
            out.push_back(cell);
        }
        return out;
    }

    static double nearest(const std::vector<Sample>& samples, const Point& p) {
        double best = std::numeric_limits<double>::infinity();
        double value = 0.0;
        for (const auto& s : samples) {
            const double d = (s.p.x - p.x) * (s.p.x - p.x) + (s.p.y - p.y) * (s.p.y - p.y);
            if (d < best) {
                best = d;
                value = s.value;
            }
        }
        return value;
    }

    std::map<double, std::vector<Sample>> slices_;
};

inline SpaceTimeFn from_table(ObstacleTable table) {
    auto shared = std::make_shared<const ObstacleTable>(std::move(table));
    return [shared](const Point& p, double t) { return (*shared)(p, t); };
}

} // namespace obstacles
} // namespace pvi
