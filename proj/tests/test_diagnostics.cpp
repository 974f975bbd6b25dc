#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "pvi/diagnostics.hpp"

using namespace pvi;

namespace {

Field uniform(const Grid& g, int comps, std::mt19937_64& rng, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    Field f(g, comps);
    for (auto& v : f.values()) v = u(rng);
    return f;
}

// Trajectory from explicit states with zero residuals.
Trajectory from_states(const Grid& g, double t_final, std::vector<Field> states) {
    Trajectory tr;
    tr.grid = g;
    tr.time = TimeGrid(t_final, static_cast<int>(states.size()) - 1);
    const int comps = states.front().components();
    tr.residuals.assign(states.size(), Field(g, comps));
    tr.source.assign(states.size(), Field(g, comps));
    tr.states = std::move(states);
    return tr;
}

SemimonotoneOp app1_op() {
    return SemimonotoneOp::application1(coefficients::rational(1.0, 0.5), coefficients::rational(1.0, 0.5), 1.0, 1.5);
}

struct App1Run {
    Grid g = Grid::line(24);
    ConstraintSet K = ConstraintSet::vector_l1(g, obstacles::constant(1.0), 1.0);
    SemimonotoneOp op = app1_op();
    TimeGrid tg{0.5, 50};
    FieldFn f = sampled_source(g, {obstacles::constant(40.0), obstacles::constant(-25.0)});
    Trajectory traj;
    App1Run() { traj = solve_quasilinear(Field(g, 2), K, op, f, tg, SolverConfig{}).trajectory; }
};

const App1Run& app1_run() {
    static const App1Run run;
    return run;
}

} // namespace

TEST(TvWstar, ConstantTrajectoryIsZero) {
    std::mt19937_64 rng(51);
    const Grid g = Grid::line(10);
    const Field u = uniform(g, 2, rng, 1.0);
    EXPECT_EQ(tv_wstar(from_states(g, 1.0, {u, u, u, u})), 0.0);
}

TEST(TvWstar, SingleJump) {
    std::mt19937_64 rng(52);
    const Grid g = Grid::rectangle(6);
    const Field u0 = uniform(g, 1, rng, 1.0), w = uniform(g, 1, rng, 1.0);
    EXPECT_NEAR(tv_wstar(from_states(g, 1.0, {u0, u0 + w})), dual_norm_wstar(w), 1e-14);
}

TEST(TvWstar, IsASeminorm) {
    std::mt19937_64 rng(53);
    const Grid g = Grid::line(12);
    auto random_traj = [&] {
        std::vector<Field> s;
        for (int m = 0; m <= 6; ++m) s.push_back(uniform(g, 1, rng, 1.0));
        return s;
    };
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_traj(), b = random_traj();
        std::vector<Field> sum, scaled;
        for (std::size_t m = 0; m < a.size(); ++m) {
            sum.push_back(a[m] + b[m]);
            scaled.push_back(-2.5 * a[m]);
        }
        const double ta = tv_wstar(from_states(g, 1.0, a)), tb = tv_wstar(from_states(g, 1.0, b));
        EXPECT_LE(tv_wstar(from_states(g, 1.0, sum)), ta + tb + 1e-10);
        EXPECT_NEAR(tv_wstar(from_states(g, 1.0, scaled)), 2.5 * ta, 1e-10 * ta);
    }
}

TEST(ZMembership, ZeroTrajectoryIsMember) {
    const Grid g = Grid::line(8);
    const Trajectory tr = from_states(g, 1.0, std::vector<Field>(5, Field(g, 2)));
    const ZParams zp{1.0, 1e-6, Field(g, 2)};
    const DiagnosticsReport rep = z_membership(tr, zp);
    EXPECT_TRUE(rep.passed());
    for (const char* k : {"lp_v_norm", "sup_h_norm", "f_duality_integral", "f_l1_wstar"}) EXPECT_EQ(rep.values.at(k), 0.0);
    EXPECT_EQ(tv_wstar(tr), 0.0);
    EXPECT_TRUE(tv_bound(tr, zp).passed());
}

TEST(ZMembership, SolverRunAgainstMeasuredBound) {
    const auto& run = app1_run();
    ZParams zp = measure_z_params(run.traj, run.K);
    EXPECT_GT(zp.kappa, 0.0);
    const ZMeasures z = z_measures(run.traj);

    zp.m0 = 1.1 * z.max();
    EXPECT_TRUE(z_membership(run.traj, zp).passed());

    zp.m0 = 0.9 * z.lp_v_norm;
    const DiagnosticsReport low = z_membership(run.traj, zp);
    EXPECT_FALSE(low.passed());
    EXPECT_FALSE(low.flags.at("z_lp_v_norm"));
}

TEST(ZMembership, MeasuredParameters) {
    const auto& run = app1_run();
    const ZParams zp = measure_z_params(run.traj, run.K);
    const ZMeasures z = z_measures(run.traj);
    EXPECT_EQ(zp.m0, z.max());
    EXPECT_EQ(zp.kappa, estimate_kappa(run.K, 0.0));
}

TEST(TvBound, SolverRunBelowCStar) {
    const auto& run = app1_run();
    const ZParams zp = measure_z_params(run.traj, run.K);
    const DiagnosticsReport rep = tv_bound(run.traj, zp);
    EXPECT_TRUE(rep.flags.at("tv_wstar_le_c_star"));
    const double u0 = norm_h(zp.u0);
    EXPECT_DOUBLE_EQ(rep.values.at("c_star_bound"), zp.m0 + zp.m0 / zp.kappa + u0 * u0 / (2.0 * zp.kappa));
    EXPECT_GT(rep.values.at("tv_wstar"), 0.0);
}

TEST(CStar, Formula) {
    const Grid g = Grid::line(3, 1.0);
    const ZParams zp{2.0, 3.0, Field(g, 1, 2.0)};
    // |u0|_H^2 = 3 nodes * 0.25 * 4 = 3
    EXPECT_DOUBLE_EQ(c_star(zp), 3.0 + 1.5 + 0.75);
    EXPECT_TRUE(std::isinf(c_star(ZParams{0.0, 1.0, Field(g, 1)})));
    EXPECT_EQ(c_star(ZParams{std::numeric_limits<double>::infinity(), 1.0, Field(g, 1)}), 1.0);
}

TEST(Contraction, IdenticalRuns) {
    const auto& run = app1_run();
    const ContractionReport rep = contraction_check(run.traj, run.traj);
    EXPECT_TRUE(rep.passed);
    EXPECT_EQ(rep.worst_margin, 0.0);
    EXPECT_EQ(rep.pairs, 51u * 50u / 2u);
}

TEST(Contraction, PerturbedInitialDatumAndSource) {
    std::mt19937_64 rng(54);
    const auto& run = app1_run();
    const auto& base = run.traj;
    auto frozen = [&base](int m) { return base.frozen_along[m]; };
    const Field bump = Field::from_function(run.g, 2, [](int c, const Point& p) {
        return (c == 0 ? 0.3 : -0.2) * std::sin(std::numbers::pi * p.x);
    });
    const auto shifted_u0 = solve_frozen(frozen, project(run.K, 0.0, bump), run.K, run.op, run.f, run.tg, SolverConfig{});
    const ContractionReport r1 = contraction_check(base, shifted_u0);
    EXPECT_TRUE(r1.passed);
    // tight (zero) once both runs saturate the constraint
    EXPECT_GE(r1.worst_margin / r1.scale, -1e-14);

    const Field df = uniform(run.g, 2, rng, 10.0);
    const FieldFn f2 = [f = run.f, df](double t) { return f(t) + df; };
    const auto shifted_f = solve_frozen(frozen, Field(run.g, 2), run.K, run.op, f2, run.tg, SolverConfig{});
    EXPECT_TRUE(contraction_check(base, shifted_f).passed);
}

TEST(Contraction, DetectsUnjustifiedGrowth) {
    // the difference grows while both constrained data vanish
    const Grid g = Grid::line(6);
    std::vector<Field> a, b;
    for (int m = 0; m <= 4; ++m) {
        a.push_back(Field(g, 1));
        b.push_back(Field(g, 1, 0.1 * m));
    }
    auto tb = from_states(g, 1.0, b);
    // cancel the jump term so that f_Z of b is zero
    for (int m = 1; m <= 4; ++m) tb.residuals[m] = (-1.0 / tb.time.tau()) * (b[m] - b[m - 1]);
    const ContractionReport rep = contraction_check(from_states(g, 1.0, a), tb);
    EXPECT_FALSE(rep.passed);
    EXPECT_LT(rep.worst_margin, 0.0);
}

TEST(Contraction, StratifiedSampleForLongRuns) {
    const Grid g = Grid::line(4);
    const Trajectory tr = from_states(g, 1.0, std::vector<Field>(301, Field(g, 1)));
    EXPECT_EQ(contraction_check(tr, tr).pairs, 201u * 200u / 2u);
}

TEST(EnergyBound, Examples) {
    const auto& run = app1_run();
    const EnergyBound e = energy_bound(run.traj, declared_constants(run.op, run.g));
    EXPECT_TRUE(e.passed);
    EXPECT_EQ(e.lhs, sup_h_norm(run.traj) + l2_v_norm(run.traj));

    const Grid g = Grid::line(5);
    const EnergyBound zero = energy_bound(from_states(g, 2.0, std::vector<Field>(3, Field(g, 1))), {1.0, 0.0, 1.0, 0.5});
    EXPECT_EQ(zero.lhs, 0.0);
    EXPECT_DOUBLE_EQ(zero.m2, 2.0 * (1.0 + 2.0 * 0.5 * 2.0));
    EXPECT_THROW(energy_bound(run.traj, {1.0, 0.0, 0.0, 0.0}), PreconditionError);
}

TEST(VariationalInequality, SolverRunSatisfiesGlobalAndIntervalForms) {
    std::mt19937_64 rng(55);
    const auto& run = app1_run();
    const ZParams zp = measure_z_params(run.traj, run.K);
    const auto probes = vi_probe_family(run.traj, run.K, zp.kappa);
    EXPECT_GE(probes.size(), 4u);
    const double scale = vi_scale(run.traj);
    EXPECT_GE(global_vi_margin(run.traj, probes), -1e-7 * scale);
    EXPECT_GE(interval_vi_margin(run.traj, probes, 20, rng), -1e-7 * scale);
}

TEST(VariationalInequality, DetectsWrongDatum) {
    // u stays at 0 although the datum pushes it up: the VI fails for eta = small positive constant
    const Grid g = Grid::line(6);
    auto tr = from_states(g, 1.0, std::vector<Field>(5, Field(g, 1)));
    for (int m = 1; m <= 4; ++m) tr.residuals[m] = Field(g, 1, 10.0);
    const std::vector<Field> eta(5, Field(g, 1, 0.1));
    EXPECT_LT(vi_margin(tr, eta, 0, 4, false), 0.0);
}

TEST(TrajectoryChecks, SolverRunAndViolation) {
    std::mt19937_64 rng(56);
    const auto& run = app1_run();
    EXPECT_TRUE(trajectory_checks(run.traj, run.K, 10, rng).passed());
    Trajectory bad = run.traj;
    bad.states[7](0, 3) += 0.5;
    const DiagnosticsReport rep = trajectory_checks(bad, run.K, 10, rng);
    EXPECT_FALSE(rep.flags.at("constraint_satisfied"));
}

TEST(ConvergenceStudy, ConstantSequence) {
    const auto& run = app1_run();
    const auto rows = convergence_study(
        [&](int) { return solve_quasilinear(Field(run.g, 2), run.K, run.op, run.f, run.tg, SolverConfig{}).trajectory; },
        run.traj, {2, 4});
    ASSERT_EQ(rows.size(), 2u);
    for (const auto& r : rows) EXPECT_LE(r.distance, 1e-8);
}

TEST(ConvergenceStudy, ShiftedObstacleDecreases) {
    const Grid g = Grid::line(16);
    const auto op = SemimonotoneOp::constant_diffusion(1, 1.0);
    const SpaceTimeFn rho = obstacles::notch(0.6, 4.0, {0.5, 0.0});
    const FieldFn f = sampled_source(g, {obstacles::constant(30.0)});
    const TimeGrid tg(0.3, 30);
    auto solve = [&](double offset) {
        const auto K = ConstraintSet::upper_obstacle(g, obstacles::shifted(rho, offset));
        return solve_frozen(Field(g, 1), Field(g, 1), K, op, f, tg, SolverConfig{});
    };
    const auto rows = convergence_study([&](int n) { return solve(-1.0 / n); }, solve(0.0), {2, 4, 8, 16});
    EXPECT_TRUE(strictly_decreasing(rows));
    EXPECT_TRUE(non_increasing(rows));
    EXPECT_EQ(rows.front().n, 2);
}

TEST(ConvergenceStudy, MonotonicityHelpers) {
    std::vector<ConvergenceRow> rows{{2, 1.0, 0.0}, {4, 0.5, 0.0}, {8, 0.5 + 1e-12, 0.0}};
    EXPECT_FALSE(strictly_decreasing(rows));
    EXPECT_TRUE(non_increasing(rows));
    rows.push_back({16, 0.7, 0.0});
    EXPECT_FALSE(non_increasing(rows));
    EXPECT_TRUE(strictly_decreasing({{2, 1.0, 0.0}}));
}

TEST(DiagnosticsReport, MergeAndPassed) {
    DiagnosticsReport a, b;
    a.values["x"] = 1.0;
    a.flags["ok"] = true;
    b.flags["bad"] = false;
    EXPECT_TRUE(a.passed());
    a.merge(b);
    EXPECT_FALSE(a.passed());
    EXPECT_EQ(a.values.at("x"), 1.0);
}
