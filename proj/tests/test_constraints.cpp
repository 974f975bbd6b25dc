#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "oracles/dense_qp.hpp"
#include "pvi/constraints.hpp"

using namespace pvi;

namespace {

Field uniform(const Grid& g, int comps, std::mt19937_64& rng, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    Field f(g, comps);
    for (auto& v : f.values()) v = u(rng);
    return f;
}

// Euclidean projection of one point onto {|x1| + |x2| <= r} through the dense QP oracle.
std::array<double, 2> l1_projection_oracle(double a, double b, double r) {
    Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd c(2);
    c << a, b;
    Eigen::MatrixXd G(4, 2);
    G << 1, 1, 1, -1, -1, 1, -1, -1;
    Eigen::VectorXd h = Eigen::VectorXd::Constant(4, r);
    const auto res = oracle::active_set_qp(Q, c, G, h, Eigen::VectorXd::Zero(2));
    return {res.x(0), res.x(1)};
}

std::vector<double> values_of(const Field& f) { return f.data(); }

const SpaceTimeFn example31_rho = obstacles::traveling_bump(-1.0, 0.8, 0.4, 0.08, 0.3);

} // namespace

TEST(Contains, Examples) {
    const Grid g = Grid::line(9);
    EXPECT_TRUE(contains(ConstraintSet::lower_obstacle(g, obstacles::constant(0.0)), 0.0, Field(g, 1, 1.0)));

    const auto l1 = ConstraintSet::vector_l1(g, obstacles::constant(1.0), 1.0);
    Field z(g, 2);
    z(0, 4) = 0.7;
    z(1, 4) = 0.4;
    EXPECT_FALSE(contains(l1, 0.0, z));
    EXPECT_NEAR(violation(l1, 0.0, z), 0.1, 1e-15);
    EXPECT_TRUE(contains(l1, 0.0, z, 0.1 + 1e-12));

    const auto grad = ConstraintSet::gradient_bound(g, obstacles::constant(1.0), 1.0);
    const Field ramp = Field::from_function(g, 1, [](int, const Point& p) { return 2.0 * p.x; });
    EXPECT_FALSE(contains(grad, 0.0, ramp));
    const Field tent = Field::from_function(g, 1, [](int, const Point& p) { return 0.5 - std::abs(p.x - 0.5); });
    EXPECT_TRUE(contains(grad, 0.0, tent, 1e-12));
}

TEST(Contains, UnconstrainedAndShapeErrors) {
    const Grid g = Grid::line(5);
    EXPECT_TRUE(contains(ConstraintSet::unconstrained(g), 0.0, Field(g, 2, 1e9)));
    const auto grad = ConstraintSet::gradient_bound(g, obstacles::constant(1.0), 1.0);
    EXPECT_THROW(contains(grad, 0.0, Field(g, 2)), DimensionError);
    EXPECT_THROW(contains(grad, 0.0, Field(Grid::line(6), 1)), DimensionError);
}

TEST(ConstraintSet, ConstructionChecksAdmissibility) {
    const Grid g = Grid::line(7);
    EXPECT_THROW(ConstraintSet::lower_obstacle(g, obstacles::constant(0.5)), InfeasibleError);
    EXPECT_THROW(ConstraintSet::upper_obstacle(g, obstacles::constant(-0.5)), InfeasibleError);
    EXPECT_THROW(ConstraintSet::vector_l1(g, obstacles::constant(0.5), 1.0), InfeasibleError);
    EXPECT_THROW(ConstraintSet::vector_l1(g, obstacles::constant(1.0), 0.0), DomainError);
    // psi drops below c_psi only at t = 1
    EXPECT_NO_THROW(ConstraintSet::gradient_bound(g, obstacles::linear_in_t(1.0, -0.5), 0.6));
    EXPECT_THROW(ConstraintSet::gradient_bound(g, obstacles::linear_in_t(1.0, -0.5), 0.6, 1.0), InfeasibleError);
}

TEST(Project, LowerObstacleExamples) {
    const Grid g = Grid::line(6);
    const auto K = ConstraintSet::lower_obstacle(g, obstacles::constant(0.0));
    Field z(g, 1, 0.3);
    z(0, 2) = -1.0;
    const Field p = project(K, 0.0, z);
    for (std::size_t k = 0; k < g.nodes(); ++k) EXPECT_EQ(p(0, k), k == 2 ? 0.0 : 0.3);
    const Field inside(g, 1, 2.0);
    EXPECT_EQ(project(K, 0.0, inside).data(), inside.data());
}

TEST(Project, UpperObstacle) {
    const Grid g = Grid::line(4);
    const auto K = ConstraintSet::upper_obstacle(g, obstacles::constant(0.25));
    const Field p = project(K, 0.0, Field(g, 1, 1.0));
    for (double v : p.values()) EXPECT_EQ(v, 0.25);
}

TEST(Project, VectorL1Examples) {
    const Grid g = Grid::line(3);
    const auto K = ConstraintSet::vector_l1(g, obstacles::constant(1.0), 1.0);
    Field z(g, 2);
    z(0, 0) = 1.0, z(1, 0) = 1.0;
    z(0, 1) = 2.0, z(1, 1) = 0.0;
    z(0, 2) = 0.2, z(1, 2) = -0.3;
    const Field p = project(K, 0.0, z);
    EXPECT_NEAR(p(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(p(1, 0), 0.5, 1e-15);
    EXPECT_NEAR(p(0, 1), 1.0, 1e-15);
    EXPECT_NEAR(p(1, 1), 0.0, 1e-15);
    EXPECT_EQ(p(0, 2), 0.2);
    EXPECT_EQ(p(1, 2), -0.3);
}

TEST(Project, VectorL1MatchesQpOracle) {
    std::mt19937_64 rng(21);
    const Grid g = Grid::line(40);
    const auto psi = obstacles::notch(0.5, 3.0, {0.4, 0.0});
    const auto K = ConstraintSet::vector_l1(g, psi, 0.5);
    const Field z = uniform(g, 2, rng, 3.0);
    const Field p = project(K, 0.0, z);
    for (std::size_t k = 0; k < g.nodes(); ++k) {
        const auto o = l1_projection_oracle(z(0, k), z(1, k), psi(g.node_point(k), 0.0));
        EXPECT_NEAR(p(0, k), o[0], 1e-12);
        EXPECT_NEAR(p(1, k), o[1], 1e-12);
    }
}

TEST(Project, GradientBoundUnsupported) {
    const Grid g = Grid::line(5);
    const auto K = ConstraintSet::gradient_bound(g, obstacles::constant(1.0), 1.0);
    EXPECT_THROW(project(K, 0.0, Field(g, 1)), UnsupportedProjectionError);
}

TEST(Project, PullIntoGradientBoundScalesTowardsZero) {
    std::mt19937_64 rng(22);
    const Grid g = Grid::rectangle(6);
    const auto K = ConstraintSet::gradient_bound(g, obstacles::constant(1.0), 1.0);
    const Field z = uniform(g, 1, rng, 5.0);
    const Field p = pull_into(K, 0.0, z);
    EXPECT_TRUE(contains(K, 0.0, p, 1e-12));
    EXPECT_NEAR(violation(K, 0.0, p), 0.0, 1e-12);
}

class ProjectionInvariants : public ::testing::TestWithParam<Family> {};

TEST_P(ProjectionInvariants, IdempotentContractiveVariational) {
    std::mt19937_64 rng(23);
    const Grid g = Grid::rectangle(5);
    const Family fam = GetParam();
    const int comps = fam == Family::VectorL1Obstacle ? 2 : 1;
    const ConstraintSet K = fam == Family::LowerObstacle  ? ConstraintSet::lower_obstacle(g, example31_rho)
                            : fam == Family::UpperObstacle ? ConstraintSet::upper_obstacle(g, obstacles::notch(0.0, 4.0, {0.5, 0.5}))
                                                           : ConstraintSet::vector_l1(g, obstacles::linear_in_t(1.0, 0.5), 1.0);
    const double t = 0.3;
    for (int trial = 0; trial < 20; ++trial) {
        const Field z1 = uniform(g, comps, rng, 3.0), z2 = uniform(g, comps, rng, 3.0);
        const Field p1 = project(K, t, z1), p2 = project(K, t, z2);
        EXPECT_TRUE(contains(K, t, p1, 1e-12));
        const Field pp = project(K, t, p1);
        EXPECT_LE(norm_sup(pp - p1), 1e-14);
        EXPECT_LE(norm_h(p1 - p2), norm_h(z1 - z2) * (1.0 + 1e-14));
        for (int probe = 0; probe < 5; ++probe) {
            const Field xi = detail::random_member(K, t, comps, rng);
            ASSERT_TRUE(contains(K, t, xi, 1e-12));
            EXPECT_LE(mass_inner(z1 - p1, xi - p1), 1e-10);
        }
    }
}

INSTANTIATE_TEST_SUITE_P(PointwiseFamilies, ProjectionInvariants,
                         ::testing::Values(Family::LowerObstacle, Family::UpperObstacle, Family::VectorL1Obstacle));

TEST(EpsMap, Examples) {
    const Grid g = Grid::line(4);
    const EpsilonShift shift(0.0, obstacles::constant(1.0), 0.1);
    for (double v : values_of(eps_map(shift, 0.0, Field(g, 1, 2.0)))) EXPECT_DOUBLE_EQ(v, 2.1);
    const EpsilonShift scale(-1.0, obstacles::constant(0.0), 0.25);
    for (double v : values_of(eps_map(scale, 0.0, Field(g, 2, 4.0)))) EXPECT_DOUBLE_EQ(v, 3.0);
    const EpsilonShift identity(3.0, obstacles::constant(7.0), 0.0);
    EXPECT_EQ(eps_map(identity, 0.0, Field(g, 1, 5.0)).data(), Field(g, 1, 5.0).data());
    EXPECT_THROW(EpsilonShift(0.0, obstacles::constant(0.0), 1.0), DomainError);
    EXPECT_THROW(EpsilonShift(0.0, obstacles::constant(0.0), -0.1), DomainError);
}

TEST(EpsMapSquared, Examples) {
    const Grid g = Grid::line(4);
    const EpsilonShift scale(-1.0, obstacles::constant(0.0), 0.5);
    for (double v : values_of(eps_map_squared(scale, 0.0, Field(g, 1, 4.0)))) EXPECT_DOUBLE_EQ(v, 1.0);
    const EpsilonShift shift(0.0, obstacles::constant(1.0), 0.1);
    for (double v : values_of(eps_map_squared(shift, 0.0, Field(g, 1)))) EXPECT_DOUBLE_EQ(v, 0.2);
    const EpsilonShift identity(2.0, obstacles::constant(1.0), 0.0);
    EXPECT_EQ(eps_map_squared(identity, 0.0, Field(g, 1, 3.0)).data(), Field(g, 1, 3.0).data());
}

TEST(EpsMapSquared, EqualsComposition) {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Grid g = Grid::line(16);
    for (int trial = 0; trial < 100; ++trial) {
        const double c0 = 2.0 * u(rng), a = u(rng), b = u(rng);
        const EpsilonShift F(c0, [a, b](const Point& p, double t) { return a * std::sin(3.0 * p.x) + b * t; },
                             0.5 * (1.0 + u(rng)) * 0.99);
        const Field z = uniform(g, 2, rng, 2.0);
        const double t = 0.5 * (1.0 + u(rng));
        EXPECT_LE(norm_sup(eps_map_squared(F, t, z) - eps_map(F, t, eps_map(F, t, z))), 1e-14 * 8.0);
    }
}

TEST(CheckInclusion, ObstacleShiftByOneOverN) {
    std::mt19937_64 rng(25);
    const Grid g = Grid::line(32);
    const auto K = ConstraintSet::lower_obstacle(g, example31_rho);
    for (int n : {2, 4, 8, 16, 32}) {
        const auto Kn = ConstraintSet::lower_obstacle(g, obstacles::shifted(example31_rho, -1.0 / n));
        const EpsilonShift F(0.0, obstacles::constant(1.0), 1.0 / n);
        for (double t : {0.0, 0.25, 0.5}) EXPECT_TRUE(check_inclusion(F, Kn, K, t, 20, 1, rng).included);
        const EpsilonShift short_shift(0.0, obstacles::constant(1.0), 0.5 / n);
        const auto r = check_inclusion(short_shift, Kn, K, 0.0, 20, 1, rng);
        EXPECT_FALSE(r.included);
        ASSERT_TRUE(r.witness.has_value());
        EXPECT_FALSE(contains(K, 0.0, *r.witness, 1e-12));
    }
}

TEST(CheckInclusion, IdentityOnSameSet) {
    std::mt19937_64 rng(26);
    const Grid g = Grid::line(10);
    const auto K = ConstraintSet::vector_l1(g, obstacles::constant(1.0), 1.0);
    const EpsilonShift F(0.0, obstacles::constant(0.0), 1e-15);
    EXPECT_TRUE(check_inclusion(F, K, K, 0.0, 50, 2, rng).included);
}

TEST(CheckInclusion, L1ScalingThreshold) {
    std::mt19937_64 rng(27);
    const Grid g = Grid::line(16);
    const auto K = ConstraintSet::vector_l1(g, obstacles::constant(1.0), 1.0);
    const int n = 4;
    const auto Kn = ConstraintSet::vector_l1(g, obstacles::constant(1.0 + 1.0 / n), 1.0);
    // certified threshold |psi_n - psi| / c_psi
    const double certified = (1.0 / n) / 1.0;
    EXPECT_TRUE(check_inclusion(EpsilonShift(-1.0, obstacles::constant(0.0), certified), Kn, K, 0.0, 20, 2, rng).included);
    for (double eps : {0.1, 0.19}) {
        const auto r = check_inclusion(EpsilonShift(-1.0, obstacles::constant(0.0), eps), Kn, K, 0.0, 20, 2, rng);
        EXPECT_FALSE(r.included) << "eps=" << eps;
        ASSERT_TRUE(r.witness.has_value());
        EXPECT_GT(violation(K, 0.0, *r.witness), 0.0);
    }
}

TEST(StrongModulus, ObstacleExample) {
    const Grid g = Grid::line(15);
    const auto K = ConstraintSet::lower_obstacle(g, [](const Point&, double t) { return t; });
    const Field z(g, 1, 1.0);
    const auto cert = strong_modulus(K, 0.0, 0.5, z);
    for (double v : cert.shifted.values()) EXPECT_DOUBLE_EQ(v, 1.5);
    EXPECT_NEAR(norm_h(cert.shifted - z), 0.5 * std::sqrt(g.discrete_measure()), 1e-14);
    EXPECT_NEAR(cert.alpha_increment, 0.5 * std::sqrt(g.discrete_measure()), 1e-14);
}

TEST(StrongModulus, SameTimeIsIdentity) {
    std::mt19937_64 rng(28);
    const Grid g = Grid::line(12);
    const auto K = ConstraintSet::vector_l1(g, obstacles::linear_in_t(1.0, 1.0), 1.0);
    const Field z = detail::random_member(K, 0.3, 2, rng);
    const auto cert = strong_modulus(K, 0.3, 0.3, z);
    EXPECT_EQ(cert.shifted.data(), z.data());
    EXPECT_EQ(cert.alpha_increment, 0.0);
    EXPECT_EQ(cert.beta_increment, 0.0);
}

TEST(StrongModulus, L1ScalingExample) {
    const Grid g = Grid::line(9);
    const auto K = ConstraintSet::vector_l1(g, obstacles::linear_in_t(1.0, 1.0), 1.0);
    Field z(g, 2);
    z(0, 4) = 1.0;
    const auto cert = strong_modulus(K, 0.0, 0.5, z);
    EXPECT_DOUBLE_EQ(cert.shifted(0, 4), 0.5);
    EXPECT_EQ(cert.shifted(1, 4), 0.0);
    EXPECT_LE(norm_v(cert.shifted), norm_v(z));
}

TEST(StrongModulus, Errors) {
    const Grid g = Grid::line(9);
    const auto K = ConstraintSet::vector_l1(g, obstacles::linear_in_t(1.0, 1.0), 1.0);
    EXPECT_THROW(strong_modulus(K, 0.0, 0.5, Field(g, 2, 3.0)), PreconditionError);
    EXPECT_THROW(strong_modulus(K, 0.0, 1.5, Field(g, 2)), NotApplicableError);
}

TEST(EstimateKappa, Examples) {
    const Grid g = Grid::line(31);
    const auto l1 = ConstraintSet::vector_l1(g, obstacles::constant(1.0), 1.0);
    const auto sup_probes = shape_probes(g, 2, ProbeNorm::Sup);
    EXPECT_NEAR(estimate_kappa(l1, 0.0, sup_probes), 1.0, 1e-6);
    EXPECT_NEAR(estimate_kappa(l1, 0.0, {sup_probes.front()}), 1.0, 1e-6);
    const auto l1_twice = ConstraintSet::vector_l1(g, obstacles::constant(2.0), 2.0);
    EXPECT_NEAR(estimate_kappa(l1_twice, 0.0, sup_probes), 2.0, 2e-6);

    const auto grad = ConstraintSet::gradient_bound(g, obstacles::constant(1.0), 1.0);
    EXPECT_NEAR(estimate_kappa(grad, 0.0, shape_probes(g, 1, ProbeNorm::Lipschitz)), 1.0, 1e-6);
    EXPECT_TRUE(std::isinf(estimate_kappa(ConstraintSet::unconstrained(g), 0.0)));
}

TEST(EstimateKappa, EnergyBallIsPositiveAndHomogeneous) {
    const Grid g = Grid::line(15);
    for (Family fam : {Family::VectorL1Obstacle, Family::GradientBound}) {
        auto make = [&](double s) {
            return fam == Family::GradientBound ? ConstraintSet::gradient_bound(g, obstacles::constant(s), s)
                                                : ConstraintSet::vector_l1(g, obstacles::constant(s), s);
        };
        const double k1 = estimate_kappa(make(1.0), 0.0);
        const double k3 = estimate_kappa(make(3.0), 0.0);
        EXPECT_GT(k1, 0.0);
        EXPECT_NEAR(k3 / k1, 3.0, 1e-5);
    }
}

TEST(EstimateKappa, ZeroWhenEveryScaleViolates) {
    const Grid g = Grid::line(7);
    // 0 lies on the boundary of {z >= 0}, so the negative probes fail at every scale
    const auto K = ConstraintSet::lower_obstacle(g, obstacles::constant(0.0));
    EXPECT_EQ(estimate_kappa(K, 0.0, shape_probes(g, 1, ProbeNorm::Sup)), 0.0);
}

TEST(ObstacleTable, NearestInSpaceLinearInTime) {
    std::istringstream in("x,t,value\n0.25,0,1\n0.75,0,3\n0.25,1,2\n0.75,1,5\n");
    const SpaceTimeFn rho = obstacles::from_table(obstacles::ObstacleTable::parse_csv(in));
    EXPECT_DOUBLE_EQ(rho({0.3, 0.0}, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(rho({0.7, 0.0}, 0.5), 4.0);
    EXPECT_DOUBLE_EQ(rho({0.2, 0.0}, -1.0), 1.0);
    EXPECT_DOUBLE_EQ(rho({0.9, 0.0}, 2.0), 5.0);
}

TEST(ObstacleTable, RejectsMalformedInput) {
    auto parse = [](const std::string& text) {
        std::istringstream in(text);
        return obstacles::ObstacleTable::parse_csv(in, "rho.csv");
    };
    EXPECT_THROW(parse(""), ConfigError);
    EXPECT_THROW(parse("x,value\n0,1\n"), ConfigError);
    EXPECT_THROW(parse("x,t,value\n"), ConfigError);
    try {
        parse("x,t,value\n0.5,0,1\n0.5,zero,1\n");
        FAIL() << "expected a config error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("rho.csv:3"), std::string::npos) << e.what();
    }
}
