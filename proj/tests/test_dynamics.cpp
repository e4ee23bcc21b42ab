#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rctrack/dynamics.hpp"
#include "rctrack/random.hpp"

using namespace rctrack;

namespace {

// Hand evaluation of the textbook two-link inertia terms, written out
// independently of mass_matrix().
Eigen::Matrix2d inertia_oracle(const ArmParams& p, double q2) {
    const double a = p.i1 + p.i2 + p.m1 * p.lc1 * p.lc1 + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2);
    const double b = p.m2 * p.l1 * p.lc2;
    const double d = p.i2 + p.m2 * p.lc2 * p.lc2;
    Eigen::Matrix2d m;
    m << a + 2 * b * std::cos(q2), d + b * std::cos(q2), d + b * std::cos(q2), d;
    return m;
}

}  // namespace

TEST(MassMatrix, ValuesAtRightAngleElbow) {
    const Eigen::Matrix2d m = mass_matrix(ArmParams{}, kPi / 2);
    EXPECT_NEAR(m(0, 0), 0.435, 1e-12);
    EXPECT_NEAR(m(0, 1), 0.0925, 1e-12);
    EXPECT_NEAR(m(1, 0), 0.0925, 1e-12);
    EXPECT_NEAR(m(1, 1), 0.0925, 1e-12);
}

TEST(MassMatrix, ValuesStretched) {
    const Eigen::Matrix2d m = mass_matrix(ArmParams{}, 0.0);
    EXPECT_NEAR(m(0, 0), 0.685, 1e-12);
    EXPECT_NEAR(m(0, 1), 0.2175, 1e-12);
    EXPECT_NEAR(m(1, 1), 0.0925, 1e-12);
}

TEST(MassMatrix, MatchesOracleForOtherParameters) {
    ArmParams p{2.0, 0.7, 0.8, 0.3, 0.35, 0.1, 0.05, 0.01};
    for (double q2 = -4.0; q2 <= 4.0; q2 += 0.37) {
        EXPECT_LT((mass_matrix(p, q2) - inertia_oracle(p, q2)).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(MassMatrix, PositiveDefiniteOnDenseGrid) {
    const ArmParams p;
    for (int i = 0; i < 10000; ++i) {
        const double q2 = -kPi + kTwoPi * i / 9999.0;
        const Eigen::Matrix2d m = mass_matrix(p, q2);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(m);
        ASSERT_GT(es.eigenvalues().minCoeff(), 0.0) << "q2 = " << q2;
    }
}

TEST(Coriolis, ValueAtRightAngleElbow) {
    const Eigen::Matrix2d c = coriolis_matrix(ArmParams{}, kPi / 2, 1.0, 2.0);
    EXPECT_NEAR(c(0, 0), -0.25, 1e-12);
    EXPECT_NEAR(c(0, 1), -0.375, 1e-12);
    EXPECT_NEAR(c(1, 0), 0.125, 1e-12);
    EXPECT_NEAR(c(1, 1), 0.0, 1e-12);
}

TEST(Coriolis, ZeroAtRest) {
    EXPECT_EQ(coriolis_matrix(ArmParams{}, 0.7, 0.0, 0.0).norm(), 0.0);
}

TEST(Coriolis, MdotMinusTwoCIsSkewSymmetric) {
    const ArmParams p;
    Rng rng(11);
    for (int trial = 0; trial < 1000; ++trial) {
        const double q2 = rng.uniform(-kPi, kPi);
        const double qd1 = rng.uniform(-5, 5);
        const double qd2 = rng.uniform(-5, 5);
        // dM/dt by central difference along q2 (M depends on q2 only).
        const double h = 1e-6;
        const Eigen::Matrix2d mdot = (mass_matrix(p, q2 + h) - mass_matrix(p, q2 - h)) / (2 * h) * qd2;
        const Eigen::Matrix2d n = mdot - 2.0 * coriolis_matrix(p, q2, qd1, qd2);
        ASSERT_LT((n + n.transpose()).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(ForwardDynamics, MatchesDenseSolve) {
    const ArmParams p;
    Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const PlantState s = make_state(p, rng.uniform(0, kTwoPi), rng.uniform(-kPi, kPi), rng.uniform(-3, 3),
                                        rng.uniform(-3, 3));
        const TorqueCommand u{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const Eigen::Vector2d qd(s.qd1, s.qd2);
        const Eigen::Vector2d oracle = inertia_oracle(p, s.q2).fullPivLu().solve(
            Eigen::Vector2d(u.tau1, u.tau2) - coriolis_matrix(p, s.q2, s.qd1, s.qd2) * qd);
        EXPECT_LT((forward_dynamics(p, s, u) - oracle).norm(), 1e-12);
    }
}

TEST(ForwardDynamics, RejectsNonFiniteTorque) {
    const PlantState s = make_state(ArmParams{}, 0.1, 0.2);
    EXPECT_THROW(step(ArmParams{}, s, {std::nan(""), 0.0}, 0.01), NonFiniteError);
    EXPECT_THROW(step(ArmParams{}, s, {0.0, INFINITY}, 0.01), NonFiniteError);
}

TEST(Step, IsExplicitEuler) {
    const ArmParams p;
    const PlantState s = make_state(p, 0.3, 1.1, 0.4, -0.2);
    const TorqueCommand u{0.5, -0.25};
    const Eigen::Vector2d acc = forward_dynamics(p, s, u);
    const PlantState n = step(p, s, u, 0.01);
    EXPECT_DOUBLE_EQ(n.q1, 0.3 + 0.4 * 0.01);
    EXPECT_DOUBLE_EQ(n.q2, 1.1 - 0.2 * 0.01);
    EXPECT_DOUBLE_EQ(n.qd1, 0.4 + acc(0) * 0.01);
    EXPECT_DOUBLE_EQ(n.qd2, -0.2 + acc(1) * 0.01);
    EXPECT_DOUBLE_EQ(n.qdd1, acc(0));
    const Point2 c = forward_kinematics(p, n.q1, n.q2);
    EXPECT_DOUBLE_EQ(n.cx, c.x);
    EXPECT_DOUBLE_EQ(n.cy, c.y);
}

TEST(Step, RejectsNonPositiveDt) {
    EXPECT_THROW(step(ArmParams{}, PlantState{}, {}, 0.0), std::invalid_argument);
}

TEST(Energy, TorqueFreeDriftIsSmallAtFineStep) {
    const ArmParams p;
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        PlantState s = make_state(p, rng.uniform(0, kTwoPi), rng.uniform(-kPi, kPi), rng.uniform(-1, 1),
                                  rng.uniform(-1, 1));
        const double e0 = kinetic_energy(p, s);
        for (int k = 0; k < 10000; ++k) s = step(p, s, {}, 1e-4);
        EXPECT_LT(std::abs(kinetic_energy(p, s) - e0) / e0, 1e-4) << "trial " << trial;
    }
}

TEST(Energy, WorkBalanceUnderTorque) {
    // dE/dt = tau . qd for this conservative plant.
    const ArmParams p;
    PlantState s = make_state(p, 0.4, 0.9, 0.3, -0.6);
    const TorqueCommand u{0.2, -0.1};
    const double dt = 1e-5;
    double work = 0.0;
    const double e0 = kinetic_energy(p, s);
    for (int k = 0; k < 10000; ++k) {
        work += (u.tau1 * s.qd1 + u.tau2 * s.qd2) * dt;
        s = step(p, s, u, dt);
    }
    // Euler is first order: the residual shrinks with dt.
    EXPECT_NEAR(kinetic_energy(p, s) - e0, work, 1e-4 * std::abs(work));
}

TEST(Kinematics, ForwardKnownValues) {
    const ArmParams p;
    Point2 c = forward_kinematics(p, 0.0, kPi / 2);
    EXPECT_NEAR(c.x, 0.5, 1e-15);
    EXPECT_NEAR(c.y, 0.5, 1e-15);
    c = forward_kinematics(p, 0.0, 0.0);
    EXPECT_NEAR(c.x, 1.0, 1e-15);
    EXPECT_NEAR(c.y, 0.0, 1e-15);
}

TEST(Kinematics, RoundTripOnRandomReachablePoints) {
    const ArmParams p{1.0, 1.0, 0.6, 0.4, 0.3, 0.2, 0.03, 0.03};
    Rng rng(21);
    for (int i = 0; i < 1000; ++i) {
        // Uniform over the annulus, including points close to both rims.
        const double r = std::sqrt(rng.uniform(p.inner_radius() * p.inner_radius(), p.reach() * p.reach()));
        const double th = rng.uniform(-kPi, kPi);
        const double x = r * std::cos(th);
        const double y = r * std::sin(th);
        const JointAngles q = inverse_kinematics(p, x, y);
        const Point2 c = forward_kinematics(p, q.q1, q.q2);
        ASSERT_LT(std::hypot(c.x - x, c.y - y), 1e-9);
        EXPECT_GE(q.q2, 0.0);
        EXPECT_GE(q.q1, 0.0);
        EXPECT_LT(q.q1, kTwoPi);
    }
}

TEST(Kinematics, AnglesRoundTripWithHint) {
    const ArmParams p;
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        const JointAngles q{rng.uniform(-10, 10), rng.uniform(-10, 10)};
        if (std::abs(std::sin(q.q2)) < 0.1) continue;  // branches too close for a 0.05 rad hint offset
        const Point2 c = forward_kinematics(p, q.q1, q.q2);
        const JointAngles back = inverse_kinematics(p, c.x, c.y, JointAngles{q.q1 + 0.05, q.q2 - 0.05});
        ASSERT_NEAR(back.q1, q.q1, 1e-9);
        ASSERT_NEAR(back.q2, q.q2, 1e-9);
    }
}

TEST(Kinematics, BranchFollowsHint) {
    const ArmParams p;
    const JointAngles down = inverse_kinematics(p, 0.6, 0.2, JointAngles{0.0, -1.0});
    const JointAngles up = inverse_kinematics(p, 0.6, 0.2, JointAngles{0.0, 1.0});
    EXPECT_LT(down.q2, 0.0);
    EXPECT_GT(up.q2, 0.0);
    EXPECT_NEAR(down.q2, -up.q2, 1e-12);
}

TEST(Kinematics, ContinuityAcrossWrap) {
    // Going once round a circle adds 2 pi to q1 instead of wrapping.
    const ArmParams p;
    std::optional<JointAngles> hint;
    double first = 0.0;
    for (int k = 0; k <= 400; ++k) {
        const double th = kTwoPi * k / 400.0;
        const JointAngles q = inverse_kinematics(p, 0.7 * std::cos(th), 0.7 * std::sin(th), hint);
        if (k == 0) first = q.q1;
        if (hint) {
            ASSERT_LT(std::abs(q.q1 - hint->q1), 0.1);
        }
        hint = q;
    }
    EXPECT_NEAR(hint->q1 - first, kTwoPi, 1e-9);
}

TEST(Kinematics, ShoulderPointKeepsHintedHeading) {
    const ArmParams p;
    const JointAngles q = inverse_kinematics(p, 0.0, 0.0, JointAngles{7.3, 3.0});
    EXPECT_EQ(q.q1, 7.3);
    EXPECT_NEAR(q.q2, kPi, 1e-12);
    const JointAngles r = inverse_kinematics(p, 0.0, 0.0, JointAngles{0.4, -3.0});
    EXPECT_NEAR(r.q2, -kPi, 1e-12);
    const Point2 c = forward_kinematics(p, q.q1, q.q2);
    EXPECT_LT(std::hypot(c.x, c.y), 1e-15);
}

TEST(Kinematics, PrecisionNearFullStretch) {
    const ArmParams p;
    // Rounding in r alone limits q2 to about eps / q2.
    const double q2 = 1e-5;
    const Point2 c = forward_kinematics(p, 0.2, q2);
    const JointAngles q = inverse_kinematics(p, c.x, c.y);
    EXPECT_NEAR(q.q2, q2, 1e-9);
    EXPECT_NEAR(q.q1, 0.2, 1e-9);
}

TEST(Kinematics, UnreachablePointsRaiseWithBound) {
    const ArmParams p = ArmParams{}.with_lengths(0.6, 0.3);
    try {
        (void)inverse_kinematics(p, 1.0, 0.0);
        FAIL() << "expected ReachabilityError";
    } catch (const ReachabilityError& e) {
        EXPECT_EQ(e.bound(), ReachabilityError::Bound::Outer);
    }
    try {
        (void)inverse_kinematics(p, 0.1, 0.0);
        FAIL() << "expected ReachabilityError";
    } catch (const ReachabilityError& e) {
        EXPECT_EQ(e.bound(), ReachabilityError::Bound::Inner);
    }
}

TEST(Kinematics, ClampReturnsNearestReachablePoint) {
    const ArmParams p = ArmParams{}.with_lengths(0.6, 0.3);
    JointAngles q = inverse_kinematics(p, 2.0, 0.0, std::nullopt, true);
    Point2 c = forward_kinematics(p, q.q1, q.q2);
    EXPECT_NEAR(c.x, 0.9, 1e-12);
    EXPECT_NEAR(c.y, 0.0, 1e-12);
    q = inverse_kinematics(p, 0.0, 0.1, std::nullopt, true);
    c = forward_kinematics(p, q.q1, q.q2);
    EXPECT_NEAR(c.x, 0.0, 1e-12);
    EXPECT_NEAR(c.y, 0.3, 1e-12);
}

TEST(Kinematics, NonFiniteTargetRejected) {
    EXPECT_THROW((void)inverse_kinematics(ArmParams{}, std::nan(""), 0.0), NonFiniteError);
}

TEST(ArmParams, ValidationNamesField) {
    ArmParams p;
    p.l2 = -0.1;
    try {
        p.validate();
        FAIL();
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("l2"), std::string::npos);
    }
}

TEST(Noise, ZeroSigmaLeavesSignalsUntouched) {
    Rng rng(1);
    const PlantState s = make_state(ArmParams{}, 0.3, 0.4, 0.5, 0.6);
    const Observation y = observe(s, NoiseConfig{}, rng);
    EXPECT_EQ(y.cx, s.cx);
    EXPECT_EQ(y.qd2, s.qd2);
    const TorqueCommand u = apply_disturbance({0.1, 0.2}, NoiseConfig{}, rng);
    EXPECT_EQ(u.tau1, 0.1);
    EXPECT_EQ(u.tau2, 0.2);
}

TEST(Noise, StreamsStayAlignedAcrossSigma) {
    // The same seed gives the same xi whatever sigma is, so sigma scales the
    // perturbation exactly.
    const PlantState s = make_state(ArmParams{}, 0.3, 0.4, 0.5, 0.6);
    Rng a(9), b(9);
    const Observation ya = observe(s, NoiseConfig{0.0, 0.1, 0}, a);
    const Observation yb = observe(s, NoiseConfig{0.0, 0.2, 0}, b);
    EXPECT_NEAR(yb.cx - s.cx, 2.0 * (ya.cx - s.cx), 1e-15);
}

TEST(Noise, MultiplicativeMeasurementMoments) {
    const PlantState s = make_state(ArmParams{}, 0.3, 0.4, 0.5, -0.8);
    const double sigma = 0.1;
    Rng rng(42);
    const int n = 100000;
    Eigen::Vector4d sum = Eigen::Vector4d::Zero(), sq = Eigen::Vector4d::Zero();
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector4d y = observe(s, NoiseConfig{0.0, sigma, 0}, rng).as_vector();
        sum += y;
        sq += y.cwiseProduct(y);
    }
    const Eigen::Vector4d clean(s.cx, s.cy, s.qd1, s.qd2);
    for (int i = 0; i < 4; ++i) {
        const double mean = sum(i) / n;
        const double var = sq(i) / n - mean * mean;
        const double sd = std::abs(clean(i)) * sigma;
        EXPECT_NEAR(mean, clean(i), 5.0 * sd / std::sqrt(n));
        EXPECT_NEAR(var, sd * sd, 5.0 * sd * sd * std::sqrt(2.0 / n));
    }
}

TEST(Noise, AdditiveDisturbanceMoments) {
    const double sigma = 3.0;
    Rng rng(43);
    const int n = 100000;
    double s1 = 0, s2 = 0, cross = 0;
    for (int i = 0; i < n; ++i) {
        const TorqueCommand u = apply_disturbance({1.0, -1.0}, NoiseConfig{sigma, 0.0, 0}, rng);
        s1 += u.tau1 - 1.0;
        s2 += (u.tau1 - 1.0) * (u.tau1 - 1.0);
        cross += (u.tau1 - 1.0) * (u.tau2 + 1.0);
    }
    EXPECT_NEAR(s1 / n, 0.0, 5.0 * sigma / std::sqrt(n));
    EXPECT_NEAR(s2 / n, sigma * sigma, 5.0 * sigma * sigma * std::sqrt(2.0 / n));
    EXPECT_NEAR(cross / n, 0.0, 5.0 * sigma * sigma / std::sqrt(n));
}

TEST(Noise, NegativeSigmaRejected) {
    EXPECT_THROW((NoiseConfig{-1.0, 0.0, 0}.validate()), std::invalid_argument);
}

TEST(Random, DeriveSeedSeparatesTagsAndIndices) {
    EXPECT_NE(derive_seed(1, "a", 0), derive_seed(1, "b", 0));
    EXPECT_NE(derive_seed(1, "a", 0), derive_seed(1, "a", 1));
    EXPECT_NE(derive_seed(1, "a", 0), derive_seed(2, "a", 0));
    EXPECT_EQ(derive_seed(1, "a", 3), derive_seed(1, "a", 3));
}

TEST(Random, UniformAndNormalMoments) {
    Rng rng(77);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    EXPECT_NEAR(su / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
    EXPECT_NEAR(sn / n, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(sn2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}
