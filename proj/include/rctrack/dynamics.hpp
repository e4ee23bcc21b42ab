#pragma once

// Two-link planar arm moving in the horizontal plane (no gravity, no
// friction): rigid-body dynamics, kinematics, explicit Euler stepping and the
// disturbance / measurement-noise injection points.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "rctrack/random.hpp"

namespace rctrack {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ArmParams {
    double m1 = 1.0;
    double m2 = 1.0;
    double l1 = 0.5;
    double l2 = 0.5;
    double lc1 = 0.25;
    double lc2 = 0.25;
    double i1 = 0.03;
    double i2 = 0.03;

    /// Same masses and inertias, new link lengths with centres of mass at
    /// mid-link.
    [[nodiscard]] ArmParams with_lengths(double new_l1, double new_l2) const {
        ArmParams p = *this;
        p.l1 = new_l1;
        p.l2 = new_l2;
        p.lc1 = new_l1 / 2.0;
        p.lc2 = new_l2 / 2.0;
        return p;
    }

    [[nodiscard]] double reach() const { return l1 + l2; }
    [[nodiscard]] double inner_radius() const { return std::abs(l1 - l2); }

    void validate() const {
        const std::array<std::pair<const char*, double>, 8> fields{{{"m1", m1},
                                                                    {"m2", m2},
                                                                    {"l1", l1},
                                                                    {"l2", l2},
                                                                    {"lc1", lc1},
                                                                    {"lc2", lc2},
                                                                    {"i1", i1},
                                                                    {"i2", i2}}};
        for (const auto& [name, value] : fields) {
            if (!(value > 0.0) || !std::isfinite(value)) {
                throw std::invalid_argument(std::string("arm parameter ") + name +
                                            " must be finite and > 0");
            }
        }
    }
};

struct JointAngles {
    double q1 = 0.0;
    double q2 = 0.0;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Full 8-dimensional plant state [cx, cy, q1, q2, qd1, qd2, qdd1, qdd2].
/// qdd holds the acceleration produced by the most recent torque command.
struct PlantState {
    double q1 = 0.0;
    double q2 = 0.0;
    double qd1 = 0.0;
    double qd2 = 0.0;
    double qdd1 = 0.0;
    double qdd2 = 0.0;
    double cx = 0.0;
    double cy = 0.0;

    [[nodiscard]] Eigen::Matrix<double, 8, 1> as_vector() const {
        Eigen::Matrix<double, 8, 1> v;
        v << cx, cy, q1, q2, qd1, qd2, qdd1, qdd2;
        return v;
    }

    [[nodiscard]] bool finite() const {
        return std::isfinite(q1) && std::isfinite(q2) && std::isfinite(qd1) &&
               std::isfinite(qd2) && std::isfinite(qdd1) && std::isfinite(qdd2) &&
               std::isfinite(cx) && std::isfinite(cy);
    }
};

struct TorqueCommand {
    double tau1 = 0.0;
    double tau2 = 0.0;

    [[nodiscard]] bool finite() const { return std::isfinite(tau1) && std::isfinite(tau2); }
};

/// Partial measurement y = [cx, cy, qd1, qd2].
struct Observation {
    double cx = 0.0;
    double cy = 0.0;
    double qd1 = 0.0;
    double qd2 = 0.0;

    [[nodiscard]] Eigen::Vector4d as_vector() const { return {cx, cy, qd1, qd2}; }
    static Observation from_vector(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
};

struct NoiseConfig {
    double sigma_d = 0.0;  ///< additive torque disturbance std-dev (N m)
    double sigma_m = 0.0;  ///< multiplicative measurement noise std-dev
    std::uint64_t seed = 0;

    void validate() const {
        if (!(sigma_d >= 0.0) || !(sigma_m >= 0.0)) {
            throw std::invalid_argument("noise standard deviations must be >= 0");
        }
    }
};

class NonFiniteError : public std::runtime_error {
  public:
    NonFiniteError(const std::string& what, long step)
        : std::runtime_error(what + (step >= 0 ? " at step " + std::to_string(step) : "")),
          step_(step) {}
    [[nodiscard]] long step() const { return step_; }

  private:
    long step_;
};

class ReachabilityError : public std::domain_error {
  public:
    enum class Bound { Inner, Outer };

    ReachabilityError(Bound bound, double radius, double limit)
        : std::domain_error(describe(bound, radius, limit)), bound_(bound) {}

    [[nodiscard]] Bound bound() const { return bound_; }

  private:
    static std::string describe(Bound bound, double radius, double limit) {
        return std::string("point unreachable: radius ") + std::to_string(radius) +
               (bound == Bound::Outer ? " exceeds outer bound l1+l2 = "
                                      : " is inside inner bound |l1-l2| = ") +
               std::to_string(limit);
    }
    Bound bound_;
};

inline Eigen::Matrix2d mass_matrix(const ArmParams& p, double q2) {
    const double c2 = std::cos(q2);
    const double m22 = p.m2 * p.lc2 * p.lc2 + p.i2;
    const double m12 = p.m2 * p.l1 * p.lc2 * c2 + m22;
    const double m11 = p.m1 * p.lc1 * p.lc1 + p.i1 +
                       p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2 + 2.0 * p.l1 * p.lc2 * c2) + p.i2;
    Eigen::Matrix2d m;
    m << m11, m12, m12, m22;
    return m;
}

inline Eigen::Matrix2d coriolis_matrix(const ArmParams& p, double q2, double qd1, double qd2) {
    const double h = p.m2 * p.l1 * p.lc2 * std::sin(q2);
    Eigen::Matrix2d c;
    c << -h * qd2, -h * (qd1 + qd2), h * qd1, 0.0;
    return c;
}

/// Joint accelerations solving M(q) qdd = tau - C(q, qd) qd.
inline Eigen::Vector2d forward_dynamics(const ArmParams& p, const PlantState& s,
                                        const TorqueCommand& u) {
    if (!s.finite() || !u.finite()) {
        throw NonFiniteError("forward_dynamics: non-finite state or torque", -1);
    }
    const Eigen::Matrix2d m = mass_matrix(p, s.q2);
    const Eigen::Matrix2d c = coriolis_matrix(p, s.q2, s.qd1, s.qd2);
    const Eigen::Vector2d rhs = Eigen::Vector2d(u.tau1, u.tau2) - c * Eigen::Vector2d(s.qd1, s.qd2);
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    return {(m(1, 1) * rhs(0) - m(0, 1) * rhs(1)) / det, (-m(1, 0) * rhs(0) + m(0, 0) * rhs(1)) / det};
}

inline Point2 forward_kinematics(const ArmParams& p, double q1, double q2) {
    return {p.l1 * std::cos(q1) + p.l2 * std::cos(q1 + q2),
            p.l1 * std::sin(q1) + p.l2 * std::sin(q1 + q2)};
}

inline double kinetic_energy(const ArmParams& p, const PlantState& s) {
    const Eigen::Vector2d qd(s.qd1, s.qd2);
    return 0.5 * qd.dot(mass_matrix(p, s.q2) * qd);
}

inline PlantState make_state(const ArmParams& p, double q1, double q2, double qd1 = 0.0,
                             double qd2 = 0.0) {
    PlantState s;
    s.q1 = q1;
    s.q2 = q2;
    s.qd1 = qd1;
    s.qd2 = qd2;
    const Point2 c = forward_kinematics(p, q1, q2);
    s.cx = c.x;
    s.cy = c.y;
    return s;
}

/// One explicit Euler step: positions advance with the velocity at t,
/// velocities with the acceleration at t. The returned state carries that
/// acceleration in qdd.
inline PlantState step(const ArmParams& p, const PlantState& s, const TorqueCommand& u, double dt) {
    if (!(dt > 0.0)) {
        throw std::invalid_argument("step: dt must be > 0");
    }
    const Eigen::Vector2d acc = forward_dynamics(p, s, u);
    PlantState next = make_state(p, s.q1 + s.qd1 * dt, s.q2 + s.qd2 * dt, s.qd1 + acc(0) * dt,
                                 s.qd2 + acc(1) * dt);
    next.qdd1 = acc(0);
    next.qdd2 = acc(1);
    if (!next.finite()) {
        throw NonFiniteError("step: non-finite plant state", -1);
    }
    return next;
}

inline double wrap_two_pi(double a) {
    double w = std::fmod(a, kTwoPi);
    if (w < 0.0) w += kTwoPi;
    if (w >= kTwoPi) w = 0.0;
    return w;
}

inline double wrap_pi(double a) {
    double w = std::remainder(a, kTwoPi);  // [-pi, pi]
    return w;
}

/// Reporting convention: q1 in [0, 2pi), q2 in [-pi, pi].
inline JointAngles wrap_angles(const JointAngles& q) { return {wrap_two_pi(q.q1), wrap_pi(q.q2)}; }

namespace detail {

// Elbow angle magnitude from the half-angle form, which stays accurate near
// the fully stretched and fully folded configurations where acos does not.
inline double elbow_magnitude(const ArmParams& p, double r) {
    const double outer = (p.l1 + p.l2 - r) * (p.l1 + p.l2 + r);
    const double inner = (r - (p.l1 - p.l2)) * (r + (p.l1 - p.l2));
    if (outer <= 0.0) return 0.0;
    if (inner <= 0.0) return kPi;
    return 2.0 * std::atan(std::sqrt(outer / inner));
}

inline double nearest_offset(double angle, double target) {
    return angle + kTwoPi * std::round((target - angle) / kTwoPi);
}

}  // namespace detail

/// Solves for the joint angles reaching (cx, cy).
///
/// Without a hint the elbow branch with q2 >= 0 is chosen and the result is
/// wrapped to q1 in [0, 2pi), q2 in [-pi, pi]. With a hint both branches are
/// shifted by multiples of 2pi towards the hint and the one closest in
/// |dq1| + |dq2| is returned unwrapped.
///
/// When `clamp` is set, points outside the annulus are replaced by the
/// nearest reachable point instead of raising ReachabilityError.
inline JointAngles inverse_kinematics(const ArmParams& p, double cx, double cy,
                                      const std::optional<JointAngles>& hint = std::nullopt,
                                      bool clamp = false) {
    constexpr double kTol = 1e-12;
    const double r = std::hypot(cx, cy);
    if (!std::isfinite(r)) {
        throw NonFiniteError("inverse_kinematics: non-finite target", -1);
    }
    if (!clamp) {
        if (r > p.reach() * (1.0 + kTol)) {
            throw ReachabilityError(ReachabilityError::Bound::Outer, r, p.reach());
        }
        if (r < p.inner_radius() * (1.0 - kTol) - kTol) {
            throw ReachabilityError(ReachabilityError::Bound::Inner, r, p.inner_radius());
        }
    }
    const double elbow = detail::elbow_magnitude(p, r);
    const double heading = std::atan2(cy, cx);

    auto solve = [&](double q2) {
        const double q1 = heading - std::atan2(p.l2 * std::sin(q2), p.l1 + p.l2 * std::cos(q2));
        return JointAngles{q1, q2};
    };

    if (!hint) {
        return wrap_angles(solve(elbow));
    }
    if (r <= kTol * p.reach()) {
        // At the shoulder the heading is undefined and any q1 reaches the
        // target, so keep the hint's.
        double q2 = detail::nearest_offset(elbow, hint->q2);
        const double alt = detail::nearest_offset(-elbow, hint->q2);
        if (std::abs(alt - hint->q2) < std::abs(q2 - hint->q2)) q2 = alt;
        return {hint->q1, q2};
    }
    JointAngles best{};
    double best_cost = std::numeric_limits<double>::infinity();
    for (double sign : {1.0, -1.0}) {
        JointAngles cand = solve(sign * elbow);
        cand.q1 = detail::nearest_offset(cand.q1, hint->q1);
        cand.q2 = detail::nearest_offset(cand.q2, hint->q2);
        const double cost = std::abs(cand.q1 - hint->q1) + std::abs(cand.q2 - hint->q2);
        if (cost < best_cost) {
            best_cost = cost;
            best = cand;
        }
    }
    return best;
}

/// y = [cx, cy, qd1, qd2] with each component x replaced by x + x * xi,
/// xi ~ N(0, sigma_m^2). Four normals are drawn on every call regardless of
/// sigma_m so that streams stay aligned across noise levels.
inline Observation observe(const PlantState& s, const NoiseConfig& cfg, Rng& rng) {
    Eigen::Vector4d y(s.cx, s.cy, s.qd1, s.qd2);
    for (int i = 0; i < 4; ++i) {
        const double xi = cfg.sigma_m * rng.normal();
        y(i) += y(i) * xi;
    }
    return Observation::from_vector(y);
}

/// tau + xi with xi ~ N(0, sigma_d^2), independently per joint.
inline TorqueCommand apply_disturbance(const TorqueCommand& u, const NoiseConfig& cfg, Rng& rng) {
    const double x1 = rng.normal();
    const double x2 = rng.normal();
    return {u.tau1 + cfg.sigma_d * x1, u.tau2 + cfg.sigma_d * x2};
}

}  // namespace rctrack
