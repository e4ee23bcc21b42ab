#pragma once

// Reference trajectories for the end effector and the desired observation
// series y_d = [cx, cy, qd1, qd2] derived from them.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/dynamics.hpp"
#include "rctrack/random.hpp"

namespace rctrack {

struct ReferencePath {
    std::vector<Point2> points;
    double dt = 0.01;
    std::string name;
    std::vector<std::string> warnings;

    [[nodiscard]] std::size_t size() const { return points.size(); }

    /// Largest per-step displacement (m).
    [[nodiscard]] double max_step() const {
        double m = 0.0;
        for (std::size_t k = 1; k < points.size(); ++k) {
            m = std::max(m, std::hypot(points[k].x - points[k - 1].x, points[k].y - points[k - 1].y));
        }
        return m;
    }

    [[nodiscard]] double max_speed() const { return max_step() / dt; }

    [[nodiscard]] double max_radius() const {
        double m = 0.0;
        for (const Point2& p : points) m = std::max(m, std::hypot(p.x, p.y));
        return m;
    }

    [[nodiscard]] double min_radius() const {
        double m = std::numeric_limits<double>::infinity();
        for (const Point2& p : points) m = std::min(m, std::hypot(p.x, p.y));
        return m;
    }
};

struct ReferenceSeries {
    Eigen::MatrixXd y_d;     // 4 x T: cx, cy, qd1, qd2
    Eigen::MatrixXd angles;  // 2 x T: unwrapped q1, q2 along the path
    ReferencePath source;
    std::vector<long> clamped;  // indices moved onto the reachable annulus

    [[nodiscard]] long length() const { return y_d.cols(); }
};

class PathReachabilityError : public std::domain_error {
  public:
    PathReachabilityError(long index, const std::string& detail)
        : std::domain_error("reference point " + std::to_string(index) + " is unreachable: " + detail),
          index_(index) {}
    [[nodiscard]] long index() const { return index_; }

  private:
    long index_;
};

// ---------------------------------------------------------------------------
// Chaotic generators

struct LorenzConfig {
    double sigma = 10.0;
    double rho = 28.0;
    double beta = 8.0 / 3.0;
    std::array<double, 3> initial{1.0, 1.0, 1.0};
    double transient = 10.0;       // Lorenz time units discarded
    double max_substep = 0.005;    // RK4 step bound
    std::array<int, 2> axes{0, 2};  // projected coordinates (x, z)
};

/// Fixed-step RK4 integration of the Lorenz system; `dt_sim` is the Lorenz
/// time between successive output points.
inline ReferencePath gen_lorenz(long n, double dt_sim, const LorenzConfig& cfg = {}, double dt = 0.01) {
    if (n <= 0 || !(dt_sim > 0.0)) throw std::invalid_argument("gen_lorenz: n and dt_sim must be positive");
    using V = std::array<double, 3>;
    auto f = [&](const V& s) {
        return V{cfg.sigma * (s[1] - s[0]), s[0] * (cfg.rho - s[2]) - s[1], s[0] * s[1] - cfg.beta * s[2]};
    };
    auto rk4 = [&](V& s, double h) {
        auto axpy = [](const V& a, double k, const V& b) { return V{a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2]}; };
        const V k1 = f(s);
        const V k2 = f(axpy(s, h / 2, k1));
        const V k3 = f(axpy(s, h / 2, k2));
        const V k4 = f(axpy(s, h, k3));
        for (int i = 0; i < 3; ++i) s[static_cast<std::size_t>(i)] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    };
    V s = cfg.initial;
    const long transient_steps = static_cast<long>(std::ceil(cfg.transient / cfg.max_substep));
    for (long k = 0; k < transient_steps; ++k) rk4(s, cfg.transient / static_cast<double>(transient_steps));

    const long sub = std::max(1L, static_cast<long>(std::ceil(dt_sim / cfg.max_substep)));
    const double h = dt_sim / static_cast<double>(sub);
    ReferencePath path;
    path.dt = dt;
    path.name = "lorenz";
    path.points.reserve(static_cast<std::size_t>(n));
    const auto ax = static_cast<std::size_t>(cfg.axes[0]);
    const auto ay = static_cast<std::size_t>(cfg.axes[1]);
    for (long k = 0; k < n; ++k) {
        path.points.push_back({s[ax], s[ay]});
        for (long j = 0; j < sub; ++j) rk4(s, h);
    }
    return path;
}

/// Fixed-capacity delay line: push one sample, read the sample pushed
/// `capacity` pushes ago.
class DelayLine {
  public:
    DelayLine(std::size_t capacity, double fill) : buf_(capacity, fill) {}

    [[nodiscard]] double oldest() const { return buf_[head_]; }

    void push(double x) {
        buf_[head_] = x;
        head_ = (head_ + 1) % buf_.size();
    }

  private:
    std::vector<double> buf_;
    std::size_t head_ = 0;
};

struct MackeyGlassConfig {
    double tau = 17.0;
    double production = 0.2;
    double decay = 0.1;
    double exponent = 10.0;
    double history = 1.2;       // constant x(t) for t <= 0
    double transient = 1000.0;  // time units discarded
    double max_substep = 0.02;  // Euler step bound; the delay is a whole number of steps
};

inline double mackey_glass_rate(const MackeyGlassConfig& c, double x, double x_delayed) {
    return c.production * x_delayed / (1.0 + std::pow(x_delayed, c.exponent)) - c.decay * x;
}

/// Euler integration of dx/dt = a x(t-tau)/(1 + x(t-tau)^n) - b x(t) with a
/// ring-buffer history; the 2-D path is the delay embedding (x(t), x(t-tau)).
/// `dt_sim` is the Mackey-Glass time between output points.
inline ReferencePath gen_mackey_glass(long n, double dt_sim, const MackeyGlassConfig& cfg = {}, double dt = 0.01) {
    if (n <= 0 || !(dt_sim > 0.0)) throw std::invalid_argument("gen_mackey_glass: n and dt_sim must be positive");
    if (!(cfg.tau > 0.0)) throw std::invalid_argument("gen_mackey_glass: tau must be > 0");
    const auto delay_steps = static_cast<std::size_t>(std::ceil(cfg.tau / cfg.max_substep));
    const double h = cfg.tau / static_cast<double>(delay_steps);

    DelayLine line(delay_steps, cfg.history);
    double x = cfg.history;
    auto advance = [&] {
        const double delayed = line.oldest();
        line.push(x);
        x += h * mackey_glass_rate(cfg, x, delayed);
    };
    const auto transient_steps = static_cast<long>(std::ceil(cfg.transient / h));
    for (long k = 0; k < transient_steps; ++k) advance();

    // Record the Euler grid from here on (including one delay of history) and
    // sample both embedding coordinates by linear interpolation.
    const double t_end = dt_sim * static_cast<double>(n - 1);
    const auto grid = static_cast<std::size_t>(std::ceil(t_end / h)) + 2;
    std::vector<double> samples;
    samples.reserve(delay_steps + grid);
    {
        // Recover the delayed history currently held by the line.
        DelayLine copy = line;
        for (std::size_t k = 0; k < delay_steps; ++k) {
            samples.push_back(copy.oldest());
            copy.push(0.0);
        }
    }
    samples.push_back(x);
    for (std::size_t k = 0; k < grid; ++k) {
        advance();
        samples.push_back(x);
    }
    auto at = [&](double t) {  // t measured from the recording origin, >= -tau
        const double pos = t / h + static_cast<double>(delay_steps);
        const auto i = static_cast<std::size_t>(std::floor(pos));
        const double frac = pos - static_cast<double>(i);
        if (i + 1 >= samples.size()) return samples.back();
        return samples[i] * (1.0 - frac) + samples[i + 1] * frac;
    };
    ReferencePath path;
    path.dt = dt;
    path.name = "mackey_glass";
    path.points.reserve(static_cast<std::size_t>(n));
    for (long k = 0; k < n; ++k) {
        const double t = dt_sim * static_cast<double>(k);
        path.points.push_back({at(t), at(t - cfg.tau)});
    }
    return path;
}

// ---------------------------------------------------------------------------
// Periodic and stochastic generators

inline ReferencePath gen_circle(long n, double radius, double period, double dt = 0.01) {
    if (n <= 0 || !(radius > 0.0) || !(period > 0.0)) throw std::invalid_argument("gen_circle: parameters must be positive");
    ReferencePath path;
    path.dt = dt;
    path.name = "circle";
    const double w = kTwoPi / period;
    for (long k = 0; k < n; ++k) {
        const double t = dt * static_cast<double>(k);
        path.points.push_back({radius * std::cos(w * t), radius * std::sin(w * t)});
    }
    return path;
}

/// Lissajous figure eight (a sin wt, b sin 2wt).
inline ReferencePath gen_figure_eight(long n, double a, double b, double period, double dt = 0.01) {
    if (n <= 0 || !(a > 0.0) || !(b > 0.0) || !(period > 0.0)) {
        throw std::invalid_argument("gen_figure_eight: parameters must be positive");
    }
    ReferencePath path;
    path.dt = dt;
    path.name = "figure_eight";
    const double w = kTwoPi / period;
    for (long k = 0; k < n; ++k) {
        const double t = dt * static_cast<double>(k);
        path.points.push_back({a * std::sin(w * t), b * std::sin(2.0 * w * t)});
    }
    return path;
}

ReferencePath rescale_to_workspace(const ReferencePath& path, const ArmParams& p, double margin = 0.1);

/// Cumulative Gaussian increments, Gaussian-smoothed, then fitted into the
/// arm workspace.
inline ReferencePath gen_random_walk(long n, double step_std, double smooth_sigma, Rng& rng,
                                     const ArmParams& arm = {}, double margin = 0.1, double dt = 0.01) {
    if (n <= 1 || !(step_std > 0.0) || !(smooth_sigma >= 0.0)) {
        throw std::invalid_argument("gen_random_walk: n > 1, step_std > 0 and smooth_sigma >= 0 required");
    }
    Eigen::VectorXd xs(n);
    Eigen::VectorXd ys(n);
    double x = 0.0;
    double y = 0.0;
    for (long k = 0; k < n; ++k) {
        x += rng.normal(0.0, step_std);
        y += rng.normal(0.0, step_std);
        xs(k) = x;
        ys(k) = y;
    }
    // Same normalized, reflective Gaussian filter as the training torques.
    auto smooth = [&](const Eigen::VectorXd& v) {
        if (smooth_sigma <= 0.0) return v;
        const long radius = static_cast<long>(std::ceil(4.0 * smooth_sigma));
        Eigen::VectorXd out(n);
        std::vector<double> kern(static_cast<std::size_t>(2 * radius + 1));
        double norm = 0.0;
        for (long k = -radius; k <= radius; ++k) {
            const double z = static_cast<double>(k) / smooth_sigma;
            kern[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * z * z);
            norm += kern[static_cast<std::size_t>(k + radius)];
        }
        for (long i = 0; i < n; ++i) {
            double acc = 0.0;
            for (long k = -radius; k <= radius; ++k) {
                long j = i + k;
                const long period = 2 * n;
                j %= period;
                if (j < 0) j += period;
                if (j >= n) j = period - 1 - j;
                acc += kern[static_cast<std::size_t>(k + radius)] * v(j);
            }
            out(i) = acc / norm;
        }
        return out;
    };
    xs = smooth(xs);
    ys = smooth(ys);
    ReferencePath path;
    path.dt = dt;
    path.name = "random_walk";
    for (long k = 0; k < n; ++k) path.points.push_back({xs(k), ys(k)});
    // A walk is never centred, so always fit the box to the workspace.
    double min_x = xs.minCoeff(), max_x = xs.maxCoeff(), min_y = ys.minCoeff(), max_y = ys.maxCoeff();
    const double cx = 0.5 * (min_x + max_x);
    const double cy = 0.5 * (min_y + max_y);
    for (Point2& p : path.points) {
        p.x -= cx;
        p.y -= cy;
    }
    const double r = path.max_radius();
    const double target = arm.reach() * (1.0 - margin);
    if (r > 0.0) {
        for (Point2& p : path.points) {
            p.x *= target / r;
            p.y *= target / r;
        }
    }
    return path;
}

// ---------------------------------------------------------------------------
// Workspace fitting and timing

namespace detail {

/// Without a caller hint, a path that starts exactly at the shoulder has no
/// defined heading; chain from the first point that has one.
inline std::optional<JointAngles> start_hint(const ReferencePath& path, const ArmParams& arm,
                                             std::optional<JointAngles> hint) {
    if (hint || path.points.empty()) return hint;
    const Point2& p0 = path.points.front();
    if (std::hypot(p0.x, p0.y) > 1e-12 * arm.reach()) return hint;
    for (const Point2& q : path.points) {
        if (std::hypot(q.x, q.y) > 1e-12 * arm.reach()) return inverse_kinematics(arm, q.x, q.y, std::nullopt, true);
    }
    return hint;
}

}  // namespace detail

/// Points strictly inside the inner radius |l1 - l2|.
inline long count_inside_inner(const ReferencePath& path, const ArmParams& p) {
    const double inner = p.inner_radius();
    long n = 0;
    for (const Point2& q : path.points) n += std::hypot(q.x, q.y) < inner ? 1 : 0;
    return n;
}

/// Identity when the path already lies within (l1 + l2)(1 - margin).
/// Otherwise the bounding box is centred on the origin and, if still too
/// large, uniformly scaled so the farthest point sits at (l1 + l2)(1 - margin).
inline ReferencePath rescale_to_workspace(const ReferencePath& path, const ArmParams& p, double margin) {
    if (path.points.empty()) throw std::invalid_argument("rescale_to_workspace: empty path");
    if (!(margin >= 0.0 && margin < 1.0)) throw std::invalid_argument("rescale_to_workspace: margin must be in [0, 1)");
    double min_x = std::numeric_limits<double>::infinity();
    double max_x = -min_x;
    double min_y = min_x;
    double max_y = -min_x;
    for (const Point2& q : path.points) {
        min_x = std::min(min_x, q.x);
        max_x = std::max(max_x, q.x);
        min_y = std::min(min_y, q.y);
        max_y = std::max(max_y, q.y);
    }
    if (!(max_x - min_x > 0.0) && !(max_y - min_y > 0.0)) {
        throw std::invalid_argument("rescale_to_workspace: degenerate path (zero extent)");
    }
    const double target = p.reach() * (1.0 - margin);
    ReferencePath out = path;
    if (path.max_radius() > target) {
        const double cx = 0.5 * (min_x + max_x);
        const double cy = 0.5 * (min_y + max_y);
        for (Point2& q : out.points) {
            q.x -= cx;
            q.y -= cy;
        }
        const double r = out.max_radius();
        if (r > target) {
            const double s = target / r;
            for (Point2& q : out.points) {
                q.x *= s;
                q.y *= s;
            }
        }
    }
    const long inside = count_inside_inner(out, p);
    if (inside > 0) {
        out.warnings.push_back(std::to_string(inside) + " point(s) lie inside the unreachable inner radius |l1-l2| = " +
                               std::to_string(p.inner_radius()));
    }
    return out;
}

/// Slows a path down (linear interpolation along its time axis) so that the
/// maximum speed does not exceed `max_speed`. Paths already slow enough are
/// returned unchanged.
inline ReferencePath limit_speed(const ReferencePath& path, double max_speed) {
    if (!(max_speed > 0.0)) throw std::invalid_argument("limit_speed: max_speed must be > 0");
    const double v = path.max_speed();
    if (v <= max_speed || path.size() < 2) return path;
    const double stride = max_speed / v;
    ReferencePath out;
    out.dt = path.dt;
    out.name = path.name;
    out.warnings = path.warnings;
    const double last = static_cast<double>(path.size() - 1);
    for (double s = 0.0; s <= last + 1e-12; s += stride) {
        const auto i = static_cast<std::size_t>(std::floor(s));
        const double f = s - static_cast<double>(i);
        const Point2& a = path.points[i];
        const Point2& b = path.points[std::min(i + 1, path.size() - 1)];
        out.points.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
    }
    return out;
}

/// Local retiming near the singular centre: the path parameter advances by
/// at most one sample per step and, where the continuity-chained joint
/// angles turn faster than `max_joint_speed`, proportionally less. Geometry
/// is preserved; points are linearly interpolated in Cartesian space.
inline ReferencePath limit_joint_speed(const ReferencePath& path, const ArmParams& arm, double max_joint_speed,
                                       std::optional<JointAngles> hint = std::nullopt) {
    if (!(max_joint_speed > 0.0)) throw std::invalid_argument("limit_joint_speed: bound must be > 0");
    const std::size_t n = path.size();
    if (n < 2) return path;
    std::vector<double> rate(n - 1);
    hint = detail::start_hint(path, arm, hint);
    JointAngles prev = inverse_kinematics(arm, path.points[0].x, path.points[0].y, hint, /*clamp=*/true);
    bool slowed = false;
    // The angle map bends inside a segment, so sample it at a few sub-points
    // and use the steepest piece.
    constexpr int kSub = 4;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const Point2& a = path.points[i];
        const Point2& b = path.points[i + 1];
        double dq = 0.0;
        JointAngles next = prev;
        for (int j = 1; j <= kSub; ++j) {
            const double f = static_cast<double>(j) / kSub;
            const JointAngles q = inverse_kinematics(arm, a.x + f * (b.x - a.x), a.y + f * (b.y - a.y), next, true);
            dq = std::max({dq, kSub * std::abs(q.q1 - next.q1), kSub * std::abs(q.q2 - next.q2)});
            next = q;
        }
        rate[i] = std::min(1.0, max_joint_speed * path.dt / std::max(dq, 1e-300));
        slowed = slowed || rate[i] < 1.0;
        prev = next;
    }
    if (!slowed) return path;
    ReferencePath out;
    out.dt = path.dt;
    out.name = path.name;
    out.warnings = path.warnings;
    const double last = static_cast<double>(n - 1);
    for (double s = 0.0; s <= last + 1e-12;) {
        const auto i = std::min(static_cast<std::size_t>(std::floor(s)), n - 1);
        const double f = s - static_cast<double>(i);
        const Point2& a = path.points[i];
        const Point2& b = path.points[std::min(i + 1, n - 1)];
        out.points.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
        if (i + 1 >= n) break;
        s += rate[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Desired observation series

/// Joint angles along the path by continuity-chained inverse kinematics,
/// desired joint velocities by central differences of the unwrapped angles
/// (second-order one-sided at the ends).
///
/// With `clamp`, unreachable points are replaced by the nearest reachable
/// point and listed in `clamped`; otherwise the first one raises
/// PathReachabilityError.
inline ReferenceSeries derive_reference_series(const ReferencePath& path, const ArmParams& p,
                                               std::optional<JointAngles> hint = std::nullopt, bool clamp = false) {
    const long n = static_cast<long>(path.size());
    if (n == 0) throw std::invalid_argument("derive_reference_series: empty path");
    hint = detail::start_hint(path, p, hint);
    ReferenceSeries s;
    s.source = path;
    s.y_d.resize(4, n);
    s.angles.resize(2, n);
    const double inner = p.inner_radius();
    const double outer = p.reach();
    for (long k = 0; k < n; ++k) {
        const Point2& pt = path.points[static_cast<std::size_t>(k)];
        const double r = std::hypot(pt.x, pt.y);
        const bool outside = r > outer * (1.0 + 1e-12) || r < inner * (1.0 - 1e-12) - 1e-12;
        if (outside && !clamp) {
            try {
                (void)inverse_kinematics(p, pt.x, pt.y);
            } catch (const ReachabilityError& e) {
                throw PathReachabilityError(k, e.what());
            }
        }
        if (outside) s.clamped.push_back(k);
        const JointAngles q = inverse_kinematics(p, pt.x, pt.y, hint, /*clamp=*/true);
        s.angles(0, k) = q.q1;
        s.angles(1, k) = q.q2;
        hint = q;
        if (outside) {
            const Point2 c = forward_kinematics(p, q.q1, q.q2);
            s.y_d(0, k) = c.x;
            s.y_d(1, k) = c.y;
        } else {
            s.y_d(0, k) = pt.x;
            s.y_d(1, k) = pt.y;
        }
    }
    if (!s.clamped.empty()) {
        s.source.points.clear();
        for (long k = 0; k < n; ++k) s.source.points.push_back({s.y_d(0, k), s.y_d(1, k)});
    }
    const double dt = path.dt;
    for (int j = 0; j < 2; ++j) {
        for (long k = 0; k < n; ++k) {
            double v = 0.0;
            if (n >= 3) {
                if (k == 0) {
                    v = (-3.0 * s.angles(j, 0) + 4.0 * s.angles(j, 1) - s.angles(j, 2)) / (2.0 * dt);
                } else if (k == n - 1) {
                    v = (3.0 * s.angles(j, n - 1) - 4.0 * s.angles(j, n - 2) + s.angles(j, n - 3)) / (2.0 * dt);
                } else {
                    v = (s.angles(j, k + 1) - s.angles(j, k - 1)) / (2.0 * dt);
                }
            } else if (n == 2) {
                v = (s.angles(j, 1) - s.angles(j, 0)) / dt;
            }
            s.y_d(2 + j, k) = v;
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Two-column text format

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_path(std::ostream& os, const ReferencePath& path) {
    os << "# name: " << path.name << '\n' << "# dt: " << format_double(path.dt) << '\n';
    for (const Point2& p : path.points) os << format_double(p.x) << ' ' << format_double(p.y) << '\n';
}

inline ReferencePath read_path(std::istream& is) {
    ReferencePath path;
    path.name = "external";
    std::string line;
    long lineno = 0;
    bool have_dt = false;
    while (std::getline(is, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        if (line[first] == '#') {
            std::string body = line.substr(first + 1);
            const auto colon = body.find(':');
            if (colon == std::string::npos) continue;
            auto trim = [](std::string s) {
                const auto b = s.find_first_not_of(" \t\r");
                const auto e = s.find_last_not_of(" \t\r");
                return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
            };
            const std::string key = trim(body.substr(0, colon));
            const std::string value = trim(body.substr(colon + 1));
            if (key == "name") path.name = value;
            if (key == "dt") {
                try {
                    path.dt = std::stod(value);
                } catch (const std::exception&) {
                    throw std::runtime_error("path file line " + std::to_string(lineno) + ": bad dt value");
                }
                have_dt = true;
            }
            continue;
        }
        std::istringstream ls(line);
        double x = 0.0;
        double y = 0.0;
        std::string extra;
        if (!(ls >> x >> y) || (ls >> extra)) {
            throw std::runtime_error("path file line " + std::to_string(lineno) + ": expected two numbers");
        }
        if (!std::isfinite(x) || !std::isfinite(y)) {
            throw std::runtime_error("path file line " + std::to_string(lineno) + ": non-finite value");
        }
        path.points.push_back({x, y});
    }
    if (!have_dt) throw std::runtime_error("path file: missing '# dt:' header");
    if (!(path.dt > 0.0)) throw std::runtime_error("path file: dt must be > 0");
    if (path.points.empty()) throw std::runtime_error("path file: no points");
    return path;
}

// ---------------------------------------------------------------------------
// Named references

struct TrajectorySpec {
    std::string kind = "circle";  // circle | figure_eight | lorenz | mackey_glass | random_walk | file
    double radius = 0.6;
    double period = 10.0;
    double a = 0.7;
    double b = 0.35;
    double eight_period = 20.0;
    LorenzConfig lorenz;
    MackeyGlassConfig mackey_glass;
    double walk_step = 0.01;
    double walk_smooth = 50.0;
    std::string path_file;
    double max_speed = 0.5;        // m/s bound applied to chaotic and external paths
    double max_joint_speed = 2.0;  // rad/s local bound for the same paths; 0 disables
    double margin = 0.1;
    std::uint64_t seed = 0;
};

/// Unscaled output of the chosen generator, timed so that after
/// rescale_to_workspace(arm) its speed stays within spec.max_speed.
inline ReferencePath raw_reference(const TrajectorySpec& spec, const ArmParams& arm, long n, double dt = 0.01) {
    auto timed = [&](auto&& gen, double dt_sim0) {
        // The fitted scale does not depend on timing (given a long enough
        // run), so speed is proportional to dt_sim.
        const long probe_n = std::max(n, 20000L);
        double dt_sim = dt_sim0;
        ReferencePath probe = rescale_to_workspace(gen(probe_n, dt_sim), arm, spec.margin);
        for (int iter = 0; iter < 8; ++iter) {
            const double v = probe.max_speed();
            if (v <= spec.max_speed) break;
            dt_sim *= 0.995 * spec.max_speed / v;
            probe = rescale_to_workspace(gen(probe_n, dt_sim), arm, spec.margin);
        }
        ReferencePath out = gen(n, dt_sim);
        return out;
    };
    if (spec.kind == "circle") return gen_circle(n, spec.radius, spec.period, dt);
    if (spec.kind == "figure_eight") return gen_figure_eight(n, spec.a, spec.b, spec.eight_period, dt);
    if (spec.kind == "lorenz") {
        return timed([&](long m, double h) { return gen_lorenz(m, h, spec.lorenz, dt); }, 0.01);
    }
    if (spec.kind == "mackey_glass") {
        return timed([&](long m, double h) { return gen_mackey_glass(m, h, spec.mackey_glass, dt); }, 0.1);
    }
    if (spec.kind == "random_walk") {
        Rng rng(derive_seed(spec.seed, "random-walk"));
        return gen_random_walk(n, spec.walk_step, spec.walk_smooth, rng, arm, spec.margin, dt);
    }
    if (spec.kind == "file") {
        throw std::invalid_argument("raw_reference: file trajectories are loaded by the caller");
    }
    throw std::invalid_argument("unknown trajectory kind '" + spec.kind + "'");
}

/// How a raw generator output is placed and timed for a particular arm.
struct PathFit {
    double margin = 0.1;
    double max_speed = 0.0;        // m/s, 0 leaves the timing alone
    double max_joint_speed = 0.0;  // rad/s, 0 disables the local slow-down
};

inline ReferencePath fit_path(const ReferencePath& raw, const ArmParams& arm, const PathFit& fit) {
    ReferencePath path = rescale_to_workspace(raw, arm, fit.margin);
    if (fit.max_speed > 0.0) path = limit_speed(path, fit.max_speed);
    if (fit.max_joint_speed > 0.0) path = limit_joint_speed(path, arm, fit.max_joint_speed);
    return path;
}

/// Chaotic paths get the speed bounds; periodic ones are timed by their
/// period and the random walk by its smoothing.
inline PathFit path_fit_for(const TrajectorySpec& spec) {
    const bool chaotic = spec.kind == "lorenz" || spec.kind == "mackey_glass" || spec.kind == "file";
    return {spec.margin, chaotic ? spec.max_speed : 0.0, chaotic ? spec.max_joint_speed : 0.0};
}

/// Workspace-fitted, speed-limited reference of at least n points.
inline ReferencePath make_reference(const TrajectorySpec& spec, const ArmParams& arm, long n, double dt = 0.01) {
    return fit_path(raw_reference(spec, arm, n, dt), arm, path_fit_for(spec));
}

}  // namespace rctrack
