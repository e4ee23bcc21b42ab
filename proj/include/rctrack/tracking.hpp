#pragma once

// Closed-loop deployment of a trained controller: bridge onto the reference,
// run the plant, score the post-bridge window, and sweep noise / arm lengths.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/dynamics.hpp"
#include "rctrack/esn.hpp"
#include "rctrack/parallel.hpp"
#include "rctrack/random.hpp"
#include "rctrack/trajectories.hpp"
#include "rctrack/training.hpp"

namespace rctrack {

struct TrackConfig {
    long test_len = 25000;
    long bridge_len = 500;
    double dt = 0.01;
    NoiseConfig noise;
    ArmParams plant;
    JointAngles initial{0.0, kPi / 2.0};
    // Gain on the joint-angle error folded into the desired velocity fed to
    // the controller; 0 feeds the raw reference velocity.
    double position_gain = 10.0;
    bool noisy_reference = false;  // also apply measurement noise to y_d
    double divergence_bound = 1e3;  // rad/s
    double success_fraction = 0.05;  // of l1 + l2
    std::uint64_t seed = 0;

    void validate() const {
        if (test_len <= 0) throw std::invalid_argument("track.test_len must be > 0");
        if (bridge_len < 0) throw std::invalid_argument("track.bridge_len must be >= 0");
        if (!(dt > 0.0)) throw std::invalid_argument("track.dt must be > 0");
        if (!(position_gain >= 0.0)) throw std::invalid_argument("track.position_gain must be >= 0");
        if (!(divergence_bound > 0.0)) throw std::invalid_argument("track.divergence_bound must be > 0");
        if (!(success_fraction > 0.0)) throw std::invalid_argument("track.success_fraction must be > 0");
        noise.validate();
        plant.validate();
    }
};

inline void to_json(nlohmann::json& j, const TrackConfig& c) {
    j = {{"test_len", c.test_len},
         {"bridge_len", c.bridge_len},
         {"dt", c.dt},
         {"sigma_d", c.noise.sigma_d},
         {"sigma_m", c.noise.sigma_m},
         {"plant", c.plant},
         {"initial_q", {c.initial.q1, c.initial.q2}},
         {"position_gain", c.position_gain},
         {"noisy_reference", c.noisy_reference},
         {"divergence_bound", c.divergence_bound},
         {"success_fraction", c.success_fraction},
         {"seed", c.seed}};
}

// ---------------------------------------------------------------------------
// Bridge

/// Straight chord from `start` to `target` with a cosine speed profile:
/// point k of n is start + (0.5 - 0.5 cos(pi k / n)) (target - start), for
/// k = 0 .. n-1. Point n would coincide with the target.
inline std::vector<Point2> bridge_points(const Point2& start, const Point2& target, long n) {
    std::vector<Point2> out;
    out.reserve(static_cast<std::size_t>(std::max(0L, n)));
    for (long k = 0; k < n; ++k) {
        const double s = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(k) / static_cast<double>(n));
        out.push_back({start.x + s * (target.x - start.x), start.y + s * (target.y - start.y)});
    }
    return out;
}

/// Bridge length actually used: at least `requested`, lengthened so the peak
/// per-step displacement pi d / (2 n) stays below 1.5 times the path's own
/// maximum step. A bridge onto the path's own start is empty.
inline long effective_bridge_len(const Point2& start, const ReferencePath& path, long requested) {
    const Point2& target = path.points.front();
    const double d = std::hypot(target.x - start.x, target.y - start.y);
    if (d == 0.0) return 0;
    const double limit = 1.5 * path.max_step();
    long n = std::max(requested, 1L);
    if (limit > 0.0) n = std::max(n, static_cast<long>(std::ceil(kPi * d / (2.0 * limit))) + 1);
    return n;
}

struct TrackingReference {
    ReferenceSeries series;  // bridge followed by the path
    long bridge_len = 0;
};

/// Prepends a bridge from the arm's initial end-effector position and derives
/// the desired series by continuity from the initial joint angles.
inline TrackingReference build_bridge(const ReferencePath& path, const ArmParams& arm, const JointAngles& initial,
                                      long bridge_len, bool clamp = false) {
    if (path.points.empty()) throw std::invalid_argument("build_bridge: empty path");
    const Point2 start = forward_kinematics(arm, initial.q1, initial.q2);
    const long n = effective_bridge_len(start, path, bridge_len);
    ReferencePath full;
    full.dt = path.dt;
    full.name = path.name;
    full.warnings = path.warnings;
    full.points = bridge_points(start, path.points.front(), n);
    full.points.insert(full.points.end(), path.points.begin(), path.points.end());
    TrackingReference ref;
    ref.bridge_len = n;
    try {
        ref.series = derive_reference_series(full, arm, initial, clamp);
    } catch (const PathReachabilityError& e) {
        if (e.index() < n) {
            throw PathReachabilityError(e.index(), std::string(e.what()) +
                                                       " (the bridge chord crosses the unreachable region; "
                                                       "use a longer bridge or a different initial configuration)");
        }
        throw;
    }
    return ref;
}

// ---------------------------------------------------------------------------
// Closed loop

struct RunResult {
    Eigen::MatrixXd actual;   // 4 x T, clean y(k+1)
    Eigen::MatrixXd desired;  // 4 x T, y_d(k+1)
    Eigen::MatrixXd torques;  // 2 x T, controller output u(k)
    Eigen::MatrixXd states;   // 8 x T, plant state after step k
    long bridge_len = 0;
    long steps = 0;  // completed steps
    double rmse_position = std::numeric_limits<double>::quiet_NaN();
    double rmse_full = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    bool success = false;
    std::string failure;
};

/// Root mean square Euclidean position error over the post-bridge window.
inline double rmse_position(const RunResult& r) {
    const long from = r.bridge_len;
    const long n = r.steps - from;
    if (n <= 0) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::MatrixXd d = r.actual.block(0, from, 2, n) - r.desired.block(0, from, 2, n);
    return std::sqrt(d.squaredNorm() / static_cast<double>(n));
}

/// As rmse_position but with the joint-velocity errors added to each
/// step's squared error.
inline double rmse_full(const RunResult& r) {
    const long from = r.bridge_len;
    const long n = r.steps - from;
    if (n <= 0) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::MatrixXd d = r.actual.block(0, from, 4, n) - r.desired.block(0, from, 4, n);
    return std::sqrt(d.squaredNorm() / static_cast<double>(n));
}

/// The physical arm under explicit Euler.
class ArmPlant {
  public:
    ArmPlant(const ArmParams& p, const JointAngles& q0, double dt) : p_(p), s_(make_state(p, q0.q1, q0.q2)), dt_(dt) {}

    [[nodiscard]] const PlantState& state() const { return s_; }
    void advance(const TorqueCommand& u, long /*k*/) { s_ = step(p_, s_, u, dt_); }

  private:
    ArmParams p_;
    PlantState s_;
    double dt_;
};

/// Runs the loop against any plant exposing state() and advance(u, k).
template <typename Plant>
RunResult run_closed_loop(const EsnController& c, const TrackConfig& cfg, const TrackingReference& ref, Plant& plant) {
    cfg.validate();
    if (!c.trained()) throw std::logic_error("run_tracking: controller is untrained");
    if (c.params.dim_in != 8 || c.params.dim_out != 2) {
        throw std::invalid_argument("run_tracking: controller must map 8 inputs to 2 torques");
    }
    const long total = ref.bridge_len + cfg.test_len;
    if (ref.series.length() < total + 1) {
        throw std::invalid_argument("run_tracking: reference has " + std::to_string(ref.series.length()) +
                                    " points, need bridge_len + test_len + 1 = " + std::to_string(total + 1));
    }
    if (std::abs(ref.series.source.dt - cfg.dt) > 1e-12 * cfg.dt) {
        throw std::invalid_argument("run_tracking: reference dt differs from track.dt");
    }

    RunResult out;
    out.bridge_len = ref.bridge_len;
    out.actual.setZero(4, total);
    out.desired.setZero(4, total);
    out.torques.setZero(2, total);
    out.states.setZero(8, total);

    Rng rng_m(derive_seed(cfg.noise.seed, "measurement"));
    Rng rng_d(derive_seed(cfg.noise.seed, "disturbance"));
    Rng rng_r(derive_seed(cfg.noise.seed, "reference-noise"));
    const NoiseConfig ref_noise{0.0, cfg.noise.sigma_m, 0};

    const Eigen::MatrixXd& w_out = *c.weights.w_out;
    EsnState r(c.params.n_r);
    Eigen::VectorXd input(8);
    JointAngles q_hat{ref.series.angles(0, 0), ref.series.angles(1, 0)};

    for (long k = 0; k < total; ++k) {
        const Observation y = observe(plant.state(), cfg.noise, rng_m);
        Eigen::Vector4d yd = ref.series.y_d.col(k + 1);
        if (cfg.noisy_reference) {
            PlantState as_state;
            as_state.cx = yd(0);
            as_state.cy = yd(1);
            as_state.qd1 = yd(2);
            as_state.qd2 = yd(3);
            yd = observe(as_state, ref_noise, rng_r).as_vector();
        }
        if (cfg.position_gain > 0.0) {
            if (std::isfinite(y.cx) && std::isfinite(y.cy)) {
                q_hat = inverse_kinematics(cfg.plant, y.cx, y.cy, q_hat, /*clamp=*/true);
            }
            // Both angle chains can pick different 2 pi offsets after a pass
            // near the singular centre; only the wrapped difference matters.
            yd(2) += cfg.position_gain * wrap_pi(ref.series.angles(0, k + 1) - (q_hat.q1 + y.qd1 * cfg.dt));
            yd(3) += cfg.position_gain * wrap_pi(ref.series.angles(1, k + 1) - (q_hat.q2 + y.qd2 * cfg.dt));
        }
        input << y.as_vector(), yd;
        update_state_inplace(c.weights, r, input, c.params.alpha);
        const Eigen::Vector2d u_vec = w_out * r.r;
        const TorqueCommand u{u_vec(0), u_vec(1)};
        const TorqueCommand applied = apply_disturbance(u, cfg.noise, rng_d);
        try {
            plant.advance(applied, k);
        } catch (const NonFiniteError& e) {
            out.diverged = true;
            out.failure = std::string("non-finite state: ") + e.what();
            out.steps = k;
            break;
        }
        const PlantState& s = plant.state();
        out.actual.col(k) << s.cx, s.cy, s.qd1, s.qd2;
        out.desired.col(k) = ref.series.y_d.col(k + 1);
        out.torques.col(k) << u.tau1, u.tau2;
        out.states.col(k) = s.as_vector();
        out.steps = k + 1;
        if (std::max(std::abs(s.qd1), std::abs(s.qd2)) > cfg.divergence_bound) {
            out.diverged = true;
            out.failure = "joint speed exceeded " + format_double(cfg.divergence_bound) + " rad/s at step " +
                          std::to_string(k);
            break;
        }
    }
    if (out.steps < total) {
        out.actual.conservativeResize(Eigen::NoChange, out.steps);
        out.desired.conservativeResize(Eigen::NoChange, out.steps);
        out.torques.conservativeResize(Eigen::NoChange, out.steps);
        out.states.conservativeResize(Eigen::NoChange, out.steps);
    }
    if (!out.diverged) {
        out.rmse_position = rmse_position(out);
        out.rmse_full = rmse_full(out);
        out.success = out.rmse_position < cfg.success_fraction * cfg.plant.reach();
        if (!out.success) out.failure = "rmse_position above success threshold";
    }
    return out;
}

inline RunResult run_tracking(const EsnController& c, const TrackConfig& cfg, const TrackingReference& ref) {
    ArmPlant plant(cfg.plant, cfg.initial, cfg.dt);
    return run_closed_loop(c, cfg, ref, plant);
}

/// Bridge + run on a path that has at least test_len + 1 points.
inline RunResult track_path(const EsnController& c, const TrackConfig& cfg, const ReferencePath& path) {
    const TrackingReference ref = build_bridge(path, cfg.plant, cfg.initial, cfg.bridge_len);
    return run_tracking(c, cfg, ref);
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCell {
    double a = 0.0;  // first axis value
    double b = 0.0;  // second axis value
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    int n = 0;         // realizations contributing to mean / std
    int n_failed = 0;  // diverged realizations, excluded from mean / std
    bool infeasible = false;
    double unreachable_fraction = 0.0;
};

inline void to_json(nlohmann::json& j, const SweepCell& c) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    j = {{"a", c.a},          {"b", c.b},
         {"mean", num(c.mean)}, {"std", num(c.std)},
         {"n", c.n},          {"n_failed", c.n_failed},
         {"infeasible", c.infeasible}, {"unreachable_fraction", c.unreachable_fraction}};
}

inline void from_json(const nlohmann::json& j, SweepCell& c) {
    auto num = [](const nlohmann::json& v) {
        return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    };
    c.a = j.at("a").get<double>();
    c.b = j.at("b").get<double>();
    c.mean = num(j.at("mean"));
    c.std = num(j.at("std"));
    c.n = j.at("n").get<int>();
    c.n_failed = j.at("n_failed").get<int>();
    c.infeasible = j.at("infeasible").get<bool>();
    c.unreachable_fraction = j.at("unreachable_fraction").get<double>();
}

struct SweepResult {
    std::string axis_a;
    std::string axis_b;
    std::vector<double> values_a;
    std::vector<double> values_b;
    std::vector<SweepCell> cells;  // row-major: index = ia * values_b.size() + ib
    int realizations = 0;
    bool complete = true;

    [[nodiscard]] const SweepCell& at(std::size_t ia, std::size_t ib) const { return cells.at(ia * values_b.size() + ib); }
};

struct SweepOptions {
    int workers = 1;
    std::string manifest;    // progress file; empty disables resume
    long max_new_cells = -1;  // stop after this many newly computed cells (-1: no limit)
};

/// Mean and sample standard deviation of the successful realizations.
inline void summarize(SweepCell& cell, const std::vector<RunResult>& runs) {
    std::vector<double> v;
    for (const RunResult& r : runs) {
        if (r.diverged || !std::isfinite(r.rmse_position)) {
            ++cell.n_failed;
        } else {
            v.push_back(r.rmse_position);
        }
    }
    cell.n = static_cast<int>(v.size());
    if (v.empty()) return;
    // Shifted by the first sample: identical realizations give that value
    // back exactly and a zero spread.
    double shift = 0.0;
    for (double x : v) shift += x - v.front();
    const double mean = v.front() + shift / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    cell.mean = mean;
    cell.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

namespace detail {

/// Loads completed cells from a progress manifest whose first line must
/// match `fingerprint`; a mismatching manifest is an error rather than being
/// silently discarded.
inline std::vector<std::optional<SweepCell>> load_manifest(const std::string& path, const nlohmann::json& fingerprint,
                                                           std::size_t n_cells) {
    std::vector<std::optional<SweepCell>> done(n_cells);
    if (path.empty() || !std::filesystem::exists(path)) return done;
    std::ifstream in(path);
    std::string line;
    if (!std::getline(in, line)) return done;
    nlohmann::json head;
    try {
        head = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("sweep manifest " + path + " has an unreadable header");
    }
    if (head != fingerprint) {
        throw std::runtime_error("sweep manifest " + path +
                                 " belongs to a different sweep configuration; remove it to start over");
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const nlohmann::json j = nlohmann::json::parse(line);
            const auto idx = j.at("index").get<std::size_t>();
            if (idx < n_cells) done[idx] = j.at("cell").get<SweepCell>();
        } catch (const nlohmann::json::exception&) {
            break;  // a torn final line from an interrupted write
        }
    }
    return done;
}

/// Cuts an interrupted final record so that appends start on a fresh line.
inline void drop_torn_tail(const std::string& path) {
    if (!std::filesystem::exists(path)) return;
    std::string text;
    {
        std::ifstream in(path, std::ios::binary);
        text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    if (text.empty() || text.back() == '\n') return;
    const auto cut = text.rfind('\n');
    text.erase(cut == std::string::npos ? 0 : cut + 1);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << text;
}

/// Runs `compute(i)` for every cell not already recorded in the manifest,
/// appending each finished cell through a single writer.
template <typename Compute>
SweepResult execute_sweep(SweepResult result, const nlohmann::json& fingerprint, const SweepOptions& opt,
                          Compute&& compute) {
    const std::size_t n_cells = result.values_a.size() * result.values_b.size();
    auto done = load_manifest(opt.manifest, fingerprint, n_cells);
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < n_cells; ++i) {
        if (!done[i]) todo.push_back(i);
    }
    if (opt.max_new_cells >= 0 && todo.size() > static_cast<std::size_t>(opt.max_new_cells)) {
        todo.resize(static_cast<std::size_t>(opt.max_new_cells));
    }

    std::ofstream manifest;
    if (!opt.manifest.empty()) {
        drop_torn_tail(opt.manifest);
        const bool fresh = !std::filesystem::exists(opt.manifest) || std::filesystem::file_size(opt.manifest) == 0;
        manifest.open(opt.manifest, std::ios::app);
        if (!manifest) throw std::runtime_error("cannot open sweep manifest " + opt.manifest);
        if (fresh) manifest << fingerprint.dump() << '\n' << std::flush;
    }
    std::mutex writer;
    parallel_for(todo.size(), opt.workers, [&](std::size_t t) {
        const std::size_t i = todo[t];
        SweepCell cell = compute(i);
        std::lock_guard lock(writer);
        done[i] = cell;
        if (manifest.is_open()) {
            manifest << nlohmann::json{{"index", i}, {"cell", cell}}.dump() << '\n' << std::flush;
        }
    });

    result.cells.resize(n_cells);
    result.complete = true;
    for (std::size_t i = 0; i < n_cells; ++i) {
        if (done[i]) {
            result.cells[i] = *done[i];
        } else {
            result.complete = false;
            result.cells[i].a = result.values_a[i / result.values_b.size()];
            result.cells[i].b = result.values_b[i % result.values_b.size()];
        }
    }
    return result;
}

inline std::uint64_t controller_fingerprint(const EsnController& c) {
    std::ostringstream os;
    save_controller(os, c);
    return fnv1a(os.str());
}

}  // namespace detail

/// Noise robustness over a (sigma_d, sigma_m) grid. The reference (with its
/// bridge) is fixed; each realization draws fresh noise from a seed derived
/// from base.seed, the cell index and the realization index.
inline SweepResult sweep_noise(const EsnController& c, const TrackingReference& ref, const std::vector<double>& sigma_d,
                               const std::vector<double>& sigma_m, int n_real, const TrackConfig& base,
                               const SweepOptions& opt = {}) {
    if (sigma_d.empty() || sigma_m.empty()) throw std::invalid_argument("sweep_noise: empty grid");
    if (n_real <= 0) throw std::invalid_argument("sweep_noise: realizations must be > 0");
    for (double s : sigma_d) NoiseConfig{s, 0.0, 0}.validate();
    for (double s : sigma_m) NoiseConfig{0.0, s, 0}.validate();
    base.validate();

    SweepResult res;
    res.axis_a = "sigma_d";
    res.axis_b = "sigma_m";
    res.values_a = sigma_d;
    res.values_b = sigma_m;
    res.realizations = n_real;
    nlohmann::json track = base;
    const nlohmann::json fingerprint = {{"kind", "noise"},
                                        {"sigma_d", sigma_d},
                                        {"sigma_m", sigma_m},
                                        {"realizations", n_real},
                                        {"track", track},
                                        {"reference_points", ref.series.length()},
                                        {"controller_fnv1a", detail::controller_fingerprint(c)}};
    return detail::execute_sweep(std::move(res), fingerprint, opt, [&](std::size_t i) {
        SweepCell cell;
        cell.a = sigma_d[i / sigma_m.size()];
        cell.b = sigma_m[i % sigma_m.size()];
        std::vector<RunResult> runs;
        for (int r = 0; r < n_real; ++r) {
            TrackConfig cfg = base;
            cfg.noise.sigma_d = cell.a;
            cfg.noise.sigma_m = cell.b;
            cfg.noise.seed = derive_seed(derive_seed(base.seed, "noise-cell", i), "realization", static_cast<std::uint64_t>(r));
            RunResult run = run_tracking(c, cfg, ref);
            run.actual.resize(0, 0);
            run.desired.resize(0, 0);
            run.states.resize(0, 0);
            run.torques.resize(0, 0);
            runs.push_back(std::move(run));
        }
        summarize(cell, runs);
        return cell;
    });
}

/// Model uncertainty: the plant's link lengths (with centres of mass at mid
/// link) are overridden per cell while the controller stays fixed. The raw
/// path is refitted (placed and timed) for each cell's arm. Cells whose fitted path enters
/// the unreachable inner disc are flagged infeasible; they are still run
/// against the nearest reachable reference and report the fraction of
/// unreachable points. Realizations differ only when the base noise is
/// non-zero.
///
/// With several controllers, realization r uses controllers[r % size]: an
/// ensemble over training draws rather than over noise.
inline SweepResult sweep_arm_lengths(const std::vector<EsnController>& controllers, const ReferencePath& raw_path,
                                     const std::vector<double>& l1, const std::vector<double>& l2, int n_real,
                                     const TrackConfig& base, const PathFit& fit = {}, const SweepOptions& opt = {}) {
    if (controllers.empty()) throw std::invalid_argument("sweep_arm_lengths: no controller");
    if (l1.empty() || l2.empty()) throw std::invalid_argument("sweep_arm_lengths: empty grid");
    if (n_real <= 0) throw std::invalid_argument("sweep_arm_lengths: realizations must be > 0");
    for (double v : l1) base.plant.with_lengths(v, 0.5).validate();
    for (double v : l2) base.plant.with_lengths(0.5, v).validate();
    base.validate();
    if (static_cast<long>(raw_path.size()) < base.test_len + 1) {
        throw std::invalid_argument("sweep_arm_lengths: path shorter than test_len + 1");
    }
    if (fit.max_speed > 0.0 && !(raw_path.max_speed() > 0.0)) {
        throw std::invalid_argument("sweep_arm_lengths: a speed bound needs a moving path");
    }

    SweepResult res;
    res.axis_a = "l1";
    res.axis_b = "l2";
    res.values_a = l1;
    res.values_b = l2;
    res.realizations = n_real;
    nlohmann::json track = base;
    std::ostringstream path_text;
    write_path(path_text, raw_path);
    std::vector<std::uint64_t> prints;
    for (const EsnController& c : controllers) prints.push_back(detail::controller_fingerprint(c));
    const nlohmann::json fingerprint = {{"kind", "lengths"},
                                        {"l1", l1},
                                        {"l2", l2},
                                        {"realizations", n_real},
                                        {"fit", {{"margin", fit.margin}, {"max_speed", fit.max_speed}, {"max_joint_speed", fit.max_joint_speed}}},
                                        {"track", track},
                                        {"path_fnv1a", detail::fnv1a(path_text.str())},
                                        {"controller_fnv1a", prints}};
    return detail::execute_sweep(std::move(res), fingerprint, opt, [&](std::size_t i) {
        SweepCell cell;
        cell.a = l1[i / l2.size()];
        cell.b = l2[i % l2.size()];
        TrackConfig cfg = base;
        cfg.plant = base.plant.with_lengths(cell.a, cell.b);
        const ReferencePath fitted = fit_path(raw_path, cfg.plant, fit);
        const long inside = count_inside_inner(fitted, cfg.plant);
        cell.infeasible = inside > 0;
        const TrackingReference ref = build_bridge(fitted, cfg.plant, cfg.initial, cfg.bridge_len, /*clamp=*/true);
        long unreachable = 0;
        for (long k : ref.series.clamped) unreachable += (k > ref.bridge_len && k <= ref.bridge_len + cfg.test_len) ? 1 : 0;
        cell.unreachable_fraction = static_cast<double>(unreachable) / static_cast<double>(cfg.test_len);
        std::vector<RunResult> runs;
        for (int r = 0; r < n_real; ++r) {
            cfg.noise.seed = derive_seed(derive_seed(base.seed, "length-cell", i), "realization", static_cast<std::uint64_t>(r));
            RunResult run = run_tracking(controllers[static_cast<std::size_t>(r) % controllers.size()], cfg, ref);
            run.actual.resize(0, 0);
            run.desired.resize(0, 0);
            run.states.resize(0, 0);
            run.torques.resize(0, 0);
            runs.push_back(std::move(run));
        }
        summarize(cell, runs);
        return cell;
    });
}

inline SweepResult sweep_arm_lengths(const EsnController& c, const ReferencePath& raw_path, const std::vector<double>& l1,
                                     const std::vector<double>& l2, int n_real, const TrackConfig& base,
                                     const PathFit& fit = {}, const SweepOptions& opt = {}) {
    return sweep_arm_lengths(std::vector<EsnController>{c}, raw_path, l1, l2, n_real, base, fit, opt);
}

/// One row per cell: axes, mean, std, n, n_failed, infeasible,
/// unreachable_fraction. Numbers use the shortest round-trip form.
inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
    os << r.axis_a << ',' << r.axis_b << ",mean_rmse,std_rmse,n,n_failed,infeasible,unreachable_fraction\n";
    auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); };
    for (const SweepCell& c : r.cells) {
        os << format_double(c.a) << ',' << format_double(c.b) << ',' << num(c.mean) << ',' << num(c.std) << ','
           << c.n << ',' << c.n_failed << ',' << (c.infeasible ? 1 : 0) << ',' << format_double(c.unreachable_fraction)
           << '\n';
    }
}

inline SweepResult read_sweep_csv(std::istream& is) {
    SweepResult r;
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("sweep csv: empty file");
    {
        std::istringstream hs(line);
        std::getline(hs, r.axis_a, ',');
        std::getline(hs, r.axis_b, ',');
    }
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::istringstream ls(line);
        std::string tok;
        while (std::getline(ls, tok, ',')) f.push_back(tok);
        if (f.size() != 8) throw std::runtime_error("sweep csv: expected 8 fields per row");
        auto num = [](const std::string& s) {
            return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
        };
        SweepCell c;
        c.a = std::stod(f[0]);
        c.b = std::stod(f[1]);
        c.mean = num(f[2]);
        c.std = num(f[3]);
        c.n = std::stoi(f[4]);
        c.n_failed = std::stoi(f[5]);
        c.infeasible = f[6] == "1";
        c.unreachable_fraction = std::stod(f[7]);
        r.cells.push_back(c);
    }
    // Axis values in order of first appearance.
    for (const SweepCell& c : r.cells) {
        if (std::find(r.values_a.begin(), r.values_a.end(), c.a) == r.values_a.end()) r.values_a.push_back(c.a);
        if (std::find(r.values_b.begin(), r.values_b.end(), c.b) == r.values_b.end()) r.values_b.push_back(c.b);
    }
    if (r.values_a.size() * r.values_b.size() != r.cells.size()) throw std::runtime_error("sweep csv: grid is not rectangular");
    return r;
}

}  // namespace rctrack
