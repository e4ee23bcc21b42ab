#pragma once

// Stochastic-torque training episodes, the (y(t), y(t+dt)) -> u(t) dataset,
// and fitting of the reservoir inverse model.

#include <Eigen/Dense>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/dynamics.hpp"
#include "rctrack/esn.hpp"
#include "rctrack/parallel.hpp"
#include "rctrack/random.hpp"

namespace rctrack {

struct TrainConfig {
    double dt = 0.01;
    long episode_len = 8000;
    long total_len = 200000;
    double tau_max = 1.0;
    double smooth_sigma = 20.0;
    long washout = 100;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 0;

    [[nodiscard]] long episodes() const { return total_len / episode_len; }

    void validate() const {
        if (!(dt > 0.0)) throw std::invalid_argument("train.dt must be > 0");
        if (washout < 0) throw std::invalid_argument("train.washout must be >= 0");
        if (episode_len <= washout + 1) throw std::invalid_argument("train.episode_len must exceed washout + 1");
        if (total_len <= 0 || total_len % episode_len != 0) {
            throw std::invalid_argument("train.total_len must be a positive multiple of train.episode_len");
        }
        if (!(tau_max > 0.0)) throw std::invalid_argument("train.tau_max must be > 0");
        if (!(smooth_sigma >= 0.0)) throw std::invalid_argument("train.smooth_sigma must be >= 0");
        if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
            throw std::invalid_argument("train.holdout_fraction must be in [0, 1)");
        }
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"dt", c.dt},
                       {"episode_len", c.episode_len},
                       {"total_len", c.total_len},
                       {"tau_max", c.tau_max},
                       {"smooth_sigma", c.smooth_sigma},
                       {"washout", c.washout},
                       {"holdout_fraction", c.holdout_fraction},
                       {"seed", c.seed}};
}

inline void to_json(nlohmann::json& j, const ArmParams& p) {
    j = nlohmann::json{{"m1", p.m1},   {"m2", p.m2},   {"l1", p.l1}, {"l2", p.l2},
                       {"lc1", p.lc1}, {"lc2", p.lc2}, {"i1", p.i1}, {"i2", p.i2}};
}

inline void from_json(const nlohmann::json& j, ArmParams& p) {
    j.at("m1").get_to(p.m1);
    j.at("m2").get_to(p.m2);
    j.at("l1").get_to(p.l1);
    j.at("l2").get_to(p.l2);
    j.at("lc1").get_to(p.lc1);
    j.at("lc2").get_to(p.lc2);
    j.at("i1").get_to(p.i1);
    j.at("i2").get_to(p.i2);
}

/// Normalized Gaussian smoothing, kernel truncated at 4 sigma, reflective
/// ("symmetric", edge sample repeated) boundary. Length is preserved.
inline Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd& x, double sigma) {
    if (sigma <= 0.0 || x.size() == 0) return x;
    const long radius = static_cast<long>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double norm = 0.0;
    for (long k = -radius; k <= radius; ++k) {
        const double w = std::exp(-0.5 * (static_cast<double>(k) / sigma) * (static_cast<double>(k) / sigma));
        kernel[static_cast<std::size_t>(k + radius)] = w;
        norm += w;
    }
    for (double& w : kernel) w /= norm;

    const long n = x.size();
    auto reflect = [n](long i) {
        const long period = 2 * n;
        i %= period;
        if (i < 0) i += period;
        return i < n ? i : period - 1 - i;
    };
    Eigen::VectorXd out(n);
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        for (long k = -radius; k <= radius; ++k) {
            acc += kernel[static_cast<std::size_t>(k + radius)] * x(reflect(i + k));
        }
        out(i) = acc;
    }
    return out;
}

/// 2 x len torques: uniform in [-tau_max, tau_max], then Gaussian-smoothed
/// per row.
inline Eigen::MatrixXd random_torque_signal(long len, double tau_max, double smooth_sigma, Rng& rng) {
    if (len <= 0) throw std::invalid_argument("random_torque_signal: len must be > 0");
    Eigen::MatrixXd u(2, len);
    for (long t = 0; t < len; ++t) {
        u(0, t) = rng.uniform(-tau_max, tau_max);
        u(1, t) = rng.uniform(-tau_max, tau_max);
    }
    if (smooth_sigma > 0.0) {
        for (int row = 0; row < 2; ++row) {
            u.row(row) = gaussian_smooth(u.row(row).transpose(), smooth_sigma).transpose();
        }
    }
    return u;
}

struct EpisodeLog {
    Eigen::MatrixXd torques;       // 2 x T, u(t)
    Eigen::MatrixXd states;        // 8 x T, x(t) = [cx cy q1 q2 qd1 qd2 qdd1 qdd2]
    Eigen::MatrixXd observations;  // 4 x T, y(t) = [cx cy qd1 qd2]

    [[nodiscard]] long length() const { return torques.cols(); }
};

/// Drives the plant from rest at `start` under the given torques. Column t
/// holds the state at t together with the acceleration caused by u(t).
inline EpisodeLog run_episode_with_torques(const ArmParams& p, const JointAngles& start,
                                           const Eigen::MatrixXd& torques, double dt) {
    const long len = torques.cols();
    EpisodeLog log;
    log.torques = torques;
    log.states.resize(8, len);
    log.observations.resize(4, len);
    PlantState s = make_state(p, start.q1, start.q2);
    for (long t = 0; t < len; ++t) {
        const TorqueCommand u{torques(0, t), torques(1, t)};
        PlantState next;
        try {
            next = step(p, s, u, dt);
        } catch (const NonFiniteError&) {
            throw NonFiniteError("episode: non-finite plant state", t);
        }
        s.qdd1 = next.qdd1;
        s.qdd2 = next.qdd2;
        log.states.col(t) = s.as_vector();
        log.observations.col(t) << s.cx, s.cy, s.qd1, s.qd2;
        s = next;
    }
    return log;
}

/// One training episode: random start q1 ~ U[0, 2pi], q2 ~ U[-pi, pi], at
/// rest, driven by smoothed uniform torques.
inline EpisodeLog run_episode(const ArmParams& p, const TrainConfig& cfg, Rng& rng) {
    const double q1 = rng.uniform(0.0, kTwoPi);
    const double q2 = rng.uniform(-kPi, kPi);
    const Eigen::MatrixXd torques = random_torque_signal(cfg.episode_len, cfg.tau_max, cfg.smooth_sigma, rng);
    return run_episode_with_torques(p, {q1, q2}, torques, cfg.dt);
}

/// Episode `index` of a training run. Episodes that blow up are discarded and
/// re-drawn from the next sub-seed; `redraws` counts how often that happened.
inline EpisodeLog generate_episode(const ArmParams& p, const TrainConfig& cfg, std::uint64_t index,
                                   int* redraws = nullptr) {
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        Rng rng(derive_seed(cfg.seed, attempt == 0 ? "episode" : "episode-redraw", index * 100 + attempt));
        try {
            return run_episode(p, cfg, rng);
        } catch (const NonFiniteError&) {
            if (redraws) ++*redraws;
        }
    }
    throw std::runtime_error("generate_episode: episode " + std::to_string(index) +
                             " diverged on every redraw");
}

/// 8 x (T-1) reservoir inputs [y(t); y(t+dt)] for t = 0 .. T-2.
inline Eigen::MatrixXd episode_inputs(const EpisodeLog& log) {
    const long n = log.length() - 1;
    if (n <= 0) return Eigen::MatrixXd(8, 0);
    Eigen::MatrixXd in(8, n);
    in.topRows(4) = log.observations.leftCols(n);
    in.bottomRows(4) = log.observations.rightCols(n);
    return in;
}

struct Dataset {
    Eigen::MatrixXd inputs;   // 8 x N
    Eigen::MatrixXd targets;  // 2 x N
    std::vector<int> episode;  // source episode of every column
    std::vector<int> skipped;  // episodes too short for the washout
};

inline Dataset build_dataset(const std::vector<EpisodeLog>& logs, long washout) {
    Dataset ds;
    long total = 0;
    for (std::size_t e = 0; e < logs.size(); ++e) {
        const long t = logs[e].length();
        if (t < washout + 2) {
            ds.skipped.push_back(static_cast<int>(e));
            continue;
        }
        total += t - washout - 1;
    }
    ds.inputs.resize(8, total);
    ds.targets.resize(2, total);
    ds.episode.reserve(static_cast<std::size_t>(total));
    long col = 0;
    for (std::size_t e = 0; e < logs.size(); ++e) {
        const EpisodeLog& log = logs[e];
        const long t = log.length();
        if (t < washout + 2) continue;
        const long n = t - washout - 1;
        const Eigen::MatrixXd in = episode_inputs(log);
        ds.inputs.middleCols(col, n) = in.rightCols(n);
        ds.targets.middleCols(col, n) = log.torques.middleCols(washout, n);
        ds.episode.insert(ds.episode.end(), static_cast<std::size_t>(n), static_cast<int>(e));
        col += n;
    }
    return ds;
}

/// Runs the reservoir from a zero state over an input sequence and returns
/// the states from column `washout` on.
inline Eigen::MatrixXd harvest_states(const EsnController& c, const Eigen::MatrixXd& inputs, long washout) {
    const long n = inputs.cols();
    const long kept = std::max(0L, n - washout);
    Eigen::MatrixXd states(c.params.n_r, kept);
    EsnState s(c.params.n_r);
    Eigen::VectorXd in(inputs.rows());
    for (long t = 0; t < n; ++t) {
        in = inputs.col(t);
        update_state_inplace(c.weights, s, in, c.params.alpha);
        if (t >= washout) states.col(t - washout) = s.r;
    }
    return states;
}

/// Fraction of the 10 x 10 grid cells over [-R, R]^2 lying fully inside the
/// reachable annulus that contain at least one end-effector sample.
class CoverageGrid {
  public:
    explicit CoverageGrid(const ArmParams& p) : arm_(p), hits_(100, 0) {}

    void add(double x, double y) {
        const double r = arm_.reach();
        const int i = static_cast<int>(std::floor((x + r) / (2.0 * r) * 10.0));
        const int j = static_cast<int>(std::floor((y + r) / (2.0 * r) * 10.0));
        if (i >= 0 && i < 10 && j >= 0 && j < 10) hits_[static_cast<std::size_t>(i * 10 + j)] = 1;
    }

    void merge(const CoverageGrid& o) {
        for (std::size_t k = 0; k < hits_.size(); ++k) hits_[k] |= o.hits_[k];
    }

    [[nodiscard]] bool cell_reachable(int i, int j) const {
        const double r = arm_.reach();
        const double h = 2.0 * r / 10.0;
        double rmin = std::numeric_limits<double>::infinity();
        double rmax = 0.0;
        for (int di = 0; di <= 1; ++di) {
            for (int dj = 0; dj <= 1; ++dj) {
                const double cr = std::hypot(-r + (i + di) * h, -r + (j + dj) * h);
                rmin = std::min(rmin, cr);
                rmax = std::max(rmax, cr);
            }
        }
        const double cx = -r + (i + 0.5) * h;
        const double cy = -r + (j + 0.5) * h;
        // A cell straddling the origin has its nearest point at the origin.
        if (std::abs(cx) < h / 2 + 1e-12 && std::abs(cy) < h / 2 + 1e-12) rmin = 0.0;
        return rmax <= r && rmin >= arm_.inner_radius();
    }

    [[nodiscard]] int reachable_cells() const {
        int n = 0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j) n += cell_reachable(i, j) ? 1 : 0;
        return n;
    }

    [[nodiscard]] int empty_reachable_cells() const {
        int n = 0;
        for (int i = 0; i < 10; ++i)
            for (int j = 0; j < 10; ++j)
                if (cell_reachable(i, j) && hits_[static_cast<std::size_t>(i * 10 + j)] == 0) ++n;
        return n;
    }

    [[nodiscard]] double fraction() const {
        const int total = reachable_cells();
        return total == 0 ? 0.0 : 1.0 - static_cast<double>(empty_reachable_cells()) / total;
    }

  private:
    ArmParams arm_;
    std::vector<int> hits_;
};

struct TrainingReport {
    long episodes = 0;
    long heldout_episodes = 0;
    long columns = 0;
    int redraws = 0;
    double train_rmse = 0.0;    ///< torque RMSE on training columns (N m)
    double heldout_rmse = 0.0;  ///< torque RMSE on held-out episodes (N m), NaN if none
    double coverage = 0.0;
    double wall_seconds = 0.0;

    [[nodiscard]] nlohmann::json to_json(bool with_timing = true) const {
        nlohmann::json j{{"episodes", episodes},
                         {"heldout_episodes", heldout_episodes},
                         {"columns", columns},
                         {"redraws", redraws},
                         {"train_torque_rmse", train_rmse},
                         {"heldout_torque_rmse", std::isfinite(heldout_rmse) ? nlohmann::json(heldout_rmse)
                                                                             : nlohmann::json(nullptr)},
                         {"coverage_fraction", coverage}};
        if (with_timing) j["wall_seconds"] = wall_seconds;
        return j;
    }
};

struct TrainedController {
    EsnController controller;
    TrainingReport report;
};

/// Held-out episodes are chosen as whole episodes: index % stride == stride-1
/// with stride = round(1 / holdout_fraction).
inline bool is_heldout(long index, double holdout_fraction) {
    if (holdout_fraction <= 0.0) return false;
    const long stride = std::max(2L, std::lround(1.0 / holdout_fraction));
    return index % stride == stride - 1;
}

/// Trains the inverse model u(t) ~ F[y(t), y(t+dt)] on stochastic-torque
/// episodes. The reservoir is reset at every episode start and the first
/// `washout` states of each episode are not used for regression.
inline TrainedController fit_controller(const ArmParams& p, const TrainConfig& tc, const EsnParams& ec,
                                        int workers = 1) {
    p.validate();
    tc.validate();
    ec.validate();
    if (ec.dim_in != 8 || ec.dim_out != 2) throw std::invalid_argument("controller must map 8 inputs to 2 torques");
    const auto t0 = std::chrono::steady_clock::now();

    TrainedController out;
    EsnController& c = out.controller;
    c.params = ec;
    Rng init_rng(ec.seed);
    c.weights = init_reservoir(ec, init_rng);

    const long n_ep = tc.episodes();
    struct EpisodeResult {
        GramAccumulator gram{0, 0};
        Eigen::MatrixXd states;   // kept only for held-out episodes
        Eigen::MatrixXd targets;  // idem
        CoverageGrid coverage{ArmParams{}};
        double target_energy = 0.0;  // sum of squared training torques
        int redraws = 0;
        bool heldout = false;
    };
    std::vector<EpisodeResult> results(static_cast<std::size_t>(n_ep));
    parallel_for(static_cast<std::size_t>(n_ep), workers, [&](std::size_t e) {
        EpisodeResult& r = results[e];
        r.coverage = CoverageGrid(p);
        const EpisodeLog log = generate_episode(p, tc, e, &r.redraws);
        for (long t = 0; t < log.length(); ++t) r.coverage.add(log.states(0, t), log.states(1, t));
        const Eigen::MatrixXd inputs = episode_inputs(log);
        Eigen::MatrixXd states = harvest_states(c, inputs, tc.washout);
        Eigen::MatrixXd targets = log.torques.middleCols(tc.washout, states.cols());
        r.heldout = is_heldout(static_cast<long>(e), tc.holdout_fraction);
        if (r.heldout) {
            r.states = std::move(states);
            r.targets = std::move(targets);
        } else {
            r.gram = GramAccumulator(ec.n_r, 2);
            r.gram.add(states, targets);
            r.target_energy = targets.squaredNorm();
        }
    });

    GramAccumulator total(ec.n_r, 2);
    CoverageGrid coverage(p);
    double target_energy = 0.0;
    TrainingReport& rep = out.report;
    for (const EpisodeResult& r : results) {
        coverage.merge(r.coverage);
        rep.redraws += r.redraws;
        if (r.heldout) {
            ++rep.heldout_episodes;
        } else {
            total.merge(r.gram);
            target_energy += r.target_energy;
        }
    }
    if (total.columns() == 0) throw std::runtime_error("fit_controller: no training columns");
    c.weights.w_out = total.solve(ec.beta);
    const Eigen::MatrixXd& w_out = *c.weights.w_out;

    // sum ||u - W s||^2 = tr(UU^T) - 2 tr(W S U^T) + tr(W S S^T W^T)
    const double train_se = std::max(
        0.0, target_energy - 2.0 * w_out.cwiseProduct(total.cross()).sum() +
                 (w_out * total.gram()).cwiseProduct(w_out).sum());
    rep.train_rmse = std::sqrt(train_se / (2.0 * static_cast<double>(total.columns())));
    double heldout_se = 0.0;
    long heldout_cols = 0;
    for (const EpisodeResult& r : results) {
        if (!r.heldout) continue;
        heldout_se += (r.targets - w_out * r.states).squaredNorm();
        heldout_cols += r.targets.cols();
    }
    rep.episodes = n_ep;
    rep.columns = total.columns();
    rep.heldout_rmse = heldout_cols > 0 ? std::sqrt(heldout_se / (2.0 * static_cast<double>(heldout_cols)))
                                        : std::numeric_limits<double>::quiet_NaN();
    rep.coverage = coverage.fraction();
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    c.metadata = nlohmann::json{{"arm", p}, {"train", tc}, {"report", rep.to_json(false)}};
    return out;
}

}  // namespace rctrack
