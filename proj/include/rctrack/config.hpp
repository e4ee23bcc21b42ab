#pragma once

// Experiment configuration: one JSON document, validated in full before any
// computation. Unknown keys are errors; dt and tau_max have no defaults.

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/dynamics.hpp"
#include "rctrack/esn.hpp"
#include "rctrack/random.hpp"
#include "rctrack/tracking.hpp"
#include "rctrack/training.hpp"
#include "rctrack/trajectories.hpp"

namespace rctrack {

class ConfigError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct SweepSpec {
    std::string kind = "noise";  // noise | lengths
    std::vector<double> sigma_d{0.0, 0.1, 1.0, 3.1622776601683795, 10.0};
    std::vector<double> sigma_m{0.0, 0.01, 0.031622776601683791, 0.1, 0.31622776601683794};
    std::vector<double> l1{0.3, 0.4, 0.5, 0.6, 0.7};
    std::vector<double> l2{0.3, 0.4, 0.5, 0.6, 0.7};
    int realizations = 10;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    std::string controller;  // controller file for track / sweep; empty: <output_dir>/controller.esn
    int workers = 0;         // 0: all available cores
    long log_episodes = 0;   // training episodes written as column logs by `train`
    ArmParams arm;
    EsnParams esn;
    TrainConfig train;
    TrackConfig track;
    TrajectorySpec trajectory;
    SweepSpec sweep;

    /// Seeds of the individual stages, derived from the master seed.
    void derive_seeds() {
        esn.seed = derive_seed(seed, "esn");
        train.seed = derive_seed(seed, "train");
        track.seed = derive_seed(seed, "track");
        track.noise.seed = derive_seed(seed, "track-noise");
        trajectory.seed = derive_seed(seed, "trajectory");
    }

    [[nodiscard]] int effective_workers() const { return workers > 0 ? workers : default_workers(); }

    [[nodiscard]] std::string controller_path() const {
        return controller.empty() ? output_dir + "/controller.esn" : controller;
    }

    void validate() const {
        auto wrap = [](const char* section, auto&& fn) {
            try {
                fn();
            } catch (const std::invalid_argument& e) {
                throw ConfigError(std::string(section) + ": " + e.what());
            }
        };
        wrap("arm", [&] { arm.validate(); });
        wrap("esn", [&] { esn.validate(); });
        wrap("train", [&] { train.validate(); });
        wrap("track", [&] { track.validate(); });
        if (workers < 0) throw ConfigError("workers must be >= 0");
        if (log_episodes < 0 || log_episodes > train.episodes()) {
            throw ConfigError("train.log_episodes: must be in [0, number of episodes]");
        }
        const std::set<std::string> kinds{"circle", "figure_eight", "lorenz", "mackey_glass", "random_walk", "file"};
        if (!kinds.count(trajectory.kind)) throw ConfigError("trajectory.kind: unknown kind '" + trajectory.kind + "'");
        if (trajectory.kind == "file" && trajectory.path_file.empty()) {
            throw ConfigError("trajectory.path_file: required when trajectory.kind is \"file\"");
        }
        if (!(trajectory.max_speed > 0.0)) throw ConfigError("trajectory.max_speed: must be > 0");
        if (!(trajectory.max_joint_speed >= 0.0)) throw ConfigError("trajectory.max_joint_speed: must be >= 0");
        if (!(trajectory.margin >= 0.0 && trajectory.margin < 1.0)) throw ConfigError("trajectory.margin: must be in [0, 1)");
        if (sweep.kind != "noise" && sweep.kind != "lengths") {
            throw ConfigError("sweep.kind: must be \"noise\" or \"lengths\"");
        }
        if (sweep.realizations <= 0) throw ConfigError("sweep.realizations: must be > 0");
        auto nonempty = [](const std::vector<double>& v, const char* name, bool positive) {
            if (v.empty()) throw ConfigError(std::string("sweep.") + name + ": must not be empty");
            for (double x : v) {
                if (!(positive ? x > 0.0 : x >= 0.0)) {
                    throw ConfigError(std::string("sweep.") + name + (positive ? ": values must be > 0" : ": values must be >= 0"));
                }
            }
        };
        nonempty(sweep.sigma_d, "sigma_d", false);
        nonempty(sweep.sigma_m, "sigma_m", false);
        nonempty(sweep.l1, "l1", true);
        nonempty(sweep.l2, "l2", true);
        if (std::abs(track.dt - train.dt) > 1e-15) throw ConfigError("track.dt: must equal train.dt");
    }
};

namespace detail {

/// Reads keys from one JSON object, remembering which were consumed so
/// leftovers can be reported as unknown.
class Section {
  public:
    Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(where() + "must be an object");
    }

    template <typename T>
    void get(const char* key, T& out, bool required = false) {
        seen_.insert(key);
        if (!j_.contains(key)) {
            if (required) throw ConfigError(where(key) + "required field is missing");
            return;
        }
        try {
            out = j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(where(key) + "has the wrong type (got " + std::string(j_.at(key).type_name()) + ")");
        }
    }

    [[nodiscard]] bool has(const char* key) const { return j_.contains(key); }

    Section sub(const char* key) {
        seen_.insert(key);
        static const nlohmann::json empty = nlohmann::json::object();
        return Section(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(where(k.c_str()) + "unknown key");
        }
    }

  private:
    [[nodiscard]] std::string where(const char* key = nullptr) const {
        std::string p = path_;
        if (key) p = p.empty() ? key : p + "." + key;
        return p.empty() ? std::string() : p + ": ";
    }

    const nlohmann::json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

/// Parses and validates a configuration document. Seeds for the stages are
/// derived from the master seed.
inline ExperimentConfig parse_config(const nlohmann::json& doc) {
    using detail::Section;
    ExperimentConfig c;
    Section root(doc, "");
    root.get("seed", c.seed);
    root.get("output_dir", c.output_dir);
    root.get("controller", c.controller);
    root.get("workers", c.workers);
    {
        Section s = root.sub("arm");
        s.get("m1", c.arm.m1);
        s.get("m2", c.arm.m2);
        s.get("l1", c.arm.l1);
        s.get("l2", c.arm.l2);
        s.get("lc1", c.arm.lc1);
        s.get("lc2", c.arm.lc2);
        s.get("i1", c.arm.i1);
        s.get("i2", c.arm.i2);
        s.finish();
    }
    {
        Section s = root.sub("esn");
        s.get("n_r", c.esn.n_r);
        s.get("rho", c.esn.rho);
        s.get("gamma", c.esn.gamma);
        s.get("alpha", c.esn.alpha);
        s.get("beta", c.esn.beta);
        s.get("p", c.esn.p);
        s.get("w_b", c.esn.w_b);
        s.finish();
    }
    {
        if (!root.has("train")) throw ConfigError("train: required section is missing (train.dt and train.tau_max must be given)");
        Section s = root.sub("train");
        s.get("dt", c.train.dt, true);
        s.get("tau_max", c.train.tau_max, true);
        s.get("episode_len", c.train.episode_len);
        s.get("total_len", c.train.total_len);
        s.get("smooth_sigma", c.train.smooth_sigma);
        s.get("washout", c.train.washout);
        s.get("holdout_fraction", c.train.holdout_fraction);
        s.get("log_episodes", c.log_episodes);
        s.finish();
    }
    c.track.dt = c.train.dt;
    c.track.plant = c.arm;
    {
        Section s = root.sub("track");
        s.get("test_len", c.track.test_len);
        s.get("bridge_len", c.track.bridge_len);
        s.get("sigma_d", c.track.noise.sigma_d);
        s.get("sigma_m", c.track.noise.sigma_m);
        s.get("position_gain", c.track.position_gain);
        s.get("noisy_reference", c.track.noisy_reference);
        s.get("divergence_bound", c.track.divergence_bound);
        s.get("success_fraction", c.track.success_fraction);
        std::vector<double> q0{c.track.initial.q1, c.track.initial.q2};
        s.get("initial_q", q0);
        if (q0.size() != 2) throw ConfigError("track.initial_q: expected [q1, q2]");
        c.track.initial = {q0[0], q0[1]};
        double pl1 = c.arm.l1;
        double pl2 = c.arm.l2;
        s.get("plant_l1", pl1);
        s.get("plant_l2", pl2);
        if (pl1 != c.arm.l1 || pl2 != c.arm.l2) c.track.plant = c.arm.with_lengths(pl1, pl2);
        s.finish();
    }
    {
        Section s = root.sub("trajectory");
        TrajectorySpec& t = c.trajectory;
        s.get("kind", t.kind);
        s.get("radius", t.radius);
        s.get("period", t.period);
        s.get("a", t.a);
        s.get("b", t.b);
        s.get("eight_period", t.eight_period);
        s.get("walk_step", t.walk_step);
        s.get("walk_smooth", t.walk_smooth);
        s.get("path_file", t.path_file);
        s.get("max_speed", t.max_speed);
        s.get("max_joint_speed", t.max_joint_speed);
        s.get("margin", t.margin);
        {
            Section l = s.sub("lorenz");
            l.get("sigma", t.lorenz.sigma);
            l.get("rho", t.lorenz.rho);
            l.get("beta", t.lorenz.beta);
            l.get("initial", t.lorenz.initial);
            l.get("transient", t.lorenz.transient);
            l.get("max_substep", t.lorenz.max_substep);
            l.get("axes", t.lorenz.axes);
            for (int a : t.lorenz.axes) {
                if (a < 0 || a > 2) throw ConfigError("trajectory.lorenz.axes: entries must be 0, 1 or 2");
            }
            l.finish();
        }
        {
            Section m = s.sub("mackey_glass");
            m.get("tau", t.mackey_glass.tau);
            m.get("production", t.mackey_glass.production);
            m.get("decay", t.mackey_glass.decay);
            m.get("exponent", t.mackey_glass.exponent);
            m.get("history", t.mackey_glass.history);
            m.get("transient", t.mackey_glass.transient);
            m.get("max_substep", t.mackey_glass.max_substep);
            m.finish();
        }
        s.finish();
    }
    {
        Section s = root.sub("sweep");
        s.get("kind", c.sweep.kind);
        s.get("sigma_d", c.sweep.sigma_d);
        s.get("sigma_m", c.sweep.sigma_m);
        s.get("l1", c.sweep.l1);
        s.get("l2", c.sweep.l2);
        s.get("realizations", c.sweep.realizations);
        s.finish();
    }
    root.finish();
    c.derive_seeds();
    c.validate();
    return c;
}

inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "config") {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(origin + ": " + e.what());
    }
    return parse_config(doc);
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

/// Fully resolved configuration, including derived seeds; reparsing the
/// non-derived part reproduces the same run.
inline nlohmann::json resolved_config(const ExperimentConfig& c) {
    nlohmann::json arm = c.arm;
    nlohmann::json esn = {{"n_r", c.esn.n_r}, {"rho", c.esn.rho}, {"gamma", c.esn.gamma}, {"alpha", c.esn.alpha},
                          {"beta", c.esn.beta}, {"p", c.esn.p},     {"w_b", c.esn.w_b}};
    nlohmann::json train = {{"dt", c.train.dt},
                            {"tau_max", c.train.tau_max},
                            {"episode_len", c.train.episode_len},
                            {"total_len", c.train.total_len},
                            {"smooth_sigma", c.train.smooth_sigma},
                            {"washout", c.train.washout},
                            {"holdout_fraction", c.train.holdout_fraction},
                            {"log_episodes", c.log_episodes}};
    nlohmann::json track = {{"test_len", c.track.test_len},
                            {"bridge_len", c.track.bridge_len},
                            {"sigma_d", c.track.noise.sigma_d},
                            {"sigma_m", c.track.noise.sigma_m},
                            {"position_gain", c.track.position_gain},
                            {"noisy_reference", c.track.noisy_reference},
                            {"divergence_bound", c.track.divergence_bound},
                            {"success_fraction", c.track.success_fraction},
                            {"initial_q", {c.track.initial.q1, c.track.initial.q2}},
                            {"plant_l1", c.track.plant.l1},
                            {"plant_l2", c.track.plant.l2}};
    const TrajectorySpec& t = c.trajectory;
    nlohmann::json traj = {{"kind", t.kind},
                           {"radius", t.radius},
                           {"period", t.period},
                           {"a", t.a},
                           {"b", t.b},
                           {"eight_period", t.eight_period},
                           {"walk_step", t.walk_step},
                           {"walk_smooth", t.walk_smooth},
                           {"path_file", t.path_file},
                           {"max_speed", t.max_speed},
                           {"max_joint_speed", t.max_joint_speed},
                           {"margin", t.margin},
                           {"lorenz",
                            {{"sigma", t.lorenz.sigma},
                             {"rho", t.lorenz.rho},
                             {"beta", t.lorenz.beta},
                             {"initial", t.lorenz.initial},
                             {"transient", t.lorenz.transient},
                             {"max_substep", t.lorenz.max_substep},
                             {"axes", t.lorenz.axes}}},
                           {"mackey_glass",
                            {{"tau", t.mackey_glass.tau},
                             {"production", t.mackey_glass.production},
                             {"decay", t.mackey_glass.decay},
                             {"exponent", t.mackey_glass.exponent},
                             {"history", t.mackey_glass.history},
                             {"transient", t.mackey_glass.transient},
                             {"max_substep", t.mackey_glass.max_substep}}}};
    nlohmann::json sweep = {{"kind", c.sweep.kind},
                            {"sigma_d", c.sweep.sigma_d},
                            {"sigma_m", c.sweep.sigma_m},
                            {"l1", c.sweep.l1},
                            {"l2", c.sweep.l2},
                            {"realizations", c.sweep.realizations}};
    return {{"seed", c.seed},
            {"output_dir", c.output_dir},
            {"controller", c.controller},
            {"workers", c.workers},
            {"arm", arm},
            {"esn", esn},
            {"train", train},
            {"track", track},
            {"trajectory", traj},
            {"sweep", sweep}};
}

/// Stage seeds as recorded next to outputs.
inline nlohmann::json derived_seeds(const ExperimentConfig& c) {
    return {{"master", c.seed},
            {"esn", c.esn.seed},
            {"train", c.train.seed},
            {"track", c.track.seed},
            {"track_noise", c.track.noise.seed},
            {"trajectory", c.trajectory.seed}};
}

}  // namespace rctrack
