// rctrack: train, track, sweep and demo subcommands over the header library.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "rctrack/columnar_io.hpp"
#include "rctrack/config.hpp"
#include "rctrack/esn.hpp"
#include "rctrack/plot.hpp"
#include "rctrack/tracking.hpp"
#include "rctrack/training.hpp"
#include "rctrack/trajectories.hpp"

namespace fs = std::filesystem;
using namespace rctrack;

namespace {

constexpr const char* kVersion = "rctrack 1.0.0";

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2, kTrackingFailure = 3 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
    std::optional<double> sigma_d;
    std::optional<double> sigma_m;
    std::optional<double> l1;
    std::optional<double> l2;
    std::optional<std::string> trajectory;
    std::optional<double> speed;
    std::optional<std::string> controller;
    std::optional<std::string> kind;
};

// Built-in configuration for `demo` when no --config is given.
constexpr const char* kDemoConfig = R"({
  "seed": 0,
  "output_dir": "demo_out",
  "train": {"dt": 0.01, "tau_max": 1.0},
  "trajectory": {"kind": "circle"}
})";

ExperimentConfig resolve(const Overrides& o, const char* fallback = nullptr) {
    nlohmann::json doc;
    std::string origin = o.config;
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw ConfigError("cannot open config file " + o.config);
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(o.config + ": " + e.what());
        }
    } else if (fallback) {
        doc = nlohmann::json::parse(fallback);
        origin = "built-in demo config";
    } else {
        throw ConfigError("--config is required");
    }
    if (!doc.is_object()) throw ConfigError(origin + ": top level must be an object");
    // Command-line overrides are applied to the document so that validation
    // and the resolved copy see them exactly like file values.
    if (o.seed) doc["seed"] = *o.seed;
    if (o.out) doc["output_dir"] = *o.out;
    if (o.workers) doc["workers"] = *o.workers;
    if (o.controller) doc["controller"] = *o.controller;
    auto section = [&](const char* name) -> nlohmann::json& {
        if (!doc.contains(name)) doc[name] = nlohmann::json::object();
        return doc[name];
    };
    if (o.sigma_d) section("track")["sigma_d"] = *o.sigma_d;
    if (o.sigma_m) section("track")["sigma_m"] = *o.sigma_m;
    if (o.l1) section("track")["plant_l1"] = *o.l1;
    if (o.l2) section("track")["plant_l2"] = *o.l2;
    if (o.speed) section("trajectory")["max_speed"] = *o.speed;
    if (o.kind) section("sweep")["kind"] = *o.kind;
    if (o.trajectory) {
        static const std::set<std::string> kinds{"circle", "figure_eight", "lorenz", "mackey_glass", "random_walk"};
        if (kinds.count(*o.trajectory)) {
            section("trajectory")["kind"] = *o.trajectory;
        } else {
            section("trajectory")["kind"] = "file";
            section("trajectory")["path_file"] = *o.trajectory;
        }
    }
    try {
        return parse_config(doc);
    } catch (const ConfigError& e) {
        throw ConfigError(origin + ": " + e.what());
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) {
    std::ofstream f(p, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << j.dump(2) << '\n';
}

/// Resolved config, derived seeds and version next to every output.
void write_provenance(const fs::path& dir, const ExperimentConfig& c, const std::string& command) {
    fs::create_directories(dir);
    write_json(dir / "resolved_config.json", resolved_config(c));
    write_json(dir / "run_info.json", {{"command", command},
                                      {"version", kVersion},
                                      {"seeds", derived_seeds(c)},
                                      {"controller_format", kControllerMagic},
                                      {"log_format", {{"name", kColumnsFormat}, {"version", kColumnsVersion}}}});
}

/// Reference path of at least n points for the configured trajectory.
ReferencePath reference_for(const ExperimentConfig& c, const ArmParams& arm, long n) {
    if (c.trajectory.kind == "file") {
        std::ifstream in(c.trajectory.path_file);
        if (!in) throw ConfigError("trajectory.path_file: cannot open " + c.trajectory.path_file);
        ReferencePath p = read_path(in);
        if (std::abs(p.dt - c.train.dt) > 1e-12) {
            throw ConfigError("trajectory.path_file: dt " + format_double(p.dt) + " differs from train.dt");
        }
        p = fit_path(p, arm, path_fit_for(c.trajectory));
        if (static_cast<long>(p.size()) < n) {
            throw std::runtime_error("trajectory file has " + std::to_string(p.size()) + " points after speed limiting, need " +
                                     std::to_string(n) + " (test_len + 1)");
        }
        return p;
    }
    return make_reference(c.trajectory, arm, n, c.train.dt);
}

EsnController train_and_save(const ExperimentConfig& c, const fs::path& dir) {
    std::cout << "training: " << c.train.episodes() << " episodes of " << c.train.episode_len << " steps\n";
    TrainedController tr = fit_controller(c.arm, c.train, c.esn, c.effective_workers());
    save_controller((dir / "controller.esn").string(), tr.controller);
    write_json(dir / "training_report.json", tr.report.to_json(true));
    if (c.log_episodes > 0) fs::create_directories(dir / "episodes");
    for (long i = 0; i < c.log_episodes; ++i) {
        // Regenerated from the same derived seed, so identical to the episode used in the fit.
        ColumnTable t = episode_table(generate_episode(c.arm, c.train, static_cast<std::uint64_t>(i)), c.train.dt);
        t.meta["episode"] = i;
        t.meta["heldout"] = is_heldout(i, c.train.holdout_fraction);
        t.meta["train_seed"] = c.train.seed;
        char name[32];
        std::snprintf(name, sizeof name, "episode_%03ld", i);
        write_columns((dir / "episodes" / name).string(), t);
    }
    std::cout << "held-out torque rmse " << format_double(tr.report.heldout_rmse) << " N m, coverage "
              << format_double(tr.report.coverage) << ", " << format_double(tr.report.wall_seconds) << " s\n";
    return tr.controller;
}

int cmd_train(const Overrides& o) {
    const ExperimentConfig c = resolve(o);
    const fs::path dir = c.output_dir;
    write_provenance(dir, c, "train");
    train_and_save(c, dir);
    std::cout << "wrote " << (dir / "controller.esn").string() << '\n';
    return kOk;
}

/// Tracks the configured trajectory and writes log, summary and overlay.
int track_one(const ExperimentConfig& c, const EsnController& ctrl, const fs::path& dir) {
    fs::create_directories(dir);
    const ReferencePath path = reference_for(c, c.track.plant, c.track.test_len + 1);
    for (const std::string& w : path.warnings) std::cerr << "warning: " << w << '\n';
    {
        std::ofstream f(dir / "reference.txt", std::ios::trunc);
        write_path(f, path);
    }
    const TrackingReference ref = build_bridge(path, c.track.plant, c.track.initial, c.track.bridge_len);
    const RunResult r = run_tracking(ctrl, c.track, ref);
    ColumnTable t = run_table(r, c.track.dt);
    t.meta["trajectory"] = path.name;
    t.meta["seeds"] = derived_seeds(c);
    write_columns((dir / "run").string(), t);

    auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); };
    std::ostringstream summary;
    summary << "trajectory " << path.name << '\n'
            << "steps " << r.steps << " (bridge " << r.bridge_len << ")\n"
            << "rmse_position " << num(r.rmse_position) << " m\n"
            << "rmse_full " << num(r.rmse_full) << '\n'
            << "success " << (r.success ? "true" : "false") << '\n'
            << "diverged " << (r.diverged ? "true" : "false") << '\n';
    if (!r.failure.empty()) summary << "failure " << r.failure << '\n';
    {
        std::ofstream f(dir / "summary.txt", std::ios::trunc);
        f << summary.str();
    }
    std::cout << summary.str();
    plot::tracking_overlay((dir / "run").string(), (dir / "overlay.svg").string(), "tracking: " + path.name);
    return r.diverged ? kTrackingFailure : kOk;
}

EsnController load_for(const ExperimentConfig& c) {
    const std::string p = c.controller_path();
    if (!fs::exists(p)) throw std::runtime_error("controller file " + p + " not found (run `rctrack train` first)");
    return load_controller(p);
}

int cmd_track(const Overrides& o) {
    const ExperimentConfig c = resolve(o);
    const EsnController ctrl = load_for(c);
    const fs::path dir = fs::path(c.output_dir) / ("track_" + (c.trajectory.kind == "file" ? std::string("file") : c.trajectory.kind));
    write_provenance(dir, c, "track");
    return track_one(c, ctrl, dir);
}

int cmd_sweep(const Overrides& o, long max_new_cells) {
    const ExperimentConfig c = resolve(o);
    const EsnController ctrl = load_for(c);
    const fs::path dir = fs::path(c.output_dir) / ("sweep_" + c.sweep.kind);
    write_provenance(dir, c, "sweep");
    SweepOptions opt;
    opt.workers = c.effective_workers();
    opt.manifest = (dir / "progress.jsonl").string();
    opt.max_new_cells = max_new_cells;
    SweepResult res;
    if (c.sweep.kind == "noise") {
        const ReferencePath path = reference_for(c, c.track.plant, c.track.test_len + 1);
        const TrackingReference ref = build_bridge(path, c.track.plant, c.track.initial, c.track.bridge_len);
        res = sweep_noise(ctrl, ref, c.sweep.sigma_d, c.sweep.sigma_m, c.sweep.realizations, c.track, opt);
    } else {
        if (c.trajectory.kind == "file") throw ConfigError("sweep.kind lengths: needs a generated trajectory kind");
        const ReferencePath raw = raw_reference(c.trajectory, c.arm, c.track.test_len + 1, c.train.dt);
        res = sweep_arm_lengths(ctrl, raw, c.sweep.l1, c.sweep.l2, c.sweep.realizations, c.track, path_fit_for(c.trajectory), opt);
    }
    if (!res.complete) {
        std::cout << "stopped after " << max_new_cells << " new cell(s); rerun to resume from " << opt.manifest << '\n';
        return kOk;
    }
    const fs::path csv = dir / ("sweep_" + c.sweep.kind + ".csv");
    {
        std::ofstream f(csv, std::ios::trunc);
        write_sweep_csv(f, res);
    }
    plot::sweep_heatmap(csv.string(), (dir / ("sweep_" + c.sweep.kind + ".svg")).string(),
                        c.sweep.kind == "noise" ? "log10 mean RMSE (m), sigma_d vs sigma_m" : "log10 mean RMSE (m), l1 vs l2");
    std::cout << "wrote " << csv.string() << '\n';
    return kOk;
}

int cmd_demo(const Overrides& o) {
    ExperimentConfig c = resolve(o, kDemoConfig);
    const fs::path dir = c.output_dir;
    write_provenance(dir, c, "demo");
    const EsnController ctrl = train_and_save(c, dir);
    int worst = kOk;
    for (const char* kind : {"circle", "figure_eight"}) {
        c.trajectory.kind = kind;
        std::cout << "--- " << kind << '\n';
        worst = std::max(worst, track_one(c, ctrl, dir / (std::string("track_") + kind)));
    }
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reservoir-computing tracking control of a two-link planar arm"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    Overrides o;
    long max_new_cells = -1;

    auto common = [&](CLI::App* sub, bool tracking) {
        sub->add_option("--config", o.config, "JSON experiment configuration");
        sub->add_option("--seed", o.seed, "master seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--workers", o.workers, "worker threads (0: all cores)");
        if (tracking) {
            sub->add_option("--controller", o.controller, "controller file (default <out>/controller.esn)");
            sub->add_option("--sigma-d", o.sigma_d, "torque disturbance std-dev (N m)");
            sub->add_option("--sigma-m", o.sigma_m, "multiplicative measurement noise std-dev");
            sub->add_option("--l1", o.l1, "plant link length l1 (m), controller unchanged");
            sub->add_option("--l2", o.l2, "plant link length l2 (m), controller unchanged");
            sub->add_option("--trajectory", o.trajectory,
                            "circle | figure_eight | lorenz | mackey_glass | random_walk | path to a two-column file");
            sub->add_option("--speed", o.speed, "maximum end-effector speed of chaotic / file references (m/s)");
        }
    };
    CLI::App* train = app.add_subcommand("train", "train a controller from random-torque episodes");
    common(train, false);
    CLI::App* track = app.add_subcommand("track", "track a reference with a trained controller");
    common(track, true);
    CLI::App* sweep = app.add_subcommand("sweep", "noise or arm-length robustness sweep");
    common(sweep, true);
    sweep->add_option("--kind", o.kind, "noise | lengths (overrides sweep.kind)");
    sweep->add_option("--max-cells", max_new_cells, "stop after this many new cells (resume later)");
    CLI::App* demo = app.add_subcommand("demo", "train, then track the circle and the figure eight");
    common(demo, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*train) return cmd_train(o);
        if (*track) return cmd_track(o);
        if (*sweep) return cmd_sweep(o, max_new_cells);
        if (*demo) return cmd_demo(o);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const ControllerFormatError& e) {
        std::cerr << "controller error: " << e.what() << '\n';
        return kRuntimeError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kRuntimeError;
}
