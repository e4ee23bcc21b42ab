#pragma once

// Column-oriented float64 logs: `<base>.bin` holds each column contiguously
// (little-endian), `<base>.json` describes the layout and the run.

#include <Eigen/Dense>
#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/esn.hpp"
#include "rctrack/tracking.hpp"
#include "rctrack/training.hpp"

namespace rctrack {

inline constexpr const char* kColumnsFormat = "rctrack-columns";
inline constexpr int kColumnsVersion = 1;

struct ColumnTable {
    std::vector<std::string> names;
    std::vector<std::string> units;
    Eigen::MatrixXd data;  // rows = samples, one column per name
    nlohmann::json meta = nlohmann::json::object();

    void add(const std::string& name, const std::string& unit, const Eigen::Ref<const Eigen::VectorXd>& v) {
        if (data.cols() > 0 && v.size() != data.rows()) {
            throw std::invalid_argument("column '" + name + "' has " + std::to_string(v.size()) + " rows, table has " +
                                        std::to_string(data.rows()));
        }
        if (data.cols() == 0) data.resize(v.size(), 0);
        data.conservativeResize(v.size(), data.cols() + 1);
        data.col(data.cols() - 1) = v;
        names.push_back(name);
        units.push_back(unit);
    }

    [[nodiscard]] Eigen::Index rows() const { return data.rows(); }

    [[nodiscard]] Eigen::VectorXd column(const std::string& name) const {
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == name) return data.col(static_cast<Eigen::Index>(i));
        }
        throw std::out_of_range("no column named '" + name + "'");
    }
};

inline void write_columns(const std::string& base, const ColumnTable& t) {
    if (t.names.size() != static_cast<std::size_t>(t.data.cols()) || t.units.size() != t.names.size()) {
        throw std::invalid_argument("write_columns: names, units and data disagree");
    }
    std::string payload;
    payload.reserve(static_cast<std::size_t>(t.data.size()) * 8);
    for (Eigen::Index j = 0; j < t.data.cols(); ++j) {
        for (Eigen::Index i = 0; i < t.data.rows(); ++i) {
            auto bits = std::bit_cast<std::uint64_t>(t.data(i, j));
            for (int b = 0; b < 8; ++b) payload.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
        }
    }
    nlohmann::json cols = nlohmann::json::array();
    for (std::size_t j = 0; j < t.names.size(); ++j) {
        cols.push_back({{"name", t.names[j]}, {"unit", t.units[j]}, {"offset_bytes", j * static_cast<std::size_t>(t.data.rows()) * 8}});
    }
    nlohmann::json side = {{"format", kColumnsFormat},
                           {"version", kColumnsVersion},
                           {"dtype", "float64"},
                           {"byte_order", "little"},
                           {"layout", "column-major"},
                           {"rows", t.data.rows()},
                           {"columns", cols},
                           {"payload_bytes", payload.size()},
                           {"checksum_fnv1a", detail::fnv1a(payload)},
                           {"meta", t.meta}};
    {
        std::ofstream bin(base + ".bin", std::ios::binary | std::ios::trunc);
        if (!bin) throw std::runtime_error("cannot write " + base + ".bin");
        bin.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
    std::ofstream js(base + ".json", std::ios::trunc);
    if (!js) throw std::runtime_error("cannot write " + base + ".json");
    js << side.dump(2) << '\n';
}

inline ColumnTable read_columns(const std::string& base) {
    std::ifstream js(base + ".json");
    if (!js) throw std::runtime_error("cannot read " + base + ".json");
    nlohmann::json side;
    try {
        side = nlohmann::json::parse(js);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(base + ".json: " + e.what());
    }
    if (side.value("format", "") != kColumnsFormat || side.value("version", 0) != kColumnsVersion) {
        throw std::runtime_error(base + ".json: not a version " + std::to_string(kColumnsVersion) + " column file");
    }
    std::ifstream bin(base + ".bin", std::ios::binary);
    if (!bin) throw std::runtime_error("cannot read " + base + ".bin");
    const std::string payload((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
    if (payload.size() != side.at("payload_bytes").get<std::size_t>()) {
        throw std::runtime_error(base + ".bin: size does not match sidecar");
    }
    if (detail::fnv1a(payload) != side.at("checksum_fnv1a").get<std::uint64_t>()) {
        throw std::runtime_error(base + ".bin: checksum mismatch");
    }
    ColumnTable t;
    const auto rows = side.at("rows").get<Eigen::Index>();
    const auto& cols = side.at("columns");
    t.data.resize(rows, static_cast<Eigen::Index>(cols.size()));
    std::size_t off = 0;
    for (std::size_t j = 0; j < cols.size(); ++j) {
        t.names.push_back(cols[j].at("name").get<std::string>());
        t.units.push_back(cols[j].at("unit").get<std::string>());
        for (Eigen::Index i = 0; i < rows; ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(payload[off++])) << (8 * b);
            t.data(i, static_cast<Eigen::Index>(j)) = std::bit_cast<double>(bits);
        }
    }
    t.meta = side.value("meta", nlohmann::json::object());
    return t;
}

namespace detail {

inline const char* const kStateNames[8] = {"cx", "cy", "q1", "q2", "qd1", "qd2", "qdd1", "qdd2"};
inline const char* const kStateUnits[8] = {"m", "m", "rad", "rad", "rad/s", "rad/s", "rad/s^2", "rad/s^2"};

}  // namespace detail

/// Training episode: t, tau1, tau2, then the 8 plant-state columns.
inline ColumnTable episode_table(const EpisodeLog& log, double dt) {
    ColumnTable t;
    const Eigen::Index n = log.torques.cols();
    t.add("t", "s", Eigen::VectorXd::LinSpaced(n, 0.0, dt * static_cast<double>(n - 1)));
    t.add("tau1", "N m", log.torques.row(0).transpose());
    t.add("tau2", "N m", log.torques.row(1).transpose());
    for (int i = 0; i < 8; ++i) t.add(detail::kStateNames[i], detail::kStateUnits[i], log.states.row(i).transpose());
    t.meta["dt"] = dt;
    return t;
}

/// Tracking run, one row per completed step k (values at time k+1).
inline ColumnTable run_table(const RunResult& r, double dt) {
    ColumnTable t;
    const Eigen::Index n = r.steps;
    t.add("t", "s", Eigen::VectorXd::LinSpaced(n, dt, dt * static_cast<double>(n)));
    for (int i = 0; i < 8; ++i) t.add(detail::kStateNames[i], detail::kStateUnits[i], r.states.row(i).head(n).transpose());
    t.add("cx_d", "m", r.desired.row(0).head(n).transpose());
    t.add("cy_d", "m", r.desired.row(1).head(n).transpose());
    t.add("qd1_d", "rad/s", r.desired.row(2).head(n).transpose());
    t.add("qd2_d", "rad/s", r.desired.row(3).head(n).transpose());
    t.add("tau1", "N m", r.torques.row(0).head(n).transpose());
    t.add("tau2", "N m", r.torques.row(1).head(n).transpose());
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    t.meta["dt"] = dt;
    t.meta["bridge_len"] = r.bridge_len;
    t.meta["steps"] = r.steps;
    t.meta["rmse_position"] = num(r.rmse_position);
    t.meta["rmse_full"] = num(r.rmse_full);
    t.meta["success"] = r.success;
    t.meta["diverged"] = r.diverged;
    return t;
}

}  // namespace rctrack
