#pragma once

// Static SVG figures built from files on disk (run logs, sweep CSVs), never
// from in-memory results.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/columnar_io.hpp"
#include "rctrack/tracking.hpp"

namespace rctrack::plot {

struct Box {
    double x, y, w, h;
};

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(const Eigen::VectorXd& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (std::isfinite(v(i))) {
                lo = std::min(lo, v(i));
                hi = std::max(hi, v(i));
            }
        }
    }
    void pad() {
        if (!std::isfinite(lo)) {
            lo = -1.0;
            hi = 1.0;
        }
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        const double m = 0.05 * (hi - lo);
        lo -= m;
        hi += m;
    }
};

inline std::string fmt(double v, int prec = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

class Svg {
  public:
    Svg(double w, double h) : w_(w), h_(h) {}

    void text(double x, double y, const std::string& s, int size = 12, const char* anchor = "start") {
        os_ << "<text x=\"" << fmt(x, 6) << "\" y=\"" << fmt(y, 6) << "\" font-size=\"" << size
            << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\">" << s << "</text>\n";
    }

    void rect(const Box& b, const std::string& fill, const std::string& stroke = "none") {
        os_ << "<rect x=\"" << fmt(b.x, 6) << "\" y=\"" << fmt(b.y, 6) << "\" width=\"" << fmt(b.w, 6) << "\" height=\""
            << fmt(b.h, 6) << "\" fill=\"" << fill << "\" stroke=\"" << stroke << "\"/>\n";
    }

    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0) {
        os_ << "<line x1=\"" << fmt(x1, 6) << "\" y1=\"" << fmt(y1, 6) << "\" x2=\"" << fmt(x2, 6) << "\" y2=\""
            << fmt(y2, 6) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << fmt(width) << "\"/>\n";
    }

    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke, double width,
                  const char* dash = nullptr) {
        if (pts.empty()) return;
        os_ << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"" << fmt(width) << "\"";
        if (dash) os_ << " stroke-dasharray=\"" << dash << "\"";
        os_ << " points=\"";
        for (const auto& [x, y] : pts) os_ << fmt(x, 6) << ',' << fmt(y, 6) << ' ';
        os_ << "\"/>\n";
    }

    [[nodiscard]] std::string str() const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(w_, 6) << "\" height=\"" << fmt(h_, 6)
            << "\" viewBox=\"0 0 " << fmt(w_, 6) << ' ' << fmt(h_, 6) << "\">\n"
            << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
            << os_.str() << "</svg>\n";
        return out.str();
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write " + path);
        f << str();
    }

  private:
    double w_;
    double h_;
    std::ostringstream os_;
};

/// Axes frame with tick labels; returns a mapper from data to canvas.
struct Axes {
    Box box;
    Range xr;
    Range yr;

    [[nodiscard]] double px(double x) const { return box.x + (x - xr.lo) / (xr.hi - xr.lo) * box.w; }
    [[nodiscard]] double py(double y) const { return box.y + box.h - (y - yr.lo) / (yr.hi - yr.lo) * box.h; }

    void frame(Svg& s, const std::string& title, const std::string& ylabel) const {
        s.rect(box, "none", "#444");
        s.text(box.x, box.y - 6, title, 12);
        s.text(box.x - 6, box.y + 10, fmt(yr.hi), 9, "end");
        s.text(box.x - 6, box.y + box.h, fmt(yr.lo), 9, "end");
        s.text(box.x, box.y + box.h + 12, fmt(xr.lo), 9, "start");
        s.text(box.x + box.w, box.y + box.h + 12, fmt(xr.hi), 9, "end");
        if (!ylabel.empty()) s.text(box.x - 6, box.y + box.h / 2, ylabel, 10, "end");
    }

    void series(Svg& s, const Eigen::VectorXd& x, const Eigen::VectorXd& y, const std::string& color, double width,
                const char* dash = nullptr, Eigen::Index max_points = 2000) const {
        std::vector<std::pair<double, double>> pts;
        const Eigen::Index n = std::min(x.size(), y.size());
        const Eigen::Index stride = std::max<Eigen::Index>(1, n / max_points);
        for (Eigen::Index i = 0; i < n; i += stride) {
            if (std::isfinite(x(i)) && std::isfinite(y(i))) pts.emplace_back(px(x(i)), py(y(i)));
        }
        s.polyline(pts, color, width, dash);
    }
};

/// Overlay of reference and tracked end-effector paths (post-bridge window,
/// or the whole log if the run stopped inside the bridge) beside time series
/// of q, qd, qdd and tau, read from a run log.
inline void tracking_overlay(const std::string& log_base, const std::string& svg_path, const std::string& title = "") {
    const ColumnTable t = read_columns(log_base);
    if (t.rows() == 0) throw std::runtime_error("tracking_overlay: empty log");
    const long from = t.meta.value("bridge_len", 0L);
    const Eigen::Index n = t.rows() > from ? t.rows() - from : t.rows();
    auto tail = [&](const char* name) -> Eigen::VectorXd { return t.column(name).tail(n); };

    Svg s(1100, 620);
    s.text(20, 24, title.empty() ? "reference (dashed) vs tracked" : title, 15);

    Axes xy;
    xy.box = {60, 60, 480, 480};
    Range r;
    r.add(tail("cx"));
    r.add(tail("cy"));
    r.add(tail("cx_d"));
    r.add(tail("cy_d"));
    r.pad();
    xy.xr = r;
    xy.yr = r;
    xy.frame(s, "end effector (m)", "cy");
    xy.series(s, tail("cx"), tail("cy"), "#d62728", 1.2, nullptr, 6000);
    xy.series(s, tail("cx_d"), tail("cy_d"), "#1f77b4", 1.0, "4,3", 6000);

    const Eigen::VectorXd time = tail("t");
    struct Panel {
        const char* title;
        const char* a;
        const char* b;
        const char* da;
        const char* db;
    };
    const Panel panels[4] = {{"q (rad)", "q1", "q2", nullptr, nullptr},
                             {"qd (rad/s)", "qd1", "qd2", "qd1_d", "qd2_d"},
                             {"qdd (rad/s^2)", "qdd1", "qdd2", nullptr, nullptr},
                             {"tau (N m)", "tau1", "tau2", nullptr, nullptr}};
    for (int i = 0; i < 4; ++i) {
        Axes ax;
        ax.box = {640, 60.0 + i * 135.0, 430, 100};
        ax.xr.add(time);
        Range yr;
        yr.add(tail(panels[i].a));
        yr.add(tail(panels[i].b));
        if (panels[i].da) {
            yr.add(tail(panels[i].da));
            yr.add(tail(panels[i].db));
        }
        yr.pad();
        ax.yr = yr;
        ax.frame(s, panels[i].title, "");
        ax.series(s, time, tail(panels[i].a), "#d62728", 0.8);
        ax.series(s, time, tail(panels[i].b), "#2ca02c", 0.8);
        if (panels[i].da) {
            ax.series(s, time, tail(panels[i].da), "#1f77b4", 0.8, "3,2");
            ax.series(s, time, tail(panels[i].db), "#9467bd", 0.8, "3,2");
        }
    }
    s.text(640, 600, "red/green: joint 1/2; dashed: desired", 10);
    s.save(svg_path);
}

/// Viridis-like ramp on [0, 1].
inline std::string ramp(double u) {
    static const double stops[5][3] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    u = std::clamp(u, 0.0, 1.0) * 4.0;
    const int i = std::min(3, static_cast<int>(std::floor(u)));
    const double f = u - i;
    char buf[16];
    std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(stops[i][0] + f * (stops[i + 1][0] - stops[i][0])),
                  static_cast<int>(stops[i][1] + f * (stops[i + 1][1] - stops[i][1])),
                  static_cast<int>(stops[i][2] + f * (stops[i + 1][2] - stops[i][2])));
    return buf;
}

/// Colour-coded log10(mean RMSE) over the sweep grid, read from a sweep CSV.
/// Infeasible cells carry an "x", cells without successful runs are grey.
inline void sweep_heatmap(const std::string& csv_path, const std::string& svg_path, const std::string& title = "") {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("cannot read " + csv_path);
    const SweepResult r = read_sweep_csv(in);
    const std::size_t na = r.values_a.size();
    const std::size_t nb = r.values_b.size();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const SweepCell& c : r.cells) {
        if (std::isfinite(c.mean) && c.mean > 0.0) {
            lo = std::min(lo, std::log10(c.mean));
            hi = std::max(hi, std::log10(c.mean));
        }
    }
    if (!std::isfinite(lo)) {
        lo = -3.0;
        hi = 0.0;
    }
    if (hi - lo < 1e-9) hi = lo + 1.0;

    const double cell = 60.0;
    const double x0 = 90.0;
    const double y0 = 60.0;
    Svg s(x0 + cell * static_cast<double>(nb) + 150.0, y0 + cell * static_cast<double>(na) + 70.0);
    s.text(20, 24, title.empty() ? "log10 mean RMSE (m)" : title, 15);
    for (std::size_t ia = 0; ia < na; ++ia) {
        for (std::size_t ib = 0; ib < nb; ++ib) {
            const SweepCell& c = r.at(ia, ib);
            const Box b{x0 + cell * static_cast<double>(ib), y0 + cell * static_cast<double>(na - 1 - ia), cell, cell};
            const bool ok = std::isfinite(c.mean) && c.mean > 0.0;
            s.rect(b, ok ? ramp((std::log10(c.mean) - lo) / (hi - lo)) : "#bbbbbb", "white");
            if (ok) s.text(b.x + cell / 2, b.y + cell / 2 + 4, fmt(c.mean, 2), 9, "middle");
            if (c.infeasible) {
                s.line(b.x + 4, b.y + 4, b.x + cell - 4, b.y + cell - 4, "#ff3030", 1.5);
                s.line(b.x + cell - 4, b.y + 4, b.x + 4, b.y + cell - 4, "#ff3030", 1.5);
            }
            if (c.n_failed > 0) s.text(b.x + 3, b.y + 11, std::to_string(c.n_failed) + " failed", 8);
        }
    }
    for (std::size_t ib = 0; ib < nb; ++ib) {
        s.text(x0 + cell * (static_cast<double>(ib) + 0.5), y0 + cell * static_cast<double>(na) + 14, fmt(r.values_b[ib]), 10,
               "middle");
    }
    for (std::size_t ia = 0; ia < na; ++ia) {
        s.text(x0 - 6, y0 + cell * (static_cast<double>(na - 1 - ia) + 0.5) + 4, fmt(r.values_a[ia]), 10, "end");
    }
    s.text(x0 + cell * static_cast<double>(nb) / 2, y0 + cell * static_cast<double>(na) + 34, r.axis_b, 12, "middle");
    s.text(x0 - 50, y0 - 10, r.axis_a, 12, "middle");
    const double cbx = x0 + cell * static_cast<double>(nb) + 30;
    for (int k = 0; k < 50; ++k) {
        const double u = k / 49.0;
        s.rect({cbx, y0 + cell * static_cast<double>(na) * (1.0 - u) - cell * static_cast<double>(na) / 50.0, 18,
                cell * static_cast<double>(na) / 50.0 + 0.5},
               ramp(u));
    }
    s.text(cbx + 24, y0 + 10, fmt(hi), 10);
    s.text(cbx + 24, y0 + cell * static_cast<double>(na), fmt(lo), 10);
    s.save(svg_path);
}

}  // namespace rctrack::plot
