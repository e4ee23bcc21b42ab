#pragma once

// Echo-state network: random reservoir, leaky-integrator tanh update, linear
// readout trained by ridge regression, and the versioned controller file.

#include <Eigen/Dense>
#include <json.hpp>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rctrack/random.hpp"

namespace rctrack {

struct EsnParams {
    int n_r = 200;
    double rho = 0.76;
    double gamma = 0.76;
    double alpha = 0.84;
    double beta = 7.5e-4;
    double p = 0.53;
    double w_b = 2.00;
    int dim_in = 8;
    int dim_out = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (n_r <= 0) throw std::invalid_argument("esn.n_r must be > 0");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw std::invalid_argument("esn.alpha must be in (0, 1]");
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("esn.p must be in (0, 1]");
        if (!(rho > 0.0)) throw std::invalid_argument("esn.rho must be > 0");
        if (!(beta >= 0.0)) throw std::invalid_argument("esn.beta must be >= 0");
        if (!(gamma >= 0.0)) throw std::invalid_argument("esn.gamma must be >= 0");
        if (!(w_b >= 0.0)) throw std::invalid_argument("esn.w_b must be >= 0");
        if (dim_in <= 0 || dim_out <= 0) throw std::invalid_argument("esn dimensions must be > 0");
    }
};

inline void to_json(nlohmann::json& j, const EsnParams& e) {
    j = nlohmann::json{{"n_r", e.n_r},     {"rho", e.rho},       {"gamma", e.gamma},
                       {"alpha", e.alpha}, {"beta", e.beta},     {"p", e.p},
                       {"w_b", e.w_b},     {"dim_in", e.dim_in}, {"dim_out", e.dim_out},
                       {"seed", e.seed}};
}

inline void from_json(const nlohmann::json& j, EsnParams& e) {
    j.at("n_r").get_to(e.n_r);
    j.at("rho").get_to(e.rho);
    j.at("gamma").get_to(e.gamma);
    j.at("alpha").get_to(e.alpha);
    j.at("beta").get_to(e.beta);
    j.at("p").get_to(e.p);
    j.at("w_b").get_to(e.w_b);
    j.at("dim_in").get_to(e.dim_in);
    j.at("dim_out").get_to(e.dim_out);
    j.at("seed").get_to(e.seed);
}

struct EsnWeights {
    Eigen::MatrixXd w_r;                   // n_r x n_r
    Eigen::MatrixXd w_in;                  // n_r x dim_in
    Eigen::VectorXd b;                     // n_r
    std::optional<Eigen::MatrixXd> w_out;  // dim_out x n_r, set by training
};

struct EsnState {
    Eigen::VectorXd r;

    explicit EsnState(Eigen::Index n = 0) : r(Eigen::VectorXd::Zero(n)) {}
};

/// Largest eigenvalue magnitude. Random reservoir matrices are non-symmetric
/// and their dominant eigenvalue is frequently a complex pair, so this uses a
/// full real Schur decomposition rather than power iteration.
inline double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw std::runtime_error("spectral_radius: eigenvalue computation did not converge");
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline EsnWeights init_reservoir(const EsnParams& params, Rng& rng) {
    params.validate();
    const Eigen::Index n = params.n_r;
    EsnWeights w;
    // A draw with zero spectral radius (e.g. nilpotent or empty at tiny p) is
    // re-drawn from an incremented sub-seed.
    for (std::uint64_t attempt = 0;; ++attempt) {
        Rng sub(derive_seed(rng.next_u64(), "reservoir", attempt));
        w.w_r.setZero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const bool link = sub.bernoulli(params.p);
                const double value = sub.uniform(-1.0, 1.0);
                if (link) w.w_r(i, j) = value;
            }
        }
        const double radius = spectral_radius(w.w_r);
        if (radius > 1e-12) {
            w.w_r *= params.rho / radius;
            break;
        }
        if (attempt > 64) throw std::runtime_error("init_reservoir: could not draw a non-degenerate reservoir");
    }
    w.w_in.resize(n, params.dim_in);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < params.dim_in; ++j) {
            w.w_in(i, j) = rng.uniform(-params.gamma, params.gamma);
        }
    }
    w.b.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) w.b(i) = rng.uniform(-params.w_b, params.w_b);
    return w;
}

/// r' = (1 - alpha) r + alpha tanh(W_r r + W_in u + b)
inline void update_state_inplace(const EsnWeights& w, EsnState& s, const Eigen::VectorXd& input,
                                 double alpha) {
    Eigen::VectorXd pre = w.b;
    pre.noalias() += w.w_r * s.r;
    pre.noalias() += w.w_in * input;
    s.r = (1.0 - alpha) * s.r + alpha * pre.array().tanh().matrix();
}

inline EsnState update_state(const EsnWeights& w, const EsnState& s, const Eigen::VectorXd& input,
                             double alpha) {
    if (!input.allFinite()) throw std::invalid_argument("update_state: non-finite input");
    EsnState next = s;
    update_state_inplace(w, next, input, alpha);
    return next;
}

inline Eigen::VectorXd readout(const EsnWeights& w, const EsnState& s) {
    if (!w.w_out) throw std::logic_error("readout: controller has no trained readout");
    return *w.w_out * s.r;
}

inline EsnState reset_state(const EsnState& s) { return EsnState(s.r.size()); }

/// Streaming accumulator for the ridge normal equations
///   w_out = Y S^T (S S^T + beta I)^-1.
/// Blocks (episodes) are summed with Neumaier compensation so the result is
/// insensitive to the order in which blocks arrive.
class GramAccumulator {
  public:
    GramAccumulator(Eigen::Index n_r, Eigen::Index dim_out)
        : sst_(Eigen::MatrixXd::Zero(n_r, n_r)),
          sst_c_(Eigen::MatrixXd::Zero(n_r, n_r)),
          yst_(Eigen::MatrixXd::Zero(dim_out, n_r)),
          yst_c_(Eigen::MatrixXd::Zero(dim_out, n_r)) {}

    void add(const Eigen::Ref<const Eigen::MatrixXd>& states,
             const Eigen::Ref<const Eigen::MatrixXd>& targets) {
        if (states.cols() != targets.cols() || states.rows() != sst_.rows() ||
            targets.rows() != yst_.rows()) {
            throw std::invalid_argument("GramAccumulator::add: shape mismatch");
        }
        Eigen::MatrixXd g(sst_.rows(), sst_.cols());
        g.noalias() = states * states.transpose();
        Eigen::MatrixXd h(yst_.rows(), yst_.cols());
        h.noalias() = targets * states.transpose();
        compensated_add(sst_, sst_c_, g);
        compensated_add(yst_, yst_c_, h);
        columns_ += states.cols();
    }

    void merge(const GramAccumulator& other) {
        compensated_add(sst_, sst_c_, other.sst_);
        compensated_add(sst_, sst_c_, other.sst_c_);
        compensated_add(yst_, yst_c_, other.yst_);
        compensated_add(yst_, yst_c_, other.yst_c_);
        columns_ += other.columns_;
    }

    [[nodiscard]] Eigen::MatrixXd gram() const { return sst_ + sst_c_; }
    [[nodiscard]] Eigen::MatrixXd cross() const { return yst_ + yst_c_; }
    [[nodiscard]] long columns() const { return columns_; }

    [[nodiscard]] Eigen::MatrixXd solve(double beta) const {
        if (beta < 0.0) throw std::invalid_argument("ridge coefficient must be >= 0");
        const Eigen::Index n = sst_.rows();
        Eigen::MatrixXd a = gram();
        a.diagonal().array() += beta;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        const Eigen::VectorXd d = ldlt.vectorD().cwiseAbs();
        const double scale = std::max(d.maxCoeff(), 1e-300);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
            d.minCoeff() <= scale * static_cast<double>(n) * 1e-15) {
            throw std::runtime_error(
                "train_readout: regularized Gram matrix is singular; use a ridge coefficient beta > 0");
        }
        // (S S^T + beta I) is symmetric, so w_out^T = A^-1 (Y S^T)^T.
        return ldlt.solve(cross().transpose()).transpose();
    }

  private:
    static void compensated_add(Eigen::MatrixXd& sum, Eigen::MatrixXd& comp, const Eigen::MatrixXd& x) {
        for (Eigen::Index j = 0; j < sum.cols(); ++j) {
            for (Eigen::Index i = 0; i < sum.rows(); ++i) {
                const double s = sum(i, j);
                const double v = x(i, j);
                const double t = s + v;
                if (std::abs(s) >= std::abs(v)) {
                    comp(i, j) += (s - t) + v;
                } else {
                    comp(i, j) += (v - t) + s;
                }
                sum(i, j) = t;
            }
        }
    }

    Eigen::MatrixXd sst_, sst_c_, yst_, yst_c_;
    long columns_ = 0;
};

inline Eigen::MatrixXd train_readout(const Eigen::Ref<const Eigen::MatrixXd>& states,
                                     const Eigen::Ref<const Eigen::MatrixXd>& targets, double beta) {
    GramAccumulator acc(states.rows(), targets.rows());
    acc.add(states, targets);
    return acc.solve(beta);
}

/// A trained reservoir controller: hyperparameters, weights and free-form
/// metadata describing how it was trained.
struct EsnController {
    EsnParams params;
    EsnWeights weights;
    nlohmann::json metadata = nlohmann::json::object();

    [[nodiscard]] bool trained() const { return weights.w_out.has_value(); }
};

// ---------------------------------------------------------------------------
// Controller file: "RCTRACK-ESN-v1\n", one line of JSON header, then the
// little-endian float64 payload w_r | w_in | b | w_out, all row-major.

inline constexpr const char* kControllerMagic = "RCTRACK-ESN-v1";

class ControllerFormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline void append_matrix(std::string& out, const Eigen::MatrixXd& m) {
    static_assert(std::endian::native == std::endian::little, "controller files are little-endian");
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = m(i, j);
            char buf[sizeof(double)];
            std::memcpy(buf, &v, sizeof v);
            out.append(buf, sizeof buf);
        }
    }
}

inline Eigen::MatrixXd read_matrix(const std::string& payload, std::size_t& offset, Eigen::Index rows,
                                   Eigen::Index cols) {
    const std::size_t need = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (offset + need > payload.size()) throw ControllerFormatError("controller file: truncated payload");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            double v = 0.0;
            std::memcpy(&v, payload.data() + offset, sizeof v);
            offset += sizeof v;
            m(i, j) = v;
        }
    }
    return m;
}

}  // namespace detail

inline void save_controller(std::ostream& os, const EsnController& c) {
    if (!c.trained()) throw std::logic_error("save_controller: controller is not trained");
    std::string payload;
    detail::append_matrix(payload, c.weights.w_r);
    detail::append_matrix(payload, c.weights.w_in);
    detail::append_matrix(payload, c.weights.b);
    detail::append_matrix(payload, *c.weights.w_out);
    nlohmann::json header{{"params", c.params},
                          {"metadata", c.metadata},
                          {"payload_bytes", payload.size()},
                          {"checksum_fnv1a", detail::fnv1a(payload)}};
    os << kControllerMagic << '\n' << header.dump() << '\n';
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw std::runtime_error("save_controller: write failed");
}

inline EsnController load_controller(std::istream& is) {
    std::string magic;
    if (!std::getline(is, magic)) throw ControllerFormatError("controller file: empty input");
    if (magic != kControllerMagic) {
        if (magic.rfind("RCTRACK-ESN-", 0) == 0) {
            throw ControllerFormatError("controller file version '" + magic + "' is not supported (expected " +
                                        kControllerMagic + ")");
        }
        throw ControllerFormatError("not a controller file (missing RCTRACK-ESN header)");
    }
    std::string header_line;
    if (!std::getline(is, header_line)) throw ControllerFormatError("controller file: missing header");
    nlohmann::json header;
    EsnController c;
    std::size_t payload_bytes = 0;
    std::uint64_t checksum = 0;
    try {
        header = nlohmann::json::parse(header_line);
        c.params = header.at("params").get<EsnParams>();
        c.metadata = header.at("metadata");
        payload_bytes = header.at("payload_bytes").get<std::size_t>();
        checksum = header.at("checksum_fnv1a").get<std::uint64_t>();
        c.params.validate();
    } catch (const std::exception& e) {
        throw ControllerFormatError(std::string("controller file: bad header: ") + e.what());
    }
    const Eigen::Index n = c.params.n_r;
    const std::size_t expected =
        static_cast<std::size_t>(n * n + n * c.params.dim_in + n + c.params.dim_out * n) * sizeof(double);
    if (payload_bytes != expected) throw ControllerFormatError("controller file: payload size does not match shapes");
    std::string payload(payload_bytes, '\0');
    is.read(payload.data(), static_cast<std::streamsize>(payload_bytes));
    if (static_cast<std::size_t>(is.gcount()) != payload_bytes) {
        throw ControllerFormatError("controller file: truncated payload");
    }
    if (is.peek() != std::char_traits<char>::eof()) throw ControllerFormatError("controller file: trailing bytes");
    if (detail::fnv1a(payload) != checksum) throw ControllerFormatError("controller file: checksum mismatch");
    std::size_t off = 0;
    c.weights.w_r = detail::read_matrix(payload, off, n, n);
    c.weights.w_in = detail::read_matrix(payload, off, n, c.params.dim_in);
    c.weights.b = detail::read_matrix(payload, off, n, 1);
    c.weights.w_out = detail::read_matrix(payload, off, c.params.dim_out, n);
    return c;
}

inline void save_controller(const std::string& path, const EsnController& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    save_controller(os, c);
}

inline EsnController load_controller(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open controller file " + path);
    return load_controller(is);
}

}  // namespace rctrack
