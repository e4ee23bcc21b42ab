#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "rctrack/esn.hpp"
#include "rctrack/random.hpp"

using namespace rctrack;

namespace {

EsnController small_controller(std::uint64_t seed, int n_r = 30) {
    EsnParams p;
    p.n_r = n_r;
    p.seed = seed;
    Rng rng(seed);
    EsnController c;
    c.params = p;
    c.weights = init_reservoir(p, rng);
    Rng out(seed + 1);
    Eigen::MatrixXd w(p.dim_out, p.n_r);
    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = out.normal(0.0, 1.0);
    c.weights.w_out = w;
    c.metadata = {{"note", "unit test"}};
    return c;
}

// Reference ridge solution from the stacked least-squares problem
//   min |S^T w - Y^T|^2 + beta |w|^2  ==  [S^T; sqrt(beta) I] w = [Y^T; 0]
// solved by column-pivoted QR, without forming S S^T.
Eigen::MatrixXd ridge_oracle(const Eigen::MatrixXd& s, const Eigen::MatrixXd& y, double beta) {
    const Eigen::Index n = s.rows();
    const Eigen::Index t = s.cols();
    Eigen::MatrixXd a(t + n, n);
    a << s.transpose(), std::sqrt(beta) * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(t + n, y.rows());
    b.topRows(t) = y.transpose();
    return a.colPivHouseholderQr().solve(b).transpose();
}

std::string serialize(const EsnController& c) {
    std::ostringstream os(std::ios::binary);
    save_controller(os, c);
    return os.str();
}

EsnController deserialize(const std::string& bytes) {
    std::istringstream is(bytes, std::ios::binary);
    return load_controller(is);
}

}  // namespace

TEST(Reservoir, SpectralRadiusMatchesTarget) {
    for (std::uint64_t seed : {0ULL, 1ULL, 7ULL}) {
        EsnParams p;
        Rng rng(seed);
        const EsnWeights w = init_reservoir(p, rng);
        Eigen::ComplexEigenSolver<Eigen::MatrixXd> ces(w.w_r, false);
        ASSERT_EQ(ces.info(), Eigen::Success);
        EXPECT_NEAR(ces.eigenvalues().cwiseAbs().maxCoeff(), 0.76, 1e-6) << "seed " << seed;
    }
}

TEST(Reservoir, SpectralRadiusOfKnownMatrices) {
    Eigen::MatrixXd rot(2, 2);
    rot << 0.0, -2.0, 2.0, 0.0;  // eigenvalues +-2i
    EXPECT_NEAR(spectral_radius(rot), 2.0, 1e-14);
    Eigen::MatrixXd nil = Eigen::MatrixXd::Zero(3, 3);
    nil(0, 1) = 1.0;
    nil(1, 2) = 1.0;
    EXPECT_EQ(spectral_radius(nil), 0.0);
}

TEST(Reservoir, DensityAndInputRanges) {
    EsnParams p;
    Rng rng(4);
    const EsnWeights w = init_reservoir(p, rng);
    const double density = static_cast<double>((w.w_r.array() != 0.0).count()) / static_cast<double>(w.w_r.size());
    EXPECT_NEAR(density, 0.53, 0.01);
    EXPECT_EQ(w.w_in.rows(), 200);
    EXPECT_EQ(w.w_in.cols(), 8);
    EXPECT_LE(w.w_in.cwiseAbs().maxCoeff(), 0.76);
    EXPECT_LE(w.b.cwiseAbs().maxCoeff(), 2.0);
    EXPECT_FALSE(w.w_out.has_value());
}

TEST(Reservoir, SameSeedSameWeights) {
    EsnParams p;
    p.n_r = 40;
    Rng a(12), b(12), c(13);
    const EsnWeights wa = init_reservoir(p, a);
    const EsnWeights wb = init_reservoir(p, b);
    const EsnWeights wc = init_reservoir(p, c);
    EXPECT_EQ(wa.w_r, wb.w_r);
    EXPECT_EQ(wa.w_in, wb.w_in);
    EXPECT_NE(wa.w_r, wc.w_r);
}

TEST(Reservoir, TinyDensityStillGivesTargetRadius) {
    EsnParams p;
    p.n_r = 6;
    p.p = 0.05;  // most draws are empty or nilpotent
    Rng rng(2);
    const EsnWeights w = init_reservoir(p, rng);
    EXPECT_NEAR(spectral_radius(w.w_r), 0.76, 1e-9);
}

TEST(Reservoir, InvalidParamsRejected) {
    EsnParams p;
    p.alpha = 0.0;
    Rng rng(0);
    EXPECT_THROW(init_reservoir(p, rng), std::invalid_argument);
    p = EsnParams{};
    p.p = 1.5;
    EXPECT_THROW(init_reservoir(p, rng), std::invalid_argument);
}

TEST(Update, LeakyTanhByHand) {
    EsnWeights w;
    w.w_r = Eigen::MatrixXd::Zero(2, 2);
    w.w_r(0, 1) = 0.5;
    w.w_in = Eigen::MatrixXd::Zero(2, 1);
    w.w_in(1, 0) = 2.0;
    w.b = Eigen::Vector2d(0.1, -0.2);
    EsnState s(2);
    s.r << 0.3, -0.4;
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.25);
    const EsnState n = update_state(w, s, u, 0.84);
    EXPECT_NEAR(n.r(0), 0.16 * 0.3 + 0.84 * std::tanh(0.5 * -0.4 + 0.1), 1e-15);
    EXPECT_NEAR(n.r(1), 0.16 * -0.4 + 0.84 * std::tanh(2.0 * 0.25 - 0.2), 1e-15);
}

TEST(Update, NonFiniteInputRejected) {
    const EsnController c = small_controller(1);
    EsnState s(c.params.n_r);
    Eigen::VectorXd u = Eigen::VectorXd::Zero(8);
    u(3) = std::nan("");
    EXPECT_THROW(update_state(c.weights, s, u, c.params.alpha), std::invalid_argument);
}

TEST(Update, EchoStateContraction) {
    EsnParams p;
    Rng rng(9);
    const EsnWeights w = init_reservoir(p, rng);
    EsnState a(p.n_r), b(p.n_r);
    Rng init(10);
    for (Eigen::Index i = 0; i < p.n_r; ++i) {
        a.r(i) = init.uniform(-1, 1);
        b.r(i) = init.uniform(-1, 1);
    }
    Rng drive(11);
    int steps = 0;
    for (; steps < 500; ++steps) {
        Eigen::VectorXd u(8);
        for (int j = 0; j < 8; ++j) u(j) = drive.uniform(-1, 1);
        update_state_inplace(w, a, u, p.alpha);
        update_state_inplace(w, b, u, p.alpha);
        if ((a.r - b.r).norm() < 1e-6) break;
    }
    EXPECT_LT(steps, 500);
    EXPECT_LT((a.r - b.r).norm(), 1e-6);
}

TEST(Update, ResetGivesZeroState) {
    EsnState s(5);
    s.r.setConstant(0.7);
    EXPECT_EQ(reset_state(s).r, Eigen::VectorXd::Zero(5));
}

TEST(Readout, ZeroWeightsGiveZeroOutput) {
    EsnController c = small_controller(3);
    c.weights.w_out = Eigen::MatrixXd::Zero(2, c.params.n_r);
    EsnState s(c.params.n_r);
    s.r.setConstant(0.5);
    EXPECT_EQ(readout(c.weights, s), Eigen::VectorXd::Zero(2));
}

TEST(Readout, UntrainedThrows) {
    EsnController c = small_controller(3);
    c.weights.w_out.reset();
    EXPECT_FALSE(c.trained());
    EXPECT_THROW(readout(c.weights, EsnState(c.params.n_r)), std::logic_error);
}

TEST(Ridge, MatchesDenseOracle) {
    const Eigen::Index n = 50, t = 500;
    Rng rng(17);
    Eigen::MatrixXd s(n, t), y(2, t);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = std::tanh(rng.normal(0.0, 1.0));
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.normal(0.0, 0.5);
    for (double beta : {7.5e-4, 1e-2, 1.0}) {
        const Eigen::MatrixXd w = train_readout(s, y, beta);
        const Eigen::MatrixXd ref = ridge_oracle(s, y, beta);
        EXPECT_LT((w - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff(), 1e-10) << "beta " << beta;
    }
}

TEST(Ridge, RecoversExactLinearMap) {
    const Eigen::Index n = 20, t = 400;
    Rng rng(5);
    Eigen::MatrixXd s(n, t), truth(2, n);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < truth.size(); ++i) truth(i) = rng.uniform(-1, 1);
    const Eigen::MatrixXd w = train_readout(s, truth * s, 1e-12);
    EXPECT_LT((w - truth).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Ridge, BlockOrderDoesNotMatter) {
    const Eigen::Index n = 25, t = 900;
    Rng rng(23);
    Eigen::MatrixXd s(n, t), y(2, t);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.uniform(-1, 1);
    std::vector<int> order(9);
    std::iota(order.begin(), order.end(), 0);
    GramAccumulator forward(n, 2);
    for (int b : order) forward.add(s.middleCols(b * 100, 100), y.middleCols(b * 100, 100));
    std::reverse(order.begin(), order.end());
    std::swap(order[2], order[6]);
    GramAccumulator shuffled(n, 2);
    for (int b : order) shuffled.add(s.middleCols(b * 100, 100), y.middleCols(b * 100, 100));
    const Eigen::MatrixXd wf = forward.solve(7.5e-4);
    const Eigen::MatrixXd ws = shuffled.solve(7.5e-4);
    EXPECT_LT((wf - ws).cwiseAbs().maxCoeff(), 1e-12 * wf.cwiseAbs().maxCoeff());
    EXPECT_EQ(forward.columns(), 900);
}

TEST(Ridge, MergeEqualsSingleAccumulator) {
    const Eigen::Index n = 10, t = 300;
    Rng rng(31);
    Eigen::MatrixXd s(n, t), y(2, t);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = rng.uniform(-1, 1);
    GramAccumulator whole(n, 2), left(n, 2), right(n, 2);
    whole.add(s, y);
    left.add(s.leftCols(120), y.leftCols(120));
    right.add(s.rightCols(180), y.rightCols(180));
    left.merge(right);
    EXPECT_LT((whole.gram() - left.gram()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((whole.cross() - left.cross()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Ridge, SingularWithoutRegularizationIsReported) {
    // Two identical state rows make S S^T rank deficient.
    Eigen::MatrixXd s(3, 50);
    Rng rng(1);
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.uniform(-1, 1);
    s.row(2) = s.row(1);
    const Eigen::MatrixXd y = Eigen::MatrixXd::Ones(2, 50);
    try {
        (void)train_readout(s, y, 0.0);
        FAIL() << "expected an error";
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("beta > 0"), std::string::npos);
    }
    EXPECT_NO_THROW((void)train_readout(s, y, 1e-3));
}

TEST(Ridge, ShapeMismatchRejected) {
    EXPECT_THROW((void)train_readout(Eigen::MatrixXd::Ones(3, 10), Eigen::MatrixXd::Ones(2, 9), 1.0),
                 std::invalid_argument);
    EXPECT_THROW((void)train_readout(Eigen::MatrixXd::Ones(3, 10), Eigen::MatrixXd::Ones(2, 10), -1.0),
                 std::invalid_argument);
}

TEST(ControllerFile, RoundTripIsExact) {
    const EsnController c = small_controller(42);
    const std::string bytes = serialize(c);
    EXPECT_EQ(bytes.rfind("RCTRACK-ESN-v1\n", 0), 0u);
    const EsnController back = deserialize(bytes);
    EXPECT_EQ(back.weights.w_r, c.weights.w_r);
    EXPECT_EQ(back.weights.w_in, c.weights.w_in);
    EXPECT_EQ(back.weights.b, c.weights.b);
    EXPECT_EQ(*back.weights.w_out, *c.weights.w_out);
    EXPECT_EQ(back.params.seed, 42u);
    EXPECT_EQ(back.metadata, c.metadata);
    EXPECT_EQ(serialize(back), bytes);
}

TEST(ControllerFile, FlippedPayloadByteDetected) {
    std::string bytes = serialize(small_controller(5));
    bytes[bytes.size() - 17] ^= 0x40;
    EXPECT_THROW(deserialize(bytes), ControllerFormatError);
}

TEST(ControllerFile, TruncationDetected) {
    const std::string bytes = serialize(small_controller(5));
    EXPECT_THROW(deserialize(bytes.substr(0, bytes.size() - 8)), ControllerFormatError);
    EXPECT_THROW(deserialize(bytes + "x"), ControllerFormatError);
    EXPECT_THROW(deserialize(""), ControllerFormatError);
}

TEST(ControllerFile, VersionMismatchNamesBothVersions) {
    std::string bytes = serialize(small_controller(5));
    bytes.replace(0, 14, "RCTRACK-ESN-v2");
    try {
        deserialize(bytes);
        FAIL() << "expected an error";
    } catch (const ControllerFormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("v2"), std::string::npos);
        EXPECT_NE(msg.find("RCTRACK-ESN-v1"), std::string::npos);
    }
}

TEST(ControllerFile, ForeignFileRejected) {
    EXPECT_THROW(deserialize("hello\n{}\n"), ControllerFormatError);
}

TEST(ControllerFile, UntrainedCannotBeSaved) {
    EsnController c = small_controller(5);
    c.weights.w_out.reset();
    std::ostringstream os;
    EXPECT_THROW(save_controller(os, c), std::logic_error);
}

TEST(Ridge, HeldOutResidualFallsAlongBetaPathWhenOverfit) {
    // 40 features, 48 noisy training columns: the unregularized fit chases
    // the noise, so each doubling of beta (below the optimum) helps.
    const Eigen::Index n = 40, t = 48, t_test = 2000;
    Rng rng(77);
    Eigen::MatrixXd truth(2, n);
    for (Eigen::Index i = 0; i < truth.size(); ++i) truth(i) = rng.normal(0.0, 0.3);
    auto draw = [&](Eigen::Index cols, Eigen::MatrixXd& s, Eigen::MatrixXd& y) {
        s.resize(n, cols);
        for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = rng.normal(0.0, 1.0);
        y = truth * s;
        for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += rng.normal(0.0, 1.0);
    };
    Eigen::MatrixXd s, y, s_test, y_test;
    draw(t, s, y);
    draw(t_test, s_test, y_test);
    double previous = std::numeric_limits<double>::infinity();
    for (double beta = 1e-3; beta <= 1.0 + 1e-12; beta *= 2.0) {
        const double residual = (y_test - train_readout(s, y, beta) * s_test).squaredNorm();
        EXPECT_LT(residual, previous) << "beta " << beta;
        previous = residual;
    }
}
