#include "mlr/errors.hpp"
#include "mlr/simulation.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace mlr;

namespace {

// observed on the first verified run of the scaled cell below
constexpr double SCALED_CELL_EMSE_EM = 0.927564989989227;
constexpr double SCALED_CELL_EMSE_INIT = 2.61270926727798;

SimDesign small_design() {
    SimDesign d;
    d.n = 200;
    d.p = 40;
    d.s = 3;
    d.rho = 1.0;
    d.omega_star = 0.6;
    d.reps = 4;
    d.seed = 12;
    return d;
}

}  // namespace

TEST(SigmaM, BandAndBlockStructure) {
    const Matrix s = make_sigma_m(100);
    const Index b = 10;
    for (Index i = 0; i < 100; ++i) {
        EXPECT_EQ(s(i, i), 1.0);
        for (Index j = 0; j < 100; ++j) {
            const Index lag = std::abs(i - j);
            if (i / b != j / b || lag >= 5) {
                EXPECT_EQ(s(i, j), 0.0);
            } else if (lag > 0) {
                EXPECT_DOUBLE_EQ(s(i, j), 0.5 - 0.1 * static_cast<double>(lag));
            }
            EXPECT_EQ(s(i, j), s(j, i));
        }
    }
    EXPECT_THROW(make_sigma_m(55), InvalidInput);
}

TEST(SigmaM, PositiveDefiniteByEigenOracle) {
    const Matrix s = make_sigma_m(60);
    Eigen::SelfAdjointEigenSolver<Matrix> full(s);
    Eigen::SelfAdjointEigenSolver<Matrix> block(s.topLeftCorner(6, 6));
    EXPECT_GT(full.eigenvalues().minCoeff(), 0.0);
    EXPECT_NEAR(full.eigenvalues().minCoeff(), block.eigenvalues().minCoeff(), 1e-12);
}

TEST(Design, Validation) {
    SimDesign d = small_design();
    EXPECT_NO_THROW(d.validate());
    d.s = 21;
    EXPECT_THROW(d.validate(), InvalidInput);
    d = small_design();
    d.p = 45;
    EXPECT_THROW(d.validate(), InvalidInput);
    d.sigma_model = SigmaModel::identity;
    EXPECT_NO_THROW(d.validate());
    d.omega_star = 1.5;
    EXPECT_THROW(d.validate(), InvalidInput);
    EXPECT_EQ(parse_sigma_model(to_string(SigmaModel::sigma_m)), SigmaModel::sigma_m);
    EXPECT_EQ(parse_sigma_model("identity"), SigmaModel::identity);
    EXPECT_THROW(parse_sigma_model("toeplitz"), InvalidInput);
}

TEST(Generate, CoefficientPatternsAndDeterminism) {
    const SimDesign d = small_design();
    const auto a = generate_mlr(d, 3);
    for (Index j = 0; j < d.p; ++j) {
        EXPECT_EQ(a.beta1_star(j), j < 3 ? 1.0 : 0.0);
        EXPECT_EQ(a.beta2_star(j), (j >= 20 && j < 23) ? -1.0 : 0.0);
    }
    const auto b = generate_mlr(d, 3);
    EXPECT_EQ(a.dataset.x, b.dataset.x);
    EXPECT_EQ(a.dataset.y, b.dataset.y);
    EXPECT_EQ(a.labels, b.labels);
    const auto c = generate_mlr(d, 4);
    EXPECT_NE(a.dataset.y, c.dataset.y);
    for (Index i = 0; i < d.n; ++i) {
        const int z = a.labels[static_cast<std::size_t>(i)];
        ASSERT_TRUE(z == 1 || z == 2);
    }
}

TEST(Generate, PureNoiseWhenRhoIsZero) {
    SimDesign d;
    d.n = 10000;
    d.p = 10;
    d.s = 2;
    d.rho = 0.0;
    d.sigma2 = 2.0;
    d.sigma_model = SigmaModel::identity;
    const auto t = generate_mlr(d, 0);
    const double mean = t.dataset.y.mean();
    const double var = (t.dataset.y.array() - mean).square().sum() / (d.n - 1.0);
    EXPECT_NEAR(var, 2.0, 0.2);
}

TEST(Generate, LabelFractionAndCovariance) {
    SimDesign d;
    d.n = 10000;
    d.p = 10;
    d.s = 2;
    d.omega_star = 0.3;
    d.sigma_model = SigmaModel::identity;
    const auto t = generate_mlr(d, 1);
    const double frac = static_cast<double>(std::count(t.labels.begin(), t.labels.end(), 1)) / d.n;
    const double band = 3.0 * std::sqrt(0.3 * 0.7 / d.n);
    if (std::abs(frac - 0.3) > band) {
        std::printf("flag: label fraction %.4f outside %.4f +- %.4f\n", frac, 0.3, band);
    }
    const Matrix cov = t.dataset.x.transpose() * t.dataset.x / static_cast<double>(d.n);
    EXPECT_LT((cov - Matrix::Identity(10, 10)).cwiseAbs().maxCoeff(), 0.07);
}

TEST(Generate, SigmaMCovarianceIsReproduced) {
    SimDesign d;
    d.n = 20000;
    d.p = 20;
    d.s = 2;
    const auto t = generate_mlr(d, 0);
    const Matrix cov = t.dataset.x.transpose() * t.dataset.x / static_cast<double>(d.n);
    EXPECT_LT((cov - make_sigma_m(20)).cwiseAbs().maxCoeff(), 3.0 * std::sqrt(2.0 / d.n) * 2.0);
}

TEST(Generate, NoiseMatchesLabelledComponent) {
    SimDesign d = small_design();
    d.n = 4000;
    d.sigma2 = 0.25;
    const auto t = generate_mlr(d, 0);
    const Vector f1 = t.dataset.x * t.beta1_star;
    const Vector f2 = t.dataset.x * t.beta2_star;
    double ss = 0.0;
    for (Index i = 0; i < d.n; ++i) {
        const double f = t.labels[static_cast<std::size_t>(i)] == 1 ? f1(i) : f2(i);
        ss += (t.dataset.y(i) - f) * (t.dataset.y(i) - f);
    }
    EXPECT_NEAR(ss / d.n, 0.25, 0.03);
}

TEST(StreamRng, PurposesAndReplicatesAreIndependent) {
    auto a = stream_rng(1, 0, 1);
    auto b = stream_rng(1, 0, 2);
    auto c = stream_rng(1, 1, 1);
    auto d = stream_rng(1, 0, 1);
    const auto x = a();
    EXPECT_NE(x, b());
    EXPECT_NE(x, c());
    EXPECT_EQ(x, d());
}

TEST(Emse, Examples) {
    Vector t1(2), t2(2);
    t1 << 1.0, 0.0;
    t2 << 0.0, 1.0;
    EXPECT_EQ(emse(t1, t2, t1, t2), 0.0);
    EXPECT_EQ(emse(t2, t1, t1, t2), 0.0);
    EXPECT_NEAR(emse(t1, t1, t1, t2), std::sqrt(2.0), 1e-15);
    EXPECT_THROW(emse(t1, Vector::Zero(3), t1, t2), InvalidInput);
}

TEST(Emse, SwapInvariantAndNonnegative) {
    std::mt19937_64 rng(4);
    for (int k = 0; k < 50; ++k) {
        const Vector a = oracle::random_vector(7, rng);
        const Vector b = oracle::random_vector(7, rng);
        const Vector c = oracle::random_vector(7, rng);
        const Vector d = oracle::random_vector(7, rng);
        EXPECT_EQ(emse(a, b, c, d), emse(b, a, c, d));
        EXPECT_EQ(emse(a, b, c, d), emse(a, b, d, c));
        EXPECT_GT(emse(a, b, c, d), 0.0);
    }
}

TEST(ScoreRejections, FdpAndPower) {
    Vector b1 = Vector::Zero(10), b2 = Vector::Zero(10);
    b1(0) = 1.0;
    b1(1) = 1.0;
    b2(5) = -1.0;
    const auto none = score_rejections({}, b1, b2);
    EXPECT_EQ(none.fdp, 0.0);
    EXPECT_EQ(none.power, 0.0);
    const auto mixed = score_rejections({0, 5, 7, 9}, b1, b2);
    EXPECT_DOUBLE_EQ(mixed.fdp, 0.5);
    EXPECT_DOUBLE_EQ(mixed.power, 2.0 / 3.0);
    const auto null_only = score_rejections({3}, Vector::Zero(10), Vector::Zero(10));
    EXPECT_EQ(null_only.fdp, 1.0);
    EXPECT_EQ(null_only.power, 0.0);
}

TEST(Estimation, ZeroSignalSanityCell) {
    SimDesign d = small_design();
    d.rho = 0.0;
    d.reps = 3;
    PipelineConfig config;
    const auto rows = run_estimation_experiment({d}, config);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].reps_ok + rows[0].reps_failed, 3);
    EXPECT_EQ(rows[0].emse_zero, 0.0);
    if (rows[0].reps_ok > 0) {
        EXPECT_LT(rows[0].emse_em, 1.0);
    }
}

TEST(Estimation, ThreadCountDoesNotChangeResults) {
    const SimDesign d = small_design();
    PipelineConfig one;
    PipelineConfig three;
    three.threads = 3;
    const auto a = run_estimation_experiment({d, d}, one);
    const auto b = run_estimation_experiment({d, d}, three);
    std::ostringstream sa, sb;
    write_estimation_table(sa, a);
    write_estimation_table(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
    EXPECT_EQ(a[0].emse_em, a[1].emse_em);
}

TEST(Estimation, TableLayout) {
    SimDesign d = small_design();
    d.reps = 1;
    const auto rows = run_estimation_experiment({d}, PipelineConfig{});
    std::ostringstream os;
    write_estimation_table(os, rows);
    const std::string text = os.str();
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "n,p,s,rho,omega_star,sigma2,sigma_model,seed,reps_ok,reps_failed,emse_init,emse_em,emse_zero");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Estimation, ScaledCellRegression) {
    SimDesign d;
    d.n = 400;
    d.p = 100;
    d.s = 5;
    d.rho = 1.0;
    d.reps = 50;
    d.seed = 1;
    PipelineConfig config;
    const auto rows = run_estimation_experiment({d}, config);
    EXPECT_EQ(rows[0].reps_ok, 50);
    EXPECT_LT(rows[0].emse_em, rows[0].emse_init);
    EXPECT_NEAR(rows[0].emse_em, SCALED_CELL_EMSE_EM, 1e-9);
    EXPECT_NEAR(rows[0].emse_init, SCALED_CELL_EMSE_INIT, 1e-9);
}

TEST(Testing, SeparationLimit) {
    SimDesign d;
    d.n = 400;
    d.p = 50;
    d.s = 3;
    d.rho = 3.0;
    d.sigma2 = 0.01;
    d.omega_star = 0.6;
    d.reps = 5;
    d.seed = 8;
    const auto rows = run_testing_experiment({d}, 0.1, PipelineConfig{});
    ASSERT_EQ(rows[0].reps_ok, 5);
    EXPECT_GE(rows[0].power, 0.95);
    EXPECT_LE(rows[0].fdr, 0.2);
    EXPECT_GE(rows[0].fdr, 0.0);
    EXPECT_LE(rows[0].power_by, 1.0);
}

TEST(Testing, TableLayoutAndThreadInvariance) {
    SimDesign d = small_design();
    d.reps = 3;
    PipelineConfig one;
    PipelineConfig two;
    two.threads = 2;
    std::ostringstream a, b;
    write_testing_table(a, run_testing_experiment({d}, 0.1, one));
    write_testing_table(b, run_testing_experiment({d}, 0.1, two));
    EXPECT_EQ(a.str(), b.str());
    EXPECT_EQ(a.str().substr(0, a.str().find('\n')),
              "n,p,s,rho,omega_star,sigma2,sigma_model,seed,alpha,reps_ok,reps_failed,fdr,power,fdr_by,power_by,"
              "mean_rejections,threshold_rate");
}
