#include "mlr/errors.hpp"
#include "mlr/model.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace mlr;

namespace {

MlrDataset scalar_data(double x, double y) {
    MlrDataset d;
    d.x = Matrix::Constant(1, 1, x);
    d.y = Vector::Constant(1, y);
    return d;
}

ThetaParams scalar_theta(double omega, double b1, double b2, double sigma2) {
    ThetaParams t;
    t.omega = omega;
    t.beta1 = Vector::Constant(1, b1);
    t.beta2 = Vector::Constant(1, b2);
    t.sigma2 = sigma2;
    return t;
}

struct Instance {
    MlrDataset data;
    ThetaParams theta;
};

Instance random_instance(std::uint64_t seed, Index n = 50, Index p = 5) {
    std::mt19937_64 rng(seed);
    Instance out;
    out.data.x = oracle::random_matrix(n, p, rng);
    out.theta.beta1 = oracle::random_vector(p, rng);
    out.theta.beta2 = oracle::random_vector(p, rng);
    out.theta.omega = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    out.theta.sigma2 = 0.5;
    out.data.y = out.data.x * out.theta.beta1 + oracle::random_vector(n, rng);
    return out;
}

}  // namespace

TEST(Model, DatasetValidationNamesTheMismatch) {
    MlrDataset d;
    d.x = Matrix::Zero(3, 2);
    d.y = Vector::Zero(4);
    try {
        d.validate();
        FAIL() << "expected InvalidInput";
    } catch (const InvalidInput& e) {
        EXPECT_NE(std::string(e.what()).find("does not match"), std::string::npos);
    }
    d.y = Vector::Zero(3);
    d.x(1, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(d.validate(), InvalidInput);
}

TEST(Model, ThetaValidationIsStrict) {
    auto t = scalar_theta(0.5, 0, 0, 1);
    EXPECT_NO_THROW(t.validate());
    t.omega = 1.0;
    EXPECT_THROW(t.validate(), InvalidInput);
    t.omega = 0.5;
    t.sigma2 = 0.0;
    EXPECT_THROW(t.validate(), InvalidInput);
}

TEST(Model, NonFiniteInputIsRejected) {
    auto d = scalar_data(1, std::numeric_limits<double>::infinity());
    EXPECT_THROW(log_likelihood(scalar_theta(0.5, 0, 1, 1), d), InvalidInput);
    EXPECT_THROW(responsibilities(scalar_theta(0.5, 0, 1, 1), d), InvalidInput);
}

TEST(LogLikelihood, ScalarExample) {
    const double expected = std::log(0.5 * oracle::normal_pdf(0.0, 1.0) + 0.5 * oracle::normal_pdf(2.0, 1.0));
    EXPECT_NEAR(log_likelihood(scalar_theta(0.5, 0, 2, 1), scalar_data(1, 0)), expected, 1e-14);
}

TEST(LogLikelihood, CollapsesToGaussianWhenBetasAgree) {
    auto inst = random_instance(3);
    inst.theta.beta2 = inst.theta.beta1;
    const Vector r = inst.data.y - inst.data.x * inst.theta.beta1;
    double expected = 0.0;
    for (Index i = 0; i < r.size(); ++i) {
        expected += std::log(oracle::normal_pdf(r(i), inst.theta.sigma2));
    }
    expected /= static_cast<double>(r.size());
    for (double omega : {0.1, 0.5, 0.93}) {
        inst.theta.omega = omega;
        EXPECT_NEAR(log_likelihood(inst.theta, inst.data), expected, 1e-12);
    }
}

TEST(LogLikelihood, LabelSwapInvariant) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = random_instance(seed);
        const double a = log_likelihood(inst.theta, inst.data);
        const double b = log_likelihood(inst.theta.swapped(), inst.data);
        EXPECT_NEAR(a, b, 1e-12 * std::abs(a));
    }
}

TEST(LogLikelihood, StableForHugeResiduals) {
    // residuals up to 200 sigma in one component and 0 in the other
    const auto d = scalar_data(1, 0);
    const double ll = log_likelihood(scalar_theta(0.5, 0, 200, 1), d);
    EXPECT_NEAR(ll, std::log(0.5) - 0.5 * std::log(2 * M_PI), 1e-12);
    const double both_far = log_likelihood(scalar_theta(0.5, 200, -200, 1), d);
    EXPECT_TRUE(std::isfinite(both_far));
    EXPECT_NEAR(both_far, -20000.0 - 0.5 * std::log(2 * M_PI), 1e-9);
}

TEST(Responsibilities, ScalarExample) {
    const auto g = responsibilities(scalar_theta(0.5, 1, -1, 1), scalar_data(1, 1));
    EXPECT_NEAR(g.gamma(0), 1.0 / (1.0 + std::exp(-2.0)), 1e-15);
    EXPECT_NEAR(g.gamma(0), 0.880797, 1e-6);
}

TEST(Responsibilities, EqualBetasGiveOmega) {
    auto inst = random_instance(5);
    inst.theta.beta2 = inst.theta.beta1;
    const auto g = responsibilities(inst.theta, inst.data);
    for (Index i = 0; i < g.gamma.size(); ++i) {
        EXPECT_NEAR(g.gamma(i), inst.theta.omega, 1e-15);
    }
}

TEST(Responsibilities, DegenerateOmega) {
    auto inst = random_instance(6);
    inst.theta.omega = 1.0;
    EXPECT_TRUE((responsibilities(inst.theta, inst.data).gamma.array() == 1.0).all());
    inst.theta.omega = 0.0;
    EXPECT_TRUE((responsibilities(inst.theta, inst.data).gamma.array() == 0.0).all());
}

TEST(Responsibilities, SwapComplement) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto inst = random_instance(seed);
        const auto g = responsibilities(inst.theta, inst.data);
        const auto h = responsibilities(inst.theta.swapped(), inst.data);
        EXPECT_LE((g.gamma - (Vector::Ones(g.gamma.size()) - h.gamma)).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Responsibilities, ExactBeyondExpOverflow) {
    // |r1^2 - r2^2| / 2 sigma2 = 1250 > 700
    const auto g = responsibilities(scalar_theta(0.5, 0, 50, 1), scalar_data(1, 0));
    EXPECT_EQ(g.gamma(0), 1.0);
    const auto h = responsibilities(scalar_theta(0.5, 50, 0, 1), scalar_data(1, 0));
    EXPECT_EQ(h.gamma(0), 0.0);
    // moderate gap: compare to the closed form
    const auto m = responsibilities(scalar_theta(0.3, 0, 6, 1), scalar_data(1, 0));
    EXPECT_NEAR(m.gamma(0), 1.0 / (1.0 + (0.7 / 0.3) * std::exp(-18.0)), 1e-16);
}

TEST(Responsibilities, NoNanUnderStress) {
    std::mt19937_64 rng(11);
    MlrDataset d;
    d.x = oracle::random_matrix(40, 3, rng) * 1e3;
    d.y = oracle::random_vector(40, rng) * 1e3;
    ThetaParams t;
    t.omega = 0.4;
    t.beta1 = oracle::random_vector(3, rng);
    t.beta2 = oracle::random_vector(3, rng);
    t.sigma2 = 1e-2;
    const auto g = responsibilities(t, d);
    EXPECT_TRUE(g.gamma.allFinite());
    EXPECT_TRUE((g.gamma.array() >= 0.0).all() && (g.gamma.array() <= 1.0).all());
    EXPECT_TRUE(std::isfinite(log_likelihood(t, d)));
    EXPECT_TRUE(std::isfinite(q_function(t, g, d)));
}

TEST(QFunction, ScalarExample) {
    Responsibilities g;
    g.gamma = Vector::Constant(1, 0.5);
    EXPECT_NEAR(q_function(scalar_theta(0.5, 0, 0, 1), g, scalar_data(1, 1)), -0.5 - std::log(2.0), 1e-15);
}

TEST(QFunction, ZeroAtPerfectFirstComponent) {
    Responsibilities g;
    g.gamma = Vector::Constant(1, 1.0);
    EXPECT_EQ(q_function(scalar_theta(1.0, 2, 7, 1), g, scalar_data(1, 2)), 0.0);
}

TEST(QFunction, MismatchedDegenerateOmegaIsMinusInfinity) {
    Responsibilities g;
    g.gamma = Vector::Constant(1, 0.2);
    const double q = q_function(scalar_theta(1.0, 0, 0, 1), g, scalar_data(1, 0));
    EXPECT_EQ(q, -std::numeric_limits<double>::infinity());
}

TEST(QFunction, ConcaveInBetas) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 30; ++trial) {
        auto inst = random_instance(100 + static_cast<std::uint64_t>(trial));
        const auto g = responsibilities(inst.theta, inst.data);
        auto a = inst.theta;
        auto b = inst.theta;
        b.beta1 = oracle::random_vector(5, rng);
        b.beta2 = oracle::random_vector(5, rng);
        auto mid = a;
        mid.beta1 = 0.5 * (a.beta1 + b.beta1);
        mid.beta2 = 0.5 * (a.beta2 + b.beta2);
        EXPECT_GE(q_function(mid, g, inst.data),
                  0.5 * (q_function(a, g, inst.data) + q_function(b, g, inst.data)) - 1e-12);
    }
}

TEST(QFunction, MaximizedByWeightedLeastSquares) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = random_instance(200 + static_cast<std::uint64_t>(trial));
        const auto g = responsibilities(inst.theta, inst.data);
        const Vector w1 = g.gamma;
        const Vector w2 = Vector::Ones(w1.size()) - w1;
        const auto& x = inst.data.x;
        auto best = inst.theta;
        best.beta1 = (x.transpose() * w1.asDiagonal() * x).ldlt().solve(x.transpose() * w1.asDiagonal() * inst.data.y);
        best.beta2 = (x.transpose() * w2.asDiagonal() * x).ldlt().solve(x.transpose() * w2.asDiagonal() * inst.data.y);
        const double q_best = q_function(best, g, inst.data);
        for (int k = 0; k < 20; ++k) {
            auto other = best;
            other.beta1 += 0.1 * oracle::random_vector(5, rng);
            other.beta2 += 0.1 * oracle::random_vector(5, rng);
            EXPECT_GE(q_best, q_function(other, g, inst.data));
        }
    }
}
