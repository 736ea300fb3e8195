#include "mlr/model.hpp"

#include "mlr/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace mlr {

namespace {

void check_theta_loose(const ThetaParams& theta, const MlrDataset& data) {
    data.validate();
    if (!(theta.omega >= 0.0 && theta.omega <= 1.0)) {
        throw InvalidInput("omega must lie in [0, 1]");
    }
    if (!(theta.sigma2 > 0.0) || !std::isfinite(theta.sigma2)) {
        throw InvalidInput("sigma2 must be positive and finite");
    }
    if (theta.beta1.size() != data.p() || theta.beta2.size() != data.p()) {
        throw InvalidInput("coefficient length does not match the number of covariates");
    }
    if (!theta.beta1.allFinite() || !theta.beta2.allFinite()) {
        throw InvalidInput("coefficients must be finite");
    }
}

// log(exp(a) + exp(b)) without overflow; handles -inf operands.
double log_add_exp(double a, double b) {
    const double hi = std::max(a, b);
    if (hi == -std::numeric_limits<double>::infinity()) {
        return hi;
    }
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

double logistic(double d) {
    if (d >= 0.0) {
        return 1.0 / (1.0 + std::exp(-d));
    }
    const double e = std::exp(d);
    return e / (1.0 + e);
}

}  // namespace

void MlrDataset::validate() const {
    if (x.rows() < 1 || x.cols() < 1) {
        throw InvalidInput("dataset needs n >= 1 and p >= 1");
    }
    if (y.size() != x.rows()) {
        throw InvalidInput("response length " + std::to_string(y.size()) +
                           " does not match design rows " + std::to_string(x.rows()));
    }
    if (!x.allFinite() || !y.allFinite()) {
        throw InvalidInput("dataset contains non-finite entries");
    }
}

MlrDataset MlrDataset::subset(std::span<const Index> rows) const {
    MlrDataset out;
    out.x.resize(static_cast<Index>(rows.size()), x.cols());
    out.y.resize(static_cast<Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const Index i = rows[k];
        if (i < 0 || i >= x.rows()) {
            throw InvalidInput("subset row index out of range");
        }
        out.x.row(static_cast<Index>(k)) = x.row(i);
        out.y(static_cast<Index>(k)) = y(i);
    }
    return out;
}

void ThetaParams::validate() const {
    if (!(omega > 0.0 && omega < 1.0)) {
        throw InvalidInput("omega must lie strictly inside (0, 1)");
    }
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw InvalidInput("sigma2 must be positive and finite");
    }
    if (beta1.size() != beta2.size() || beta1.size() < 1) {
        throw InvalidInput("beta1 and beta2 must be non-empty and of equal length");
    }
    if (!beta1.allFinite() || !beta2.allFinite()) {
        throw InvalidInput("coefficients must be finite");
    }
}

ThetaParams ThetaParams::swapped() const {
    return ThetaParams{1.0 - omega, beta2, beta1, sigma2};
}

double log_likelihood(const ThetaParams& theta, const MlrDataset& data) {
    check_theta_loose(theta, data);
    const Vector r1 = data.y - data.x * theta.beta1;
    const Vector r2 = data.y - data.x * theta.beta2;
    const double log_w1 = std::log(theta.omega);
    const double log_w2 = std::log1p(-theta.omega);
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * theta.sigma2);
    const double inv2s = 0.5 / theta.sigma2;

    double total = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
        const double a = log_w1 - r1(i) * r1(i) * inv2s;
        const double b = log_w2 - r2(i) * r2(i) * inv2s;
        total += log_add_exp(a, b) + log_norm;
    }
    return total / static_cast<double>(data.n());
}

Responsibilities responsibilities(const ThetaParams& theta, const MlrDataset& data) {
    check_theta_loose(theta, data);
    const Vector r1 = data.y - data.x * theta.beta1;
    const Vector r2 = data.y - data.x * theta.beta2;
    const double prior_logit = std::log(theta.omega) - std::log1p(-theta.omega);
    const double inv2s = 0.5 / theta.sigma2;

    Responsibilities out;
    out.gamma.resize(data.n());
    for (Index i = 0; i < data.n(); ++i) {
        if (std::isinf(prior_logit)) {
            out.gamma(i) = prior_logit > 0.0 ? 1.0 : 0.0;
            continue;
        }
        const double d = prior_logit - (r1(i) * r1(i) - r2(i) * r2(i)) * inv2s;
        out.gamma(i) = logistic(d);
    }
    return out;
}

double q_function(const ThetaParams& theta, const Responsibilities& gamma, const MlrDataset& data) {
    check_theta_loose(theta, data);
    if (gamma.gamma.size() != data.n()) {
        throw InvalidInput("responsibilities length does not match the dataset");
    }
    const Vector r1 = data.y - data.x * theta.beta1;
    const Vector r2 = data.y - data.x * theta.beta2;
    const auto& g = gamma.gamma;
    const double n = static_cast<double>(data.n());

    const double quad = (g.array() * r1.array().square()).sum() +
                        ((1.0 - g.array()) * r2.array().square()).sum();

    // 0 * log 0 is taken as 0; positive mass on a zero-probability label is -inf.
    const double log_w1 = std::log(theta.omega);
    const double log_w2 = std::log1p(-theta.omega);
    double prior = 0.0;
    for (Index i = 0; i < data.n(); ++i) {
        const double g1 = g(i);
        const double g2 = 1.0 - g(i);
        if (g1 > 0.0) {
            prior += g1 * log_w1;
        }
        if (g2 > 0.0) {
            prior += g2 * log_w2;
        }
    }
    return -quad / (2.0 * n) + prior / n;
}

}  // namespace mlr
