#pragma once

// Two-component mixed linear regression model:
//   y_i = <x_i, beta_1> + eps_i   with probability omega
//   y_i = <x_i, beta_2> + eps_i   with probability 1 - omega
// with eps_i ~ N(0, sigma2).

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace mlr {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Design matrix (n x p, column-major) and response (length n).
struct MlrDataset {
    Matrix x;
    Vector y;

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }

    /// Throws InvalidInput unless n, p >= 1, y.size() == n and all entries are finite.
    void validate() const;

    /// Rows selected by `rows`, in the given order.
    MlrDataset subset(std::span<const Index> rows) const;
};

struct ThetaParams {
    double omega = 0.5;
    Vector beta1;
    Vector beta2;
    double sigma2 = 1.0;

    Index p() const { return beta1.size(); }

    /// Strict parameter-space check: 0 < omega < 1, sigma2 > 0, finite equal-length betas.
    void validate() const;

    /// (1 - omega, beta2, beta1, sigma2).
    ThetaParams swapped() const;
};

/// Posterior probability that each observation belongs to component 1.
struct Responsibilities {
    Vector gamma;

    double mean() const { return gamma.mean(); }
};

/// Average mixture log-likelihood (1/n) sum_i log[omega N(r1_i) + (1-omega) N(r2_i)],
/// evaluated with log-sum-exp. Accepts omega in [0, 1].
double log_likelihood(const ThetaParams& theta, const MlrDataset& data);

/// E-step posterior weights, computed from the log-odds so that well-separated
/// components never overflow. Accepts omega in [0, 1].
Responsibilities responsibilities(const ThetaParams& theta, const MlrDataset& data);

/// Expected complete-data objective as written for the M-step:
///   -(1/2n)[sum g r1^2 + sum (1-g) r2^2] + (1/n) sum[(1-g) log(1-omega) + g log omega].
/// The quadratic term carries no 1/sigma2 factor. Returns -infinity when omega is 0 or 1
/// and a responsibility puts mass on the impossible component.
double q_function(const ThetaParams& theta, const Responsibilities& gamma, const MlrDataset& data);

}  // namespace mlr
