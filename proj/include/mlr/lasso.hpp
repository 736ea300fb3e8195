#pragma once

#include "mlr/model.hpp"

#include <optional>
#include <vector>

namespace mlr {

/// Weighted elastic-net least squares
///   (1/2n) sum_i w_i (y_i - <x_i, beta>)^2 + lambda [mix ||beta||_1 + (1 - mix) ||beta||_2^2 / 2].
/// The problem only views x, y and weights; the caller keeps them alive.
struct PenalizedLsProblem {
    Eigen::Ref<const Matrix> x;
    Eigen::Ref<const Vector> y;
    Eigen::Ref<const Vector> weights;
    double lambda = 0.0;
    double mix = 1.0;
    std::optional<Vector> warm_start;

    void validate() const;
};

struct LassoOptions {
    double tol = 1e-7;
    int max_iter = 10000;
    /// Total weight at or below degenerate_weight * n is treated as all-zero weights.
    double degenerate_weight = 1e-10;
    bool record_objective = false;
};

struct LassoSolution {
    Vector beta;
    double kkt_gap = 0.0;
    int iterations = 0;  ///< coordinate sweeps performed
    bool converged = false;
    bool degenerate_weights = false;
    std::vector<double> objective_trace;  ///< per sweep, when requested
};

/// Cyclic coordinate descent in index order 0..p-1 with active-set passes between
/// full sweeps. Stops when the max KKT violation is <= tol. On hitting max_iter the
/// best iterate is returned with converged == false.
LassoSolution solve_weighted_lasso(const PenalizedLsProblem& problem, const LassoOptions& options = {});

/// g = (1/n) x^T diag(w) (x beta - y) + lambda (1 - mix) beta.
Vector kkt_residual(const PenalizedLsProblem& problem, const Vector& beta);

/// Per-coordinate KKT violation built from kkt_residual.
Vector kkt_gaps(const PenalizedLsProblem& problem, const Vector& beta);

/// Max of kkt_gaps.
double kkt_gap(const PenalizedLsProblem& problem, const Vector& beta);

double penalized_objective(const PenalizedLsProblem& problem, const Vector& beta);

inline double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

}  // namespace mlr
