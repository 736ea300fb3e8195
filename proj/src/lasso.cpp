#include "mlr/lasso.hpp"

#include "mlr/errors.hpp"

#include <algorithm>
#include <cmath>

namespace mlr {

void PenalizedLsProblem::validate() const {
    if (x.rows() < 1 || x.cols() < 1) {
        throw InvalidInput("penalized least squares needs a non-empty design");
    }
    if (y.size() != x.rows() || weights.size() != x.rows()) {
        throw InvalidInput("response/weights length does not match design rows");
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw InvalidInput("lambda must be finite and nonnegative");
    }
    if (!(mix >= 0.0 && mix <= 1.0)) {
        throw InvalidInput("elastic-net mix must lie in [0, 1]");
    }
    if ((weights.array() < 0.0).any() || (weights.array() > 1.0).any() || !weights.allFinite()) {
        throw InvalidInput("weights must lie in [0, 1]");
    }
    if (warm_start && warm_start->size() != x.cols()) {
        throw InvalidInput("warm start length does not match the number of covariates");
    }
}

Vector kkt_residual(const PenalizedLsProblem& problem, const Vector& beta) {
    const double n = static_cast<double>(problem.x.rows());
    const Vector wres = problem.weights.cwiseProduct(problem.x * beta - problem.y);
    Vector g = problem.x.transpose() * wres / n;
    g += problem.lambda * (1.0 - problem.mix) * beta;
    return g;
}

Vector kkt_gaps(const PenalizedLsProblem& problem, const Vector& beta) {
    const Vector g = kkt_residual(problem, beta);
    const double l1 = problem.lambda * problem.mix;
    Vector gaps(g.size());
    for (Index k = 0; k < g.size(); ++k) {
        if (beta(k) == 0.0) {
            gaps(k) = std::max(0.0, std::abs(g(k)) - l1);
        } else {
            gaps(k) = std::abs(g(k) + l1 * (beta(k) > 0.0 ? 1.0 : -1.0));
        }
    }
    return gaps;
}

double kkt_gap(const PenalizedLsProblem& problem, const Vector& beta) {
    return kkt_gaps(problem, beta).maxCoeff();
}

double penalized_objective(const PenalizedLsProblem& problem, const Vector& beta) {
    const double n = static_cast<double>(problem.x.rows());
    const Vector r = problem.y - problem.x * beta;
    const double loss = problem.weights.dot(r.cwiseAbs2()) / (2.0 * n);
    return loss + problem.lambda * (problem.mix * beta.lpNorm<1>() +
                                    0.5 * (1.0 - problem.mix) * beta.squaredNorm());
}

LassoSolution solve_weighted_lasso(const PenalizedLsProblem& problem, const LassoOptions& options) {
    problem.validate();
    if (!(options.tol > 0.0)) {
        throw InvalidInput("solver tolerance must be positive");
    }
    const auto& x = problem.x;
    const auto& w = problem.weights;
    const Index n = x.rows();
    const Index p = x.cols();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double l1 = problem.lambda * problem.mix;
    const double l2 = problem.lambda * (1.0 - problem.mix);

    LassoSolution sol;
    sol.beta = problem.warm_start ? *problem.warm_start : Vector::Zero(p);

    if (w.sum() <= options.degenerate_weight * static_cast<double>(n)) {
        sol.degenerate_weights = true;
        sol.kkt_gap = kkt_gap(problem, sol.beta);
        return sol;
    }

    // Weighted column scales stay fixed for the whole solve.
    const Vector col_sq = inv_n * (x.array().square().matrix().transpose() * w);
    Vector wr = w.cwiseProduct(problem.y - x * sol.beta);
    Vector& beta = sol.beta;

    auto record = [&] {
        if (options.record_objective) {
            sol.objective_trace.push_back(penalized_objective(problem, beta));
        }
    };

    // Exact minimization along coordinate k; returns |change| on the gradient scale.
    auto update = [&](Index k) -> double {
        const double c = inv_n * x.col(k).dot(wr);
        const double denom = col_sq(k) + l2;
        const double updated = denom > 0.0 ? soft_threshold(c + col_sq(k) * beta(k), l1) / denom : 0.0;
        const double delta = updated - beta(k);
        if (delta != 0.0) {
            beta(k) = updated;
            wr.noalias() -= delta * x.col(k).cwiseProduct(w);
        }
        return std::abs(delta) * denom;
    };

    auto max_violation = [&] {
        double worst = 0.0;
        for (Index k = 0; k < p; ++k) {
            const double g = -inv_n * x.col(k).dot(wr) + l2 * beta(k);
            double gap;
            if (beta(k) == 0.0) {
                gap = std::max(0.0, std::abs(g) - l1);
            } else {
                gap = std::abs(g + (beta(k) > 0.0 ? l1 : -l1));
            }
            worst = std::max(worst, gap);
        }
        return worst;
    };

    record();
    const double inner_tol = 0.1 * options.tol;
    while (true) {
        sol.kkt_gap = max_violation();
        if (sol.kkt_gap <= options.tol) {
            sol.converged = true;
            break;
        }
        if (sol.iterations >= options.max_iter) {
            break;
        }

        for (Index k = 0; k < p; ++k) {
            update(k);
        }
        ++sol.iterations;
        record();

        while (sol.iterations < options.max_iter) {
            double largest = 0.0;
            for (Index k = 0; k < p; ++k) {
                if (beta(k) != 0.0) {
                    largest = std::max(largest, update(k));
                }
            }
            ++sol.iterations;
            record();
            if (largest <= inner_tol) {
                break;
            }
        }
    }
    return sol;
}

}  // namespace mlr
