#include "mlr/em.hpp"

#include "mlr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mlr {

void EmConfig::validate() const {
    if (t_max < 1) {
        throw InvalidInput("t_max must be at least 1");
    }
    if (!(kappa > 0.0 && kappa < 1.0)) {
        throw InvalidInput("kappa must lie in (0, 1)");
    }
    if (!(c_lambda > 0.0) || !(lambda0 > 0.0)) {
        throw InvalidInput("c_lambda and lambda0 must be positive");
    }
    if (estimate_sigma == sigma2_known.has_value()) {
        throw InvalidInput("exactly one of estimate_sigma / sigma2_known must be active");
    }
    if (sigma2_known && !(*sigma2_known > 0.0)) {
        throw InvalidInput("sigma2_known must be positive");
    }
    if (!(mix >= 0.0 && mix <= 1.0)) {
        throw InvalidInput("mix must lie in [0, 1]");
    }
    if (!(omega_min > 0.0 && omega_min < omega_max && omega_max < 1.0)) {
        throw InvalidInput("omega bounds must satisfy 0 < omega_min < omega_max < 1");
    }
}

double lambda_next(double lambda_t, double kappa, double c_lambda, Index n, Index p) {
    return kappa * lambda_t +
           c_lambda * std::sqrt(std::log(static_cast<double>(p)) / static_cast<double>(n));
}

double estimate_sigma2_step(const MlrDataset& data, const ThetaParams& theta,
                            const Responsibilities& gamma, double floor) {
    const double n = static_cast<double>(data.n());
    const Vector r1 = data.y - data.x * theta.beta1;
    const Vector r2 = data.y - data.x * theta.beta2;
    const double s1 = gamma.gamma.dot(r1.cwiseAbs2()) / n;
    const double s2 = (1.0 - gamma.gamma.array()).matrix().dot(r2.cwiseAbs2()) / n;
    return std::max(0.5 * (s1 + s2), floor);
}

EmStepResult m_step(const MlrDataset& data, const Responsibilities& gamma, const ThetaParams& warm,
                    double lambda, const EmConfig& config) {
    if (gamma.gamma.size() != data.n()) {
        throw InvalidInput("responsibilities length does not match the dataset");
    }
    const LassoOptions opts{config.solver_tol, config.solver_max_iter};
    const Vector w2 = (1.0 - gamma.gamma.array()).matrix();

    EmStepResult out;
    out.gamma = gamma;
    out.fit1 = solve_weighted_lasso(
        PenalizedLsProblem{data.x, data.y, gamma.gamma, lambda, config.mix, warm.beta1}, opts);
    out.fit2 = solve_weighted_lasso(
        PenalizedLsProblem{data.x, data.y, w2, lambda, config.mix, warm.beta2}, opts);

    out.theta.beta1 = out.fit1.beta;
    out.theta.beta2 = out.fit2.beta;
    const double omega = gamma.mean();
    out.theta.omega = std::clamp(omega, config.omega_min, config.omega_max);
    out.omega_clamped = out.theta.omega != omega;
    if (config.estimate_sigma) {
        out.theta.sigma2 = estimate_sigma2_step(data, out.theta, gamma, config.sigma2_floor);
    } else {
        out.theta.sigma2 = *config.sigma2_known;
    }
    return out;
}

EmStepResult em_step(const MlrDataset& data, const ThetaParams& theta, double lambda, const EmConfig& config) {
    return m_step(data, responsibilities(theta, data), theta, lambda, config);
}

EmFit em_fit(const MlrDataset& data, const ThetaParams& init, const EmConfig& config, std::uint64_t seed) {
    config.validate();
    data.validate();
    init.validate();
    if (init.p() != data.p()) {
        throw InvalidInput("initial coefficients do not match the number of covariates");
    }
    const Index n = data.n();
    const auto t_max = static_cast<Index>(config.t_max);
    if (config.split && n < t_max) {
        throw InvalidInput("sample splitting needs n >= t_max");
    }

    EmFit fit;
    if (config.split) {
        std::vector<Index> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), Index{0});
        std::mt19937_64 rng(seed);
        std::shuffle(order.begin(), order.end(), rng);
        // Contiguous blocks; the first n mod T blocks carry one extra row.
        const Index base = n / t_max;
        const Index extra = n % t_max;
        Index start = 0;
        for (Index t = 0; t < t_max; ++t) {
            const Index len = base + (t < extra ? 1 : 0);
            fit.subset_indices.emplace_back(order.begin() + start, order.begin() + start + len);
            start += len;
        }
    }

    ThetaParams theta = init;
    if (!config.estimate_sigma) {
        theta.sigma2 = *config.sigma2_known;
    }
    double lambda = config.lambda0;
    for (Index t = 0; t < t_max; ++t) {
        MlrDataset block;
        const MlrDataset* work = &data;
        if (config.split) {
            block = data.subset(fit.subset_indices[static_cast<std::size_t>(t)]);
            work = &block;
        }
        lambda = lambda_next(lambda, config.kappa, config.c_lambda, work->n(), data.p());
        fit.lambda_path.push_back(lambda);

        EmStepResult step = em_step(*work, theta, lambda, config);
        fit.omega_clamped = fit.omega_clamped || step.omega_clamped;
        for (const LassoSolution* s : {&step.fit1, &step.fit2}) {
            if (s->degenerate_weights) {
                ++fit.degenerate_solves;
            } else if (!s->converged) {
                ++fit.solver_failures;
            }
        }
        theta = std::move(step.theta);
        fit.gamma = std::move(step.gamma);
        fit.n_t = work->n();
        if (config.record_path) {
            fit.theta_path.push_back(theta);
        }
    }
    fit.theta = std::move(theta);
    return fit;
}

MlrDataset working_data(const MlrDataset& data, const EmFit& fit) {
    if (fit.subset_indices.empty()) {
        return data;
    }
    return data.subset(fit.subset_indices.back());
}

}  // namespace mlr
