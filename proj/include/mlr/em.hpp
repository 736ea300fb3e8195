#pragma once

#include "mlr/lasso.hpp"
#include "mlr/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mlr {

struct EmConfig {
    int t_max = 30;           ///< number of EM iterations T
    double kappa = 0.3;       ///< geometric decay of the penalty schedule
    double c_lambda = 0.8;    ///< floor constant of the penalty schedule
    double lambda0 = 0.5;     ///< starting penalty
    bool split = false;       ///< use a fresh block of a T-way partition at every iteration
    bool estimate_sigma = true;
    std::optional<double> sigma2_known;
    double mix = 1.0;         ///< M-step elastic-net mixing (1 = lasso)
    double solver_tol = 1e-7;
    int solver_max_iter = 10000;
    double sigma2_floor = 1e-6;
    double omega_min = 0.001;
    double omega_max = 0.999;
    bool record_path = false;

    void validate() const;
};

/// Next penalty level: kappa * lambda_t + c_lambda * sqrt(log p / n).
double lambda_next(double lambda_t, double kappa, double c_lambda, Index n, Index p);

/// Average of the two responsibility-weighted mean squared residuals, each divided by n,
/// floored at `floor`.
double estimate_sigma2_step(const MlrDataset& data, const ThetaParams& theta,
                            const Responsibilities& gamma, double floor = 1e-6);

struct EmStepResult {
    ThetaParams theta;
    Responsibilities gamma;   ///< weights used by this step's M-step
    LassoSolution fit1;
    LassoSolution fit2;
    bool omega_clamped = false;
};

/// One E-step followed by the penalized M-step at penalty `lambda`.
EmStepResult em_step(const MlrDataset& data, const ThetaParams& theta, double lambda, const EmConfig& config);

/// M-step only, with responsibilities supplied by the caller. `warm` provides the warm
/// starts and, in known-variance mode, nothing else.
EmStepResult m_step(const MlrDataset& data, const Responsibilities& gamma, const ThetaParams& warm,
                    double lambda, const EmConfig& config);

struct EmFit {
    ThetaParams theta;
    Responsibilities gamma;              ///< responsibilities used in the final M-step
    std::vector<double> lambda_path;     ///< penalty used at iterations 0..T-1
    std::vector<ThetaParams> theta_path; ///< iterates after each step, when recorded
    std::vector<std::vector<Index>> subset_indices;  ///< T blocks when split, else empty
    Index n_t = 0;                       ///< sample size of the final working subset
    bool omega_clamped = false;
    int solver_failures = 0;             ///< M-step solves that hit max_iter
    int degenerate_solves = 0;           ///< M-step solves with (near) zero total weight

    double final_lambda() const { return lambda_path.back(); }
};

/// Penalized EM with the geometric-plus-floor penalty schedule.
EmFit em_fit(const MlrDataset& data, const ThetaParams& init, const EmConfig& config, std::uint64_t seed);

/// Rows the final iteration worked on: the last block when split, else the full data.
MlrDataset working_data(const MlrDataset& data, const EmFit& fit);

}  // namespace mlr
