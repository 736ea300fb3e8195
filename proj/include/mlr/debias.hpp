#pragma once

#include "mlr/em.hpp"
#include "mlr/model.hpp"

#include <optional>
#include <vector>

namespace mlr {

struct QpOptions {
    double tol = 1e-10;          ///< KKT tolerance of the dual coordinate descent
    int max_sweeps = 20000;
    int admm_max_iter = 50000;
    double admm_tol = 1e-10;
    double feasibility_tol = 1e-6;  ///< slack allowed in the post-hoc constraint check
    int max_doublings = 10;
};

struct SurrogateRow {
    Vector m;        ///< m_tilde / omega_hat (set by build_surrogates)
    Vector m2;       ///< m_tilde / (1 - omega_hat), used for the second component
    Vector m_tilde;  ///< solution of the quadratic program
    double mu_used = 0.0;
    bool feasible_first_try = true;
    double box_residual = 0.0;  ///< ||Sigma m_tilde - e_j||_inf
    double l1_norm = 0.0;
    double objective = 0.0;     ///< m_tilde' Sigma m_tilde
};

/// Minimizes m' S m subject to ||S m - e_j||_inf <= mu and ||m||_1 <= budget.
/// On infeasibility mu is doubled up to max_doublings times; afterwards throws
/// DegenerateDesign. Only the m_tilde part of the row is filled.
SurrogateRow solve_m(const Matrix& sigma_tilde, Index j, double mu, double budget, const QpOptions& options = {});

struct SurrogateOptions {
    std::optional<double> mu;      ///< empty = sqrt(log p / n_T)
    std::optional<double> budget;  ///< empty = 4 sqrt(log n_T)
    QpOptions qp;
};

double auto_mu(Index n, Index p);
double auto_budget(Index n);

/// One surrogate row per coordinate from the working-sample Gram matrix, rescaled by
/// the mean of the final responsibilities (component 1) and its complement (component 2).
/// Both divisors are floored at 0.001.
std::vector<SurrogateRow> build_surrogates(const MlrDataset& data_working, const EmFit& emfit,
                                           const SurrogateOptions& options = {});

/// Plug-in information blocks. The per-observation weights always exist; the p x p
/// matrices are formed only when requested.
struct VarianceBlocks {
    Vector w11;      ///< gamma_i + 2 r1_i^2 / eta_i
    Vector w22;      ///< (1 - gamma_i) + 2 r2_i^2 / eta_i
    Vector w12;      ///< -2 r1_i r2_i / eta_i
    Vector eta;      ///< saturates at exp(700)
    Vector log_eta;
    double omega_hat = 0.0;
    Index n_t = 0;
    Matrix t11;
    Matrix t22;
    Matrix t12;

    /// Equal to t12: one formula sets both off-diagonal blocks.
    const Matrix& t21() const { return t12; }
    bool has_matrices() const { return t11.size() > 0; }
};

VarianceBlocks variance_blocks(const MlrDataset& data_working, const EmFit& emfit, bool with_matrices = true);

struct DebiasedFit {
    Vector beta1_u;
    Vector beta2_u;
    Vector v1;
    Vector v2;
    Vector v_diff;
    Index n_eff = 0;
    std::vector<SurrogateRow> rows;
    std::vector<bool> variance_floored;  ///< v1, v2 or v_diff hit the 1e-12 floor at coordinate j
};

/// One-step correction in residual form and the plug-in variances.
DebiasedFit debias_fit(const MlrDataset& data_working, const EmFit& emfit, std::vector<SurrogateRow> surrogates,
                       const VarianceBlocks& blocks);

/// working_data + build_surrogates + variance_blocks (weights only) + debias_fit.
DebiasedFit debias(const MlrDataset& data, const EmFit& emfit, const SurrogateOptions& options = {});

}  // namespace mlr
