#pragma once

#include "mlr/debias.hpp"

#include <vector>

namespace mlr {

struct Interval {
    double center = 0.0;
    double half_width = 0.0;
    double lower = 0.0;
    double upper = 0.0;

    bool contains(double value) const { return lower <= value && value <= upper; }
};

struct IntervalSet {
    std::vector<Interval> component1;
    std::vector<Interval> component2;
    std::vector<Interval> difference;  ///< for beta1_j - beta2_j
    double alpha = 0.05;
    double z = 0.0;                    ///< Phi^{-1}(1 - alpha/2)
};

/// center +- z_{alpha/2} sqrt(v / n_eff) for each coordinate, component and the difference.
IntervalSet confidence_intervals(const DebiasedFit& fit, double alpha);

struct ZStatistics {
    Vector t1;
    Vector t2;
    Vector t_max;
    std::vector<bool> floored;  ///< variance floor was hit at this coordinate
};

/// T_j^(l) = sqrt(n_eff) beta_lj^u / sqrt(v_lj), and T_j = max(|T_j^(1)|, |T_j^(2)|).
ZStatistics z_statistics(const DebiasedFit& fit);

/// Search cap sqrt(2 log p - 2 log log p).
double b_p(Index p);

struct FdrThreshold {
    double t_hat = 0.0;
    double b_p = 0.0;
    bool threshold_existed = false;
};

/// Smallest t in [0, b_p] with p G(t) / max(#{T_j >= t}, 1) <= alpha / 2, found exactly by
/// solving within each gap between sorted statistics. Falls back to sqrt(2 log p).
FdrThreshold fdr_threshold(const Vector& t_max, double alpha);

/// { j : T_j >= t_hat }, ascending.
std::vector<Index> reject(const Vector& t_max, double t_hat);

/// Benjamini-Yekutieli step-up at level alpha; rejected indices ascending.
std::vector<Index> by_adjust(const Vector& p_values, double alpha);

/// min(1, 2 G(T_j)) for the max-statistic.
Vector max_statistic_p_values(const Vector& t_max);

struct TestOutcome {
    ZStatistics stats;
    FdrThreshold threshold;
    std::vector<Index> rejected;
    std::vector<Index> rejected_by;  ///< Benjamini-Yekutieli baseline on the same statistics
    double alpha = 0.1;
};

/// z_statistics + fdr_threshold + reject, plus the B-Y baseline.
TestOutcome multiple_test(const DebiasedFit& fit, double alpha);

}  // namespace mlr
