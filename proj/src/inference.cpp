#include "mlr/inference.hpp"

#include "mlr/errors.hpp"
#include "mlr/normal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mlr {

namespace {

void check_alpha(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidInput("alpha must lie in (0, 1)");
    }
}

Interval make_interval(double center, double half_width) {
    return Interval{center, half_width, center - half_width, center + half_width};
}

}  // namespace

IntervalSet confidence_intervals(const DebiasedFit& fit, double alpha) {
    check_alpha(alpha);
    IntervalSet out;
    out.alpha = alpha;
    out.z = normal_quantile(1.0 - alpha / 2.0);
    const double n = static_cast<double>(fit.n_eff);
    const Index p = fit.beta1_u.size();
    for (Index j = 0; j < p; ++j) {
        out.component1.push_back(make_interval(fit.beta1_u(j), out.z * std::sqrt(fit.v1(j) / n)));
        out.component2.push_back(make_interval(fit.beta2_u(j), out.z * std::sqrt(fit.v2(j) / n)));
        out.difference.push_back(
            make_interval(fit.beta1_u(j) - fit.beta2_u(j), out.z * std::sqrt(fit.v_diff(j) / n)));
    }
    return out;
}

ZStatistics z_statistics(const DebiasedFit& fit) {
    const double root_n = std::sqrt(static_cast<double>(fit.n_eff));
    ZStatistics out;
    out.t1 = root_n * fit.beta1_u.array() / fit.v1.array().sqrt();
    out.t2 = root_n * fit.beta2_u.array() / fit.v2.array().sqrt();
    out.t_max = out.t1.cwiseAbs().cwiseMax(out.t2.cwiseAbs());
    out.floored = fit.variance_floored;
    out.floored.resize(static_cast<std::size_t>(fit.beta1_u.size()), false);
    return out;
}

double b_p(Index p) {
    if (p < 2) {
        throw InvalidInput("b_p needs p >= 2");
    }
    const double lp = std::log(static_cast<double>(p));
    return std::sqrt(2.0 * lp - 2.0 * std::log(lp));
}

FdrThreshold fdr_threshold(const Vector& t_max, double alpha) {
    check_alpha(alpha);
    const Index p = t_max.size();
    if (!t_max.allFinite()) {
        throw InvalidInput("statistics must be finite");
    }
    FdrThreshold out;
    out.b_p = b_p(p);
    const double pd = static_cast<double>(p);

    std::vector<double> sorted(t_max.data(), t_max.data() + p);
    std::sort(sorted.begin(), sorted.end());
    auto count_at_least = [&](double t) {
        return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
    };
    auto count_above = [&](double t) {
        return static_cast<double>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
    };

    // t = 0 on its own, then each interval (a, b] between consecutive breakpoints, where
    // the rejection count is constant and the criterion is decreasing in t.
    if (pd / std::max(count_at_least(0.0), 1.0) <= alpha / 2.0) {
        out.t_hat = 0.0;
        out.threshold_existed = true;
        return out;
    }
    std::vector<double> knots{0.0};
    for (double v : sorted) {
        if (v > 0.0 && v < out.b_p && v != knots.back()) {
            knots.push_back(v);
        }
    }
    knots.push_back(out.b_p);

    for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
        const double a = knots[k];
        const double b = knots[k + 1];
        const double rejections = std::max(count_above(a), 1.0);
        // Solve G(t) = alpha R / (2p)  <=>  t = -Phi^{-1}(alpha R / (4p)).
        const double solved = -normal_quantile(alpha * rejections / (4.0 * pd));
        if (solved <= b) {
            out.t_hat = std::max(a, solved);
            out.threshold_existed = true;
            return out;
        }
    }
    out.t_hat = std::sqrt(2.0 * std::log(pd));
    out.threshold_existed = false;
    return out;
}

std::vector<Index> reject(const Vector& t_max, double t_hat) {
    std::vector<Index> out;
    for (Index j = 0; j < t_max.size(); ++j) {
        if (t_max(j) >= t_hat) {
            out.push_back(j);
        }
    }
    return out;
}

std::vector<Index> by_adjust(const Vector& p_values, double alpha) {
    check_alpha(alpha);
    const Index p = p_values.size();
    if ((p_values.array() < 0.0).any() || (p_values.array() > 1.0).any() || !p_values.allFinite()) {
        throw InvalidInput("p-values must lie in [0, 1]");
    }
    if (p == 0) {
        return {};
    }
    double harmonic = 0.0;
    for (Index k = 1; k <= p; ++k) {
        harmonic += 1.0 / static_cast<double>(k);
    }
    std::vector<Index> order(static_cast<std::size_t>(p));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return p_values(a) < p_values(b); });

    double cutoff = -1.0;
    for (Index k = p; k >= 1; --k) {
        const double pv = p_values(order[static_cast<std::size_t>(k - 1)]);
        if (pv <= static_cast<double>(k) * alpha / (static_cast<double>(p) * harmonic)) {
            cutoff = pv;
            break;
        }
    }
    std::vector<Index> out;
    for (Index j = 0; j < p; ++j) {
        if (p_values(j) <= cutoff) {
            out.push_back(j);
        }
    }
    return out;
}

Vector max_statistic_p_values(const Vector& t_max) {
    Vector out(t_max.size());
    for (Index j = 0; j < t_max.size(); ++j) {
        out(j) = std::min(1.0, 2.0 * normal_two_sided_tail(t_max(j)));
    }
    return out;
}

TestOutcome multiple_test(const DebiasedFit& fit, double alpha) {
    TestOutcome out;
    out.alpha = alpha;
    out.stats = z_statistics(fit);
    out.threshold = fdr_threshold(out.stats.t_max, alpha);
    out.rejected = reject(out.stats.t_max, out.threshold.t_hat);
    out.rejected_by = by_adjust(max_statistic_p_values(out.stats.t_max), alpha);
    return out;
}

}  // namespace mlr
