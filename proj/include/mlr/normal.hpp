#pragma once

namespace mlr {

/// Standard normal CDF.
double normal_cdf(double t);

/// Standard normal quantile, 0 < prob < 1.
double normal_quantile(double prob);

/// Two-sided tail G(t) = 2 - 2 Phi(t), computed without cancellation.
double normal_two_sided_tail(double t);

}  // namespace mlr
