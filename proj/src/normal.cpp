#include "mlr/normal.hpp"

#include "mlr/errors.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <cmath>
#include <numbers>

namespace mlr {

double normal_cdf(double t) {
    return 0.5 * std::erfc(-t / std::numbers::sqrt2);
}

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0)) {
        throw InvalidInput("normal quantile needs a probability in (0, 1)");
    }
    // Phi^{-1}(q) = -sqrt(2) erfc^{-1}(2q); erfc_inv keeps full relative accuracy in both tails.
    return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * prob);
}

double normal_two_sided_tail(double t) {
    return std::erfc(t / std::numbers::sqrt2);
}

}  // namespace mlr
