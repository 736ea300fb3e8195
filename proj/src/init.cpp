#include "mlr/init.hpp"

#include "mlr/errors.hpp"
#include "mlr/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace mlr {

namespace {

constexpr Index kMinSamples = 20;

Matrix standardize_columns(Matrix z) {
    for (Index c = 0; c < z.cols(); ++c) {
        const double mean = z.col(c).mean();
        z.col(c).array() -= mean;
        const double sd = std::sqrt(z.col(c).squaredNorm() / static_cast<double>(z.rows()));
        if (sd > 0.0) {
            z.col(c) /= sd;
        }
    }
    return z;
}

// Hard two-way clustering of z; empty result when a cluster came out empty.
std::vector<int> cluster_once(const Matrix& z, const InitConfig& config, int attempt) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                      static_cast<std::uint32_t>(attempt), 0x6b6d65u};
    std::mt19937_64 rng(seq);
    // every k-means++ start seeds one mixture fit; the most likely mixture wins
    GmmResult best;
    bool have = false;
    for (int r = 0; r < config.kmeans_restarts; ++r) {
        const KMeansResult km = kmeans_pp(z, 2, rng);
        GmmResult gmm;
        try {
            gmm = fit_gmm(z, km.labels, 2, config.gmm);
        } catch (const NumericalFailure&) {
            continue;
        }
        if (!have || gmm.log_likelihood > best.log_likelihood) {
            best = std::move(gmm);
            have = true;
        }
    }
    if (!have) {
        return {};
    }
    const GmmResult& gmm = best;
    const auto ones = std::count(gmm.labels.begin(), gmm.labels.end(), 1);
    if (ones == 0 || ones == static_cast<long>(gmm.labels.size())) {
        return {};
    }
    return gmm.labels;
}

}  // namespace

void InitConfig::validate() const {
    if (!(enet_mix >= 0.0 && enet_mix <= 1.0)) {
        throw InvalidInput("enet_mix must lie in [0, 1]");
    }
    if (screen_lambda && !(*screen_lambda > 0.0)) {
        throw InvalidInput("screen_lambda must be positive");
    }
    if (enet_lambda && !(*enet_lambda > 0.0)) {
        throw InvalidInput("enet_lambda must be positive");
    }
    if (kmeans_restarts < 1) {
        throw InvalidInput("kmeans_restarts must be at least 1");
    }
}

InitResult initialize_detailed(const MlrDataset& data, const InitConfig& config) {
    config.validate();
    data.validate();
    const Index n = data.n();
    const Index p = data.p();
    if (n < kMinSamples) {
        throw InvalidInput("initialization needs at least 20 samples");
    }
    const LassoOptions opts{config.solver_tol, config.solver_max_iter};
    const double log_p = std::log(static_cast<double>(std::max<Index>(p, 2)));

    InitResult out;
    out.screen_lambda = config.screen_lambda.value_or(std::sqrt(2.0 * log_p / static_cast<double>(n)));
    const Vector ones = Vector::Ones(n);
    const LassoSolution pooled =
        solve_weighted_lasso(PenalizedLsProblem{data.x, data.y, ones, out.screen_lambda, 1.0, std::nullopt}, opts);
    for (Index j = 0; j < p; ++j) {
        if (pooled.beta(j) != 0.0) {
            out.support.push_back(j);
        }
    }

    Matrix z(n, static_cast<Index>(out.support.size()) + 1);
    z.col(0) = data.y;
    for (std::size_t k = 0; k < out.support.size(); ++k) {
        z.col(static_cast<Index>(k) + 1) = data.x.col(out.support[k]);
    }
    z = standardize_columns(std::move(z));

    std::vector<int> raw;
    for (int attempt = 0; attempt < config.kmeans_restarts && raw.empty(); ++attempt) {
        out.attempts = attempt + 1;
        try {
            raw = cluster_once(z, config, attempt);
        } catch (const NumericalFailure&) {
            raw.clear();
        }
    }
    if (raw.empty()) {
        // Split at the median pooled-lasso residual.
        out.fallback_used = true;
        const Vector resid = data.y - data.x * pooled.beta;
        std::vector<double> sorted(resid.data(), resid.data() + n);
        std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
        const double median = sorted[static_cast<std::size_t>(n / 2)];
        raw.resize(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            raw[static_cast<std::size_t>(i)] = resid(i) > median ? 1 : 0;
        }
    }

    const auto count1 = std::count(raw.begin(), raw.end(), 1);
    const auto count0 = static_cast<long>(n) - count1;
    const int major = count1 > count0 ? 1 : 0;
    out.labels.resize(static_cast<std::size_t>(n));
    std::vector<Index> rows1, rows2;
    for (Index i = 0; i < n; ++i) {
        const bool in_major = raw[static_cast<std::size_t>(i)] == major;
        out.labels[static_cast<std::size_t>(i)] = in_major ? 1 : 2;
        (in_major ? rows1 : rows2).push_back(i);
    }

    auto fit_cluster = [&](const std::vector<Index>& rows) {
        const MlrDataset sub = data.subset(rows);
        const double lam = config.enet_lambda.value_or(
            std::sqrt(2.0 * log_p / static_cast<double>(sub.n())));
        const Vector w = Vector::Ones(sub.n());
        LassoSolution sol =
            solve_weighted_lasso(PenalizedLsProblem{sub.x, sub.y, w, lam, config.enet_mix, std::nullopt}, opts);
        const double rss = (sub.y - sub.x * sol.beta).squaredNorm();
        return std::pair{std::move(sol.beta), rss};
    };
    auto [beta1, rss1] = fit_cluster(rows1);
    auto [beta2, rss2] = fit_cluster(rows2);

    out.theta.omega = std::clamp(static_cast<double>(rows1.size()) / static_cast<double>(n), 0.5, 0.999);
    out.theta.beta1 = std::move(beta1);
    out.theta.beta2 = std::move(beta2);
    out.theta.sigma2 = std::max((rss1 + rss2) / static_cast<double>(n), 1e-6);
    return out;
}

ThetaParams initialize(const MlrDataset& data, const InitConfig& config) {
    return initialize_detailed(data, config).theta;
}

}  // namespace mlr
