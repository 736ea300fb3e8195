#pragma once

#include "mlr/gmm.hpp"
#include "mlr/model.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mlr {

enum class ClusterMethod { gmm };

struct InitConfig {
    std::optional<double> screen_lambda;  ///< pooled-lasso penalty; empty = sqrt(2 log p / n)
    ClusterMethod cluster_method = ClusterMethod::gmm;
    double enet_mix = 0.5;
    std::optional<double> enet_lambda;    ///< per-cluster penalty; empty = sqrt(2 log p / n_cluster)
    int kmeans_restarts = 10;
    std::uint64_t seed = 0;
    GmmOptions gmm;
    double solver_tol = 1e-7;
    int solver_max_iter = 10000;

    void validate() const;
};

struct InitResult {
    ThetaParams theta;
    std::vector<Index> support;  ///< covariates kept by the pooled lasso
    std::vector<int> labels;     ///< 1 = larger cluster (component 1), 2 = the other
    double screen_lambda = 0.0;
    int attempts = 0;            ///< clustering attempts used
    bool fallback_used = false;  ///< median-residual split replaced the clustering
};

/// Starting values for EM: pooled-lasso screening, a two-component Gaussian mixture on
/// (y, x_S), then an elastic-net fit inside each cluster. The larger cluster becomes
/// component 1.
InitResult initialize_detailed(const MlrDataset& data, const InitConfig& config);

ThetaParams initialize(const MlrDataset& data, const InitConfig& config);

}  // namespace mlr
