#pragma once

#include "mlr/model.hpp"

#include <random>
#include <vector>

namespace mlr {

struct KMeansResult {
    std::vector<int> labels;
    Matrix centers;  ///< k x d
    double inertia = 0.0;
};

/// Lloyd's k-means from a k-means++ seeding.
KMeansResult kmeans_pp(const Matrix& z, int k, std::mt19937_64& rng, int max_iter = 100);

struct GmmOptions {
    int max_iter = 200;
    double tol = 1e-8;        ///< stop when the mean log-likelihood gains less than this
    double reg_covar = 1e-6;  ///< ridge added to each covariance diagonal
};

struct GmmResult {
    std::vector<int> labels;  ///< hard MAP assignment
    Vector weights;           ///< mixing proportions
    Matrix means;             ///< k x d
    std::vector<Matrix> covariances;
    double log_likelihood = 0.0;  ///< mean per observation
    int iterations = 0;
};

/// Full-covariance Gaussian mixture fitted by EM, started from hard labels.
GmmResult fit_gmm(const Matrix& z, const std::vector<int>& start_labels, int k, const GmmOptions& options = {});

}  // namespace mlr
