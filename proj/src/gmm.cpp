#include "mlr/gmm.hpp"

#include "mlr/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace mlr {

namespace {

double squared_distance(const Matrix& z, Index i, const Matrix& centers, Index c) {
    return (z.row(i) - centers.row(c)).squaredNorm();
}

}  // namespace

KMeansResult kmeans_pp(const Matrix& z, int k, std::mt19937_64& rng, int max_iter) {
    const Index n = z.rows();
    if (k < 1 || n < k) {
        throw InvalidInput("k-means needs 1 <= k <= n");
    }
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<Index> pick(0, n - 1);

    Matrix centers(k, z.cols());
    centers.row(0) = z.row(pick(rng));
    Vector nearest = Vector::Constant(n, std::numeric_limits<double>::infinity());
    for (int c = 1; c < k; ++c) {
        for (Index i = 0; i < n; ++i) {
            nearest(i) = std::min(nearest(i), squared_distance(z, i, centers, c - 1));
        }
        const double total = nearest.sum();
        Index chosen = pick(rng);
        if (total > 0.0) {
            double u = unif(rng) * total;
            for (Index i = 0; i < n; ++i) {
                u -= nearest(i);
                if (u <= 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.row(c) = z.row(chosen);
    }

    KMeansResult out;
    out.labels.assign(static_cast<std::size_t>(n), -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        out.inertia = 0.0;
        for (Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = squared_distance(z, i, centers, 0);
            for (int c = 1; c < k; ++c) {
                const double d = squared_distance(z, i, centers, c);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            out.inertia += best_d;
            if (out.labels[static_cast<std::size_t>(i)] != best) {
                out.labels[static_cast<std::size_t>(i)] = best;
                changed = true;
            }
        }
        if (!changed) {
            break;
        }
        Matrix sums = Matrix::Zero(k, z.cols());
        Vector counts = Vector::Zero(k);
        for (Index i = 0; i < n; ++i) {
            const int c = out.labels[static_cast<std::size_t>(i)];
            sums.row(c) += z.row(i);
            counts(c) += 1.0;
        }
        for (int c = 0; c < k; ++c) {
            if (counts(c) > 0.0) {
                centers.row(c) = sums.row(c) / counts(c);
            }
        }
    }
    out.centers = std::move(centers);
    return out;
}

GmmResult fit_gmm(const Matrix& z, const std::vector<int>& start_labels, int k, const GmmOptions& options) {
    const Index n = z.rows();
    const Index d = z.cols();
    if (static_cast<Index>(start_labels.size()) != n) {
        throw InvalidInput("starting labels do not match the data");
    }

    Matrix resp = Matrix::Zero(n, k);
    for (Index i = 0; i < n; ++i) {
        resp(i, start_labels[static_cast<std::size_t>(i)]) = 1.0;
    }

    GmmResult out;
    out.weights.resize(k);
    out.means.resize(k, d);
    out.covariances.assign(static_cast<std::size_t>(k), Matrix::Identity(d, d));
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    double previous = -std::numeric_limits<double>::infinity();
    Matrix log_prob(n, k);

    for (int iter = 0; iter < options.max_iter; ++iter) {
        // M-step from the current soft assignment.
        for (int c = 0; c < k; ++c) {
            const double nk = resp.col(c).sum();
            out.weights(c) = nk / static_cast<double>(n);
            if (nk <= 1e-12) {
                continue;
            }
            out.means.row(c) = (resp.col(c).transpose() * z) / nk;
            const Matrix centered = z.rowwise() - out.means.row(c);
            Matrix cov = (centered.array().colwise() * resp.col(c).array()).matrix().transpose() * centered / nk;
            cov.diagonal().array() += options.reg_covar;
            out.covariances[static_cast<std::size_t>(c)] = std::move(cov);
        }

        // E-step.
        for (int c = 0; c < k; ++c) {
            if (out.weights(c) <= 0.0) {
                log_prob.col(c).setConstant(-std::numeric_limits<double>::infinity());
                continue;
            }
            Eigen::LLT<Matrix> llt(out.covariances[static_cast<std::size_t>(c)]);
            if (llt.info() != Eigen::Success) {
                throw NumericalFailure("mixture covariance is not positive definite");
            }
            const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
            Matrix centered = (z.rowwise() - out.means.row(c)).transpose();
            llt.matrixL().solveInPlace(centered);
            const Vector maha = centered.colwise().squaredNorm().transpose();
            log_prob.col(c) = (std::log(out.weights(c)) - 0.5 * (static_cast<double>(d) * log_2pi + log_det)) -
                              0.5 * maha.array();
        }
        double total = 0.0;
        for (Index i = 0; i < n; ++i) {
            const double hi = log_prob.row(i).maxCoeff();
            const double lse = hi + std::log((log_prob.row(i).array() - hi).exp().sum());
            total += lse;
            resp.row(i) = (log_prob.row(i).array() - lse).exp();
        }
        out.log_likelihood = total / static_cast<double>(n);
        out.iterations = iter + 1;
        if (out.log_likelihood - previous < options.tol) {
            break;
        }
        previous = out.log_likelihood;
    }

    out.labels.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        Index best = 0;
        resp.row(i).maxCoeff(&best);
        out.labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return out;
}

}  // namespace mlr
