#include "mlr/debias.hpp"

#include "mlr/errors.hpp"
#include "mlr/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mlr {

namespace {

constexpr double kMinWeight = 0.001;

// Euclidean projection onto {m : ||m||_1 <= radius}.
Vector project_l1_ball(const Vector& v, double radius) {
    if (v.lpNorm<1>() <= radius) {
        return v;
    }
    std::vector<double> mags(v.size());
    for (Index k = 0; k < v.size(); ++k) {
        mags[static_cast<std::size_t>(k)] = std::abs(v(k));
    }
    std::sort(mags.begin(), mags.end(), std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < mags.size(); ++k) {
        cumulative += mags[k];
        const double candidate = (cumulative - radius) / static_cast<double>(k + 1);
        if (mags[k] - candidate > 0.0) {
            theta = candidate;
        }
    }
    Vector out(v.size());
    for (Index k = 0; k < v.size(); ++k) {
        out(k) = soft_threshold(v(k), theta);
    }
    return out;
}

double log_add_exp(double a, double b) {
    const double hi = std::max(a, b);
    if (hi == -std::numeric_limits<double>::infinity()) {
        return hi;
    }
    return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// The program min m'Sm s.t. ||Sm - e_j||_inf <= mu has the Lagrangian dual
//   min_v  v'Sv / 2 - v_j + mu ||v||_1,
// whose minimizer is itself primal optimal. The l1 budget is handled by ADMM when the
// dual solution exceeds it.
class SurrogateProgram {
public:
    SurrogateProgram(const Matrix& sigma, const QpOptions& options) : sigma_(sigma), options_(options) {}

    SurrogateRow solve(Index j, double mu, double budget) {
        double mu_current = mu;
        for (int attempt = 0; attempt <= options_.max_doublings; ++attempt) {
            if (auto m = solve_fixed(j, mu_current, budget)) {
                SurrogateRow row;
                row.m_tilde = std::move(*m);
                row.mu_used = mu_current;
                row.feasible_first_try = attempt == 0;
                row.box_residual = box_residual(row.m_tilde, j);
                row.l1_norm = row.m_tilde.lpNorm<1>();
                row.objective = row.m_tilde.dot(sigma_ * row.m_tilde);
                return row;
            }
            mu_current *= 2.0;
        }
        throw DegenerateDesign("precision surrogate infeasible for coordinate " + std::to_string(j), static_cast<long>(j));
    }

private:
    double box_residual(const Vector& m, Index j) const {
        Vector r = sigma_ * m;
        r(j) -= 1.0;
        return r.lpNorm<Eigen::Infinity>();
    }

    bool admissible(const Vector& m, Index j, double mu, double budget) const {
        return m.allFinite() && box_residual(m, j) <= mu + options_.feasibility_tol &&
               m.lpNorm<1>() <= budget + options_.feasibility_tol;
    }

    std::optional<Vector> solve_fixed(Index j, double mu, double budget) {
        bool unbounded = false;
        std::optional<Vector> dual = solve_dual(j, mu, budget, unbounded);
        if (unbounded) {
            return std::nullopt;
        }
        if (dual && admissible(*dual, j, mu, budget)) {
            return dual;
        }
        Vector m = solve_admm(j, mu, budget);
        if (admissible(m, j, mu, budget)) {
            return m;
        }
        return std::nullopt;
    }

    std::optional<Vector> solve_dual(Index j, double mu, double budget, bool& unbounded) const {
        const Index p = sigma_.rows();
        const double divergence_cap = 1e6 * std::max(1.0, budget);
        Vector v = Vector::Zero(p);
        Vector s = Vector::Zero(p);  // sigma * v

        auto update = [&](Index k) -> double {
            const double d = sigma_(k, k);
            const double e = k == j ? 1.0 : 0.0;
            if (d <= 0.0) {
                if (std::abs(e) > mu) {
                    unbounded = true;
                }
                return 0.0;
            }
            const double fresh = soft_threshold(e - (s(k) - d * v(k)), mu) / d;
            const double delta = fresh - v(k);
            if (delta != 0.0) {
                v(k) = fresh;
                s.noalias() += delta * sigma_.col(k);
            }
            return std::abs(delta) * d;
        };

        int sweeps = 0;
        while (sweeps < options_.max_sweeps) {
            double worst = 0.0;
            for (Index k = 0; k < p; ++k) {
                const double g = s(k) - (k == j ? 1.0 : 0.0);
                const double gap = v(k) == 0.0 ? std::max(0.0, std::abs(g) - mu)
                                               : std::abs(g + (v(k) > 0.0 ? mu : -mu));
                worst = std::max(worst, gap);
            }
            if (worst <= options_.tol) {
                return v;
            }
            for (Index k = 0; k < p; ++k) {
                update(k);
            }
            ++sweeps;
            if (unbounded || v.lpNorm<1>() > divergence_cap) {
                unbounded = true;
                return std::nullopt;
            }
            while (sweeps < options_.max_sweeps) {
                double largest = 0.0;
                for (Index k = 0; k < p; ++k) {
                    if (v(k) != 0.0) {
                        largest = std::max(largest, update(k));
                    }
                }
                ++sweeps;
                if (largest <= 0.1 * options_.tol) {
                    break;
                }
            }
            if (v.lpNorm<1>() > divergence_cap) {
                unbounded = true;
                return std::nullopt;
            }
        }
        return std::nullopt;
    }

    // Scaled ADMM on  min m'Sm + I{||w||_1 <= B} + I{||z - e_j||_inf <= mu}
    // subject to m = w, S m = z.
    Vector solve_admm(Index j, double mu, double budget) {
        if (!eigen_) {
            eigen_.emplace(sigma_);
        }
        const Matrix& q = eigen_->eigenvectors();
        const Vector lam = eigen_->eigenvalues().cwiseMax(0.0);
        const Index p = sigma_.rows();
        double rho = 1.0;
        auto factor = [&] { return Vector((2.0 * lam.array() + rho + rho * lam.array().square()).inverse().matrix()); };
        Vector inv_diag = factor();

        Vector lower = Vector::Constant(p, -mu);
        Vector upper = Vector::Constant(p, mu);
        lower(j) += 1.0;
        upper(j) += 1.0;

        Vector w = Vector::Zero(p);
        Vector z = Vector::Zero(p);
        Vector u = Vector::Zero(p);
        Vector t = Vector::Zero(p);
        Vector m = Vector::Zero(p);
        for (int iter = 0; iter < options_.admm_max_iter; ++iter) {
            const Vector rhs = rho * (w - u) + rho * (sigma_ * (z - t));
            m = q * (inv_diag.cwiseProduct(q.transpose() * rhs));
            const Vector sm = sigma_ * m;
            const Vector w_next = project_l1_ball(m + u, budget);
            const Vector z_next = (sm + t).cwiseMax(lower).cwiseMin(upper);
            u += m - w_next;
            t += sm - z_next;
            const double primal = std::max((m - w_next).norm(), (sm - z_next).norm());
            const double dual = rho * std::max((w_next - w).norm(), (z_next - z).norm());
            w = w_next;
            z = z_next;
            if (primal <= options_.admm_tol && dual <= options_.admm_tol) {
                break;
            }
            // residual balancing; the scaled duals move inversely with rho
            if (iter % 10 == 9 && (primal > 10.0 * dual || dual > 10.0 * primal)) {
                const double scale = primal > dual ? 2.0 : 0.5;
                rho *= scale;
                u /= scale;
                t /= scale;
                inv_diag = factor();
            }
        }
        return w;
    }

    const Matrix& sigma_;
    QpOptions options_;
    std::optional<Eigen::SelfAdjointEigenSolver<Matrix>> eigen_;
};

void check_fit_matches(const MlrDataset& data_working, const EmFit& emfit) {
    data_working.validate();
    if (emfit.gamma.gamma.size() != data_working.n()) {
        throw InvalidInput("fit responsibilities do not match the working sample");
    }
    if (emfit.theta.beta1.size() != data_working.p()) {
        throw InvalidInput("fit coefficients do not match the working sample");
    }
}

}  // namespace

double auto_mu(Index n, Index p) {
    return std::sqrt(std::log(static_cast<double>(std::max<Index>(p, 2))) / static_cast<double>(n));
}

double auto_budget(Index n) {
    return 4.0 * std::sqrt(std::log(static_cast<double>(std::max<Index>(n, 3))));
}

SurrogateRow solve_m(const Matrix& sigma_tilde, Index j, double mu, double budget, const QpOptions& options) {
    if (sigma_tilde.rows() != sigma_tilde.cols() || sigma_tilde.rows() < 1) {
        throw InvalidInput("surrogate program needs a square matrix");
    }
    if (j < 0 || j >= sigma_tilde.rows()) {
        throw InvalidInput("coordinate index out of range");
    }
    if (!(mu > 0.0) || !(budget > 0.0)) {
        throw InvalidInput("mu and budget must be positive");
    }
    SurrogateProgram program(sigma_tilde, options);
    return program.solve(j, mu, budget);
}

std::vector<SurrogateRow> build_surrogates(const MlrDataset& data_working, const EmFit& emfit,
                                           const SurrogateOptions& options) {
    check_fit_matches(data_working, emfit);
    const Index n = data_working.n();
    const Index p = data_working.p();
    const double omega_hat = emfit.gamma.mean();
    if (!(omega_hat > 0.0 && omega_hat <= 1.0)) {
        throw InvalidInput("mean responsibility must be positive");
    }
    const double mu = options.mu.value_or(auto_mu(n, p));
    const double budget = options.budget.value_or(auto_budget(n));

    Matrix sigma = Matrix::Zero(p, p);
    sigma.selfadjointView<Eigen::Lower>().rankUpdate(data_working.x.transpose(), 1.0 / static_cast<double>(n));
    sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();

    SurrogateProgram program(sigma, options.qp);
    std::vector<SurrogateRow> rows;
    rows.reserve(static_cast<std::size_t>(p));
    for (Index j = 0; j < p; ++j) {
        SurrogateRow row = program.solve(j, mu, budget);
        row.m = row.m_tilde / std::max(omega_hat, kMinWeight);
        row.m2 = row.m_tilde / std::max(1.0 - omega_hat, kMinWeight);
        rows.push_back(std::move(row));
    }
    return rows;
}

VarianceBlocks variance_blocks(const MlrDataset& data_working, const EmFit& emfit, bool with_matrices) {
    check_fit_matches(data_working, emfit);
    const auto& x = data_working.x;
    const auto& y = data_working.y;
    const auto& theta = emfit.theta;
    const Vector& g = emfit.gamma.gamma;
    const Index n = data_working.n();

    VarianceBlocks out;
    out.n_t = n;
    out.omega_hat = g.mean();
    const Vector fit1 = x * theta.beta1;
    const Vector fit2 = x * theta.beta2;
    const double log_w1 = std::log(out.omega_hat);
    const double log_w2 = std::log1p(-out.omega_hat);
    const double log_s2 = std::log(theta.sigma2);

    out.log_eta.resize(n);
    out.eta.resize(n);
    out.w11.resize(n);
    out.w22.resize(n);
    out.w12.resize(n);
    for (Index i = 0; i < n; ++i) {
        const double a = (2.0 * y(i) - fit1(i) - fit2(i)) * (fit2(i) - fit1(i)) / (2.0 * theta.sigma2);
        const double log_eta = log_s2 + log_add_exp(log_w1, log_w2 + a) + log_add_exp(log_w2, log_w1 - a);
        out.log_eta(i) = log_eta;
        out.eta(i) = std::exp(std::min(log_eta, 700.0));
        const double inv_eta = std::exp(-log_eta);
        const double r1 = y(i) - fit1(i);
        const double r2 = y(i) - fit2(i);
        out.w11(i) = g(i) + 2.0 * r1 * r1 * inv_eta;
        out.w22(i) = (1.0 - g(i)) + 2.0 * r2 * r2 * inv_eta;
        out.w12(i) = 2.0 * (fit1(i) - y(i)) * r2 * inv_eta;
    }

    if (with_matrices) {
        const double inv_n = 1.0 / static_cast<double>(n);
        auto gram = [&](const Vector& w) {
            Matrix out_m = x.transpose() * w.asDiagonal() * x * inv_n;
            return Matrix((out_m + out_m.transpose()) * 0.5);
        };
        out.t11 = gram(out.w11);
        out.t22 = gram(out.w22);
        out.t12 = gram(out.w12);
    }
    return out;
}

DebiasedFit debias_fit(const MlrDataset& data_working, const EmFit& emfit, std::vector<SurrogateRow> surrogates,
                       const VarianceBlocks& blocks) {
    check_fit_matches(data_working, emfit);
    const Index n = data_working.n();
    const Index p = data_working.p();
    if (static_cast<Index>(surrogates.size()) != p || blocks.w11.size() != n) {
        throw InvalidInput("surrogates or variance blocks do not match the working sample");
    }
    const auto& x = data_working.x;
    const Vector& g = emfit.gamma.gamma;
    const double inv_n = 1.0 / static_cast<double>(n);

    Matrix m1(p, p);
    Matrix m2(p, p);
    for (Index j = 0; j < p; ++j) {
        m1.col(j) = surrogates[static_cast<std::size_t>(j)].m;
        m2.col(j) = surrogates[static_cast<std::size_t>(j)].m2;
    }
    const Vector r1 = data_working.y - x * emfit.theta.beta1;
    const Vector r2 = data_working.y - x * emfit.theta.beta2;
    const Vector score1 = x.transpose() * g.cwiseProduct(r1) * inv_n;
    const Vector score2 = x.transpose() * (1.0 - g.array()).matrix().cwiseProduct(r2) * inv_n;

    DebiasedFit out;
    out.n_eff = n;
    out.beta1_u = emfit.theta.beta1 + m1.transpose() * score1;
    out.beta2_u = emfit.theta.beta2 + m2.transpose() * score2;

    // m_j' (X' diag(w) X / n) m_k = (1/n) sum_i w_i (x_i' m_j)(x_i' m_k)
    const Matrix a = x * m1;
    const Matrix b = x * m2;
    out.v1 = a.array().square().matrix().transpose() * blocks.w11 * inv_n;
    out.v2 = b.array().square().matrix().transpose() * blocks.w22 * inv_n;
    out.v_diff = out.v1 + out.v2 - 2.0 * (a.array() * b.array()).matrix().transpose() * blocks.w12 * inv_n;

    constexpr double kFloor = 1e-12;
    out.variance_floored.assign(static_cast<std::size_t>(p), false);
    for (Index j = 0; j < p; ++j) {
        for (Vector* v : {&out.v1, &out.v2, &out.v_diff}) {
            if (!((*v)(j) >= kFloor)) {
                (*v)(j) = kFloor;
                out.variance_floored[static_cast<std::size_t>(j)] = true;
            }
        }
    }
    out.rows = std::move(surrogates);
    return out;
}

DebiasedFit debias(const MlrDataset& data, const EmFit& emfit, const SurrogateOptions& options) {
    const MlrDataset work = working_data(data, emfit);
    std::vector<SurrogateRow> rows = build_surrogates(work, emfit, options);
    const VarianceBlocks blocks = variance_blocks(work, emfit, false);
    return debias_fit(work, emfit, std::move(rows), blocks);
}

}  // namespace mlr
