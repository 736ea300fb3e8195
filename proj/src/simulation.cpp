#include "mlr/simulation.hpp"

#include "mlr/errors.hpp"
#include "mlr/inference.hpp"
#include "mlr/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mlr {

namespace {

constexpr std::uint64_t purpose_data = 0x64617461;
constexpr std::uint64_t purpose_init = 0x696e6974;
constexpr std::uint64_t purpose_em = 0x656d;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t rep_index, std::uint64_t purpose) {
    return stream_rng(seed, rep_index, purpose)();
}

Matrix sigma_m_block(Index b) {
    static constexpr double band[] = {0.4, 0.3, 0.2, 0.1};
    Matrix block = Matrix::Identity(b, b);
    for (Index d = 1; d <= 4 && d < b; ++d) {
        for (Index i = 0; i + d < b; ++i) {
            block(i, i + d) = band[d - 1];
            block(i + d, i) = band[d - 1];
        }
    }
    return block;
}

struct ReplicateOutcome {
    bool ok = false;
    std::string error;
    double emse_init = 0.0;
    double emse_em = 0.0;
    double emse_zero = 0.0;
    Discoveries proc;
    Discoveries by;
    double rejections = 0.0;
    bool threshold_existed = false;
};

struct Job {
    std::size_t cell;
    int rep;
};

std::vector<Job> flatten(const std::vector<SimDesign>& grid) {
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        grid[c].validate();
        for (int r = 0; r < grid[c].reps; ++r) {
            jobs.push_back({c, r});
        }
    }
    return jobs;
}

std::string failure_note(int rep, const std::string& what) {
    return "rep " + std::to_string(rep) + ": " + what;
}

}  // namespace

void SimDesign::validate() const {
    if (n < 1 || p < 2 || s < 0) {
        throw InvalidInput("design needs n >= 1, p >= 2 and s >= 0");
    }
    if (2 * s > p) {
        throw InvalidInput("design needs s <= p/2");
    }
    if (sigma_model == SigmaModel::sigma_m && p % 10 != 0) {
        throw InvalidInput("sigma_m design needs p divisible by 10");
    }
    if (!std::isfinite(rho)) {
        throw InvalidInput("rho must be finite");
    }
    if (!(omega_star > 0.0 && omega_star < 1.0)) {
        throw InvalidInput("omega_star must lie in (0, 1)");
    }
    if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
        throw InvalidInput("sigma2 must be positive");
    }
    if (reps < 0) {
        throw InvalidInput("reps must be nonnegative");
    }
}

Matrix make_sigma_m(Index p) {
    if (p < 10 || p % 10 != 0) {
        throw InvalidInput("make_sigma_m needs p divisible by 10");
    }
    const Index b = p / 10;
    const Matrix block = sigma_m_block(b);
    if (Eigen::LLT<Matrix>(block).info() != Eigen::Success) {
        throw NumericalFailure("sigma_m block is not positive definite");
    }
    Matrix out = Matrix::Zero(p, p);
    for (Index k = 0; k < 10; ++k) {
        out.block(k * b, k * b, b, b) = block;
    }
    return out;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t rep_index, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(rep_index), static_cast<std::uint32_t>(rep_index >> 32),
                      static_cast<std::uint32_t>(purpose),   static_cast<std::uint32_t>(purpose >> 32)};
    return std::mt19937_64(seq);
}

TruthBundle generate_mlr(const SimDesign& design, int rep_index) {
    design.validate();
    if (rep_index < 0) {
        throw InvalidInput("rep_index must be nonnegative");
    }
    const Index n = design.n;
    const Index p = design.p;
    TruthBundle out;
    out.beta1_star = Vector::Zero(p);
    out.beta2_star = Vector::Zero(p);
    out.beta1_star.head(design.s).setConstant(design.rho);
    out.beta2_star.segment(p / 2, design.s).setConstant(-design.rho);

    auto rng = stream_rng(design.seed, static_cast<std::uint64_t>(rep_index), purpose_data);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    Matrix z(n, p);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < p; ++j) {
            z(i, j) = normal(rng);
        }
    }
    if (design.sigma_model == SigmaModel::sigma_m) {
        const Index b = p / 10;
        const Matrix lower = Eigen::LLT<Matrix>(sigma_m_block(b)).matrixL();
        out.dataset.x.resize(n, p);
        for (Index k = 0; k < 10; ++k) {
            out.dataset.x.middleCols(k * b, b).noalias() = z.middleCols(k * b, b) * lower.transpose();
        }
    } else {
        out.dataset.x = std::move(z);
    }

    const double sd = std::sqrt(design.sigma2);
    out.labels.resize(static_cast<std::size_t>(n));
    out.dataset.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const int label = uniform(rng) < design.omega_star ? 1 : 2;
        out.labels[static_cast<std::size_t>(i)] = label;
        const Vector& beta = label == 1 ? out.beta1_star : out.beta2_star;
        out.dataset.y(i) = out.dataset.x.row(i).dot(beta) + sd * normal(rng);
    }
    return out;
}

double emse(const Vector& est1, const Vector& est2, const Vector& truth1, const Vector& truth2) {
    const Index p = est1.size();
    if (est2.size() != p || truth1.size() != p || truth2.size() != p) {
        throw InvalidInput("emse needs equal-length vectors");
    }
    const double direct = (est1 - truth1).norm() + (est2 - truth2).norm();
    const double swapped = (est1 - truth2).norm() + (est2 - truth1).norm();
    return std::min(direct, swapped);
}

ReplicateFit fit_replicate(const SimDesign& design, int rep_index, const PipelineConfig& config) {
    ReplicateFit out;
    out.truth = generate_mlr(design, rep_index);
    InitConfig init_config = config.init;
    init_config.seed = derive_seed(design.seed, static_cast<std::uint64_t>(rep_index), purpose_init);
    out.init = initialize(out.truth.dataset, init_config);
    out.fit = em_fit(out.truth.dataset, out.init, config.em,
                     derive_seed(design.seed, static_cast<std::uint64_t>(rep_index), purpose_em));
    return out;
}

Discoveries score_rejections(const std::vector<Index>& rejected, const Vector& beta1_star, const Vector& beta2_star) {
    const Index p = beta1_star.size();
    Index signals = 0;
    for (Index j = 0; j < p; ++j) {
        if (beta1_star(j) != 0.0 || beta2_star(j) != 0.0) {
            ++signals;
        }
    }
    Index false_hits = 0;
    Index true_hits = 0;
    for (Index j : rejected) {
        if (beta1_star(j) == 0.0 && beta2_star(j) == 0.0) {
            ++false_hits;
        } else {
            ++true_hits;
        }
    }
    Discoveries out;
    out.fdp = static_cast<double>(false_hits) / static_cast<double>(std::max<Index>(rejected.size(), 1));
    out.power = signals == 0 ? 0.0 : static_cast<double>(true_hits) / static_cast<double>(signals);
    return out;
}

std::vector<EstimationRow> run_estimation_experiment(const std::vector<SimDesign>& grid,
                                                     const PipelineConfig& config) {
    config.em.validate();
    config.init.validate();
    const auto jobs = flatten(grid);
    std::vector<ReplicateOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), config.threads, [&](std::size_t k) {
        const auto& design = grid[jobs[k].cell];
        auto& result = outcomes[k];
        try {
            const auto rep = fit_replicate(design, jobs[k].rep, config);
            const auto& t = rep.truth;
            result.emse_init = emse(rep.init.beta1, rep.init.beta2, t.beta1_star, t.beta2_star);
            result.emse_em = emse(rep.fit.theta.beta1, rep.fit.theta.beta2, t.beta1_star, t.beta2_star);
            const Vector zero = Vector::Zero(design.p);
            result.emse_zero = emse(zero, zero, t.beta1_star, t.beta2_star);
            result.ok = true;
        } catch (const std::exception& e) {
            result.error = e.what();
        }
    });

    std::vector<EstimationRow> rows(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        rows[c].design = grid[c];
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        auto& row = rows[jobs[k].cell];
        const auto& result = outcomes[k];
        if (!result.ok) {
            ++row.reps_failed;
            row.failures.push_back(failure_note(jobs[k].rep, result.error));
            continue;
        }
        ++row.reps_ok;
        row.emse_init += result.emse_init;
        row.emse_em += result.emse_em;
        row.emse_zero += result.emse_zero;
    }
    for (auto& row : rows) {
        const double count = row.reps_ok > 0 ? static_cast<double>(row.reps_ok) : std::nan("");
        row.emse_init /= count;
        row.emse_em /= count;
        row.emse_zero /= count;
    }
    return rows;
}

std::vector<TestingRow> run_testing_experiment(const std::vector<SimDesign>& grid, double alpha,
                                               const PipelineConfig& config) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidInput("alpha must lie in (0, 1)");
    }
    config.em.validate();
    config.init.validate();
    const auto jobs = flatten(grid);
    std::vector<ReplicateOutcome> outcomes(jobs.size());
    parallel_for(jobs.size(), config.threads, [&](std::size_t k) {
        const auto& design = grid[jobs[k].cell];
        auto& result = outcomes[k];
        try {
            const auto rep = fit_replicate(design, jobs[k].rep, config);
            const auto fit = debias(rep.truth.dataset, rep.fit, config.surrogate);
            const auto outcome = multiple_test(fit, alpha);
            result.proc = score_rejections(outcome.rejected, rep.truth.beta1_star, rep.truth.beta2_star);
            result.by = score_rejections(outcome.rejected_by, rep.truth.beta1_star, rep.truth.beta2_star);
            result.rejections = static_cast<double>(outcome.rejected.size());
            result.threshold_existed = outcome.threshold.threshold_existed;
            result.ok = true;
        } catch (const std::exception& e) {
            result.error = e.what();
        }
    });

    std::vector<TestingRow> rows(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        rows[c].design = grid[c];
        rows[c].alpha = alpha;
    }
    for (std::size_t k = 0; k < jobs.size(); ++k) {
        auto& row = rows[jobs[k].cell];
        const auto& result = outcomes[k];
        if (!result.ok) {
            ++row.reps_failed;
            row.failures.push_back(failure_note(jobs[k].rep, result.error));
            continue;
        }
        ++row.reps_ok;
        row.fdr += result.proc.fdp;
        row.power += result.proc.power;
        row.fdr_by += result.by.fdp;
        row.power_by += result.by.power;
        row.mean_rejections += result.rejections;
        row.threshold_rate += result.threshold_existed ? 1.0 : 0.0;
    }
    for (auto& row : rows) {
        const double count = row.reps_ok > 0 ? static_cast<double>(row.reps_ok) : std::nan("");
        row.fdr /= count;
        row.power /= count;
        row.fdr_by /= count;
        row.power_by /= count;
        row.mean_rejections /= count;
        row.threshold_rate /= count;
    }
    return rows;
}

namespace {

void write_design_fields(std::ostream& os, const SimDesign& d) {
    os << d.n << ',' << d.p << ',' << d.s << ',' << d.rho << ',' << d.omega_star << ',' << d.sigma2 << ','
       << to_string(d.sigma_model) << ',' << d.seed;
}

constexpr const char* design_header = "n,p,s,rho,omega_star,sigma2,sigma_model,seed";

}  // namespace

void write_estimation_table(std::ostream& os, const std::vector<EstimationRow>& rows) {
    std::ostringstream buf;
    buf << std::setprecision(10);
    buf << design_header << ",reps_ok,reps_failed,emse_init,emse_em,emse_zero\n";
    for (const auto& row : rows) {
        write_design_fields(buf, row.design);
        buf << ',' << row.reps_ok << ',' << row.reps_failed << ',' << row.emse_init << ',' << row.emse_em << ','
            << row.emse_zero << '\n';
    }
    os << buf.str();
}

void write_testing_table(std::ostream& os, const std::vector<TestingRow>& rows) {
    std::ostringstream buf;
    buf << std::setprecision(10);
    buf << design_header
        << ",alpha,reps_ok,reps_failed,fdr,power,fdr_by,power_by,mean_rejections,threshold_rate\n";
    for (const auto& row : rows) {
        write_design_fields(buf, row.design);
        buf << ',' << row.alpha << ',' << row.reps_ok << ',' << row.reps_failed << ',' << row.fdr << ','
            << row.power << ',' << row.fdr_by << ',' << row.power_by << ',' << row.mean_rejections << ','
            << row.threshold_rate << '\n';
    }
    os << buf.str();
}

std::string to_string(SigmaModel model) {
    return model == SigmaModel::identity ? "identity" : "sigma_m";
}

SigmaModel parse_sigma_model(const std::string& text) {
    if (text == "identity") {
        return SigmaModel::identity;
    }
    if (text == "sigma_m") {
        return SigmaModel::sigma_m;
    }
    throw InvalidInput("unknown sigma model '" + text + "' (expected identity or sigma_m)");
}

}  // namespace mlr
