#pragma once

#include "mlr/debias.hpp"
#include "mlr/em.hpp"
#include "mlr/init.hpp"
#include "mlr/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

namespace mlr {

enum class SigmaModel { identity, sigma_m };

struct SimDesign {
    Index n = 400;
    Index p = 600;
    Index s = 10;
    double rho = 0.45;
    double omega_star = 0.3;
    double sigma2 = 1.0;
    SigmaModel sigma_model = SigmaModel::sigma_m;
    int reps = 100;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TruthBundle {
    Vector beta1_star;
    Vector beta2_star;
    std::vector<int> labels;  ///< latent component, 1 or 2
    MlrDataset dataset;
};

/// Block-diagonal covariance with 10 identical Toeplitz blocks; within a block the entry
/// at lag d is max(0, 0.5 - 0.1 d) off the diagonal and 1 on it.
Matrix make_sigma_m(Index p);

/// Independent random stream for (seed, replicate, purpose).
std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t rep_index, std::uint64_t purpose);

TruthBundle generate_mlr(const SimDesign& design, int rep_index);

/// Label-swap minimized sum of the two l2 errors.
double emse(const Vector& est1, const Vector& est2, const Vector& truth1, const Vector& truth2);

struct PipelineConfig {
    EmConfig em;
    InitConfig init;  ///< seed is replaced per replicate
    SurrogateOptions surrogate;
    unsigned threads = 1;
};

/// Everything one replicate produces up to the EM fit.
struct ReplicateFit {
    TruthBundle truth;
    ThetaParams init;
    EmFit fit;
};

ReplicateFit fit_replicate(const SimDesign& design, int rep_index, const PipelineConfig& config);

struct EstimationRow {
    SimDesign design;
    int reps_ok = 0;
    int reps_failed = 0;
    double emse_init = 0.0;
    double emse_em = 0.0;
    double emse_zero = 0.0;  ///< error of the all-zero estimator
    std::vector<std::string> failures;
};

std::vector<EstimationRow> run_estimation_experiment(const std::vector<SimDesign>& grid, const PipelineConfig& config);

struct TestingRow {
    SimDesign design;
    double alpha = 0.1;
    int reps_ok = 0;
    int reps_failed = 0;
    double fdr = 0.0;
    double power = 0.0;
    double fdr_by = 0.0;
    double power_by = 0.0;
    double mean_rejections = 0.0;
    double threshold_rate = 0.0;  ///< fraction of replicates where the threshold existed
    std::vector<std::string> failures;
};

/// Empirical FDP and power of the max-statistic procedure and of B-Y, from the truth.
struct Discoveries {
    double fdp = 0.0;
    double power = 0.0;
};
Discoveries score_rejections(const std::vector<Index>& rejected, const Vector& beta1_star, const Vector& beta2_star);

std::vector<TestingRow> run_testing_experiment(const std::vector<SimDesign>& grid, double alpha,
                                               const PipelineConfig& config);

void write_estimation_table(std::ostream& os, const std::vector<EstimationRow>& rows);
void write_testing_table(std::ostream& os, const std::vector<TestingRow>& rows);

std::string to_string(SigmaModel model);
SigmaModel parse_sigma_model(const std::string& text);

}  // namespace mlr
