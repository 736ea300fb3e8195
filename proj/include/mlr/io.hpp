#pragma once

#include "mlr/em.hpp"
#include "mlr/model.hpp"
#include "mlr/network.hpp"
#include "mlr/simulation.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace mlr {

/// A delimited text table: one header row, then data rows of equal width. Cells are kept
/// as text together with their 1-based line numbers for diagnostics.
struct TextTable {
    std::string source;  ///< file name used in error messages
    char delimiter = ',';
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;

    /// Column position of `name`, or -1.
    long column(const std::string& name) const;
    /// Cell parsed as a finite double; throws InvalidInput naming line and column.
    double number(std::size_t row, std::size_t col) const;
};

/// Delimiter is a tab when the header line contains one, else a comma. Blank lines are
/// skipped; '\r' before the newline is ignored.
TextTable parse_table(std::istream& in, const std::string& source);
TextTable read_table(const std::filesystem::path& path);

struct NamedDataset {
    MlrDataset data;
    std::vector<std::string> covariates;
};

/// Response column `y`, every other column a covariate in file order.
NamedDataset dataset_from_table(const TextTable& table);
NamedDataset read_dataset(const std::filesystem::path& path);
void write_dataset(std::ostream& os, const MlrDataset& data, const std::vector<std::string>& covariates = {});

ExpressionMatrix expression_from_table(const TextTable& table);
ExpressionMatrix read_expression(const std::filesystem::path& path);

/// Grid rows for the simulation driver. Required columns: n, p, s, rho. Optional:
/// omega_star, sigma2, sigma_model, reps, seed (defaults from `defaults`).
std::vector<SimDesign> grid_from_table(const TextTable& table, const SimDesign& defaults);

nlohmann::json fit_to_json(const EmFit& fit, const std::vector<std::string>& covariates);
EmFit fit_from_json(const nlohmann::json& doc);
void save_fit(const std::filesystem::path& path, const EmFit& fit, const std::vector<std::string>& covariates);
EmFit load_fit(const std::filesystem::path& path);

/// 64-bit FNV-1a of the file bytes, as 16 lowercase hex digits.
std::string fnv1a_file(const std::filesystem::path& path);
std::string fnv1a_hex(std::string_view bytes);

struct RunManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string version = MLR_VERSION;
    std::vector<std::pair<std::string, std::string>> inputs;   ///< (path, digest)
    std::vector<std::pair<std::string, double>> timings;       ///< (stage, seconds)
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;
    int exit_code = 0;
    std::string message;
    std::string started_utc;
    double wall_seconds = 0.0;

    void add_input(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

/// Wall-clock stopwatch for manifest timings.
class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

std::string utc_now();

}  // namespace mlr
