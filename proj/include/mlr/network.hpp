#pragma once

#include "mlr/debias.hpp"
#include "mlr/em.hpp"
#include "mlr/init.hpp"
#include "mlr/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mlr {

/// Cells in rows, markers in columns.
struct ExpressionMatrix {
    Matrix values;
    std::vector<std::string> marker_names;

    Index cells() const { return values.rows(); }
    Index markers() const { return values.cols(); }
    /// Throws InvalidInput unless d >= 3, names match columns and entries are finite.
    void validate() const;
};

struct Edge {
    Index u = 0;  ///< u < v
    Index v = 0;
    double weight = 0.0;          ///< |beta1_j^u - beta2_j^u| from the rejecting regression, max over both
    std::vector<Index> sources;   ///< target nodes whose regression rejected this edge
};

struct NodeDiagnostic {
    Index node = 0;
    bool ok = false;
    std::string error;
    double t_hat = 0.0;
    bool threshold_existed = false;
    Index rejections = 0;
    double omega_hat = 0.0;
    double sigma2_hat = 0.0;
};

struct DependenceGraph {
    std::vector<std::string> nodes;
    std::vector<Edge> edges;  ///< sorted by (u, v)
    std::vector<NodeDiagnostic> diagnostics;
    std::vector<std::string> warnings;

    bool has_edge(Index a, Index b) const;
    const Edge* find_edge(Index a, Index b) const;
};

struct NetworkConfig {
    EmConfig em;
    InitConfig init;  ///< seed is replaced per node
    SurrogateOptions surrogate;
    double alpha = 0.1;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

/// Columns centred and scaled to unit sample variance. Constant columns are rejected.
Matrix standardize_columns(const Matrix& values);

/// Regresses each marker on all others with the mixture pipeline and joins the
/// per-node rejections into an undirected graph with the OR rule.
DependenceGraph nodewise_network(const ExpressionMatrix& data, const NetworkConfig& config);

}  // namespace mlr
