#include "mlr/network.hpp"

#include "mlr/errors.hpp"
#include "mlr/inference.hpp"
#include "mlr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <utility>

namespace mlr {

namespace {

struct NodeResult {
    NodeDiagnostic diag;
    std::vector<std::pair<Index, double>> rejected;  ///< (full column index, weight)
};

std::uint64_t node_seed(std::uint64_t seed, Index node, std::uint64_t purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(node), static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq)();
}

NodeResult fit_node(const Matrix& z, Index k, const NetworkConfig& config) {
    const Index d = z.cols();
    NodeResult out;
    out.diag.node = k;
    MlrDataset data;
    data.y = z.col(k);
    data.x.resize(z.rows(), d - 1);
    std::vector<Index> column_of(static_cast<std::size_t>(d - 1));
    for (Index j = 0, c = 0; j < d; ++j) {
        if (j == k) {
            continue;
        }
        data.x.col(c) = z.col(j);
        column_of[static_cast<std::size_t>(c)] = j;
        ++c;
    }
    InitConfig init_config = config.init;
    init_config.seed = node_seed(config.seed, k, 1);
    const auto init = initialize(data, init_config);
    const auto fit = em_fit(data, init, config.em, node_seed(config.seed, k, 2));
    const auto debiased = debias(data, fit, config.surrogate);
    const auto outcome = multiple_test(debiased, config.alpha);
    for (Index c : outcome.rejected) {
        const double weight = std::abs(debiased.beta1_u(c) - debiased.beta2_u(c));
        out.rejected.emplace_back(column_of[static_cast<std::size_t>(c)], weight);
    }
    out.diag.ok = true;
    out.diag.t_hat = outcome.threshold.t_hat;
    out.diag.threshold_existed = outcome.threshold.threshold_existed;
    out.diag.rejections = static_cast<Index>(outcome.rejected.size());
    out.diag.omega_hat = fit.theta.omega;
    out.diag.sigma2_hat = fit.theta.sigma2;
    return out;
}

}  // namespace

void ExpressionMatrix::validate() const {
    if (values.cols() < 3) {
        throw InvalidInput("expression matrix needs at least 3 markers");
    }
    if (static_cast<Index>(marker_names.size()) != values.cols()) {
        throw InvalidInput("marker name count " + std::to_string(marker_names.size()) +
                           " does not match column count " + std::to_string(values.cols()));
    }
    if (!values.allFinite()) {
        throw InvalidInput("expression matrix contains non-finite entries");
    }
}

bool DependenceGraph::has_edge(Index a, Index b) const {
    return find_edge(a, b) != nullptr;
}

const Edge* DependenceGraph::find_edge(Index a, Index b) const {
    const Index u = std::min(a, b);
    const Index v = std::max(a, b);
    for (const auto& e : edges) {
        if (e.u == u && e.v == v) {
            return &e;
        }
    }
    return nullptr;
}

Matrix standardize_columns(const Matrix& values) {
    const Index n = values.rows();
    if (n < 2) {
        throw InvalidInput("standardizing needs at least 2 rows");
    }
    Matrix out = values;
    for (Index j = 0; j < out.cols(); ++j) {
        out.col(j).array() -= out.col(j).mean();
        const double sd = std::sqrt(out.col(j).squaredNorm() / static_cast<double>(n - 1));
        if (!(sd > 0.0)) {
            throw InvalidInput("column " + std::to_string(j) + " is constant");
        }
        out.col(j) /= sd;
    }
    return out;
}

DependenceGraph nodewise_network(const ExpressionMatrix& data, const NetworkConfig& config) {
    data.validate();
    config.em.validate();
    config.init.validate();
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
        throw InvalidInput("alpha must lie in (0, 1)");
    }
    const Index d = data.markers();
    DependenceGraph graph;
    graph.nodes = data.marker_names;
    if (data.cells() < 20 * d) {
        graph.warnings.push_back("only " + std::to_string(data.cells()) + " cells for " + std::to_string(d) +
                                 " markers; at least 20 per marker is recommended");
    }
    const Matrix z = standardize_columns(data.values);

    std::vector<NodeResult> results(static_cast<std::size_t>(d));
    parallel_for(static_cast<std::size_t>(d), config.threads, [&](std::size_t k) {
        try {
            results[k] = fit_node(z, static_cast<Index>(k), config);
        } catch (const std::exception& e) {
            results[k] = NodeResult{};
            results[k].diag.node = static_cast<Index>(k);
            results[k].diag.error = e.what();
        }
    });

    std::map<std::pair<Index, Index>, Edge> merged;
    for (const auto& result : results) {
        graph.diagnostics.push_back(result.diag);
        for (const auto& [j, weight] : result.rejected) {
            const Index u = std::min(result.diag.node, j);
            const Index v = std::max(result.diag.node, j);
            auto [it, inserted] = merged.try_emplace({u, v});
            Edge& e = it->second;
            if (inserted) {
                e.u = u;
                e.v = v;
                e.weight = weight;
            } else {
                e.weight = std::max(e.weight, weight);
            }
            e.sources.push_back(result.diag.node);
        }
    }
    for (auto& [key, edge] : merged) {
        graph.edges.push_back(std::move(edge));
    }
    return graph;
}

}  // namespace mlr
