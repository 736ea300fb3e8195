#include "mlr/cli.hpp"

#include "mlr/debias.hpp"
#include "mlr/em.hpp"
#include "mlr/errors.hpp"
#include "mlr/inference.hpp"
#include "mlr/init.hpp"
#include "mlr/io.hpp"
#include "mlr/network.hpp"
#include "mlr/parallel.hpp"
#include "mlr/simulation.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace mlr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Raw option values as parsed; optional settings are tracked through their Option*.
struct Settings {
    std::string config_file;
    std::uint64_t seed = 0;
    double alpha = 0.0;
    unsigned threads = default_threads();
    std::string out_dir = ".";
    std::string mode = "emse";
    std::string data_file;
    std::string fit_file;
    std::string grid_file;
    int reps = 100;

    EmConfig em;
    double sigma2_known = 1.0;
    InitConfig init;
    double screen_lambda = 0.0;
    double enet_lambda = 0.0;
    double mu = 0.0;
    double budget = 0.0;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* alpha_opt = nullptr;
    CLI::Option* sigma2_known_opt = nullptr;
    CLI::Option* screen_lambda_opt = nullptr;
    CLI::Option* enet_lambda_opt = nullptr;
    CLI::Option* mu_opt = nullptr;
    CLI::Option* budget_opt = nullptr;
};

void add_model_options(CLI::App& app, Settings& s) {
    app.add_option("--t_max", s.em.t_max, "EM iterations")->capture_default_str();
    app.add_option("--kappa", s.em.kappa, "penalty decay factor")->capture_default_str();
    app.add_option("--c_lambda", s.em.c_lambda, "penalty floor constant")->capture_default_str();
    app.add_option("--lambda0", s.em.lambda0, "starting penalty")->capture_default_str();
    app.add_option("--split", s.em.split, "fresh sample block per EM iteration")->capture_default_str();
    app.add_option("--estimate_sigma", s.em.estimate_sigma, "update sigma2 in the M-step")->capture_default_str();
    s.sigma2_known_opt = app.add_option("--sigma2_known", s.sigma2_known, "fixed noise variance");
    app.add_option("--mix", s.em.mix, "M-step elastic-net mixing, 1 = lasso")->capture_default_str();
    app.add_option("--solver_tol", s.em.solver_tol, "coordinate-descent KKT tolerance")->capture_default_str();
    app.add_option("--solver_max_iter", s.em.solver_max_iter, "coordinate-descent sweep cap")
        ->capture_default_str();
    s.screen_lambda_opt = app.add_option("--screen_lambda", s.screen_lambda, "pooled-lasso screening penalty");
    app.add_option("--enet_mix", s.init.enet_mix, "initializer elastic-net mixing")->capture_default_str();
    s.enet_lambda_opt = app.add_option("--enet_lambda", s.enet_lambda, "initializer per-cluster penalty");
    app.add_option("--kmeans_restarts", s.init.kmeans_restarts, "clustering attempts")->capture_default_str();
    s.mu_opt = app.add_option("--mu", s.mu, "surrogate box tolerance");
    s.budget_opt = app.add_option("--budget", s.budget, "surrogate l1 budget");
}

void finalize_settings(Settings& s) {
    if (*s.sigma2_known_opt) {
        s.em.sigma2_known = s.sigma2_known;
        s.em.estimate_sigma = false;
    }
    if (*s.screen_lambda_opt) {
        s.init.screen_lambda = s.screen_lambda;
    }
    if (*s.enet_lambda_opt) {
        s.init.enet_lambda = s.enet_lambda;
    }
    s.init.solver_tol = s.em.solver_tol;
    s.init.solver_max_iter = s.em.solver_max_iter;
    s.em.validate();
    s.init.validate();
    if (s.threads == 0) {
        throw InvalidInput("--threads must be at least 1");
    }
}

SurrogateOptions surrogate_options(const Settings& s) {
    SurrogateOptions out;
    if (*s.mu_opt) {
        out.mu = s.mu;
    }
    if (*s.budget_opt) {
        out.budget = s.budget;
    }
    return out;
}

template <class T>
json optional_json(const std::optional<T>& v) {
    return v ? json(*v) : json(nullptr);
}

json config_snapshot(const Settings& s, const std::string& command) {
    json c;
    c["t_max"] = s.em.t_max;
    c["kappa"] = s.em.kappa;
    c["c_lambda"] = s.em.c_lambda;
    c["lambda0"] = s.em.lambda0;
    c["split"] = s.em.split;
    c["estimate_sigma"] = s.em.estimate_sigma;
    c["sigma2_known"] = optional_json(s.em.sigma2_known);
    c["mix"] = s.em.mix;
    c["solver_tol"] = s.em.solver_tol;
    c["solver_max_iter"] = s.em.solver_max_iter;
    c["screen_lambda"] = optional_json(s.init.screen_lambda);
    c["enet_mix"] = s.init.enet_mix;
    c["enet_lambda"] = optional_json(s.init.enet_lambda);
    c["kmeans_restarts"] = s.init.kmeans_restarts;
    c["mu"] = *s.mu_opt ? json(s.mu) : json(nullptr);
    c["budget"] = *s.budget_opt ? json(s.budget) : json(nullptr);
    c["alpha"] = *s.alpha_opt ? json(s.alpha) : json(nullptr);
    c["threads"] = s.threads;
    c["out_dir"] = s.out_dir;
    if (command == "simulate") {
        c["mode"] = s.mode;
        c["reps"] = s.reps;
    }
    return c;
}

void require_seed(const Settings& s, const std::string& command) {
    if (!*s.seed_opt) {
        throw InvalidInput("'" + command + "' draws random numbers and needs --seed");
    }
}

void require_file(const std::string& value, const char* flag) {
    if (value.empty()) {
        throw InvalidInput(std::string("missing ") + flag);
    }
}

std::ofstream open_output(const fs::path& path, RunManifest& manifest) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InvalidInput("cannot write '" + path.string() + "'");
    }
    manifest.outputs.push_back(path.string());
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string coordinate_name(const std::vector<std::string>& names, Index j) {
    return names.empty() ? "x" + std::to_string(j + 1) : names[static_cast<std::size_t>(j)];
}

void check_fit_matches(const EmFit& fit, const MlrDataset& data) {
    if (fit.theta.p() != data.p()) {
        throw InvalidInput("fit has " + std::to_string(fit.theta.p()) + " coordinates but the dataset has " +
                           std::to_string(data.p()) + " covariates");
    }
    if (fit.subset_indices.empty() && fit.gamma.gamma.size() != data.n()) {
        throw InvalidInput("fit responsibilities cover " + std::to_string(fit.gamma.gamma.size()) +
                           " rows but the dataset has " + std::to_string(data.n()));
    }
    for (const auto& block : fit.subset_indices) {
        for (Index i : block) {
            if (i < 0 || i >= data.n()) {
                throw InvalidInput("fit row index " + std::to_string(i) + " is outside the dataset");
            }
        }
    }
}

NamedDataset load_dataset(const Settings& s, RunManifest& manifest) {
    require_file(s.data_file, "--data");
    auto ds = read_dataset(s.data_file);
    manifest.add_input(s.data_file);
    ds.data.validate();
    return ds;
}

void command_fit(const Settings& s, RunManifest& manifest, std::ostream& out) {
    require_seed(s, "fit");
    StageTimer timer;
    const auto ds = load_dataset(s, manifest);
    manifest.timings.emplace_back("read", timer.seconds());

    StageTimer t_init;
    InitConfig init = s.init;
    init.seed = s.seed;
    const auto start = initialize_detailed(ds.data, init);
    if (start.fallback_used) {
        manifest.warnings.push_back("clustering failed; the median-residual split supplied the start");
    }
    manifest.timings.emplace_back("initialize", t_init.seconds());

    StageTimer t_em;
    const auto fit = em_fit(ds.data, start.theta, s.em, s.seed);
    manifest.timings.emplace_back("em", t_em.seconds());
    if (fit.omega_clamped) {
        manifest.warnings.push_back("mixing weight was clamped during EM");
    }
    if (fit.solver_failures > 0) {
        manifest.warnings.push_back(std::to_string(fit.solver_failures) + " M-step solves hit the sweep cap");
    }

    const fs::path dir = s.out_dir;
    save_fit(dir / "fit.json", fit, ds.covariates);
    manifest.outputs.push_back((dir / "fit.json").string());

    auto coef = open_output(dir / "fit_coefficients.csv", manifest);
    coef << "coordinate,name,beta1,beta2\n";
    for (Index j = 0; j < ds.data.p(); ++j) {
        coef << j + 1 << ',' << coordinate_name(ds.covariates, j) << ',' << fmt(fit.theta.beta1(j)) << ','
             << fmt(fit.theta.beta2(j)) << '\n';
    }
    auto path = open_output(dir / "fit_lambda_path.csv", manifest);
    path << "iteration,lambda\n";
    for (std::size_t t = 0; t < fit.lambda_path.size(); ++t) {
        path << t << ',' << fmt(fit.lambda_path[t]) << '\n';
    }
    out << "omega " << fmt(fit.theta.omega) << "\nsigma2 " << fmt(fit.theta.sigma2) << '\n';
}

struct LoadedFit {
    NamedDataset ds;
    EmFit fit;
    std::vector<std::string> names;
};

LoadedFit load_fit_and_data(const Settings& s, RunManifest& manifest) {
    LoadedFit out;
    out.ds = load_dataset(s, manifest);
    require_file(s.fit_file, "--fit");
    out.fit = load_fit(s.fit_file);
    manifest.add_input(s.fit_file);
    check_fit_matches(out.fit, out.ds.data);
    out.names = out.ds.covariates;
    return out;
}

void write_interval(std::ostream& os, const Interval& iv, double v, Index n_eff) {
    os << ',' << fmt(iv.center) << ',' << fmt(std::sqrt(v / static_cast<double>(n_eff))) << ',' << fmt(iv.lower)
       << ',' << fmt(iv.upper);
}

void command_infer(const Settings& s, RunManifest& manifest, std::ostream& out) {
    const double alpha = *s.alpha_opt ? s.alpha : 0.05;
    StageTimer timer;
    const auto loaded = load_fit_and_data(s, manifest);
    manifest.timings.emplace_back("read", timer.seconds());

    StageTimer t_debias;
    const auto fit = debias(loaded.ds.data, loaded.fit, surrogate_options(s));
    manifest.timings.emplace_back("debias", t_debias.seconds());
    const auto cis = confidence_intervals(fit, alpha);

    auto table = open_output(fs::path(s.out_dir) / "infer.csv", manifest);
    table << "coordinate,name,beta1_u,se1,lower1,upper1,beta2_u,se2,lower2,upper2,diff_u,se_diff,lower_diff,"
             "upper_diff,mu_used,variance_floored\n";
    for (Index j = 0; j < fit.beta1_u.size(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        table << j + 1 << ',' << coordinate_name(loaded.names, j);
        write_interval(table, cis.component1[k], fit.v1(j), fit.n_eff);
        write_interval(table, cis.component2[k], fit.v2(j), fit.n_eff);
        write_interval(table, cis.difference[k], fit.v_diff(j), fit.n_eff);
        table << ',' << fmt(fit.rows[k].mu_used) << ',' << (fit.variance_floored[k] ? 1 : 0) << '\n';
    }
    out << "alpha " << fmt(alpha) << "\nz " << fmt(cis.z) << "\nn_eff " << fit.n_eff << '\n';
}

void command_multitest(const Settings& s, RunManifest& manifest, std::ostream& out) {
    const double alpha = *s.alpha_opt ? s.alpha : 0.1;
    StageTimer timer;
    const auto loaded = load_fit_and_data(s, manifest);
    manifest.timings.emplace_back("read", timer.seconds());

    StageTimer t_debias;
    const auto fit = debias(loaded.ds.data, loaded.fit, surrogate_options(s));
    manifest.timings.emplace_back("debias", t_debias.seconds());
    const auto outcome = multiple_test(fit, alpha);

    std::vector<char> by_flag(static_cast<std::size_t>(fit.beta1_u.size()), 0);
    for (Index j : outcome.rejected_by) {
        by_flag[static_cast<std::size_t>(j)] = 1;
    }
    std::vector<char> flag(by_flag.size(), 0);
    for (Index j : outcome.rejected) {
        flag[static_cast<std::size_t>(j)] = 1;
    }
    auto table = open_output(fs::path(s.out_dir) / "multitest.csv", manifest);
    table << "coordinate,name,t1,t2,t_max,rejected,rejected_by\n";
    for (Index j = 0; j < fit.beta1_u.size(); ++j) {
        const auto k = static_cast<std::size_t>(j);
        table << j + 1 << ',' << coordinate_name(loaded.names, j) << ',' << fmt(outcome.stats.t1(j)) << ','
              << fmt(outcome.stats.t2(j)) << ',' << fmt(outcome.stats.t_max(j)) << ',' << int(flag[k]) << ','
              << int(by_flag[k]) << '\n';
    }
    json summary;
    summary["alpha"] = alpha;
    summary["t_hat"] = outcome.threshold.t_hat;
    summary["b_p"] = outcome.threshold.b_p;
    summary["threshold_existed"] = outcome.threshold.threshold_existed;
    std::vector<Index> one_based;
    for (Index j : outcome.rejected) {
        one_based.push_back(j + 1);
    }
    summary["rejected"] = one_based;
    one_based.clear();
    for (Index j : outcome.rejected_by) {
        one_based.push_back(j + 1);
    }
    summary["rejected_by"] = one_based;
    const fs::path summary_path = fs::path(s.out_dir) / "multitest_summary.json";
    write_json(summary_path, summary);
    manifest.outputs.push_back(summary_path.string());
    if (!outcome.threshold.threshold_existed) {
        manifest.warnings.push_back("no threshold met the criterion; used sqrt(2 log p)");
    }
    out << "t_hat " << fmt(outcome.threshold.t_hat) << "\nrejected " << outcome.rejected.size() << '\n';
}

void command_simulate(const Settings& s, RunManifest& manifest, std::ostream& out) {
    require_seed(s, "simulate");
    if (s.mode != "emse" && s.mode != "fdr") {
        throw InvalidInput("--mode must be emse or fdr");
    }
    require_file(s.grid_file, "--grid");
    SimDesign defaults;
    defaults.seed = s.seed;
    defaults.reps = s.reps;
    const auto grid = grid_from_table(read_table(s.grid_file), defaults);
    manifest.add_input(s.grid_file);

    PipelineConfig config;
    config.em = s.em;
    config.init = s.init;
    config.surrogate = surrogate_options(s);
    config.threads = s.threads;

    StageTimer timer;
    json cells = json::array();
    const fs::path dir = s.out_dir;
    if (s.mode == "emse") {
        const auto rows = run_estimation_experiment(grid, config);
        manifest.timings.emplace_back("experiment", timer.seconds());
        auto table = open_output(dir / "emse_table.csv", manifest);
        write_estimation_table(table, rows);
        for (const auto& row : rows) {
            cells.push_back({{"reps_ok", row.reps_ok}, {"reps_failed", row.reps_failed}, {"failures", row.failures}});
        }
    } else {
        const double alpha = *s.alpha_opt ? s.alpha : 0.1;
        const auto rows = run_testing_experiment(grid, alpha, config);
        manifest.timings.emplace_back("experiment", timer.seconds());
        auto table = open_output(dir / "fdr_table.csv", manifest);
        write_testing_table(table, rows);
        for (const auto& row : rows) {
            cells.push_back({{"reps_ok", row.reps_ok}, {"reps_failed", row.reps_failed}, {"failures", row.failures}});
        }
    }
    manifest.config["cells"] = cells;
    out << "cells " << grid.size() << '\n';
}

void command_network(const Settings& s, RunManifest& manifest, std::ostream& out) {
    require_seed(s, "network");
    require_file(s.data_file, "--data");
    const auto expr = read_expression(s.data_file);
    manifest.add_input(s.data_file);

    NetworkConfig config;
    config.em = s.em;
    config.init = s.init;
    config.surrogate = surrogate_options(s);
    config.alpha = *s.alpha_opt ? s.alpha : 0.1;
    config.seed = s.seed;
    config.threads = s.threads;

    StageTimer timer;
    const auto graph = nodewise_network(expr, config);
    manifest.timings.emplace_back("network", timer.seconds());
    for (const auto& w : graph.warnings) {
        manifest.warnings.push_back(w);
    }

    const fs::path dir = s.out_dir;
    auto edges = open_output(dir / "edges.csv", manifest);
    edges << "u,v,weight,sources\n";
    for (const auto& e : graph.edges) {
        edges << graph.nodes[static_cast<std::size_t>(e.u)] << ',' << graph.nodes[static_cast<std::size_t>(e.v)]
              << ',' << fmt(e.weight) << ',';
        for (std::size_t k = 0; k < e.sources.size(); ++k) {
            edges << (k ? ";" : "") << graph.nodes[static_cast<std::size_t>(e.sources[k])];
        }
        edges << '\n';
    }
    auto nodes = open_output(dir / "nodes.csv", manifest);
    nodes << "node,ok,t_hat,threshold_existed,rejections,omega_hat,sigma2_hat,error\n";
    int failed = 0;
    for (const auto& d : graph.diagnostics) {
        std::string error = d.error;
        for (char& c : error) {
            if (c == ',' || c == '\n') {
                c = ';';
            }
        }
        nodes << graph.nodes[static_cast<std::size_t>(d.node)] << ',' << (d.ok ? 1 : 0) << ',' << fmt(d.t_hat)
              << ',' << (d.threshold_existed ? 1 : 0) << ',' << d.rejections << ',' << fmt(d.omega_hat) << ','
              << fmt(d.sigma2_hat) << ',' << error << '\n';
        failed += d.ok ? 0 : 1;
    }
    if (failed > 0) {
        manifest.warnings.push_back(std::to_string(failed) + " node regressions failed; see nodes.csv");
    }
    out << "edges " << graph.edges.size() << '\n';
}

void write_manifest(const Settings& s, RunManifest& manifest, std::ostream& err) {
    if (manifest.command.empty()) {
        return;
    }
    std::error_code ec;
    fs::create_directories(s.out_dir, ec);
    const fs::path path = fs::path(s.out_dir) / ("manifest_" + manifest.command + ".json");
    try {
        write_json(path, manifest.to_json());
    } catch (const std::exception& e) {
        err << "warning: " << e.what() << '\n';
    }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Penalized EM, debiased inference and FDR control for two-component mixed linear regression",
                 "mlrinfer"};
    app.set_version_flag("--version", std::string(MLR_VERSION));
    app.require_subcommand(1);
    app.fallthrough();

    Settings s;
    app.set_config("--config", "", "key = value configuration file; flags override it");
    s.seed_opt = app.add_option("--seed", s.seed, "seed for every random draw");
    s.alpha_opt = app.add_option("--alpha", s.alpha, "level (infer 0.05, others 0.1 by default)");
    app.add_option("--threads", s.threads, "worker threads")->capture_default_str();
    app.add_option("--out-dir,--out_dir", s.out_dir, "output directory")->capture_default_str();
    add_model_options(app, s);

    auto* fit = app.add_subcommand("fit", "fit the mixture by penalized EM");
    fit->add_option("--data", s.data_file, "dataset file with a y column")->required();
    auto* infer = app.add_subcommand("infer", "debiased estimates and confidence intervals");
    infer->add_option("--data", s.data_file, "dataset file used for the fit")->required();
    infer->add_option("--fit", s.fit_file, "fit.json written by 'fit'")->required();
    auto* multitest = app.add_subcommand("multitest", "FDR-controlled selection of relevant covariates");
    multitest->add_option("--data", s.data_file, "dataset file used for the fit")->required();
    multitest->add_option("--fit", s.fit_file, "fit.json written by 'fit'")->required();
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo experiments over a design grid");
    simulate->add_option("--mode", s.mode, "emse or fdr")->capture_default_str();
    simulate->add_option("--grid", s.grid_file, "design grid file")->required();
    simulate->add_option("--reps", s.reps, "replicates per cell when the grid has no reps column")
        ->capture_default_str();
    auto* network = app.add_subcommand("network", "node-wise mixture dependence network");
    network->add_option("--data", s.data_file, "expression matrix, header of marker names")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    RunManifest manifest;
    manifest.started_utc = utc_now();
    StageTimer wall;
    int code = ok;
    try {
        try {
            app.parse(reversed);
        } catch (const CLI::CallForHelp& e) {
            out << app.help();
            return ok;
        } catch (const CLI::CallForVersion& e) {
            out << MLR_VERSION << '\n';
            return ok;
        } catch (const CLI::ParseError& e) {
            for (auto* sub : app.get_subcommands()) {
                manifest.command = sub->get_name();
            }
            throw InvalidInput(e.what());
        }
        const auto* chosen = app.get_subcommands().front();
        manifest.command = chosen->get_name();
        finalize_settings(s);
        manifest.seed = s.seed;
        manifest.seed_given = static_cast<bool>(*s.seed_opt);
        manifest.config = config_snapshot(s, manifest.command);
        fs::create_directories(s.out_dir);

        if (manifest.command == "fit") {
            command_fit(s, manifest, out);
        } else if (manifest.command == "infer") {
            command_infer(s, manifest, out);
        } else if (manifest.command == "multitest") {
            command_multitest(s, manifest, out);
        } else if (manifest.command == "simulate") {
            command_simulate(s, manifest, out);
        } else {
            command_network(s, manifest, out);
        }
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << '\n';
        manifest.message = e.what();
        code = invalid_input;
    } catch (const NumericalFailure& e) {
        err << "numerical failure: " << e.what() << '\n';
        manifest.message = e.what();
        code = numerical_failure;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << '\n';
        manifest.message = e.what();
        code = invalid_input;
    } catch (const std::exception& e) {
        err << "numerical failure: " << e.what() << '\n';
        manifest.message = e.what();
        code = numerical_failure;
    }
    manifest.exit_code = code;
    manifest.wall_seconds = wall.seconds();
    write_manifest(s, manifest, err);
    return code;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace mlr::cli
