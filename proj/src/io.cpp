#include "mlr/io.hpp"

#include "mlr/errors.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace mlr {

namespace {

using nlohmann::json;

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, delimiter)) {
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == delimiter) {
        out.emplace_back();
    }
    return out;
}

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = text.find_last_not_of(" \t");
    return text.substr(first, last - first + 1);
}

std::string where(const std::string& source, std::size_t line, std::size_t col) {
    return source + ": line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::string format_double(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InvalidInput("cannot open '" + path.string() + "'");
    }
    return in;
}

Vector vector_from_json(const json& node, const char* name) {
    if (!node.is_array()) {
        throw InvalidInput(std::string("fit field '") + name + "' must be an array");
    }
    Vector out(static_cast<Index>(node.size()));
    for (std::size_t i = 0; i < node.size(); ++i) {
        if (!node[i].is_number()) {
            throw InvalidInput(std::string("fit field '") + name + "' must hold numbers");
        }
        out(static_cast<Index>(i)) = node[i].get<double>();
    }
    return out;
}

json vector_to_json(const Vector& v) {
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

long TextTable::column(const std::string& name) const {
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == name) {
            return static_cast<long>(c);
        }
    }
    return -1;
}

double TextTable::number(std::size_t row, std::size_t col) const {
    const std::string& cell = rows.at(row).at(col);
    double value = 0.0;
    const char* first = cell.data();
    const char* last = cell.data() + cell.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (cell.empty() || ec != std::errc() || ptr != last) {
        throw InvalidInput(where(source, line_numbers[row], col + 1) + ": '" + cell + "' is not a number");
    }
    if (!std::isfinite(value)) {
        throw InvalidInput(where(source, line_numbers[row], col + 1) + ": '" + cell + "' is not finite");
    }
    return value;
}

TextTable parse_table(std::istream& in, const std::string& source) {
    TextTable table;
    table.source = source;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        if (!have_header) {
            table.delimiter = line.find('\t') != std::string::npos ? '\t' : ',';
            for (auto& cell : split_line(line, table.delimiter)) {
                table.header.push_back(trim(cell));
            }
            for (std::size_t c = 0; c < table.header.size(); ++c) {
                if (table.header[c].empty()) {
                    throw InvalidInput(where(source, line_no, c + 1) + ": empty column name");
                }
            }
            have_header = true;
            continue;
        }
        auto cells = split_line(line, table.delimiter);
        if (cells.size() != table.header.size()) {
            throw InvalidInput(where(source, line_no, std::min(cells.size(), table.header.size()) + 1) +
                               ": expected " + std::to_string(table.header.size()) + " fields, found " +
                               std::to_string(cells.size()));
        }
        for (auto& cell : cells) {
            cell = trim(cell);
        }
        table.rows.push_back(std::move(cells));
        table.line_numbers.push_back(line_no);
    }
    if (!have_header) {
        throw InvalidInput(source + ": no header row");
    }
    return table;
}

TextTable read_table(const std::filesystem::path& path) {
    auto in = open_input(path);
    return parse_table(in, path.string());
}

NamedDataset dataset_from_table(const TextTable& table) {
    const long y_col = table.column("y");
    if (y_col < 0) {
        throw InvalidInput(table.source + ": no column named 'y'");
    }
    NamedDataset out;
    std::vector<std::size_t> x_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (static_cast<long>(c) != y_col) {
            x_cols.push_back(c);
            out.covariates.push_back(table.header[c]);
        }
    }
    if (x_cols.empty()) {
        throw InvalidInput(table.source + ": no covariate columns");
    }
    if (table.rows.empty()) {
        throw InvalidInput(table.source + ": no data rows");
    }
    const auto n = static_cast<Index>(table.rows.size());
    out.data.x.resize(n, static_cast<Index>(x_cols.size()));
    out.data.y.resize(n);
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        out.data.y(static_cast<Index>(i)) = table.number(i, static_cast<std::size_t>(y_col));
        for (std::size_t k = 0; k < x_cols.size(); ++k) {
            out.data.x(static_cast<Index>(i), static_cast<Index>(k)) = table.number(i, x_cols[k]);
        }
    }
    return out;
}

NamedDataset read_dataset(const std::filesystem::path& path) {
    return dataset_from_table(read_table(path));
}

void write_dataset(std::ostream& os, const MlrDataset& data, const std::vector<std::string>& covariates) {
    if (!covariates.empty() && static_cast<Index>(covariates.size()) != data.p()) {
        throw InvalidInput("covariate name count does not match the design");
    }
    std::string text = "y";
    for (Index j = 0; j < data.p(); ++j) {
        text += ',';
        text += covariates.empty() ? "x" + std::to_string(j + 1) : covariates[static_cast<std::size_t>(j)];
    }
    text += '\n';
    for (Index i = 0; i < data.n(); ++i) {
        text += format_double(data.y(i));
        for (Index j = 0; j < data.p(); ++j) {
            text += ',';
            text += format_double(data.x(i, j));
        }
        text += '\n';
    }
    os << text;
}

ExpressionMatrix expression_from_table(const TextTable& table) {
    if (table.rows.empty()) {
        throw InvalidInput(table.source + ": no data rows");
    }
    ExpressionMatrix out;
    out.marker_names = table.header;
    out.values.resize(static_cast<Index>(table.rows.size()), static_cast<Index>(table.header.size()));
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        for (std::size_t c = 0; c < table.header.size(); ++c) {
            out.values(static_cast<Index>(i), static_cast<Index>(c)) = table.number(i, c);
        }
    }
    out.validate();
    return out;
}

ExpressionMatrix read_expression(const std::filesystem::path& path) {
    return expression_from_table(read_table(path));
}

std::vector<SimDesign> grid_from_table(const TextTable& table, const SimDesign& defaults) {
    for (const char* required : {"n", "p", "s", "rho"}) {
        if (table.column(required) < 0) {
            throw InvalidInput(table.source + ": grid needs a column named '" + required + "'");
        }
    }
    auto count = [&](std::size_t row, const char* name, auto fallback) -> decltype(fallback) {
        const long c = table.column(name);
        if (c < 0) {
            return fallback;
        }
        const double v = table.number(row, static_cast<std::size_t>(c));
        if (v < 0 || v != std::floor(v)) {
            throw InvalidInput(where(table.source, table.line_numbers[row], static_cast<std::size_t>(c) + 1) +
                               ": '" + name + "' must be a nonnegative integer");
        }
        return static_cast<decltype(fallback)>(v);
    };
    auto real = [&](std::size_t row, const char* name, double fallback) {
        const long c = table.column(name);
        return c < 0 ? fallback : table.number(row, static_cast<std::size_t>(c));
    };
    std::vector<SimDesign> grid;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        SimDesign d = defaults;
        d.n = count(r, "n", d.n);
        d.p = count(r, "p", d.p);
        d.s = count(r, "s", d.s);
        d.rho = real(r, "rho", d.rho);
        d.omega_star = real(r, "omega_star", d.omega_star);
        d.sigma2 = real(r, "sigma2", d.sigma2);
        d.reps = count(r, "reps", d.reps);
        d.seed = count(r, "seed", d.seed);
        if (const long c = table.column("sigma_model"); c >= 0) {
            try {
                d.sigma_model = parse_sigma_model(table.rows[r][static_cast<std::size_t>(c)]);
            } catch (const InvalidInput& e) {
                throw InvalidInput(where(table.source, table.line_numbers[r], static_cast<std::size_t>(c) + 1) +
                                   ": " + e.what());
            }
        }
        try {
            d.validate();
        } catch (const InvalidInput& e) {
            throw InvalidInput(table.source + ": line " + std::to_string(table.line_numbers[r]) + ": " + e.what());
        }
        grid.push_back(d);
    }
    if (grid.empty()) {
        throw InvalidInput(table.source + ": grid has no rows");
    }
    return grid;
}

json fit_to_json(const EmFit& fit, const std::vector<std::string>& covariates) {
    json doc;
    doc["format"] = "mlrinfer-fit";
    doc["format_version"] = 1;
    doc["covariates"] = covariates;
    doc["omega"] = fit.theta.omega;
    doc["sigma2"] = fit.theta.sigma2;
    doc["beta1"] = vector_to_json(fit.theta.beta1);
    doc["beta2"] = vector_to_json(fit.theta.beta2);
    doc["gamma"] = vector_to_json(fit.gamma.gamma);
    doc["lambda_path"] = fit.lambda_path;
    doc["subset_indices"] = fit.subset_indices;
    doc["n_t"] = fit.n_t;
    doc["omega_clamped"] = fit.omega_clamped;
    doc["solver_failures"] = fit.solver_failures;
    doc["degenerate_solves"] = fit.degenerate_solves;
    return doc;
}

EmFit fit_from_json(const json& doc) {
    try {
        if (doc.value("format", "") != "mlrinfer-fit") {
            throw InvalidInput("not a fit file (format tag missing)");
        }
        EmFit fit;
        fit.theta.omega = doc.at("omega").get<double>();
        fit.theta.sigma2 = doc.at("sigma2").get<double>();
        fit.theta.beta1 = vector_from_json(doc.at("beta1"), "beta1");
        fit.theta.beta2 = vector_from_json(doc.at("beta2"), "beta2");
        fit.gamma.gamma = vector_from_json(doc.at("gamma"), "gamma");
        fit.lambda_path = doc.at("lambda_path").get<std::vector<double>>();
        fit.subset_indices = doc.at("subset_indices").get<std::vector<std::vector<Index>>>();
        fit.n_t = doc.at("n_t").get<Index>();
        fit.omega_clamped = doc.value("omega_clamped", false);
        fit.solver_failures = doc.value("solver_failures", 0);
        fit.degenerate_solves = doc.value("degenerate_solves", 0);
        fit.theta.validate();
        if (fit.lambda_path.empty()) {
            throw InvalidInput("fit has an empty lambda path");
        }
        return fit;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("malformed fit file: ") + e.what());
    }
}

void save_fit(const std::filesystem::path& path, const EmFit& fit, const std::vector<std::string>& covariates) {
    write_json(path, fit_to_json(fit, covariates));
}

EmFit load_fit(const std::filesystem::path& path) {
    auto in = open_input(path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidInput(path.string() + ": " + e.what());
    }
    return fit_from_json(doc);
}

std::string fnv1a_hex(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string fnv1a_file(const std::filesystem::path& path) {
    auto in = open_input(path);
    std::ostringstream bytes;
    bytes << in.rdbuf();
    return fnv1a_hex(bytes.str());
}

void RunManifest::add_input(const std::filesystem::path& path) {
    inputs.emplace_back(path.string(), fnv1a_file(path));
}

json RunManifest::to_json() const {
    json doc;
    doc["command"] = command;
    doc["version"] = version;
    doc["seed"] = seed_given ? json(seed) : json(nullptr);
    doc["config"] = config;
    json in = json::array();
    for (const auto& [path, digest] : inputs) {
        in.push_back({{"path", path}, {"fnv1a64", digest}});
    }
    doc["inputs"] = in;
    doc["outputs"] = outputs;
    json t = json::array();
    for (const auto& [stage, seconds] : timings) {
        t.push_back({{"stage", stage}, {"seconds", seconds}});
    }
    doc["timings"] = t;
    doc["warnings"] = warnings;
    doc["started_utc"] = started_utc;
    doc["wall_seconds"] = wall_seconds;
    doc["exit_code"] = exit_code;
    doc["message"] = message;
    return doc;
}

void write_json(const std::filesystem::path& path, const json& doc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw InvalidInput("cannot write '" + path.string() + "'");
    }
    out << doc.dump(2) << '\n';
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace mlr
