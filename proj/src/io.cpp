#include "rmpc/io.hpp"

#include <cstdio>

namespace rmpc {

std::string format_sig(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.15g", v);
    return buf;
}

CsvFile::CsvFile(const std::string& path, const nlohmann::json& meta)
    : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw ConfigError("cannot open output file: " + path);
    out_ << "# version=" << kVersion << "\n";
    if (!meta.is_null()) out_ << "# config=" << meta.dump() << "\n";
}

void CsvFile::columns(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i)
        out_ << names[i] << (i + 1 < names.size() ? "," : "\n");
}

void CsvFile::row(const std::vector<double>& values) {
    for (std::size_t i = 0; i < values.size(); ++i)
        out_ << format_sig(values[i]) << (i + 1 < values.size() ? "," : "\n");
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + path);
    out << j.dump(2) << "\n";
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty() || !j[0].is_array())
        throw ConfigError("config: " + name + " must be a non-empty array of arrays");
    const std::size_t rows = j.size();
    const std::size_t cols = j[0].size();
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ConfigError("config: " + name + " rows must have equal length");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[i][c].is_number())
                throw ConfigError("config: " + name + " entries must be numbers");
            m(i, c) = j[i][c].get<double>();
        }
    }
    return m;
}

Vector vector_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_array() || j.empty())
        throw ConfigError("config: " + name + " must be a non-empty array");
    Vector v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number())
            throw ConfigError("config: " + name + " entries must be numbers");
        v(i) = j[i].get<double>();
    }
    return v;
}

nlohmann::json sweep_fit_summary(const SweepTable& table) {
    nlohmann::json j;
    j["name"] = table.name;
    j["parameter"] = table.parameter_name;
    j["err_fit"] = {{"slope", table.err_fit.slope},
                    {"intercept", table.err_fit.intercept},
                    {"r2", table.err_fit.r2}};
    j["cost_fit"] = {{"slope", table.cost_fit.slope},
                     {"intercept", table.cost_fit.intercept},
                     {"r2", table.cost_fit.r2}};
    j["tau"] = table.tau;
    j["gap"] = table.gap;
    j["step"] = table.step;
    j["t_max"] = table.t_max;
    j["burn_in"] = table.burn_in;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table.rows)
        rows.push_back({{"parameter", r.parameter},
                        {"stable", r.stable},
                        {"err_ctrl", r.err_ctrl},
                        {"cost_gap", r.cost_gap}});
    j["rows"] = std::move(rows);
    return j;
}

std::string write_sweep_csv(const std::string& path, const SweepTable& table,
                            const nlohmann::json& meta) {
    CsvFile csv(path, meta);
    csv.columns({table.parameter_name, "stable", "err_state", "err_ctrl", "cost_gap",
                 "bound_state", "bound_ctrl", "bound_cost", "mu_eff"});
    for (const auto& r : table.rows)
        csv.row({r.parameter, r.stable ? 1.0 : 0.0, r.err_state, r.err_ctrl, r.cost_gap,
                 r.bound_state, r.bound_ctrl, r.bound_cost, r.mu_eff});
    return path;
}

std::string write_trajectory_csv(const std::string& path, const Trajectory& traj,
                                 const nlohmann::json& meta,
                                 const std::vector<ExtraSeries>& extra) {
    traj.check();
    CsvFile csv(path, meta);
    std::vector<std::string> cols{"t"};
    const auto n = static_cast<std::size_t>(traj.states.front().size());
    const auto m = static_cast<std::size_t>(traj.controls.front().size());
    for (std::size_t i = 0; i < n; ++i) cols.push_back("y_" + std::to_string(i + 1));
    for (std::size_t i = 0; i < m; ++i) cols.push_back("u_" + std::to_string(i + 1));
    for (const auto& e : extra) {
        require(e.values.size() == traj.states.size(),
                "write_trajectory_csv: extra series length mismatch");
        cols.push_back(e.name);
    }
    csv.columns(cols);
    std::vector<double> row;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        row.clear();
        row.push_back(traj.time(k));
        for (std::size_t i = 0; i < n; ++i) row.push_back(traj.states[k](i));
        const Vector& u = traj.controls[std::min(k, traj.controls.size() - 1)];
        for (std::size_t i = 0; i < m; ++i) row.push_back(u(i));
        for (const auto& e : extra) row.push_back(e.values[k]);
        csv.row(row);
    }
    return path;
}

}  // namespace rmpc
