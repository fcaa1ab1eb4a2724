#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmpc/experiments.hpp"

namespace rmpc {

inline constexpr const char* kVersion = "0.1.0";

/// Shortest-faithful decimal with 15 significant digits, C locale.
std::string format_sig(double v);

/// CSV with '#'-prefixed metadata lines (tool version and the resolved
/// configuration), then a header row, then 15-significant-digit data rows.
class CsvFile {
  public:
    CsvFile(const std::string& path, const nlohmann::json& meta);
    void columns(const std::vector<std::string>& names);
    void row(const std::vector<double>& values);
    const std::string& path() const { return path_; }

  private:
    std::string path_;
    std::ofstream out_;
};

void write_json_file(const std::string& path, const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& name);
Vector vector_from_json(const nlohmann::json& j, const std::string& name);

nlohmann::json sweep_fit_summary(const SweepTable& table);
std::string write_sweep_csv(const std::string& path, const SweepTable& table,
                            const nlohmann::json& meta);

/// Columns t, y_1..y_n, u_1..u_m plus one extra named series per entry of
/// `extra` (values sampled on the same grid).
struct ExtraSeries {
    std::string name;
    std::vector<double> values;
};
std::string write_trajectory_csv(const std::string& path, const Trajectory& traj,
                                 const nlohmann::json& meta,
                                 const std::vector<ExtraSeries>& extra = {});

}  // namespace rmpc
