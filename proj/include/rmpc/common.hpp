#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Base class for all errors thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied configuration or arguments (CLI exit code 1).
struct ConfigError : Error {
    using Error::Error;
};

/// A solver failed to converge or hit a numerical dead end (CLI exit code 2).
struct SolverError : Error {
    using Error::Error;
};

/// A simulated closed loop left the trusted region (CLI exit code 3).
struct InstabilityError : Error {
    InstabilityError(const std::string& what, double last_stable_time)
        : Error(what), last_stable_time(last_stable_time) {}
    double last_stable_time;
};

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

/// (M + M^T)/2, in place.
inline void symmetrize(Matrix& m) { m = 0.5 * (m + m.transpose()).eval(); }

}  // namespace rmpc
