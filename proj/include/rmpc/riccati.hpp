#pragma once

#include <vector>

#include "rmpc/numerics.hpp"
#include "rmpc/signal.hpp"

namespace rmpc {

/// Continuous-time plant model xdot = A x + B u.
struct LtiModel {
    Matrix A;  // n x n
    Matrix B;  // n x m

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index m() const { return B.cols(); }
};

/// Quadratic running cost |C x|^2 + u^T R u with terminal weight E_T.
struct CostSpec {
    Matrix C;    // l x n
    Matrix R;    // m x m, symmetric positive definite
    Matrix E_T;  // n x n, symmetric positive semi-definite
};

/// Validates dimensions, R > 0, E_T symmetric PSD, (A,B) controllable and
/// (A,C) observable. Throws ConfigError with the offending property.
void check_system(const LtiModel& model, const CostSpec& cost);

/// B R^{-1} B^T (R inverted via Cholesky).
Matrix input_weight(const Matrix& b, const Matrix& r);

/// Solution bundle of the steady-state Riccati problem together with the
/// decay data used by every stability bound downstream.
struct RiccatiSolution {
    Matrix P;           // stabilizing solution, symmetric positive definite
    Matrix A_cl;        // A - B R^{-1} B^T P, Hurwitz
    double overshoot;   // M:  ||e^{A_cl t}|| <= M e^{-decay_rate t}
    double decay_rate;  // mu > 0
    double err_coeff;   // K0: ||P_path(t) - P|| <= K0 e^{-2 mu t}
    Matrix grammian;    // W:  A_cl W + W A_cl^T + B R^{-1} B^T = 0
    double residual;    // achieved Riccati residual (absolute)

    // diagnostics
    Matrix phase1_P;          // integration limit before Newton refinement
    double phase1_time = 0;   // integrated time span of phase 1
    int newton_iterations = 0;
    double envelope_window = 0;  // window over which the envelope was fitted
};

using RdePath = MatrixPath;

struct RdeOptions {
    double step_guard = 1.0;  // require step <= step_guard / (1 + ||A||)
    double blowup = 1e12;     // abort when ||P|| exceeds this
};

/// Integrates Pdot = A^T P + P A - P B R^{-1} B^T P + C^T C forward from
/// P(0) = E_T with fixed-step RK4, symmetrizing after every step. Sample k
/// of the result is P(k * step), k = 0..round(duration/step).
RdePath rde_integrate(const LtiModel& model, const CostSpec& cost, double duration, double step,
                      const RdeOptions& opts = {});

struct CareOptions {
    double step = 1e-3;            // RDE step for phase 1
    double step_guard = 1.0;       // forwarded to rde_integrate
    double phase1_max_time = 2000.0;
    double probe_interval = 1.0;   // cadence of the stationarity/stability probes
    bool allow_early_newton = true;  // hand off once the iterate closes a stable loop
    int max_newton = 50;
    double envelope_safety = 0.99;
    int envelope_samples = 2048;
    double envelope_window = 20.0;      // initial window; doubled until decayed
    double envelope_decay_target = 0.05;  // ||e^{A t}|| must fall below this
};

/// Solves A^T P + P A - P B R^{-1} B^T P + C^T C = 0 for the stabilizing P.
/// Phase 1 integrates the matrix Riccati flow until it is stationary to
/// sqrt(tol) (or until the iterate is certified stabilizing); phase 2 runs
/// Newton steps, each a dense Lyapunov solve, until the residual drops below
/// tol * ||C^T C||. Also fills the decay envelope, the closed-loop Grammian
/// and the convergence coefficient.
RiccatiSolution solve_care(const LtiModel& model, const CostSpec& cost, double tol = 1e-10,
                           const CareOptions& opts = {});

/// Solves A_cl W + W A_cl^T + B R^{-1} B^T = 0 and verifies the residual is
/// below tol * (1 + ||B R^{-1} B^T||).
Matrix closed_loop_grammian(const Matrix& a_cl, const Matrix& b, const Matrix& r,
                            double tol = 1e-8);

/// The coefficient K0 = M^2 max{ ||P - E_T||, ||(P - E_T)(I - W(P - E_T))^{-1}|| }.
/// Returns 0 when E_T equals P. Throws SolverError when I - W(P - E_T) is
/// numerically singular (terminal cost not dominated by P).
double rde_error_coeff(const Matrix& p, const Matrix& e_t, double overshoot, const Matrix& w);

struct ConvergenceReport {
    bool ok = true;
    double max_ratio = 0.0;      // max over samples of err / bound
    double fitted_rate = 0.0;    // OLS slope of ln||P(t) - P|| (0 if all at floor)
    double first_violation_t = -1.0;
    std::size_t points_fitted = 0;
};

/// Checks ||P(t_k) - P|| <= K0 e^{-2 mu t_k} + slack at every sample of the
/// path and fits the empirical decay rate of the error.
ConvergenceReport verify_rde_convergence(const RdePath& path, const RiccatiSolution& sol,
                                         double slack = 1e-8);

// ---- discrete time ----

/// Iterates Q_{t+1} = A^T Q_t (I + B R^{-1} B^T Q_t)^{-1} A + C^T C from
/// Q_0 = E_T, symmetrizing each iterate; returns Q_0..Q_steps. With
/// `woodbury` set, the algebraically equivalent m x m-inverse form
/// A^T Q A - A^T Q B (R + B^T Q B)^{-1} B^T Q A + C^T C is used instead.
std::vector<Matrix> drde_iterate(const Matrix& a, const Matrix& b, const CostSpec& cost,
                                 int steps, bool woodbury = false);

struct DareSolution {
    Matrix Q;       // fixed point, symmetric positive definite
    Matrix M;       // (I + B R^{-1} B^T Q)^{-1}
    double rho;     // ||M A|| < 1, the closed-loop contraction factor
    int iterations = 0;

    // problem data kept for the bound evaluators
    Matrix A, B, R;
};

/// Fixed-point iteration of the Riccati difference equation from E_T until
/// ||Q_{t+1} - Q_t|| <= tol. Throws SolverError when the iteration fails to
/// converge or the contraction factor is not below one.
DareSolution solve_dare(const Matrix& a, const Matrix& b, const CostSpec& cost,
                        double tol = 1e-13, int max_iterations = 200000);

/// Discrete analogue of rde_error_coeff: the constant bounding
/// ||Q_t - Q|| <= coeff * rho^{2t}. Computed as ||((Q - E_T)^{-1} - W)^{-1}||
/// with W the closed-loop input Grammian, summed until the term norm falls
/// below tol. Requires 0 <= E_T < Q strictly; throws SolverError when
/// (Q - E_T)^{-1} - W fails to be positive definite (the bound is then not
/// available from this construction).
double drde_error_coeff(const Matrix& q, const Matrix& e_t, const Matrix& closed_loop_ma,
                        const Matrix& b, const Matrix& r, double tol = 1e-14);

}  // namespace rmpc
