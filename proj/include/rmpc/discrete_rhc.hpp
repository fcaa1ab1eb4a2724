#pragma once

#include <limits>
#include <string>
#include <vector>

#include "rmpc/riccati.hpp"

namespace rmpc {

/// Discrete-time plant x_{t+1} = A x_t + B u_t.
struct DtLtiModel {
    Matrix A;
    Matrix B;

    Eigen::Index n() const { return A.rows(); }
    Eigen::Index m() const { return B.cols(); }
};

void check_discrete_system(const DtLtiModel& model, const CostSpec& cost);

/// Exact discrete trajectory: states x_0..x_N, controls u_0..u_{N-1}; the
/// dynamics hold to round-off, there is no integrator.
struct DtTrajectory {
    std::vector<Vector> states;
    std::vector<Vector> controls;
};

/// Receding-horizon loop in discrete time: every tau steps the horizon-T
/// problem restarts from the current state; within a window
/// x_{t+1} = M_{T-1-(t mod tau)} A x_t with M_s = (I + B R^{-1} B^T Q_s)^{-1}
/// and u_t = -R^{-1} B^T Q_s M_s A x_t, where Q_s is the Riccati iterate
/// after s steps from E_T. The difference-equation sequence is built once.
DtTrajectory run_discrete_rhc(const DtLtiModel& model, const CostSpec& cost, int horizon,
                              int tau, int total_steps, const Vector& x0);

/// Independent route: the horizon-T quadratic objective stacked over the
/// control sequence and solved exactly through the normal equations.
std::vector<Vector> discrete_qp_control(const DtLtiModel& model, const CostSpec& cost,
                                        const Vector& x_bar, int horizon);

/// Contraction factor theta = rho + K1 rho^{2(T-tau)-1} with
/// K1 = ||B R^{-1} B^T|| * (difference-equation error coefficient).
/// theta < 1 certifies ||x_t|| <= theta^t ||x_0|| for the closed loop.
double discrete_contraction_factor(const DareSolution& dare, const Matrix& e_t, int horizon,
                                   int tau);

/// Infinite-horizon optimal discrete trajectory x_{t+1} = M A x_t with the
/// matching controls, over total_steps steps.
DtTrajectory discrete_inf_horizon(const DareSolution& dare, const CostSpec& cost,
                                  const Vector& x0, int total_steps);

/// (1/2) sum |C x_t|^2 + u_t^T R u_t over the recorded steps plus the
/// quadratic continuation tail (1/2) x_N^T Q x_N.
double discrete_cost_infinite(const DtTrajectory& traj, const CostSpec& cost,
                              const DareSolution& dare);

struct DtConvergenceRow {
    int horizon = 0;
    bool stable = true;
    double traj_gap = 0.0;  // max_t |x_rhc - x_inf| + |u_rhc - u_inf|
    double cost_gap = 0.0;  // J(u_rhc) - J(u_inf)
    double theta = std::numeric_limits<double>::quiet_NaN();
    std::string note;
};

struct DtConvergenceTable {
    std::vector<DtConvergenceRow> rows;
    double rho = 0.0;
    LineFit decay_fit;  // ln(traj_gap) against (T - tau), over the stable rows
};

/// Gap-to-optimum report over a list of horizons; rows run concurrently when
/// threads > 1 and unstable configurations are flagged, not fatal.
DtConvergenceTable discrete_convergence_table(const DtLtiModel& model, const CostSpec& cost,
                                              const std::vector<int>& horizons, int tau,
                                              int total_steps, const Vector& x0,
                                              int threads = 1);

}  // namespace rmpc
