#pragma once

#include "rmpc/riccati.hpp"

namespace rmpc {

/// Time-varying feedback gain F(t) = R^{-1} B^T P(t) with its steady tail.
struct FeedbackLaw {
    MatrixPath gains;  // m x n samples
    Matrix tail;       // F_inf = R^{-1} B^T P_inf
};

FeedbackLaw feedback_law(const LtiModel& model, const CostSpec& cost, const RdePath& path,
                         const RiccatiSolution& sol);

struct InfiniteFeedback {
    Matrix A_cl;  // A - B R^{-1} B^T P, verified Hurwitz
    Matrix gain;  // F = R^{-1} B^T P
};

InfiniteFeedback infinite_feedback(const LtiModel& model, const CostSpec& cost,
                                   const RiccatiSolution& sol);

/// xdot = A_cl x from y0, Crank-Nicolson at fixed step; controls -F x
/// recorded per step interval.
Trajectory simulate_inf_horizon(const LtiModel& model, const CostSpec& cost,
                                const RiccatiSolution& sol, const Vector& y0, double t_max,
                                double step);

/// Value-function kernel of the horizon-T problem at elapsed time t_rel,
/// i.e. the path sample nearest to T - t_rel. t_rel must lie in [0, T].
Matrix finite_horizon_gain(const RdePath& path, double horizon, double t_rel);

/// xdot = (A - B R^{-1} B^T P_T(t)) x on [0, T] from x1, Crank-Nicolson with
/// the midpoint kernel; records u(t_k) = -R^{-1} B^T P_T(t_k) x(t_k). The
/// path step must equal the integration step.
Trajectory simulate_finite_horizon(const LtiModel& model, const CostSpec& cost,
                                   const RdePath& path, const Vector& x1, double horizon,
                                   double step);

/// (1/2) x(T)^T E_T x(T) + (1/2) integral of |Cx|^2 + u^T R u, trapezoidal on
/// the trajectory grid (the final control sample reuses the last interval's).
double cost_finite(const Trajectory& traj, const CostSpec& cost);

struct InfiniteCost {
    double value = 0.0;       // quadrature plus the optimal-continuation tail
    double tail = 0.0;        // (1/2) x_end^T P x_end
    double tail_bound = 0.0;  // certified bound on the tail contribution
};

/// Infinite-horizon cost of a decayed trajectory: grid quadrature plus the
/// quadratic continuation tail. Throws SolverError("extend horizon") when
/// the tail cannot be certified below tail_tol.
InfiniteCost cost_infinite(const Trajectory& traj, const CostSpec& cost,
                           const RiccatiSolution& sol, double tail_tol = 1e-8);

struct TranscriptionOptions {
    bool gradient_descent = false;  // steepest descent instead of the direct solve
    int max_gd_iterations = 200000;
    double gd_tol = 1e-12;
};

/// Independent route to the horizon-T optimum: Crank-Nicolson transcription
/// of the dynamics and cost over per-interval held controls, solved exactly
/// through the normal equations (or by gradient descent behind the flag).
/// The returned controls are the hold values; they track the continuous
/// optimum at the interval midpoints to second order.
Trajectory direct_transcription(const LtiModel& model, const CostSpec& cost, const Vector& x1,
                                double horizon, double step,
                                const TranscriptionOptions& opts = {});

/// Largest distance between hold values and the interval midpoints of a
/// node-sampled control sequence on the same grid (the consistent way to
/// compare the transcription route with the feedback route).
double zoh_control_gap(const Trajectory& node_sampled, const Trajectory& zoh);

/// Benchmark trajectory for a disturbed plant with full disturbance preview:
/// ydot = A_cl y - B R^{-1} B^T xi + w where the adjoint
/// xi(t) = -int_t^inf e^{A_cl^T (s-t)} P w(s) ds is evaluated in closed form
/// per piecewise-constant segment of w (constant tail handled analytically).
/// Controls u = -R^{-1} B^T (P y + xi) are recorded per step.
Trajectory disturbed_inf_horizon(const LtiModel& model, const CostSpec& cost,
                                 const RiccatiSolution& sol, const PiecewiseConstantSignal& w,
                                 const Vector& y0, double t_max, double step);

}  // namespace rmpc
