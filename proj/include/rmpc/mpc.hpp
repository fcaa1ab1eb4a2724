#pragma once

#include <functional>
#include <optional>

#include "rmpc/horizon.hpp"

namespace rmpc {

/// The controlled plant: a state-control derivative map with f(0,0) = 0, an
/// additive piecewise-constant disturbance, and the Lipschitz bound of the
/// mismatch f(y,u) - Ay - Bu against the prediction model.
struct Plant {
    std::function<Vector(const Vector&, const Vector&)> f;
    PiecewiseConstantSignal w;
    double lipschitz = 0.0;

    // set when the plant is affine, enables the exact-model fast path
    std::optional<Matrix> A_true;
    std::optional<Matrix> B_true;

    /// Plant identical to the prediction model, no disturbance.
    static Plant exact(const LtiModel& model);

    /// Affine plant f = A_true y + B_true u with disturbance w; the Lipschitz
    /// bound is max(||A_true - A||, ||B_true - B||) against `model`.
    static Plant affine(const LtiModel& model, Matrix a_true, Matrix b_true,
                        PiecewiseConstantSignal w);

    /// Plant dynamics equal the model bit for bit and the disturbance is zero.
    bool matches_model(const LtiModel& model) const;

    Vector deriv(const Vector& y, const Vector& u) const;
};

struct MpcConfig {
    double T = 1.0;     // prediction horizon
    double tau = 0.5;   // control horizon, 0 < tau <= T
    double step = 1e-3;
    double t_max = 10.0;
    double blowup = 1e9;

    // full-window prediction storage (the dashed-line data): keep every
    // `prediction_stride`-th window (0 = none), decimating samples by
    // `prediction_decimation`.
    int prediction_stride = 0;
    int prediction_decimation = 1;

    void check() const;
    std::size_t steps_per_window() const;
    std::size_t total_steps() const;
};

struct WindowPrediction {
    std::size_t window = 0;
    Trajectory predicted;  // model trajectory over the full horizon window
};

struct MpcRun {
    Trajectory loop;  // closed-loop state and the applied control
    std::vector<double> window_starts;
    std::vector<WindowPrediction> predictions;
};

/// The closed-loop simulation: every tau the plant state is measured, the
/// horizon-T model problem is solved through the precomputed Riccati path,
/// and the first tau of the resulting control is applied to the plant (RK4,
/// zero-order hold per grid step). The path must use the config step and
/// cover [0, T]. Throws InstabilityError on plant blow-up.
MpcRun run_mpc(const Plant& plant, const LtiModel& model, const CostSpec& cost,
               const MpcConfig& cfg, const Vector& y0, const RdePath& path);

/// Convenience overload integrating the Riccati path itself.
MpcRun run_mpc(const Plant& plant, const LtiModel& model, const CostSpec& cost,
               const MpcConfig& cfg, const Vector& y0);

/// Exact-model, zero-disturbance closed loop. Prediction and plant coincide,
/// so only the model integrator runs; the result is bit-identical to run_mpc
/// with Plant::exact(model).
MpcRun run_rhc(const LtiModel& model, const CostSpec& cost, const MpcConfig& cfg,
               const Vector& y0, const RdePath& path);
MpcRun run_rhc(const LtiModel& model, const CostSpec& cost, const MpcConfig& cfg,
               const Vector& y0);

/// The limit the closed loop approaches for vanishing control horizon and
/// long prediction: the steady model gain applied to the true plant,
/// zdot = f(z, -F z) + w, integrated with RK4 (continuous feedback at the
/// stages). Controls v = -F z recorded per step. Throws InstabilityError
/// when the frozen-gain loop blows up.
Trajectory mpc_limit_trajectory(const Plant& plant, const LtiModel& model, const CostSpec& cost,
                                const RiccatiSolution& sol, const Vector& y0, double t_max,
                                double step);

/// Effective closed-loop decay rate of the exact-model loop:
/// mu - K1 e^{-2 mu (T - tau)} with K1 = M ||B R^{-1} B^T|| K0.
double rhc_decay_rate(const RiccatiSolution& sol, const LtiModel& model, const CostSpec& cost,
                      double T, double tau);

/// Mismatched-plant decay rate; `k_generic` scales the model-error terms:
/// mu - K1 e^{-2 mu (T-tau)} - K2 L - K L(L+1) tau e^{K(L+1) tau}
/// with K2 = M (1 + ||R^{-1}B^T|| (K0 + ||P||)).
double mpc_decay_rate(const RiccatiSolution& sol, const LtiModel& model, const CostSpec& cost,
                      double T, double tau, double lipschitz, double k_generic = 1.0);

/// Computable bounds on the gap between the exact-model closed loop and the
/// steady-gain optimum, maximized over t >= t_from. Infinite when the
/// effective decay rate is not positive.
struct RhcGapBounds {
    double state = 0.0;
    double control = 0.0;
    double cost = 0.0;
};
RhcGapBounds rhc_gap_bounds(const RiccatiSolution& sol, const LtiModel& model,
                            const CostSpec& cost, double T, double tau, double y0_norm,
                            double t_from = 0.0);

enum class GapMetric { Linf, L2, Terminal };

struct TrajectoryGap {
    double state = 0.0;
    double control = 0.0;
    double total = 0.0;
};

/// Distance between two trajectories on the same grid, states and controls
/// reported separately and summed. `t_from` drops samples before it.
TrajectoryGap trajectory_gap(const Trajectory& a, const Trajectory& b, GapMetric metric,
                             double t_from = 0.0);

}  // namespace rmpc
