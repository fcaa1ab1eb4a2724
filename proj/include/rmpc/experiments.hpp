#pragma once

#include <string>
#include <vector>

#include "rmpc/mpc.hpp"

namespace rmpc {

/// A ready-to-run benchmark system with its expected closed-loop decay range
/// and solver options tuned to its stiffness.
struct ExampleSpec {
    std::string name;
    LtiModel model;
    CostSpec cost;
    Vector y0;
    double mu_low = 0.0;   // expected decay-rate window
    double mu_high = 0.0;
    CareOptions care;
};

/// Chain of 11 unit point masses coupled by stiffness-100 springs, force
/// actuation on the first mass, position output weighted by 10. State is
/// (q, qdot) in R^22; initial positions ramp from -1/2 to 1/2.
ExampleSpec build_example1();

/// The same chain with anti-damping 0.3 on the velocity block (not Hurwitz);
/// returns the plant with its mismatch bound against build_example1().
Plant build_example1_perturbed();

/// First-order diffusion-like system A = -K on R^11, single input on the
/// first node, identity output.
ExampleSpec build_example2();

/// Unit vector of length n with a one at hot_index.
Vector constant_disturbance(Eigen::Index n, Eigen::Index hot_index);

/// The two perturbations used by the tau sweeps.
struct Perturbation {
    enum class Kind { Disturbance, MatrixShift } kind = Kind::Disturbance;
    Vector w_bar;   // Kind::Disturbance
    double amount = 0.0;  // Kind::MatrixShift

    static Perturbation disturbance(Vector w) {
        Perturbation p;
        p.kind = Kind::Disturbance;
        p.w_bar = std::move(w);
        return p;
    }
    static Perturbation matrix_shift(double amount) {
        Perturbation p;
        p.kind = Kind::MatrixShift;
        p.amount = amount;
        return p;
    }
};

/// Builds the perturbed plant for an example: a constant disturbance on the
/// exact dynamics, or the example's matrix perturbation (velocity-block
/// anti-damping for the mass chain, a diagonal shift for the first-order
/// system).
Plant perturbed_plant(const ExampleSpec& ex, const Perturbation& pert);

struct SweepRow {
    double parameter = 0.0;
    bool stable = true;
    double err_state = 0.0;   // L-inf gap of the states after burn-in
    double err_ctrl = 0.0;    // L-inf gap of the controls after burn-in
    double cost_gap = 0.0;    // J(u_loop) - J(u_reference)
    double bound_state = 0.0;
    double bound_ctrl = 0.0;
    double bound_cost = 0.0;
    double mu_eff = 0.0;      // effective decay rate of the row's loop
    std::string note;
};

struct SweepTable {
    std::string name;
    std::string parameter_name;
    std::vector<SweepRow> rows;
    LineFit err_fit;    // horizon sweep: ln(err_ctrl) vs gap; tau sweep: err_ctrl vs tau
    LineFit cost_fit;   // horizon sweep only: ln(cost_gap) vs gap
    double tau = 0.0;
    double gap = 0.0;
    double step = 0.0;
    double t_max = 0.0;
    double burn_in = 0.0;
};

struct SweepConfig {
    double step = 1e-3;
    double t_max = 40.0;     // long enough for a certifiable cost tail
    double tail_tol = 1e-6;
    double k_generic = 1.0;  // family constant of the mismatch bounds
    int threads = 1;
};

/// Exact-model loop against the steady-gain optimum for a list of horizon
/// gaps T - tau at fixed tau. One Riccati path (to the largest horizon)
/// serves every row; rows run concurrently and deterministically.
SweepTable sweep_rhc_horizon(const ExampleSpec& ex, double tau, const std::vector<double>& gaps,
                             const SweepConfig& cfg);

/// Perturbed-plant loop against its small-tau limit for a list of control
/// horizons at fixed gap T - tau.
SweepTable sweep_mpc_tau(const ExampleSpec& ex, double gap, const std::vector<double>& taus,
                         const Perturbation& pert, const SweepConfig& cfg);

struct FigureConfig {
    std::string out_dir = ".";
    // 1/1600 s: the coarsest step dividing every control horizon in the
    // panels, including 1/16
    double step = 6.25e-4;
    double t_max = 60.0;              // trajectory panels
    double horizon_sweep_t_max = 40.0;  // long enough to certify cost tails
    double tau_sweep_t_max = 20.0;
    int output_decimation = 16;     // keep every k-th sample in panel CSVs
    int prediction_decimation = 20;
    int threads = 1;
};

/// Emits the CSV series behind the paper-style figures:
///  fig3 - Example 1 exact-model control panels with window predictions,
///  fig4 - Example 1 disturbed/mismatched panels with both reference limits,
///  fig5 - Example 2 sweep tables (horizon sweep and both tau sweeps).
/// Returns the paths written.
std::vector<std::string> reproduce_figures(const std::string& which, const FigureConfig& cfg);

}  // namespace rmpc
