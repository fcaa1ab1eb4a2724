#include "rmpc/horizon.hpp"

#include <cmath>
#include <string>

namespace rmpc {

namespace {

Matrix gain_matrix(const CostSpec& cost, const Matrix& b) {
    Eigen::LLT<Matrix> llt(cost.R);
    require(llt.info() == Eigen::Success, "R must be positive definite");
    return llt.solve(b.transpose());  // R^{-1} B^T
}

std::size_t step_count(double span, double step, const char* who) {
    require(step > 0.0 && span > 0.0, std::string(who) + ": span and step must be positive");
    const double k = span / step;
    const auto n = static_cast<std::size_t>(std::llround(k));
    require(n >= 1 && std::abs(k - std::round(k)) < 1e-6,
            std::string(who) + ": span must be an integer multiple of step");
    return n;
}

}  // namespace

FeedbackLaw feedback_law(const LtiModel& model, const CostSpec& cost, const RdePath& path,
                         const RiccatiSolution& sol) {
    const Matrix rinv_bt = gain_matrix(cost, model.B);
    FeedbackLaw law;
    law.gains.t0 = path.t0;
    law.gains.dt = path.dt;
    law.gains.values.reserve(path.size());
    for (const auto& p : path.values) law.gains.values.push_back(rinv_bt * p);
    law.tail = rinv_bt * sol.P;
    return law;
}

InfiniteFeedback infinite_feedback(const LtiModel& model, const CostSpec& cost,
                                   const RiccatiSolution& sol) {
    const Matrix rinv_bt = gain_matrix(cost, model.B);
    InfiniteFeedback fb;
    fb.gain = rinv_bt * sol.P;
    fb.A_cl = model.A - model.B * fb.gain;
    if (!transition_decays(fb.A_cl))
        throw SolverError("infinite_feedback: closed loop failed the stability probe");
    return fb;
}

Trajectory simulate_inf_horizon(const LtiModel& model, const CostSpec& cost,
                                const RiccatiSolution& sol, const Vector& y0, double t_max,
                                double step) {
    require(y0.size() == model.n(), "simulate_inf_horizon: initial state dimension mismatch");
    const std::size_t n_steps = step_count(t_max, step, "simulate_inf_horizon");
    const Matrix rinv_bt = gain_matrix(cost, model.B);
    const Matrix f = rinv_bt * sol.P;
    const CnStepper stepper(sol.A_cl, step);

    Trajectory traj;
    traj.dt = step;
    traj.states.reserve(n_steps + 1);
    traj.controls.reserve(n_steps);
    Vector x = y0;
    traj.states.push_back(x);
    for (std::size_t k = 0; k < n_steps; ++k) {
        traj.controls.push_back(-f * x);
        x = stepper.step(x);
        traj.states.push_back(x);
    }
    return traj;
}

Matrix finite_horizon_gain(const RdePath& path, double horizon, double t_rel) {
    require(path.dt > 0.0 && !path.values.empty(), "finite_horizon_gain: empty path");
    require(t_rel >= -1e-12 && t_rel <= horizon + 1e-12,
            "finite_horizon_gain: t_rel outside [0, T]");
    require(horizon <= path.time(path.size() - 1) + 0.5 * path.dt,
            "finite_horizon_gain: path does not cover the horizon");
    return path.at_time(horizon - t_rel);
}

Trajectory simulate_finite_horizon(const LtiModel& model, const CostSpec& cost,
                                   const RdePath& path, const Vector& x1, double horizon,
                                   double step) {
    require(x1.size() == model.n(), "simulate_finite_horizon: initial state dimension mismatch");
    require(std::abs(path.dt - step) <= 1e-12 * std::max(1.0, step),
            "simulate_finite_horizon: path step must equal the integration step");
    const std::size_t n_steps = step_count(horizon, step, "simulate_finite_horizon");
    require(path.size() > n_steps, "simulate_finite_horizon: path does not cover the horizon");
    const Matrix rinv_bt = gain_matrix(cost, model.B);

    Trajectory traj;
    traj.dt = step;
    traj.states.reserve(n_steps + 1);
    traj.controls.reserve(n_steps);
    Vector x = x1;
    traj.states.push_back(x);
    Matrix a_mid(model.n(), model.n());
    for (std::size_t k = 0; k < n_steps; ++k) {
        const Matrix& p_left = path.values[n_steps - k];
        const Matrix& p_right = path.values[n_steps - k - 1];
        traj.controls.push_back(-rinv_bt * (p_left * x));
        a_mid.noalias() = model.B * (rinv_bt * (0.5 * (p_left + p_right)));
        a_mid = model.A - a_mid;
        x = cn_step(a_mid, Vector(), x, step);
        traj.states.push_back(x);
    }
    return traj;
}

double cost_finite(const Trajectory& traj, const CostSpec& cost) {
    traj.check();
    const std::size_t n_samples = traj.states.size();
    double quad = 0.0;
    for (std::size_t k = 0; k < n_samples; ++k) {
        const Vector& u = traj.controls[std::min(k, traj.controls.size() - 1)];
        const double run = (cost.C * traj.states[k]).squaredNorm() + u.dot(cost.R * u);
        const double w = (k == 0 || k + 1 == n_samples) ? 0.5 : 1.0;
        quad += w * run;
    }
    quad *= traj.dt;
    const Vector& xT = traj.states.back();
    return 0.5 * xT.dot(cost.E_T * xT) + 0.5 * quad;
}

InfiniteCost cost_infinite(const Trajectory& traj, const CostSpec& cost,
                           const RiccatiSolution& sol, double tail_tol) {
    traj.check();
    const Vector& x_end = traj.states.back();
    InfiniteCost out;
    out.tail = 0.5 * x_end.dot(sol.P * x_end);
    out.tail_bound =
        0.5 * (operator_norm(sol.P) + sol.err_coeff) * x_end.squaredNorm();
    if (out.tail_bound > tail_tol)
        throw SolverError("cost_infinite: tail not certifiable below tolerance, extend horizon");

    double quad = 0.0;
    const std::size_t n_samples = traj.states.size();
    for (std::size_t k = 0; k < n_samples; ++k) {
        const Vector& u = traj.controls[std::min(k, traj.controls.size() - 1)];
        const double run = (cost.C * traj.states[k]).squaredNorm() + u.dot(cost.R * u);
        const double w = (k == 0 || k + 1 == n_samples) ? 0.5 : 1.0;
        quad += w * run;
    }
    out.value = 0.5 * quad * traj.dt + out.tail;
    return out;
}

Trajectory direct_transcription(const LtiModel& model, const CostSpec& cost, const Vector& x1,
                                double horizon, double step, const TranscriptionOptions& opts) {
    require(x1.size() == model.n(), "direct_transcription: initial state dimension mismatch");
    const std::size_t n_steps = step_count(horizon, step, "direct_transcription");
    const Eigen::Index n = model.n();
    const Eigen::Index m = model.m();
    const Eigen::Index n_vars = static_cast<Eigen::Index>(n_steps + 1) * m;
    require(n_vars <= 5000 && static_cast<double>(n) * static_cast<double>(n_steps) <= 2e4,
            "direct_transcription: problem too large for the dense solve");

    // One Crank-Nicolson step under the hold: x_{k+1} = Phi x_k + S u_k.
    Eigen::PartialPivLU<Matrix> lu(Matrix(Matrix::Identity(n, n) - (0.5 * step) * model.A));
    const Matrix phi = lu.solve(Matrix(Matrix::Identity(n, n) + (0.5 * step) * model.A));
    const Matrix s_in = step * lu.solve(model.B);

    const Matrix ctc = cost.C.transpose() * cost.C;
    Matrix h = Matrix::Zero(n_vars, n_vars);
    Vector g = Vector::Zero(n_vars);
    for (std::size_t k = 0; k < n_steps; ++k)
        h.block(k * m, k * m, m, m) += step * cost.R;

    Matrix gk = Matrix::Zero(n, n_vars);  // x_k as a linear map of the controls
    Vector ck = x1;                       // affine part
    for (std::size_t k = 1; k <= n_steps; ++k) {
        gk = (phi * gk).eval();
        gk.middleCols((k - 1) * m, m) += s_in;
        ck = (phi * ck).eval();
        const double w = (k == n_steps) ? 0.5 * step : step;
        const Matrix cg = cost.C * gk;
        h.noalias() += w * cg.transpose() * cg;
        g.noalias() += w * cg.transpose() * (cost.C * ck);
        if (k == n_steps) {
            h.noalias() += gk.transpose() * cost.E_T * gk;
            g.noalias() += gk.transpose() * (cost.E_T * ck);
        }
    }

    Vector u_nodes;
    if (!opts.gradient_descent) {
        Eigen::LDLT<Matrix> ldlt(h);
        if (ldlt.info() != Eigen::Success)
            throw SolverError("direct_transcription: normal equations not factorizable");
        u_nodes = ldlt.solve(-g);
        if (!u_nodes.allFinite())
            throw SolverError("direct_transcription: normal-equation solve produced non-finite "
                              "controls (conditioning failure)");
    } else {
        u_nodes = Vector::Zero(n_vars);
        const double scale = 1.0 + g.norm();
        for (int it = 0; it < opts.max_gd_iterations; ++it) {
            Vector r = h * u_nodes + g;
            if (r.norm() <= opts.gd_tol * scale) break;
            const double alpha = r.squaredNorm() / r.dot(h * r);
            u_nodes -= alpha * r;
        }
    }

    Trajectory traj;
    traj.dt = step;
    traj.states.reserve(n_steps + 1);
    traj.controls.reserve(n_steps);
    Vector x = x1;
    traj.states.push_back(x);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const Vector uk = u_nodes.segment(k * m, m);
        traj.controls.push_back(uk);
        x = (phi * x + s_in * uk).eval();
        traj.states.push_back(x);
    }
    return traj;
}

double zoh_control_gap(const Trajectory& node_sampled, const Trajectory& zoh) {
    node_sampled.check();
    zoh.check();
    require(std::abs(node_sampled.dt - zoh.dt) <= 1e-12 &&
                node_sampled.controls.size() == zoh.controls.size(),
            "zoh_control_gap: trajectories must share a grid");
    double gap = 0.0;
    for (std::size_t k = 0; k + 1 < node_sampled.controls.size(); ++k) {
        const Vector mid =
            0.5 * (node_sampled.controls[k] + node_sampled.controls[k + 1]);
        gap = std::max(gap, (zoh.controls[k] - mid).norm());
    }
    return gap;
}

Trajectory disturbed_inf_horizon(const LtiModel& model, const CostSpec& cost,
                                 const RiccatiSolution& sol, const PiecewiseConstantSignal& w,
                                 const Vector& y0, double t_max, double step) {
    require(y0.size() == model.n(), "disturbed_inf_horizon: initial state dimension mismatch");
    require(w.dim() == model.n(), "disturbed_inf_horizon: disturbance dimension mismatch");
    require(w.tail.allFinite(), "disturbed_inf_horizon: unbounded disturbance tail");
    for (const auto& v : w.values)
        require(v.allFinite(), "disturbed_inf_horizon: unbounded disturbance sample");
    if (!w.values.empty()) {
        require(w.t0 == 0.0, "disturbed_inf_horizon: disturbance grid must start at t = 0");
        const double ratio = w.dt / step;
        require(std::abs(ratio - std::round(ratio)) < 1e-9 && ratio >= 1.0,
                "disturbed_inf_horizon: disturbance grid must be a multiple of the step");
    }
    const std::size_t n_steps = step_count(t_max, step, "disturbed_inf_horizon");

    const Matrix rinv_bt = gain_matrix(cost, model.B);
    const Matrix x_in = model.B * rinv_bt;  // B R^{-1} B^T
    const Matrix f = sol.A_cl.transpose();
    Eigen::PartialPivLU<Matrix> f_lu(f);
    const Matrix e_h = mat_exp(f, step);
    const Matrix e_half = mat_exp(f, 0.5 * step);
    const Eigen::Index n = model.n();
    const Matrix g_h = f_lu.solve(Matrix(e_h - Matrix::Identity(n, n))) * sol.P;
    const Matrix g_half = f_lu.solve(Matrix(e_half - Matrix::Identity(n, n))) * sol.P;

    // Adjoint on the grid, built backward from the steady tail value. The
    // recursion inside a constant-w piece is exact:
    // xi(t) = e^{F d} xi(t+d) - F^{-1}(e^{F d} - I) P w_piece.
    const Vector xi_tail = f_lu.solve(sol.P * w.tail);
    const double grid_end =
        w.values.empty() ? 0.0 : w.t0 + w.dt * static_cast<double>(w.values.size());
    const auto hi_steps = static_cast<std::size_t>(
        std::max<long long>(static_cast<long long>(n_steps),
                            std::llround(std::ceil(grid_end / step - 1e-9))));
    std::vector<Vector> xi(n_steps + 1);
    for (std::size_t j = hi_steps; j <= n_steps; ++j) xi[j] = xi_tail;
    Vector cur = xi_tail;  // = xi at t = hi_steps * step, past the disturbance grid
    for (std::size_t j = hi_steps; j > 0; --j) {
        const double t_mid = (static_cast<double>(j) - 0.5) * step;
        cur = e_h * cur - g_h * w.at(t_mid);
        if (j - 1 <= n_steps) xi[j - 1] = cur;
    }

    const CnStepper stepper(sol.A_cl, step);
    Trajectory traj;
    traj.dt = step;
    traj.states.reserve(n_steps + 1);
    traj.controls.reserve(n_steps);
    Vector y = y0;
    traj.states.push_back(y);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t_mid = (static_cast<double>(k) + 0.5) * step;
        const Vector& wk = w.at(t_mid);
        const Vector xi_mid = e_half * xi[k + 1] - g_half * wk;
        traj.controls.push_back(-rinv_bt * (sol.P * y + xi[k]));
        y = stepper.step(y, (-(x_in * xi_mid) + wk).eval());
        traj.states.push_back(y);
    }
    return traj;
}

}  // namespace rmpc
