#include "rmpc/mpc.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace rmpc {

Plant Plant::exact(const LtiModel& model) {
    Plant p;
    const Matrix a = model.A;
    const Matrix b = model.B;
    p.f = [a, b](const Vector& y, const Vector& u) -> Vector { return a * y + b * u; };
    p.w = PiecewiseConstantSignal::zero(model.n());
    p.lipschitz = 0.0;
    p.A_true = model.A;
    p.B_true = model.B;
    return p;
}

Plant Plant::affine(const LtiModel& model, Matrix a_true, Matrix b_true,
                    PiecewiseConstantSignal w) {
    require(a_true.rows() == model.n() && a_true.cols() == model.n(),
            "Plant::affine: A dimension mismatch");
    require(b_true.rows() == model.n() && b_true.cols() == model.m(),
            "Plant::affine: B dimension mismatch");
    Plant p;
    p.lipschitz = std::max(operator_norm(a_true - model.A), operator_norm(b_true - model.B));
    const Matrix a = a_true;
    const Matrix b = b_true;
    p.f = [a, b](const Vector& y, const Vector& u) -> Vector { return a * y + b * u; };
    p.w = std::move(w);
    p.A_true = std::move(a_true);
    p.B_true = std::move(b_true);
    return p;
}

bool Plant::matches_model(const LtiModel& model) const {
    return A_true && B_true && *A_true == model.A && *B_true == model.B && w.is_zero();
}

Vector Plant::deriv(const Vector& y, const Vector& u) const { return f(y, u); }

void MpcConfig::check() const {
    require(step > 0.0 && tau > 0.0 && T >= tau && t_max > 0.0,
            "MpcConfig: need step > 0, 0 < tau <= T, t_max > 0");
    const double kw = tau / step;
    const double kh = T / step;
    const double kn = t_max / step;
    require(std::abs(kw - std::round(kw)) < 1e-6, "MpcConfig: tau must be a multiple of step");
    require(std::abs(kh - std::round(kh)) < 1e-6, "MpcConfig: T must be a multiple of step");
    require(std::abs(kn - std::round(kn)) < 1e-6, "MpcConfig: t_max must be a multiple of step");
    require(prediction_stride >= 0 && prediction_decimation >= 1,
            "MpcConfig: invalid prediction storage settings");
}

std::size_t MpcConfig::steps_per_window() const {
    return static_cast<std::size_t>(std::llround(tau / step));
}

std::size_t MpcConfig::total_steps() const {
    return static_cast<std::size_t>(std::llround(t_max / step));
}

namespace {

struct GainSchedule {
    const RdePath& path;
    const LtiModel& model;
    Matrix rinv_bt;
    std::size_t horizon_steps;

    GainSchedule(const RdePath& path, const LtiModel& model, const CostSpec& cost, double T,
                 double step)
        : path(path), model(model) {
        require(std::abs(path.dt - step) <= 1e-12 * std::max(1.0, step),
                "run_mpc: Riccati path step must equal the config step");
        horizon_steps = static_cast<std::size_t>(std::llround(T / step));
        require(path.size() > horizon_steps, "run_mpc: Riccati path does not cover the horizon");
        Eigen::LLT<Matrix> llt(cost.R);
        require(llt.info() == Eigen::Success, "run_mpc: R must be positive definite");
        rinv_bt = llt.solve(model.B.transpose());
    }

    // kernel P_T(t_rel) at in-window step j
    const Matrix& kernel(std::size_t j) const { return path.values[horizon_steps - j]; }

    Vector control(std::size_t j, const Vector& x) const {
        return -rinv_bt * (kernel(j) * x);
    }

    // closed-loop model matrix with the midpoint kernel for step j -> j+1
    Matrix closed_loop_mid(std::size_t j) const {
        const Matrix p_mid = 0.5 * (path.values[horizon_steps - j] +
                                    path.values[horizon_steps - j - 1]);
        return model.A - model.B * (rinv_bt * p_mid);
    }
};

Trajectory predict_window(const GainSchedule& sched, const Vector& x0, double t_start,
                          std::size_t n_steps, double step, int decimation) {
    Trajectory traj;
    traj.t0 = t_start;
    traj.dt = step * decimation;
    Vector x = x0;
    std::vector<Vector> states{x};
    std::vector<Vector> controls;
    for (std::size_t j = 0; j < n_steps; ++j) {
        controls.push_back(sched.control(j, x));
        x = cn_step(sched.closed_loop_mid(j), Vector(), x, step);
        states.push_back(x);
    }
    for (std::size_t j = 0; j < states.size(); j += decimation) {
        traj.states.push_back(states[j]);
        if (j < controls.size()) traj.controls.push_back(controls[j]);
    }
    while (traj.controls.size() + 1 > traj.states.size()) traj.controls.pop_back();
    if (traj.controls.size() + 1 < traj.states.size()) traj.states.pop_back();
    return traj;
}

}  // namespace

MpcRun run_mpc(const Plant& plant, const LtiModel& model, const CostSpec& cost,
               const MpcConfig& cfg, const Vector& y0, const RdePath& path) {
    cfg.check();
    require(y0.size() == model.n(), "run_mpc: initial state dimension mismatch");
    require(plant.w.dim() == model.n(), "run_mpc: disturbance dimension mismatch");
    {
        const Vector origin_rate =
            plant.deriv(Vector::Zero(model.n()), Vector::Zero(model.m()));
        require(origin_rate.norm() <= 1e-12, "run_mpc: plant must satisfy f(0,0) = 0");
    }
    const GainSchedule sched(path, model, cost, cfg.T, cfg.step);
    const bool exact_model = plant.matches_model(model);

    const std::size_t n_total = cfg.total_steps();
    const std::size_t per_window = cfg.steps_per_window();
    const std::size_t horizon_steps = sched.horizon_steps;

    MpcRun run;
    run.loop.dt = cfg.step;
    run.loop.states.reserve(n_total + 1);
    run.loop.controls.reserve(n_total);

    Vector y = y0;
    run.loop.states.push_back(y);
    std::size_t g = 0;
    for (std::size_t k = 0; g < n_total; ++k) {
        run.window_starts.push_back(static_cast<double>(g) * cfg.step);
        if (cfg.prediction_stride > 0 && k % static_cast<std::size_t>(cfg.prediction_stride) == 0)
            run.predictions.push_back(
                {k, predict_window(sched, y, static_cast<double>(g) * cfg.step, horizon_steps,
                                   cfg.step, cfg.prediction_decimation)});

        Vector x_pred = y;  // model prediction from the measured state
        for (std::size_t j = 0; j < per_window && g < n_total; ++j, ++g) {
            const Vector u = sched.control(j, x_pred);
            run.loop.controls.push_back(u);
            x_pred = cn_step(sched.closed_loop_mid(j), Vector(), x_pred, cfg.step);
            if (exact_model) {
                y = x_pred;
            } else {
                const double t = static_cast<double>(g) * cfg.step;
                const Vector& wv = plant.w.at(t + 0.5 * cfg.step);
                const auto rhs = [&](double, const Vector& s) -> Vector {
                    return plant.deriv(s, u) + wv;
                };
                y = rk4_step(rhs, t, y, cfg.step);
            }
            run.loop.states.push_back(y);
            if (!y.allFinite() || y.norm() > cfg.blowup)
                throw InstabilityError("run_mpc: closed loop unstable for these parameters "
                                       "(window " + std::to_string(k) + ")",
                                       static_cast<double>(g) * cfg.step);
        }
    }
    return run;
}

MpcRun run_mpc(const Plant& plant, const LtiModel& model, const CostSpec& cost,
               const MpcConfig& cfg, const Vector& y0) {
    cfg.check();
    const RdePath path = rde_integrate(model, cost, cfg.T, cfg.step);
    return run_mpc(plant, model, cost, cfg, y0, path);
}

MpcRun run_rhc(const LtiModel& model, const CostSpec& cost, const MpcConfig& cfg,
               const Vector& y0, const RdePath& path) {
    return run_mpc(Plant::exact(model), model, cost, cfg, y0, path);
}

MpcRun run_rhc(const LtiModel& model, const CostSpec& cost, const MpcConfig& cfg,
               const Vector& y0) {
    cfg.check();
    const RdePath path = rde_integrate(model, cost, cfg.T, cfg.step);
    return run_rhc(model, cost, cfg, y0, path);
}

Trajectory mpc_limit_trajectory(const Plant& plant, const LtiModel& model, const CostSpec& cost,
                                const RiccatiSolution& sol, const Vector& y0, double t_max,
                                double step) {
    require(y0.size() == model.n(), "mpc_limit_trajectory: initial state dimension mismatch");
    const auto n_steps = static_cast<std::size_t>(std::llround(t_max / step));
    require(n_steps >= 1, "mpc_limit_trajectory: t_max must exceed the step");
    Eigen::LLT<Matrix> llt(cost.R);
    require(llt.info() == Eigen::Success, "mpc_limit_trajectory: R must be positive definite");
    const Matrix f_gain = llt.solve(model.B.transpose()) * sol.P;

    Trajectory traj;
    traj.dt = step;
    traj.states.reserve(n_steps + 1);
    traj.controls.reserve(n_steps);
    Vector z = y0;
    traj.states.push_back(z);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = static_cast<double>(k) * step;
        const Vector& wv = plant.w.at(t + 0.5 * step);
        const auto rhs = [&](double, const Vector& s) -> Vector {
            return plant.deriv(s, (-f_gain * s).eval()) + wv;
        };
        traj.controls.push_back(-f_gain * z);
        z = rk4_step(rhs, t, z, step);
        traj.states.push_back(z);
        if (!z.allFinite() || z.norm() > 1e9)
            throw InstabilityError("mpc_limit_trajectory: frozen-gain closed loop unstable", t);
    }
    return traj;
}

double rhc_decay_rate(const RiccatiSolution& sol, const LtiModel& model, const CostSpec& cost,
                      double T, double tau) {
    const Matrix x = input_weight(model.B, cost.R);
    const double k1 = sol.overshoot * operator_norm(x) * sol.err_coeff;
    return sol.decay_rate - k1 * std::exp(-2.0 * sol.decay_rate * (T - tau));
}

double mpc_decay_rate(const RiccatiSolution& sol, const LtiModel& model, const CostSpec& cost,
                      double T, double tau, double lipschitz, double k_generic) {
    Eigen::LLT<Matrix> llt(cost.R);
    require(llt.info() == Eigen::Success, "mpc_decay_rate: R must be positive definite");
    const Matrix rinv_bt = llt.solve(model.B.transpose());
    const double k2p = operator_norm(rinv_bt) * (sol.err_coeff + operator_norm(sol.P));
    const double k2 = sol.overshoot * (1.0 + k2p);
    const double l = lipschitz;
    const double window_term =
        k_generic * l * (l + 1.0) * tau * std::exp(k_generic * (l + 1.0) * tau);
    return rhc_decay_rate(sol, model, cost, T, tau) - k2 * l - window_term;
}

RhcGapBounds rhc_gap_bounds(const RiccatiSolution& sol, const LtiModel& model,
                            const CostSpec& cost, double T, double tau, double y0_norm,
                            double t_from) {
    RhcGapBounds b;
    const double mu_eff = rhc_decay_rate(sol, model, cost, T, tau);
    if (mu_eff <= 0.0) {
        b.state = b.control = b.cost = std::numeric_limits<double>::infinity();
        return b;
    }
    Eigen::LLT<Matrix> llt(cost.R);
    const Matrix rinv_bt = llt.solve(model.B.transpose());
    const double m = sol.overshoot;
    const double k0 = sol.err_coeff;
    const double k1p = operator_norm(input_weight(model.B, cost.R)) * k0;
    const double shrink = std::exp(-2.0 * sol.decay_rate * (T - tau));

    // sup over t >= t_from of t e^{-mu t} and of e^{-mu t}
    const double t_peak = std::max(t_from, 1.0 / mu_eff);
    const double sup_te = t_peak * std::exp(-mu_eff * t_peak);
    const double sup_e = std::exp(-mu_eff * t_from);

    const double state_coeff = m * m * k1p * shrink * y0_norm;
    b.state = state_coeff * sup_te;
    const double ctrl_a = operator_norm(rinv_bt) * k0 * shrink * m * y0_norm;
    const double ctrl_b = operator_norm(Matrix(rinv_bt * sol.P)) * state_coeff;
    b.control = ctrl_a * sup_e + ctrl_b * sup_te;

    const double mu3 = mu_eff * mu_eff * mu_eff;
    const double e_l2_sq = state_coeff * state_coeff / (4.0 * mu3);
    const double v_l2_sq =
        2.0 * (ctrl_a * ctrl_a / (2.0 * mu_eff) + ctrl_b * ctrl_b / (4.0 * mu3));
    b.cost = 0.5 * operator_norm(cost.C) * operator_norm(cost.C) * e_l2_sq +
             0.5 * operator_norm(cost.R) * v_l2_sq;
    return b;
}

namespace {

double combine(std::vector<double>& sq_or_abs, GapMetric metric, double dt) {
    if (sq_or_abs.empty()) return 0.0;
    switch (metric) {
        case GapMetric::Linf: {
            double m = 0.0;
            for (double v : sq_or_abs) m = std::max(m, v);
            return m;
        }
        case GapMetric::L2: {
            double s = 0.0;
            for (std::size_t i = 0; i < sq_or_abs.size(); ++i) {
                const double w = (i == 0 || i + 1 == sq_or_abs.size()) ? 0.5 : 1.0;
                s += w * sq_or_abs[i] * sq_or_abs[i];
            }
            return std::sqrt(s * dt);
        }
        case GapMetric::Terminal:
            return sq_or_abs.back();
    }
    return 0.0;
}

}  // namespace

TrajectoryGap trajectory_gap(const Trajectory& a, const Trajectory& b, GapMetric metric,
                             double t_from) {
    a.check();
    b.check();
    require(std::abs(a.dt - b.dt) <= 1e-12 && std::abs(a.t0 - b.t0) <= 1e-12 &&
                a.states.size() == b.states.size() && a.controls.size() == b.controls.size(),
            "trajectory_gap: trajectories must share a grid");
    std::vector<double> ds, dc;
    for (std::size_t k = 0; k < a.states.size(); ++k) {
        if (a.time(k) < t_from - 1e-12) continue;
        ds.push_back((a.states[k] - b.states[k]).norm());
        if (k < a.controls.size()) dc.push_back((a.controls[k] - b.controls[k]).norm());
    }
    require(!ds.empty(), "trajectory_gap: no samples at or after t_from");
    TrajectoryGap gap;
    gap.state = combine(ds, metric, a.dt);
    gap.control = combine(dc, metric, a.dt);
    gap.total = gap.state + gap.control;
    return gap;
}

}  // namespace rmpc
