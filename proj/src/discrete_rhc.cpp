#include "rmpc/discrete_rhc.hpp"

#include <cmath>

#include "rmpc/parallel.hpp"

namespace rmpc {

void check_discrete_system(const DtLtiModel& model, const CostSpec& cost) {
    const Eigen::Index n = model.n();
    require(model.A.cols() == n && model.B.rows() == n, "discrete model: dimension mismatch");
    require(cost.C.cols() == n && cost.R.rows() == model.m(), "discrete cost: dimension mismatch");
    require(eig_min_sym(cost.R) > 0.0, "discrete cost: R must be positive definite");
    require(is_controllable(model.A, model.B), "discrete model: (A, B) must be controllable");
    require(is_observable(model.A, cost.C), "discrete model: (A, C) must be observable");
}

DtTrajectory run_discrete_rhc(const DtLtiModel& model, const CostSpec& cost, int horizon,
                              int tau, int total_steps, const Vector& x0) {
    check_discrete_system(model, cost);
    require(tau >= 1 && tau <= horizon, "run_discrete_rhc: need 1 <= tau <= T");
    require(total_steps >= 1, "run_discrete_rhc: need at least one step");
    require(x0.size() == model.n(), "run_discrete_rhc: initial state dimension mismatch");

    const std::vector<Matrix> qs = drde_iterate(model.A, model.B, cost, horizon);
    const Matrix x_in = input_weight(model.B, cost.R);
    Eigen::LLT<Matrix> llt(cost.R);
    const Matrix rinv_bt = llt.solve(model.B.transpose());
    const Matrix id = Matrix::Identity(model.n(), model.n());

    // Only the window indices s = T-1-(t mod tau) in [T-tau, T-1] are used.
    std::vector<Matrix> step_of(tau), gain_of(tau);
    for (int r = 0; r < tau; ++r) {
        const int s = horizon - 1 - r;
        const Matrix m_s = Eigen::PartialPivLU<Matrix>(Matrix(id + x_in * qs[s])).solve(id);
        step_of[r] = m_s * model.A;
        gain_of[r] = rinv_bt * (qs[s] * step_of[r]);
    }

    DtTrajectory traj;
    traj.states.reserve(total_steps + 1);
    traj.controls.reserve(total_steps);
    Vector x = x0;
    traj.states.push_back(x);
    for (int t = 0; t < total_steps; ++t) {
        const int r = t % tau;
        traj.controls.push_back(-gain_of[r] * x);
        x = (step_of[r] * x).eval();
        traj.states.push_back(x);
        if (!x.allFinite() || x.norm() > 1e12)
            throw InstabilityError("run_discrete_rhc: closed loop unstable", t + 1.0);
    }
    return traj;
}

std::vector<Vector> discrete_qp_control(const DtLtiModel& model, const CostSpec& cost,
                                        const Vector& x_bar, int horizon) {
    check_discrete_system(model, cost);
    require(horizon >= 1, "discrete_qp_control: horizon must be positive");
    require(x_bar.size() == model.n(), "discrete_qp_control: state dimension mismatch");
    const Eigen::Index m = model.m();
    const Eigen::Index n_vars = m * horizon;
    require(n_vars <= 5000, "discrete_qp_control: problem too large for the dense solve");

    const Matrix ctc = cost.C.transpose() * cost.C;
    Matrix h = Matrix::Zero(n_vars, n_vars);
    Vector g = Vector::Zero(n_vars);
    for (int t = 0; t < horizon; ++t) h.block(t * m, t * m, m, m) += cost.R;

    Matrix gt = Matrix::Zero(model.n(), n_vars);  // x_t as a map of the controls
    Vector ct = x_bar;
    for (int t = 1; t <= horizon; ++t) {
        gt = (model.A * gt).eval();
        gt.middleCols((t - 1) * m, m) += model.B;
        ct = (model.A * ct).eval();
        const Matrix& weight = (t == horizon) ? cost.E_T : ctc;
        h.noalias() += gt.transpose() * weight * gt;
        g.noalias() += gt.transpose() * (weight * ct);
    }

    Eigen::LDLT<Matrix> ldlt(h);
    if (ldlt.info() != Eigen::Success)
        throw SolverError("discrete_qp_control: normal equations not factorizable");
    const Vector u = ldlt.solve(-g);
    if (!u.allFinite())
        throw SolverError("discrete_qp_control: conditioning failure in the dense solve");

    std::vector<Vector> controls(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) controls[t] = u.segment(t * m, m);
    return controls;
}

double discrete_contraction_factor(const DareSolution& dare, const Matrix& e_t, int horizon,
                                   int tau) {
    require(tau >= 1 && tau <= horizon, "discrete_contraction_factor: need 1 <= tau <= T");
    const double k0 = drde_error_coeff(dare.Q, e_t, dare.M * dare.A, dare.B, dare.R);
    const double k1 = operator_norm(input_weight(dare.B, dare.R)) * k0;
    return dare.rho + k1 * std::pow(dare.rho, 2 * (horizon - tau) - 1);
}

DtTrajectory discrete_inf_horizon(const DareSolution& dare, const CostSpec& cost,
                                  const Vector& x0, int total_steps) {
    Eigen::LLT<Matrix> llt(cost.R);
    const Matrix step = dare.M * dare.A;
    const Matrix gain = llt.solve(dare.B.transpose()) * (dare.Q * step);
    DtTrajectory traj;
    traj.states.reserve(total_steps + 1);
    traj.controls.reserve(total_steps);
    Vector x = x0;
    traj.states.push_back(x);
    for (int t = 0; t < total_steps; ++t) {
        traj.controls.push_back(-gain * x);
        x = (step * x).eval();
        traj.states.push_back(x);
    }
    return traj;
}

double discrete_cost_infinite(const DtTrajectory& traj, const CostSpec& cost,
                              const DareSolution& dare) {
    double sum = 0.0;
    for (std::size_t t = 0; t < traj.controls.size(); ++t) {
        sum += (cost.C * traj.states[t]).squaredNorm() +
               traj.controls[t].dot(cost.R * traj.controls[t]);
    }
    const Vector& x_end = traj.states.back();
    return 0.5 * sum + 0.5 * x_end.dot(dare.Q * x_end);
}

DtConvergenceTable discrete_convergence_table(const DtLtiModel& model, const CostSpec& cost,
                                              const std::vector<int>& horizons, int tau,
                                              int total_steps, const Vector& x0, int threads) {
    require(!horizons.empty(), "discrete_convergence_table: empty horizon list");
    const DareSolution dare = solve_dare(model.A, model.B, cost);
    const DtTrajectory opt = discrete_inf_horizon(dare, cost, x0, total_steps);
    const double j_opt = discrete_cost_infinite(opt, cost, dare);

    DtConvergenceTable table;
    table.rho = dare.rho;
    table.rows.resize(horizons.size());
    parallel_for_index(horizons.size(), threads, [&](std::size_t i) {
        DtConvergenceRow row;
        row.horizon = horizons[i];
        try {
            row.theta = discrete_contraction_factor(dare, cost.E_T, horizons[i], tau);
        } catch (const SolverError& e) {
            row.note = e.what();
        }
        try {
            const DtTrajectory rhc =
                run_discrete_rhc(model, cost, horizons[i], tau, total_steps, x0);
            double gap = 0.0;
            for (std::size_t t = 0; t < rhc.states.size(); ++t) {
                double g = (rhc.states[t] - opt.states[t]).norm();
                if (t < rhc.controls.size())
                    g += (rhc.controls[t] - opt.controls[t]).norm();
                gap = std::max(gap, g);
            }
            row.traj_gap = gap;
            row.cost_gap = discrete_cost_infinite(rhc, cost, dare) - j_opt;
        } catch (const InstabilityError& e) {
            row.stable = false;
            row.note = e.what();
        }
        table.rows[i] = std::move(row);
    });

    std::vector<double> xs, gs;
    for (const auto& row : table.rows)
        if (row.stable && row.traj_gap > 0.0) {
            xs.push_back(static_cast<double>(row.horizon - tau));
            gs.push_back(row.traj_gap);
        }
    if (xs.size() >= 2) table.decay_fit = fit_exponential_decay(xs, gs);
    return table;
}

}  // namespace rmpc
