#include "rmpc/riccati.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace rmpc {

void check_system(const LtiModel& model, const CostSpec& cost) {
    const Eigen::Index n = model.n();
    const Eigen::Index m = model.m();
    require(model.A.rows() == n && model.A.cols() == n, "model: A must be square");
    require(model.B.rows() == n, "model: B row count must match A");
    require(all_finite(model.A) && all_finite(model.B), "model: non-finite entries");
    require(cost.C.cols() == n, "cost: C column count must match the state dimension");
    require(cost.R.rows() == m && cost.R.cols() == m, "cost: R must be m x m");
    require(cost.E_T.rows() == n && cost.E_T.cols() == n, "cost: E_T must be n x n");
    require(cost.R.isApprox(cost.R.transpose(), 1e-12), "cost: R must be symmetric");
    require(eig_min_sym(cost.R) > 0.0, "cost: R must be positive definite");
    require(cost.E_T.isApprox(cost.E_T.transpose(), 1e-12), "cost: E_T must be symmetric");
    require(eig_min_sym(cost.E_T) >= -1e-12 * (1.0 + operator_norm(cost.E_T)),
            "cost: E_T must be positive semi-definite");
    require(is_controllable(model.A, model.B), "model: (A, B) must be controllable");
    require(is_observable(model.A, cost.C), "cost: (A, C) must be observable");
}

Matrix input_weight(const Matrix& b, const Matrix& r) {
    Eigen::LLT<Matrix> llt(r);
    require(llt.info() == Eigen::Success, "input_weight: R must be positive definite");
    return b * llt.solve(b.transpose());
}

namespace {

// Riccati flow derivative A^T P + P A - P X P + Q0 without heap churn.
struct RiccatiFlow {
    const Matrix &a, &x, &q0;
    Matrix tmp;

    explicit RiccatiFlow(const Matrix& a, const Matrix& x, const Matrix& q0)
        : a(a), x(x), q0(q0), tmp(a.rows(), a.cols()) {}

    void eval(const Matrix& p, Matrix& out) {
        out.noalias() = a.transpose() * p;
        out.noalias() += p * a;
        tmp.noalias() = x * p;
        out.noalias() -= p * tmp;
        out += q0;
    }
};

// One RK4 step of the flow; k1..k4 and stage are caller-owned scratch.
void rk4_matrix_step(RiccatiFlow& flow, Matrix& p, double h, Matrix& k1, Matrix& k2, Matrix& k3,
                     Matrix& k4, Matrix& stage) {
    flow.eval(p, k1);
    stage = p + (0.5 * h) * k1;
    flow.eval(stage, k2);
    stage = p + (0.5 * h) * k2;
    flow.eval(stage, k3);
    stage = p + h * k3;
    flow.eval(stage, k4);
    p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    symmetrize(p);
}

double care_residual_norm(const Matrix& a, const Matrix& x, const Matrix& q0, const Matrix& p) {
    Matrix res = a.transpose() * p + p * a - p * x * p + q0;
    return operator_norm(res);
}

}  // namespace

RdePath rde_integrate(const LtiModel& model, const CostSpec& cost, double duration, double step,
                      const RdeOptions& opts) {
    check_system(model, cost);
    require(duration > 0.0 && step > 0.0, "rde_integrate: duration and step must be positive");
    const double a_norm = operator_norm(model.A);
    require(step <= opts.step_guard / (1.0 + a_norm),
            "rde_integrate: step exceeds the stability guard, reduce step");

    const Matrix x = input_weight(model.B, cost.R);
    const Matrix q0 = cost.C.transpose() * cost.C;
    RiccatiFlow flow(model.A, x, q0);

    const auto steps = static_cast<std::size_t>(std::llround(duration / step));
    RdePath path;
    path.t0 = 0.0;
    path.dt = step;
    path.values.reserve(steps + 1);

    Matrix p = cost.E_T;
    Matrix k1, k2, k3, k4, stage;
    path.values.push_back(p);
    for (std::size_t k = 0; k < steps; ++k) {
        rk4_matrix_step(flow, p, step, k1, k2, k3, k4, stage);
        if (!p.allFinite() || p.norm() > opts.blowup)
            throw SolverError("rde_integrate: solution blew up at t = " +
                              std::to_string((k + 1) * step));
        path.values.push_back(p);
    }
    return path;
}

RiccatiSolution solve_care(const LtiModel& model, const CostSpec& cost, double tol,
                           const CareOptions& opts) {
    check_system(model, cost);
    require(tol > 0.0, "solve_care: tol must be positive");
    const double a_norm = operator_norm(model.A);
    require(opts.step <= opts.step_guard / (1.0 + a_norm),
            "solve_care: step exceeds the stability guard, reduce step");

    const Matrix x = input_weight(model.B, cost.R);
    const Matrix q0 = cost.C.transpose() * cost.C;
    const double q0_norm = operator_norm(q0);
    const double stationary_tol = std::sqrt(tol * std::max(q0_norm, 1e-300));

    // Phase 1: march the Riccati flow until the change across one probe
    // interval drops below sqrt(tol), or (when allowed) hand off as soon as
    // the iterate closes a verified-stable loop.
    RiccatiFlow flow(model.A, x, q0);
    Matrix p = cost.E_T;
    Matrix k1, k2, k3, k4, stage;
    double t = 0.0;
    const auto probe_every =
        static_cast<std::size_t>(std::max(1.0, std::round(opts.probe_interval / opts.step)));
    bool done = opts.allow_early_newton && transition_decays(model.A - x * cost.E_T);
    Matrix p_probe = p;
    std::size_t k = 0;
    while (!done) {
        rk4_matrix_step(flow, p, opts.step, k1, k2, k3, k4, stage);
        t += opts.step;
        ++k;
        if (!p.allFinite() || p.norm() > 1e12)
            throw SolverError("solve_care: Riccati flow blew up (assumptions violated?)");
        if (k % probe_every == 0) {
            if (operator_norm(p - p_probe) <= stationary_tol) break;
            p_probe = p;
            if (opts.allow_early_newton) done = transition_decays(model.A - x * p);
        }
        if (t >= opts.phase1_max_time)
            throw SolverError("solve_care: phase 1 hit the time cap before going stationary");
    }

    RiccatiSolution sol;
    sol.phase1_P = p;
    sol.phase1_time = t;

    // Phase 2: Newton steps P <- P + D with A_k^T D + D A_k = -residual(P).
    double best = std::numeric_limits<double>::infinity();
    int no_improve = 0;
    int it = 0;
    for (; it < opts.max_newton; ++it) {
        Matrix res = model.A.transpose() * p + p * model.A - p * x * p + q0;
        const double res_norm = operator_norm(res);
        if (res_norm <= tol * std::max(q0_norm, 1e-300)) break;
        if (res_norm < best) {
            best = res_norm;
            no_improve = 0;
        } else if (++no_improve >= 8) {
            throw SolverError("solve_care: Newton refinement stagnated at residual " +
                              std::to_string(res_norm));
        }
        const Matrix a_k = model.A - x * p;
        Matrix d = solve_lyapunov(a_k.transpose(), res);
        p += d;
        symmetrize(p);
    }
    if (it == opts.max_newton)
        throw SolverError("solve_care: residual not below tolerance in " +
                          std::to_string(opts.max_newton) + " Newton iterations");
    sol.newton_iterations = it;
    sol.P = p;
    sol.A_cl = model.A - x * p;
    sol.residual = care_residual_norm(model.A, x, q0, p);

    if (eig_min_sym(p) <= 0.0)
        throw SolverError("solve_care: computed solution is not positive definite");

    // Decay envelope on a window wide enough that the transition norm has
    // genuinely decayed, not merely dipped below one.
    double window = opts.envelope_window;
    constexpr int kMaxDoublings = 12;
    int d = 0;
    for (; d < kMaxDoublings; ++d) {
        const double tail = operator_norm(mat_exp(sol.A_cl, window));
        if (tail < opts.envelope_decay_target) break;
        window *= 2.0;
    }
    if (d == kMaxDoublings)
        throw SolverError("solve_care: closed loop does not decay on any probe window");
    const DecayEnvelope env =
        estimate_decay_envelope(sol.A_cl, window, opts.envelope_samples, opts.envelope_safety);
    sol.overshoot = env.overshoot;
    sol.decay_rate = env.rate;
    sol.envelope_window = window;

    sol.grammian = closed_loop_grammian(sol.A_cl, model.B, cost.R, std::max(tol, 1e-10));
    sol.err_coeff = rde_error_coeff(sol.P, cost.E_T, sol.overshoot, sol.grammian);
    return sol;
}

Matrix closed_loop_grammian(const Matrix& a_cl, const Matrix& b, const Matrix& r, double tol) {
    const Matrix x = input_weight(b, r);
    Matrix w = solve_lyapunov(a_cl, x);
    const double res = operator_norm(Matrix(a_cl * w + w * a_cl.transpose() + x));
    if (res > tol * (1.0 + operator_norm(x)))
        throw SolverError("closed_loop_grammian: Lyapunov residual " + std::to_string(res));
    return w;
}

double rde_error_coeff(const Matrix& p, const Matrix& e_t, double overshoot, const Matrix& w) {
    const Matrix d = p - e_t;
    const double d_norm = operator_norm(d);
    if (d_norm <= 1e-10 * (1.0 + operator_norm(p))) return 0.0;

    const Eigen::Index n = p.rows();
    const Matrix shift = Matrix::Identity(n, n) - w * d;
    Eigen::PartialPivLU<Matrix> lu(shift);
    const Vector& diag = lu.matrixLU().diagonal();
    if (diag.cwiseAbs().minCoeff() <= 1e-12 * diag.cwiseAbs().maxCoeff())
        throw SolverError("rde_error_coeff: I - W(P - E_T) is singular; E_T must stay below P");
    // ||D (I - W D)^{-1}|| = ||(I - D W)^{-1} D|| via the transpose.
    const Matrix s_inf = lu.solve(d.transpose()).transpose();
    return overshoot * overshoot * std::max(d_norm, operator_norm(s_inf));
}

ConvergenceReport verify_rde_convergence(const RdePath& path, const RiccatiSolution& sol,
                                         double slack) {
    require(!path.values.empty(), "verify_rde_convergence: empty path");
    ConvergenceReport rep;
    const double floor = 1e-13 * (1.0 + operator_norm(sol.P));
    std::vector<double> ts, errs;
    ts.reserve(path.size());
    errs.reserve(path.size());
    for (std::size_t k = 0; k < path.size(); ++k) {
        const double t = path.time(k);
        const double err = operator_norm(path.values[k] - sol.P);
        const double bound = sol.err_coeff * std::exp(-2.0 * sol.decay_rate * t) + slack;
        const double ratio = err / bound;
        if (ratio > rep.max_ratio) rep.max_ratio = ratio;
        if (ratio > 1.0 && rep.first_violation_t < 0.0) {
            rep.first_violation_t = t;
            rep.ok = false;
        }
        if (err > floor) {
            ts.push_back(t);
            errs.push_back(err);
        }
    }
    rep.points_fitted = ts.size();
    if (ts.size() >= 2) rep.fitted_rate = fit_exponential_decay(ts, errs).slope;
    return rep;
}

std::vector<Matrix> drde_iterate(const Matrix& a, const Matrix& b, const CostSpec& cost,
                                 int steps, bool woodbury) {
    const Eigen::Index n = a.rows();
    require(a.cols() == n && b.rows() == n, "drde_iterate: dimension mismatch");
    require(steps >= 0, "drde_iterate: steps must be non-negative");
    const Matrix x = input_weight(b, cost.R);
    const Matrix q0 = cost.C.transpose() * cost.C;
    const Matrix id = Matrix::Identity(n, n);

    std::vector<Matrix> qs;
    qs.reserve(static_cast<std::size_t>(steps) + 1);
    Matrix q = cost.E_T;
    qs.push_back(q);
    for (int k = 0; k < steps; ++k) {
        Matrix next;
        if (!woodbury) {
            Eigen::PartialPivLU<Matrix> lu(Matrix(id + x * q));
            const Vector& diag = lu.matrixLU().diagonal();
            if (diag.cwiseAbs().minCoeff() <= 1e-12 * diag.cwiseAbs().maxCoeff())
                throw SolverError("drde_iterate: I + B R^{-1} B^T Q singular; "
                                  "PSD invariant violated");
            next = a.transpose() * q * lu.solve(a) + q0;
        } else {
            const Matrix btq = b.transpose() * q;
            const Matrix inner = cost.R + btq * b;
            Eigen::LLT<Matrix> llt(inner);
            if (llt.info() != Eigen::Success)
                throw SolverError("drde_iterate: R + B^T Q B not positive definite");
            const Matrix qa = q * a;
            next = a.transpose() * qa - (btq * a).transpose() * llt.solve(btq * a) + q0;
        }
        symmetrize(next);
        q = std::move(next);
        qs.push_back(q);
    }
    return qs;
}

DareSolution solve_dare(const Matrix& a, const Matrix& b, const CostSpec& cost, double tol,
                        int max_iterations) {
    const Eigen::Index n = a.rows();
    require(is_controllable(a, b), "solve_dare: (A, B) must be controllable");
    require(is_observable(a, cost.C), "solve_dare: (A, C) must be observable");
    const Matrix x = input_weight(b, cost.R);
    const Matrix q0 = cost.C.transpose() * cost.C;
    const Matrix id = Matrix::Identity(n, n);

    Matrix q = cost.E_T;
    int it = 0;
    for (; it < max_iterations; ++it) {
        Eigen::PartialPivLU<Matrix> lu(Matrix(id + x * q));
        Matrix next = a.transpose() * q * lu.solve(a) + q0;
        symmetrize(next);
        const double change = operator_norm(next - q);
        q = std::move(next);
        if (change <= tol) break;
    }
    if (it == max_iterations)
        throw SolverError("solve_dare: no convergence in " + std::to_string(max_iterations) +
                          " iterations");

    DareSolution sol;
    sol.Q = q;
    sol.M = Eigen::PartialPivLU<Matrix>(Matrix(id + x * q)).solve(id);
    sol.rho = operator_norm(sol.M * a);
    sol.iterations = it + 1;
    sol.A = a;
    sol.B = b;
    sol.R = cost.R;
    if (sol.rho >= 1.0)
        throw SolverError("solve_dare: closed-loop contraction factor is not below one");
    return sol;
}

double drde_error_coeff(const Matrix& q, const Matrix& e_t, const Matrix& closed_loop_ma,
                        const Matrix& b, const Matrix& r, double tol) {
    const Matrix d = q - e_t;
    if (eig_min_sym(d) <= 0.0)
        throw SolverError("drde_error_coeff: E_T must be strictly below the steady solution");

    const Matrix x = input_weight(b, r);
    const double x_norm = operator_norm(x);
    Matrix w = Matrix::Zero(q.rows(), q.cols());
    Matrix g_pow = Matrix::Identity(q.rows(), q.cols());
    constexpr int kMaxTerms = 100000;
    int t = 0;
    for (; t < kMaxTerms; ++t) {
        const Matrix term = g_pow * x * g_pow.transpose();
        w += term;
        if (operator_norm(term) <= tol && t > 0) break;
        g_pow = (closed_loop_ma * g_pow).eval();
        if (operator_norm(g_pow) * operator_norm(g_pow) * x_norm <= tol) break;
    }
    if (t == kMaxTerms)
        throw SolverError("drde_error_coeff: Grammian series did not settle (||MA|| >= 1?)");
    symmetrize(w);

    const Matrix gap = d.inverse() - w;
    const double lambda = eig_min_sym(Matrix(0.5 * (gap + gap.transpose())));
    if (lambda <= 0.0)
        throw SolverError("drde_error_coeff: (Q - E_T)^{-1} - W is not positive definite; "
                          "bound unavailable for this instance");
    return 1.0 / lambda;
}

}  // namespace rmpc
