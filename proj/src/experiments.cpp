#include "rmpc/experiments.hpp"

#include <cmath>
#include <filesystem>

#include "rmpc/io.hpp"
#include "rmpc/parallel.hpp"

namespace rmpc {

namespace {

// Stiffness matrix k * tridiag(-1, 2, -1) with unit corner entries.
Matrix spring_chain(Eigen::Index n, double k) {
    Matrix m = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        m(i, i) = (i == 0 || i == n - 1) ? k : 2.0 * k;
        if (i > 0) m(i, i - 1) = -k;
        if (i + 1 < n) m(i, i + 1) = -k;
    }
    return m;
}

Vector ramp_positions(Eigen::Index n) {
    Vector q(n);
    for (Eigen::Index i = 0; i < n; ++i)
        q(i) = static_cast<double>(i) / 10.0 - 0.5;
    return q;
}

}  // namespace

ExampleSpec build_example1() {
    constexpr Eigen::Index nq = 11;
    const Matrix k = spring_chain(nq, 100.0);

    ExampleSpec ex;
    ex.name = "example1";
    ex.model.A = Matrix::Zero(2 * nq, 2 * nq);
    ex.model.A.topRightCorner(nq, nq) = Matrix::Identity(nq, nq);
    ex.model.A.bottomLeftCorner(nq, nq) = -k;
    ex.model.B = Matrix::Zero(2 * nq, 1);
    ex.model.B(nq, 0) = 1.0;
    ex.cost.C = Matrix::Zero(nq, 2 * nq);
    ex.cost.C.leftCols(nq) = 10.0 * Matrix::Identity(nq, nq);
    ex.cost.R = Matrix::Identity(1, 1);
    ex.cost.E_T = Matrix::Zero(2 * nq, 2 * nq);
    ex.y0 = Vector::Zero(2 * nq);
    ex.y0.head(nq) = ramp_positions(nq);
    ex.mu_low = 0.014;
    ex.mu_high = 0.016;
    return ex;
}

Plant build_example1_perturbed() {
    const ExampleSpec ex = build_example1();
    constexpr Eigen::Index nq = 11;
    Matrix a_tilde = ex.model.A;
    a_tilde.bottomRightCorner(nq, nq) = 0.3 * Matrix::Identity(nq, nq);
    return Plant::affine(ex.model, a_tilde, ex.model.B, PiecewiseConstantSignal::zero(2 * nq));
}

ExampleSpec build_example2() {
    constexpr Eigen::Index n = 11;
    ExampleSpec ex;
    ex.name = "example2";
    ex.model.A = -spring_chain(n, 100.0);
    ex.model.B = Matrix::Zero(n, 1);
    ex.model.B(0, 0) = 1.0;
    ex.cost.C = Matrix::Identity(n, n);
    ex.cost.R = Matrix::Identity(1, 1);
    ex.cost.E_T = Matrix::Zero(n, n);
    ex.y0 = ramp_positions(n);
    ex.mu_low = 0.29;
    ex.mu_high = 0.31;
    return ex;
}

Vector constant_disturbance(Eigen::Index n, Eigen::Index hot_index) {
    require(n > 0 && hot_index >= 0 && hot_index < n,
            "constant_disturbance: index out of range");
    Vector v = Vector::Zero(n);
    v(hot_index) = 1.0;
    return v;
}

Plant perturbed_plant(const ExampleSpec& ex, const Perturbation& pert) {
    if (pert.kind == Perturbation::Kind::Disturbance) {
        require(pert.w_bar.size() == ex.model.n(),
                "perturbed_plant: disturbance dimension mismatch");
        return Plant::affine(ex.model, ex.model.A, ex.model.B,
                             PiecewiseConstantSignal::constant(pert.w_bar));
    }
    Matrix a_tilde = ex.model.A;
    if (ex.name == "example1") {
        const Eigen::Index nq = ex.model.n() / 2;
        a_tilde.bottomRightCorner(nq, nq) += pert.amount * Matrix::Identity(nq, nq);
    } else {
        a_tilde += pert.amount * Matrix::Identity(ex.model.n(), ex.model.n());
    }
    return Plant::affine(ex.model, a_tilde, ex.model.B,
                         PiecewiseConstantSignal::zero(ex.model.n()));
}

namespace {

// Right-hand side of the mismatch convergence bound, maximized over the run.
// Bounds |y - z| + |u - v|; infinite when the mismatch eats the decay margin.
double mpc_gap_bound(const Trajectory& loop, const RiccatiSolution& sol, const LtiModel& model,
                     const CostSpec& cost, double T, double tau, double lipschitz,
                     double k_generic, double w_sup, double burn_in) {
    Eigen::LLT<Matrix> llt(cost.R);
    const Matrix rinv_bt = llt.solve(model.B.transpose());
    const double k2p = operator_norm(rinv_bt) * (sol.err_coeff + operator_norm(sol.P));
    const double k2 = sol.overshoot * (1.0 + k2p);
    const double denom = sol.decay_rate - k2 * lipschitz;
    if (denom <= 0.0) return std::numeric_limits<double>::infinity();

    const double l = lipschitz;
    const double horizon_factor =
        k_generic * std::exp(-2.0 * sol.decay_rate * (T - tau));
    const double window_factor =
        k_generic * tau * std::exp(k_generic * (l + 1.0) * tau) * (l + 1.0) / denom;

    double bound = 0.0;
    double l1 = 0.0;  // running integral of |y|
    for (std::size_t k = 0; k < loop.states.size(); ++k) {
        const double ynorm = loop.states[k].norm();
        if (k > 0)
            l1 += 0.5 * loop.dt * (ynorm + loop.states[k - 1].norm());
        if (loop.time(k) < burn_in - 1e-12) continue;
        const double b = horizon_factor * ((l + 1.0) / denom * l1 + ynorm) +
                         window_factor * (l * l1 + w_sup);
        bound = std::max(bound, b);
    }
    return bound;
}

}  // namespace

SweepTable sweep_rhc_horizon(const ExampleSpec& ex, double tau, const std::vector<double>& gaps,
                             const SweepConfig& cfg) {
    require(!gaps.empty(), "sweep_rhc_horizon: empty gap list");
    for (std::size_t i = 1; i < gaps.size(); ++i)
        require(gaps[i] > gaps[i - 1], "sweep_rhc_horizon: gaps must be increasing");

    const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-11, ex.care);
    const RdePath path = rde_integrate(ex.model, ex.cost, tau + gaps.back(), cfg.step);
    const Trajectory opt =
        simulate_inf_horizon(ex.model, ex.cost, sol, ex.y0, cfg.t_max, cfg.step);
    const double j_opt = cost_infinite(opt, ex.cost, sol, cfg.tail_tol).value;

    SweepTable table;
    table.name = ex.name + "-rhc-horizon";
    table.parameter_name = "gap";
    table.tau = tau;
    table.step = cfg.step;
    table.t_max = cfg.t_max;
    table.burn_in = tau;
    table.rows.resize(gaps.size());

    parallel_for_index(gaps.size(), cfg.threads, [&](std::size_t i) {
        SweepRow row;
        row.parameter = gaps[i];
        MpcConfig mc;
        mc.T = tau + gaps[i];
        mc.tau = tau;
        mc.step = cfg.step;
        mc.t_max = cfg.t_max;
        try {
            const MpcRun run = run_rhc(ex.model, ex.cost, mc, ex.y0, path);
            const TrajectoryGap gap = trajectory_gap(run.loop, opt, GapMetric::Linf, tau);
            row.err_state = gap.state;
            row.err_ctrl = gap.control;
            try {
                row.cost_gap =
                    cost_infinite(run.loop, ex.cost, sol, cfg.tail_tol).value - j_opt;
            } catch (const SolverError& e) {
                row.cost_gap = 0.0;  // tail not certifiable at this t_max
                row.note = e.what();
            }
            const RhcGapBounds b =
                rhc_gap_bounds(sol, ex.model, ex.cost, mc.T, tau, ex.y0.norm(), tau);
            row.bound_state = b.state;
            row.bound_ctrl = b.control;
            row.bound_cost = b.cost;
            row.mu_eff = rhc_decay_rate(sol, ex.model, ex.cost, mc.T, tau);
        } catch (const InstabilityError& e) {
            row.stable = false;
            row.note = e.what();
        }
        table.rows[i] = std::move(row);
    });

    std::vector<double> xs, es, cs, xc;
    for (const auto& row : table.rows) {
        if (!row.stable) continue;
        if (row.err_ctrl > 0.0) {
            xs.push_back(row.parameter);
            es.push_back(row.err_ctrl);
        }
        if (row.cost_gap > 1e-14) {
            xc.push_back(row.parameter);
            cs.push_back(row.cost_gap);
        }
    }
    if (xs.size() >= 2) table.err_fit = fit_exponential_decay(xs, es);
    if (xc.size() >= 2) table.cost_fit = fit_exponential_decay(xc, cs);
    return table;
}

SweepTable sweep_mpc_tau(const ExampleSpec& ex, double gap, const std::vector<double>& taus,
                         const Perturbation& pert, const SweepConfig& cfg) {
    require(!taus.empty(), "sweep_mpc_tau: empty tau list");
    for (std::size_t i = 1; i < taus.size(); ++i)
        require(taus[i] > taus[i - 1], "sweep_mpc_tau: taus must be increasing");
    require(taus.front() > 0.0, "sweep_mpc_tau: taus must be positive");

    const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-11, ex.care);
    const Plant plant = perturbed_plant(ex, pert);
    const RdePath path = rde_integrate(ex.model, ex.cost, gap + taus.back(), cfg.step);
    const Trajectory limit =
        mpc_limit_trajectory(plant, ex.model, ex.cost, sol, ex.y0, cfg.t_max, cfg.step);
    const double w_sup = plant.w.sup_norm(cfg.t_max);

    SweepTable table;
    table.name = ex.name + (pert.kind == Perturbation::Kind::Disturbance ? "-mpc-tau-w"
                                                                         : "-mpc-tau-shift");
    table.parameter_name = "tau";
    table.gap = gap;
    table.step = cfg.step;
    table.t_max = cfg.t_max;
    table.burn_in = taus.back();
    table.rows.resize(taus.size());

    parallel_for_index(taus.size(), cfg.threads, [&](std::size_t i) {
        SweepRow row;
        row.parameter = taus[i];
        MpcConfig mc;
        mc.T = gap + taus[i];
        mc.tau = taus[i];
        mc.step = cfg.step;
        mc.t_max = cfg.t_max;
        try {
            const MpcRun run = run_mpc(plant, ex.model, ex.cost, mc, ex.y0, path);
            // common burn-in (one largest window) so every row is compared
            // on the same grid section
            const TrajectoryGap gapv =
                trajectory_gap(run.loop, limit, GapMetric::Linf, taus.back());
            row.err_state = gapv.state;
            row.err_ctrl = gapv.control;
            row.mu_eff = mpc_decay_rate(sol, ex.model, ex.cost, mc.T, mc.tau, plant.lipschitz,
                                        cfg.k_generic);
            const double b = mpc_gap_bound(run.loop, sol, ex.model, ex.cost, mc.T, mc.tau,
                                           plant.lipschitz, cfg.k_generic, w_sup, taus.back());
            row.bound_state = b;
            row.bound_ctrl = b;
            row.bound_cost = 0.0;
        } catch (const InstabilityError& e) {
            row.stable = false;
            row.note = e.what();
        }
        table.rows[i] = std::move(row);
    });

    std::vector<double> xs, es;
    for (const auto& row : table.rows)
        if (row.stable) {
            xs.push_back(row.parameter);
            es.push_back(row.err_ctrl);
        }
    if (xs.size() >= 2) table.err_fit = fit_line(xs, es);
    return table;
}

namespace {

std::string fig_path(const FigureConfig& cfg, const std::string& name) {
    std::string dir = cfg.out_dir.empty() ? "." : cfg.out_dir;
    std::filesystem::create_directories(dir);
    if (dir.back() != '/') dir += '/';
    return dir + name;
}

// t, u_loop, u_ref[, v_ref] series for single-input panels
std::string write_control_panel(const std::string& path, const nlohmann::json& meta,
                                const Trajectory& loop,
                                const std::vector<const Trajectory*>& refs,
                                const std::vector<std::string>& ref_names, int decimation) {
    CsvFile csv(path, meta);
    std::vector<std::string> cols{"t", "u"};
    for (const auto& n : ref_names) cols.push_back(n);
    csv.columns(cols);
    for (std::size_t k = 0; k < loop.controls.size(); k += decimation) {
        std::vector<double> row{loop.time(k), loop.controls[k](0)};
        for (const Trajectory* r : refs) row.push_back(r->controls[k](0));
        csv.row(row);
    }
    return path;
}

std::string write_predictions(const std::string& path, const nlohmann::json& meta,
                              const MpcRun& run) {
    CsvFile csv(path, meta);
    csv.columns({"window", "t", "u_pred"});
    for (const auto& p : run.predictions)
        for (std::size_t k = 0; k < p.predicted.controls.size(); ++k)
            csv.row({static_cast<double>(p.window), p.predicted.time(k),
                     p.predicted.controls[k](0)});
    return path;
}

}  // namespace

std::vector<std::string> reproduce_figures(const std::string& which, const FigureConfig& cfg) {
    std::vector<std::string> written;
    const double h = cfg.step;

    if (which == "fig3") {
        const ExampleSpec ex = build_example1();
        const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-10, ex.care);
        const Trajectory opt =
            simulate_inf_horizon(ex.model, ex.cost, sol, ex.y0, cfg.t_max, h);
        const RdePath path = rde_integrate(ex.model, ex.cost, 4.5, h);
        const struct {
            const char* tag;
            double tau, gap;
            int stride;
        } panels[] = {{"a", 0.5, 0.0, 2}, {"b", 0.5, 1.0, 2}, {"c", 0.5, 4.0, 2},
                      {"d", 1.0 / 16.0, 4.0, 16}};
        for (const auto& p : panels) {
            MpcConfig mc;
            mc.T = p.tau + p.gap;
            mc.tau = p.tau;
            mc.step = h;
            mc.t_max = cfg.t_max;
            mc.prediction_stride = p.stride;
            mc.prediction_decimation = cfg.prediction_decimation;
            const MpcRun run = run_rhc(ex.model, ex.cost, mc, ex.y0, path);
            nlohmann::json meta{{"figure", "fig3"}, {"panel", p.tag},     {"tau", p.tau},
                                {"gap", p.gap},     {"step", h},          {"t_max", cfg.t_max},
                                {"example", ex.name}};
            written.push_back(write_control_panel(
                fig_path(cfg, std::string("fig3_") + p.tag + ".csv"), meta, run.loop, {&opt},
                {"u_inf"}, cfg.output_decimation));
            written.push_back(write_predictions(
                fig_path(cfg, std::string("fig3_") + p.tag + "_pred.csv"), meta, run));
        }
        return written;
    }

    if (which == "fig4") {
        const ExampleSpec ex = build_example1();
        const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-10, ex.care);
        const RdePath path = rde_integrate(ex.model, ex.cost, 4.5, h);
        const Vector w_bar = constant_disturbance(ex.model.n(), ex.model.n() - 1);

        const Plant plant_w = perturbed_plant(ex, Perturbation::disturbance(w_bar));
        const Trajectory ref_w = disturbed_inf_horizon(
            ex.model, ex.cost, sol, plant_w.w, ex.y0, cfg.t_max, h);
        const Trajectory lim_w =
            mpc_limit_trajectory(plant_w, ex.model, ex.cost, sol, ex.y0, cfg.t_max, h);

        const Plant plant_a = build_example1_perturbed();
        LtiModel true_model{*plant_a.A_true, ex.model.B};
        const RiccatiSolution sol_true = solve_care(true_model, ex.cost, 1e-10, ex.care);
        const Trajectory ref_a =
            simulate_inf_horizon(true_model, ex.cost, sol_true, ex.y0, cfg.t_max, h);
        const Trajectory lim_a =
            mpc_limit_trajectory(plant_a, ex.model, ex.cost, sol, ex.y0, cfg.t_max, h);

        const struct {
            const char* tag;
            double tau;
            bool disturbance;
        } panels[] = {{"w_tau_half", 0.5, true},
                      {"w_tau_16th", 1.0 / 16.0, true},
                      {"shift_tau_half", 0.5, false},
                      {"shift_tau_16th", 1.0 / 16.0, false}};
        for (const auto& p : panels) {
            MpcConfig mc;
            mc.T = p.tau + 4.0;
            mc.tau = p.tau;
            mc.step = h;
            mc.t_max = cfg.t_max;
            const Plant& plant = p.disturbance ? plant_w : plant_a;
            const Trajectory& ref = p.disturbance ? ref_w : ref_a;
            const Trajectory& lim = p.disturbance ? lim_w : lim_a;
            const MpcRun run = run_mpc(plant, ex.model, ex.cost, mc, ex.y0, path);
            nlohmann::json meta{{"figure", "fig4"},
                                {"panel", p.tag},
                                {"tau", p.tau},
                                {"gap", 4.0},
                                {"step", h},
                                {"t_max", cfg.t_max},
                                {"example", ex.name}};
            written.push_back(write_control_panel(
                fig_path(cfg, std::string("fig4_") + p.tag + ".csv"), meta, run.loop,
                {&ref, &lim}, {"u_inf", "v_inf"}, cfg.output_decimation));
        }
        return written;
    }

    if (which == "fig5") {
        const ExampleSpec ex = build_example2();
        SweepConfig sc;
        sc.step = h;  // must divide every tau in the grids, 1/1600 does
        sc.t_max = cfg.horizon_sweep_t_max;
        sc.threads = cfg.threads;

        const SweepTable rhc = sweep_rhc_horizon(ex, 0.5, {1.0, 2.0, 3.0, 4.0}, sc);
        sc.t_max = cfg.tau_sweep_t_max;
        const std::vector<double> taus{1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0 / 2.0};
        const SweepTable mpc_w = sweep_mpc_tau(
            ex, 4.0, taus,
            Perturbation::disturbance(constant_disturbance(ex.model.n(), ex.model.n() - 1)), sc);
        const SweepTable mpc_a = sweep_mpc_tau(ex, 4.0, taus, Perturbation::matrix_shift(0.3), sc);

        for (const auto* t : {&rhc, &mpc_w, &mpc_a}) {
            nlohmann::json meta{{"figure", "fig5"}, {"sweep", t->name},   {"step", sc.step},
                                {"t_max", t->t_max}, {"example", ex.name}};
            written.push_back(write_sweep_csv(fig_path(cfg, "fig5_" + t->name + ".csv"), *t,
                                              meta));
            const std::string jpath = fig_path(cfg, "fig5_" + t->name + "_fit.json");
            nlohmann::json fit = sweep_fit_summary(*t);
            fit["version"] = kVersion;
            fit["config"] = meta;
            write_json_file(jpath, fit);
            written.push_back(jpath);
        }
        return written;
    }

    throw ConfigError("reproduce_figures: unknown figure '" + which +
                      "' (expected fig3, fig4 or fig5)");
}

}  // namespace rmpc
