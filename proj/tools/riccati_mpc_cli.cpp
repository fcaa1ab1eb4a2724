// Command-line front end: solve the steady Riccati problems, simulate the
// closed loops, run the parameter sweeps and emit the figure datasets.
// Exit codes: 0 ok, 1 configuration error, 2 solver failure, 3 instability.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>

#include "rmpc/discrete_rhc.hpp"
#include "rmpc/experiments.hpp"
#include "rmpc/io.hpp"
#include "rmpc/parallel.hpp"

namespace {

using nlohmann::json;
using namespace rmpc;

void validate_keys(const json& j, const std::set<std::string>& allowed,
                   const std::string& context) {
    if (!j.is_object()) throw ConfigError("config: " + context + " must be an object");
    for (const auto& item : j.items())
        if (!allowed.count(item.key()))
            throw ConfigError("config: unknown key '" + item.key() + "' in " + context);
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    return j;
}

double num(const json& j, const std::string& key, double fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number()) throw ConfigError("config: '" + key + "' must be a number");
    return j[key].get<double>();
}

struct ResolvedSystem {
    ExampleSpec ex;
    bool from_example = false;
};

ResolvedSystem resolve_system(const json& cfg) {
    ResolvedSystem out;
    if (cfg.contains("example")) {
        const std::string name = cfg["example"].get<std::string>();
        if (name == "example1")
            out.ex = build_example1();
        else if (name == "example2")
            out.ex = build_example2();
        else
            throw ConfigError("config: unknown example '" + name + "'");
        out.from_example = true;
        return out;
    }
    if (!cfg.contains("model") || !cfg.contains("cost"))
        throw ConfigError("config: need either 'example' or 'model' plus 'cost'");
    validate_keys(cfg["model"], {"A", "B"}, "model");
    validate_keys(cfg["cost"], {"C", "R", "E_T"}, "cost");
    out.ex.name = "custom";
    out.ex.model.A = matrix_from_json(cfg["model"].at("A"), "model.A");
    out.ex.model.B = matrix_from_json(cfg["model"].at("B"), "model.B");
    out.ex.cost.C = matrix_from_json(cfg["cost"].at("C"), "cost.C");
    out.ex.cost.R = matrix_from_json(cfg["cost"].at("R"), "cost.R");
    if (cfg["cost"].contains("E_T"))
        out.ex.cost.E_T = matrix_from_json(cfg["cost"]["E_T"], "cost.E_T");
    else
        out.ex.cost.E_T = Matrix::Zero(out.ex.model.n(), out.ex.model.n());
    if (cfg.contains("y0"))
        out.ex.y0 = vector_from_json(cfg["y0"], "y0");
    else
        out.ex.y0 = Vector::Zero(out.ex.model.n());
    return out;
}

Perturbation resolve_perturbation(const json& p, const ExampleSpec& ex) {
    validate_keys(p, {"type", "hot_index", "scale", "amount"}, "perturbation");
    const std::string type = p.at("type").get<std::string>();
    if (type == "disturbance") {
        const auto hot = p.value("hot_index", static_cast<int>(ex.model.n()) - 1);
        Vector w = constant_disturbance(ex.model.n(), hot);
        w *= p.value("scale", 1.0);
        return Perturbation::disturbance(std::move(w));
    }
    if (type == "matrix") return Perturbation::matrix_shift(p.value("amount", 0.3));
    throw ConfigError("config: perturbation type must be 'disturbance' or 'matrix'");
}

std::string out_path(const json& cfg, const std::string& file) {
    std::string dir = cfg.value("out", ".");
    std::filesystem::create_directories(dir);
    if (!dir.empty() && dir.back() != '/') dir += '/';
    return dir + file;
}

json echo_config(const json& cfg) {
    json j = cfg;
    j["version"] = kVersion;
    return j;
}

int cmd_solve_are(const json& cfg) {
    validate_keys(cfg, {"example", "model", "cost", "y0", "tolerances", "out", "step",
                        "parallel"},
                  "solve-are config");
    if (cfg.contains("tolerances"))
        validate_keys(cfg["tolerances"], {"care", "dare"}, "tolerances");
    ResolvedSystem sys = resolve_system(cfg);
    const double tol =
        cfg.contains("tolerances") ? num(cfg["tolerances"], "care", 1e-10) : 1e-10;
    CareOptions opts = sys.ex.care;
    opts.step = num(cfg, "step", opts.step);
    const RiccatiSolution sol = solve_care(sys.ex.model, sys.ex.cost, tol, opts);

    json out;
    out["P"] = matrix_to_json(sol.P);
    out["A_inf"] = matrix_to_json(sol.A_cl);
    out["mu_inf"] = sol.decay_rate;
    out["M_inf"] = sol.overshoot;
    out["K0"] = sol.err_coeff;
    out["are_residual"] = sol.residual;
    out["newton_iterations"] = sol.newton_iterations;
    out["version"] = kVersion;
    out["config"] = cfg;
    const std::string path = out_path(cfg, "solve_are.json");
    write_json_file(path, out);
    std::cout << path << "\n";
    return 0;
}

int cmd_solve_dare(const json& cfg) {
    validate_keys(cfg, {"model", "cost", "tolerances", "out", "parallel"}, "solve-dare config");
    if (cfg.contains("tolerances"))
        validate_keys(cfg["tolerances"], {"care", "dare"}, "tolerances");
    ResolvedSystem sys = resolve_system(cfg);
    const double tol =
        cfg.contains("tolerances") ? num(cfg["tolerances"], "dare", 1e-13) : 1e-13;
    const DareSolution sol = solve_dare(sys.ex.model.A, sys.ex.model.B, sys.ex.cost, tol);

    json out;
    out["Q"] = matrix_to_json(sol.Q);
    out["rho"] = sol.rho;
    out["iterations"] = sol.iterations;
    try {
        out["K0"] = drde_error_coeff(sol.Q, sys.ex.cost.E_T, sol.M * sol.A, sol.B, sol.R);
    } catch (const SolverError& e) {
        out["K0"] = nullptr;
        out["K0_note"] = e.what();
    }
    out["version"] = kVersion;
    out["config"] = cfg;
    const std::string path = out_path(cfg, "solve_dare.json");
    write_json_file(path, out);
    std::cout << path << "\n";
    return 0;
}

int cmd_simulate(const json& cfg) {
    validate_keys(cfg,
                  {"example", "model", "cost", "y0", "mode", "T", "tau", "step", "t_max",
                   "perturbation", "reference", "out", "parallel", "prediction_stride",
                   "prediction_decimation", "tolerances"},
                  "simulate config");
    ResolvedSystem sys = resolve_system(cfg);
    const std::string mode = cfg.value("mode", "rhc");
    const double step = num(cfg, "step", 1e-3);
    const double t_max = num(cfg, "t_max", 20.0);
    const RiccatiSolution sol = solve_care(sys.ex.model, sys.ex.cost, 1e-10, sys.ex.care);

    Plant plant = Plant::exact(sys.ex.model);
    if (cfg.contains("perturbation"))
        plant = perturbed_plant(sys.ex, resolve_perturbation(cfg["perturbation"], sys.ex));

    Trajectory traj;
    std::vector<ExtraSeries> extra;
    if (mode == "inf") {
        traj = simulate_inf_horizon(sys.ex.model, sys.ex.cost, sol, sys.ex.y0, t_max, step);
    } else if (mode == "limit") {
        traj = mpc_limit_trajectory(plant, sys.ex.model, sys.ex.cost, sol, sys.ex.y0, t_max,
                                    step);
    } else if (mode == "disturbed-inf") {
        traj = disturbed_inf_horizon(sys.ex.model, sys.ex.cost, sol, plant.w, sys.ex.y0, t_max,
                                     step);
    } else if (mode == "rhc" || mode == "mpc") {
        MpcConfig mc;
        mc.T = num(cfg, "T", 4.5);
        mc.tau = num(cfg, "tau", 0.5);
        mc.step = step;
        mc.t_max = t_max;
        mc.prediction_stride = cfg.value("prediction_stride", 0);
        mc.prediction_decimation = cfg.value("prediction_decimation", 1);
        const MpcRun run = (mode == "rhc")
                               ? run_rhc(sys.ex.model, sys.ex.cost, mc, sys.ex.y0)
                               : run_mpc(plant, sys.ex.model, sys.ex.cost, mc, sys.ex.y0);
        traj = run.loop;
    } else {
        throw ConfigError("config: unknown mode '" + mode + "'");
    }

    const std::string reference = cfg.value("reference", "none");
    if (reference == "infinite") {
        const Trajectory ref =
            simulate_inf_horizon(sys.ex.model, sys.ex.cost, sol, sys.ex.y0, t_max, step);
        ExtraSeries gap_state{"gap_state", {}}, gap_ctrl{"gap_ctrl", {}};
        std::vector<ExtraSeries> refs;
        for (Eigen::Index i = 0; i < sys.ex.model.m(); ++i)
            refs.push_back({"u_ref_" + std::to_string(i + 1), {}});
        for (std::size_t k = 0; k < traj.states.size(); ++k) {
            const std::size_t kc = std::min(k, traj.controls.size() - 1);
            for (Eigen::Index i = 0; i < sys.ex.model.m(); ++i)
                refs[i].values.push_back(ref.controls[kc](i));
            gap_state.values.push_back((traj.states[k] - ref.states[k]).norm());
            gap_ctrl.values.push_back((traj.controls[kc] - ref.controls[kc]).norm());
        }
        for (auto& r : refs) extra.push_back(std::move(r));
        extra.push_back(std::move(gap_state));
        extra.push_back(std::move(gap_ctrl));
    } else if (reference != "none") {
        throw ConfigError("config: reference must be 'none' or 'infinite'");
    }

    const std::string path = out_path(cfg, "simulate_" + mode + ".csv");
    write_trajectory_csv(path, traj, echo_config(cfg), extra);
    std::cout << path << "\n";
    return 0;
}

int cmd_sweep(const json& cfg, int threads) {
    validate_keys(cfg,
                  {"example", "model", "cost", "y0", "kind", "tau", "gaps", "gap", "taus",
                   "perturbation", "step", "t_max", "out", "parallel", "k_generic",
                   "tolerances"},
                  "sweep config");
    ResolvedSystem sys = resolve_system(cfg);
    const std::string kind = cfg.value("kind", "rhc-horizon");
    SweepConfig sc;
    sc.step = num(cfg, "step", 1e-3);
    sc.t_max = num(cfg, "t_max", 40.0);
    sc.k_generic = num(cfg, "k_generic", 1.0);
    sc.threads = threads;

    SweepTable table;
    if (kind == "rhc-horizon") {
        if (!cfg.contains("gaps") || !cfg["gaps"].is_array() || cfg["gaps"].empty())
            throw ConfigError("config: 'gaps' must be a non-empty array");
        std::vector<double> gaps;
        for (const auto& g : cfg["gaps"]) gaps.push_back(g.get<double>());
        table = sweep_rhc_horizon(sys.ex, num(cfg, "tau", 0.5), gaps, sc);
    } else if (kind == "mpc-tau") {
        if (!cfg.contains("taus") || !cfg["taus"].is_array() || cfg["taus"].empty())
            throw ConfigError("config: 'taus' must be a non-empty array");
        std::vector<double> taus;
        for (const auto& t : cfg["taus"]) taus.push_back(t.get<double>());
        if (!cfg.contains("perturbation"))
            throw ConfigError("config: mpc-tau sweep needs a 'perturbation'");
        const Perturbation pert = resolve_perturbation(cfg["perturbation"], sys.ex);
        table = sweep_mpc_tau(sys.ex, num(cfg, "gap", 4.0), taus, pert, sc);
    } else {
        throw ConfigError("config: sweep kind must be 'rhc-horizon' or 'mpc-tau'");
    }

    const std::string csv = write_sweep_csv(out_path(cfg, "sweep_" + table.name + ".csv"),
                                            table, echo_config(cfg));
    json fit = sweep_fit_summary(table);
    fit["version"] = kVersion;
    fit["config"] = cfg;
    const std::string jpath = out_path(cfg, "sweep_" + table.name + "_fit.json");
    write_json_file(jpath, fit);
    std::cout << csv << "\n" << jpath << "\n";
    return 0;
}

int cmd_reproduce_figures(const json& cfg, const std::string& preset, int threads) {
    validate_keys(cfg, {"figures", "out", "step", "t_max", "parallel"},
                  "reproduce-figures config");
    std::vector<std::string> figures;
    if (!preset.empty()) figures.push_back(preset);
    if (cfg.contains("figures"))
        for (const auto& f : cfg["figures"]) figures.push_back(f.get<std::string>());
    if (figures.empty())
        throw ConfigError("config: no figures requested (use --preset or 'figures')");

    FigureConfig fc;
    fc.out_dir = cfg.value("out", ".");
    std::filesystem::create_directories(fc.out_dir);
    fc.step = num(cfg, "step", fc.step);
    fc.t_max = num(cfg, "t_max", fc.t_max);
    fc.threads = threads;
    for (const auto& f : figures)
        for (const auto& path : reproduce_figures(f, fc)) std::cout << path << "\n";
    return 0;
}

int cmd_dt_rhc(const json& cfg, int threads) {
    validate_keys(cfg, {"model", "cost", "T", "T_list", "tau", "N", "x0", "out", "parallel"},
                  "dt-rhc config");
    if (!cfg.contains("model")) throw ConfigError("config: dt-rhc needs 'model'");
    ResolvedSystem sys = resolve_system(cfg);
    DtLtiModel model{sys.ex.model.A, sys.ex.model.B};
    const int tau = cfg.value("tau", 1);
    const Vector x0 = cfg.contains("x0") ? vector_from_json(cfg["x0"], "x0") : sys.ex.y0;

    if (cfg.contains("T_list")) {
        std::vector<int> horizons;
        for (const auto& t : cfg["T_list"]) horizons.push_back(t.get<int>());
        const int n_steps = cfg.value("N", 3 * (horizons.empty() ? 1 : horizons.back()));
        const DtConvergenceTable table =
            discrete_convergence_table(model, sys.ex.cost, horizons, tau, n_steps, x0, threads);
        CsvFile csv(out_path(cfg, "dt_rhc_table.csv"), echo_config(cfg));
        csv.columns({"T", "stable", "traj_gap", "cost_gap", "theta"});
        for (const auto& r : table.rows)
            csv.row({static_cast<double>(r.horizon), r.stable ? 1.0 : 0.0, r.traj_gap,
                     r.cost_gap, r.theta});
        std::cout << csv.path() << "\n";
        return 0;
    }

    const int horizon = cfg.value("T", 4);
    const int n_steps = cfg.value("N", 3 * horizon);
    const DtTrajectory traj = run_discrete_rhc(model, sys.ex.cost, horizon, tau, n_steps, x0);
    CsvFile csv(out_path(cfg, "dt_rhc_run.csv"), echo_config(cfg));
    std::vector<std::string> cols{"t"};
    for (Eigen::Index i = 0; i < model.n(); ++i) cols.push_back("x_" + std::to_string(i + 1));
    for (Eigen::Index i = 0; i < model.m(); ++i) cols.push_back("u_" + std::to_string(i + 1));
    csv.columns(cols);
    for (std::size_t t = 0; t < traj.states.size(); ++t) {
        std::vector<double> row{static_cast<double>(t)};
        for (Eigen::Index i = 0; i < model.n(); ++i) row.push_back(traj.states[t](i));
        const Vector& u = traj.controls[std::min(t, traj.controls.size() - 1)];
        for (Eigen::Index i = 0; i < model.m(); ++i) row.push_back(u(i));
        csv.row(row);
    }
    std::cout << csv.path() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Riccati-based receding-horizon control toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path, out_dir, preset;
    double step = -1, t_max = -1, horizon = -1, tau = -1;
    int parallel = 0;
    app.add_option("--config", config_path, "JSON configuration file")->capture_default_str();
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--step", step, "integrator step override");
    app.add_option("--t-max", t_max, "simulation length override");
    app.add_option("--T", horizon, "prediction horizon override");
    app.add_option("--tau", tau, "control horizon override");
    app.add_option("--parallel", parallel, "worker threads (RICCATI_MPC_THREADS overrides)");
    app.add_option("--preset", preset,
                   "preset: example1|example2|fig3|fig4|fig5|fig5-rhc|fig5-mpc-w|fig5-mpc-a");

    auto* s_are = app.add_subcommand("solve-are", "steady continuous Riccati solve");
    auto* s_dare = app.add_subcommand("solve-dare", "steady discrete Riccati solve");
    auto* s_sim = app.add_subcommand("simulate", "closed-loop / reference simulation");
    auto* s_sweep = app.add_subcommand("sweep", "parameter sweep with fits");
    auto* s_fig = app.add_subcommand("reproduce-figures", "emit figure datasets");
    auto* s_dt = app.add_subcommand("dt-rhc", "discrete-time receding horizon");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        json cfg = load_config(config_path);
        // presets fill defaults; explicit config keys win
        if (preset == "example1" || preset == "example2") {
            if (!cfg.contains("example")) cfg["example"] = preset;
        } else if (preset == "fig5-rhc") {
            if (!cfg.contains("example")) cfg["example"] = "example2";
            if (!cfg.contains("kind")) cfg["kind"] = "rhc-horizon";
            if (!cfg.contains("tau")) cfg["tau"] = 0.5;
            if (!cfg.contains("gaps")) cfg["gaps"] = {1.0, 2.0, 3.0, 4.0};
        } else if (preset == "fig5-mpc-w" || preset == "fig5-mpc-a") {
            if (!cfg.contains("example")) cfg["example"] = "example2";
            if (!cfg.contains("kind")) cfg["kind"] = "mpc-tau";
            if (!cfg.contains("gap")) cfg["gap"] = 4.0;
            if (!cfg.contains("taus")) cfg["taus"] = {0.0625, 0.125, 0.25, 0.5};
            if (!cfg.contains("step")) cfg["step"] = 6.25e-4;  // divides tau = 1/16
            if (!cfg.contains("t_max")) cfg["t_max"] = 20.0;
            if (!cfg.contains("perturbation"))
                cfg["perturbation"] =
                    preset == "fig5-mpc-w"
                        ? json{{"type", "disturbance"}, {"hot_index", 10}}
                        : json{{"type", "matrix"}, {"amount", 0.3}};
        } else if (!preset.empty() && preset != "fig3" && preset != "fig4" && preset != "fig5") {
            throw ConfigError("unknown preset '" + preset + "'");
        }
        if (!out_dir.empty()) cfg["out"] = out_dir;
        if (step > 0) cfg["step"] = step;
        if (t_max > 0) cfg["t_max"] = t_max;
        if (horizon > 0) cfg["T"] = horizon;
        if (tau > 0) cfg["tau"] = tau;
        if (parallel > 0) cfg["parallel"] = parallel;
        const int threads = resolve_threads(cfg.value("parallel", 0));

        if (s_are->parsed()) return cmd_solve_are(cfg);
        if (s_dare->parsed()) return cmd_solve_dare(cfg);
        if (s_sim->parsed()) return cmd_simulate(cfg);
        if (s_sweep->parsed()) return cmd_sweep(cfg, threads);
        if (s_fig->parsed()) return cmd_reproduce_figures(cfg, preset, threads);
        if (s_dt->parsed()) return cmd_dt_rhc(cfg, threads);
        throw ConfigError("no subcommand given");
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 1;
    } catch (const InstabilityError& e) {
        std::cerr << "instability detected: " << e.what()
                  << " (last stable t = " << e.last_stable_time << ")\n";
        return 3;
    } catch (const SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
