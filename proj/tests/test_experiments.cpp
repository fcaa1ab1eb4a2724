#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rmpc/io.hpp"

using namespace rmpc;

namespace {

double spectral_abscissa(const Matrix& a) {
    return Eigen::EigenSolver<Matrix>(a).eigenvalues().real().maxCoeff();
}

ExampleSpec scalar_example() {
    ExampleSpec ex;
    ex.name = "scalar";
    ex.model = {Matrix::Constant(1, 1, 0.0), Matrix::Constant(1, 1, 1.0)};
    ex.cost = {Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 1.0),
               Matrix::Constant(1, 1, 0.0)};
    ex.y0 = Vector::Ones(1);
    return ex;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("mass-chain example construction") {
    const ExampleSpec ex = build_example1();
    REQUIRE(ex.model.n() == 22);
    REQUIRE(ex.model.m() == 1);
    CHECK(ex.cost.C.rows() == 11);
    // middle mass starts centered
    CHECK(ex.y0(5) == 0.0);
    CHECK(ex.y0(0) == doctest::Approx(-0.5));
    CHECK(ex.y0(10) == doctest::Approx(0.5));
    CHECK(ex.y0.tail(11).norm() == 0.0);
    // undamped: the spectrum sits on the imaginary axis
    CHECK(std::abs(spectral_abscissa(ex.model.A)) <= 1e-8);
    CHECK_NOTHROW(check_system(ex.model, ex.cost));

    // builders are deterministic
    const ExampleSpec again = build_example1();
    CHECK(ex.model.A == again.model.A);
    CHECK(ex.y0 == again.y0);
}

TEST_CASE("anti-damped mass chain") {
    const Plant plant = build_example1_perturbed();
    CHECK(plant.lipschitz == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(spectral_abscissa(*plant.A_true) > 0.0);  // not Hurwitz

    // The steady nominal gain does NOT stabilize this plant: the
    // anti-damping (+0.15 per mode pair) exceeds the nominal margin
    // (about 0.015), leaving slow growth. Trajectories stay finite over
    // the figure window; only the shifted diffusion system below is
    // frozen-gain stable.
    const ExampleSpec ex = build_example1();
    const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-10, ex.care);
    Eigen::LLT<Matrix> llt(ex.cost.R);
    const Matrix f = llt.solve(ex.model.B.transpose()) * sol.P;
    const double growth = spectral_abscissa(*plant.A_true - ex.model.B * f);
    CHECK(growth > 0.0);
    CHECK(growth < 0.15);
}

TEST_CASE("diffusion example construction") {
    const ExampleSpec ex = build_example2();
    REQUIRE(ex.model.n() == 11);
    CHECK(ex.model.A.isApprox(ex.model.A.transpose(), 1e-14));
    CHECK(eig_max_sym(ex.model.A) <= 1e-10);
    // exactly one zero eigenvalue (conservation mode)
    Eigen::SelfAdjointEigenSolver<Matrix> es(ex.model.A);
    int zeros = 0;
    for (Eigen::Index i = 0; i < 11; ++i)
        if (std::abs(es.eigenvalues()(i)) < 1e-8) ++zeros;
    CHECK(zeros == 1);
    CHECK_NOTHROW(check_system(ex.model, ex.cost));

    // the steady nominal gain keeps the +0.3 I shifted plant stable
    const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-11, ex.care);
    Eigen::LLT<Matrix> llt(ex.cost.R);
    const Matrix f = llt.solve(ex.model.B.transpose()) * sol.P;
    const Matrix shifted = ex.model.A + 0.3 * Matrix::Identity(11, 11) - ex.model.B * f;
    CHECK(spectral_abscissa(shifted) < 0.0);
}

TEST_CASE("constant_disturbance") {
    const Vector ex1 = constant_disturbance(22, 21);
    CHECK(ex1.norm() == 1.0);
    CHECK(ex1(21) == 1.0);
    const Vector ex2 = constant_disturbance(11, 10);
    CHECK(ex2(10) == 1.0);
    const Vector small = constant_disturbance(3, 0);
    CHECK(small(0) == 1.0);
    CHECK(small(1) == 0.0);
    CHECK_THROWS_AS(constant_disturbance(3, 3), ConfigError);
}

TEST_CASE("perturbed_plant kinds") {
    const ExampleSpec ex2 = build_example2();
    const Plant shift = perturbed_plant(ex2, Perturbation::matrix_shift(0.3));
    CHECK((*shift.A_true - ex2.model.A - 0.3 * Matrix::Identity(11, 11)).norm() <= 1e-12);
    CHECK(shift.lipschitz == doctest::Approx(0.3).epsilon(1e-12));

    const ExampleSpec ex1 = build_example1();
    const Plant damp = perturbed_plant(ex1, Perturbation::matrix_shift(0.3));
    CHECK((*damp.A_true - *build_example1_perturbed().A_true).norm() == 0.0);

    const Plant dist =
        perturbed_plant(ex2, Perturbation::disturbance(constant_disturbance(11, 10)));
    CHECK(dist.lipschitz == 0.0);
    CHECK(dist.w.tail(10) == 1.0);
}

TEST_CASE("horizon sweep on the scalar system") {
    const ExampleSpec ex = scalar_example();
    SweepConfig cfg;
    cfg.t_max = 25.0;
    const SweepTable table = sweep_rhc_horizon(ex, 0.25, {0.0, 0.5, 1.0, 1.5, 2.0, 2.5}, cfg);
    REQUIRE(table.rows.size() == 6);
    double prev = 1e300;
    for (const auto& row : table.rows) {
        CHECK(row.stable);
        CHECK(row.err_ctrl > 0.0);
        CHECK(row.err_ctrl < prev);  // nonincreasing down from the no-lookahead row
        prev = row.err_ctrl;
        CHECK(row.cost_gap >= -1e-6);
        if (row.mu_eff > 0.0) {
            CHECK(row.err_state <= row.bound_state);
            CHECK(row.err_ctrl <= row.bound_ctrl);
            CHECK(row.cost_gap <= row.bound_cost);
        }
    }
    // exponential decay against the gap with the expected rate scale
    CHECK(table.err_fit.slope < 0.0);
    CHECK(table.err_fit.r2 > 0.9);
    // quadratic cost structure: the cost gap decays about twice as fast
    CHECK(table.cost_fit.slope / table.err_fit.slope == doctest::Approx(2.0).epsilon(0.3));
}

TEST_CASE("sweep rows are identical serial and parallel") {
    const ExampleSpec ex = scalar_example();
    SweepConfig cfg;
    cfg.t_max = 15.0;
    cfg.threads = 1;
    const SweepTable serial = sweep_rhc_horizon(ex, 0.25, {0.5, 1.0, 1.5, 2.0}, cfg);
    cfg.threads = 4;
    const SweepTable parallel = sweep_rhc_horizon(ex, 0.25, {0.5, 1.0, 1.5, 2.0}, cfg);
    REQUIRE(serial.rows.size() == parallel.rows.size());
    for (std::size_t i = 0; i < serial.rows.size(); ++i) {
        CHECK(serial.rows[i].err_state == parallel.rows[i].err_state);
        CHECK(serial.rows[i].err_ctrl == parallel.rows[i].err_ctrl);
        CHECK(serial.rows[i].cost_gap == parallel.rows[i].cost_gap);
    }
}

TEST_CASE("tau sweep against the frozen-gain limit, scalar disturbance") {
    const ExampleSpec ex = scalar_example();
    SweepConfig cfg;
    cfg.t_max = 12.0;
    cfg.step = 6.25e-4;
    Vector w_bar(1);
    w_bar << 0.1;
    const SweepTable table = sweep_mpc_tau(ex, 2.0, {0.0625, 0.125, 0.25, 0.5},
                                           Perturbation::disturbance(w_bar), cfg);
    REQUIRE(table.rows.size() == 4);
    for (const auto& row : table.rows) CHECK(row.stable);
    // affine in tau
    CHECK(table.err_fit.r2 > 0.97);
    CHECK(table.err_fit.slope > 0.0);
}

TEST_CASE("sweep rows reproduce standalone runs") {
    const ExampleSpec ex = scalar_example();
    SweepConfig cfg;
    cfg.t_max = 15.0;
    const double tau = 0.25;
    const SweepTable table = sweep_rhc_horizon(ex, tau, {1.0, 2.0}, cfg);

    const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-11, ex.care);
    const Trajectory opt =
        simulate_inf_horizon(ex.model, ex.cost, sol, ex.y0, cfg.t_max, cfg.step);
    MpcConfig mc;
    mc.T = tau + 2.0;
    mc.tau = tau;
    mc.step = cfg.step;
    mc.t_max = cfg.t_max;
    const MpcRun run = run_rhc(ex.model, ex.cost, mc, ex.y0);
    const TrajectoryGap gap = trajectory_gap(run.loop, opt, GapMetric::Linf, tau);
    CHECK(table.rows[1].err_ctrl == doctest::Approx(gap.control).epsilon(1e-14));
}

TEST_CASE("csv and json emission") {
    const std::string dir = "./test_io_out";
    std::filesystem::create_directories(dir);
    const ExampleSpec ex = scalar_example();
    SweepConfig cfg;
    cfg.t_max = 20.0;
    const SweepTable table = sweep_rhc_horizon(ex, 0.25, {0.5, 1.0}, cfg);

    const std::string path = dir + "/sweep.csv";
    write_sweep_csv(path, table, nlohmann::json{{"unit", "test"}});
    const std::string body = slurp(path);
    CHECK(body.find("# version=") == 0);
    CHECK(body.find("# config={\"unit\":\"test\"}") != std::string::npos);
    CHECK(body.find("gap,stable,err_state,err_ctrl") != std::string::npos);

    // byte-identical on rewrite
    write_sweep_csv(dir + "/sweep2.csv", table, nlohmann::json{{"unit", "test"}});
    CHECK(slurp(dir + "/sweep2.csv") == body);

    // 15 significant digits survive a round trip
    CHECK(format_sig(0.1234567890123456) == "0.123456789012346");
    const nlohmann::json fit = sweep_fit_summary(table);
    CHECK(fit.contains("err_fit"));
    write_json_file(dir + "/fit.json", fit);
    CHECK(slurp(dir + "/fit.json").find("\"err_fit\"") != std::string::npos);
}

TEST_CASE("matrix json round trip") {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 0.125;
    const nlohmann::json j = matrix_to_json(m);
    const Matrix back = matrix_from_json(j, "m");
    CHECK((m - back).norm() == 0.0);
    CHECK_THROWS_AS(matrix_from_json(nlohmann::json::array(), "bad"), ConfigError);
    CHECK_THROWS_AS(matrix_from_json(nlohmann::json{{1, 2}, {3}}, "ragged"), ConfigError);
}

TEST_CASE("halving the step moves sweep errors by less than one percent") {
    const ExampleSpec ex = build_example2();
    const RiccatiSolution sol = solve_care(ex.model, ex.cost, 1e-11, ex.care);
    double err[2];
    int i = 0;
    for (const double h : {1e-3, 5e-4}) {
        MpcConfig mc;
        mc.T = 4.5;
        mc.tau = 0.5;
        mc.step = h;
        mc.t_max = 20.0;
        const MpcRun run = run_rhc(ex.model, ex.cost, mc, ex.y0);
        const Trajectory opt =
            simulate_inf_horizon(ex.model, ex.cost, sol, ex.y0, mc.t_max, h);
        // sample the gap at fixed times shared by both grids
        double gap = 0.0;
        for (double t = 0.5; t < mc.t_max - 0.5; t += 0.01) {
            const auto k = static_cast<std::size_t>(std::llround(t / h));
            gap = std::max(gap, (run.loop.controls[k] - opt.controls[k]).norm());
        }
        err[i++] = gap;
    }
    CHECK(std::abs(err[0] - err[1]) <= 0.01 * err[1]);
}

TEST_CASE("figure smoke run emits decimated panels") {
    FigureConfig cfg;
    cfg.out_dir = "./test_fig_out";
    cfg.t_max = 2.0;
    cfg.step = 1.0 / 640.0;
    cfg.output_decimation = 8;
    cfg.prediction_decimation = 40;
    const auto files = reproduce_figures("fig3", cfg);
    REQUIRE(files.size() == 8);
    const std::string body = slurp(files[0]);
    CHECK(body.find("t,u,u_inf") != std::string::npos);
    // same inputs, same bytes
    const auto again = reproduce_figures("fig3", cfg);
    CHECK(slurp(again[0]) == body);
    const std::string preds = slurp(files[1]);
    CHECK(preds.find("window,t,u_pred") != std::string::npos);
}
