// Serial-vs-OpenMP comparison for the batch workloads (sweep rows and
// discrete solves). The serial path is the reference the tests pin the
// parallel results against; this target reports the speedup and re-checks
// bit-for-bit equality of the outputs.

#include <chrono>
#include <cstring>
#include <iostream>
#include <random>
#include <vector>

#include "rmpc/discrete_rhc.hpp"
#include "rmpc/experiments.hpp"
#include "rmpc/parallel.hpp"

using namespace rmpc;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

bool rows_equal(const SweepTable& a, const SweepTable& b) {
    if (a.rows.size() != b.rows.size()) return false;
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        const auto& x = a.rows[i];
        const auto& y = b.rows[i];
        if (std::memcmp(&x.err_state, &y.err_state, sizeof(double)) != 0 ||
            std::memcmp(&x.err_ctrl, &y.err_ctrl, sizeof(double)) != 0 ||
            std::memcmp(&x.cost_gap, &y.cost_gap, sizeof(double)) != 0)
            return false;
    }
    return true;
}

DtLtiModel random_discrete_model(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(n, n), b(n, 1);
    for (int i = 0; i < n; ++i) {
        b(i, 0) = 0.3 * g(rng);
        for (int j = 0; j < n; ++j) a(i, j) = g(rng);
    }
    a *= 0.7 / operator_norm(a);
    return {a, b};
}

}  // namespace

int main(int argc, char** argv) {
    int threads = resolve_threads(0);
    if (argc > 1) threads = std::max(1, std::atoi(argv[1]));

    std::cout << "workload                      serial_ms  parallel_ms  speedup  match\n";

    {
        const ExampleSpec ex = build_example2();
        SweepConfig cfg;
        cfg.t_max = 20.0;
        cfg.threads = 1;
        auto t0 = Clock::now();
        const SweepTable serial = sweep_rhc_horizon(ex, 0.5, {1.0, 2.0, 3.0, 4.0}, cfg);
        const double t_serial = ms_since(t0);
        cfg.threads = threads;
        t0 = Clock::now();
        const SweepTable parallel = sweep_rhc_horizon(ex, 0.5, {1.0, 2.0, 3.0, 4.0}, cfg);
        const double t_parallel = ms_since(t0);
        std::printf("%-28s %10.1f %12.1f %8.2f  %s\n", "rhc-horizon-sweep (4 rows)", t_serial,
                    t_parallel, t_serial / t_parallel,
                    rows_equal(serial, parallel) ? "yes" : "NO");
    }

    {
        constexpr int kInstances = 24;
        std::mt19937_64 rng(20240817);
        std::vector<DtLtiModel> models;
        std::vector<CostSpec> costs;
        while (static_cast<int>(models.size()) < kInstances) {
            DtLtiModel m = random_discrete_model(rng, 5);
            CostSpec c{Matrix::Identity(5, 5), Matrix::Identity(1, 1), Matrix::Zero(5, 5)};
            if (!is_controllable(m.A, m.B)) continue;
            models.push_back(std::move(m));
            costs.push_back(std::move(c));
        }
        std::vector<double> rho_serial(kInstances), rho_parallel(kInstances);
        auto run_batch = [&](std::vector<double>& out, int nthreads) {
            parallel_for_index(models.size(), nthreads, [&](std::size_t i) {
                const DareSolution s = solve_dare(models[i].A, models[i].B, costs[i]);
                const DtTrajectory t = run_discrete_rhc(models[i], costs[i], 10, 2, 40,
                                                        Vector::Ones(5));
                out[i] = s.rho + t.states.back().norm();
            });
        };
        auto t0 = Clock::now();
        run_batch(rho_serial, 1);
        const double t_serial = ms_since(t0);
        t0 = Clock::now();
        run_batch(rho_parallel, threads);
        const double t_parallel = ms_since(t0);
        const bool match =
            std::memcmp(rho_serial.data(), rho_parallel.data(), sizeof(double) * kInstances) == 0;
        std::printf("%-28s %10.1f %12.1f %8.2f  %s\n", "discrete batch (24 systems)", t_serial,
                    t_parallel, t_serial / t_parallel, match ? "yes" : "NO");
    }

    return 0;
}
