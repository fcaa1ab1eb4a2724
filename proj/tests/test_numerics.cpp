#include <doctest.h>

#include <Eigen/SVD>
#include <random>

#include "rmpc/numerics.hpp"

using namespace rmpc;

namespace {

Matrix random_stable(std::mt19937_64& rng, int n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = g(rng);
    // shift the spectrum left of the imaginary axis
    m -= (operator_norm(m) + 0.2) * Matrix::Identity(n, n);
    return m;
}

}  // namespace

TEST_CASE("mat_exp basics") {
    CHECK((mat_exp(Matrix::Zero(2, 2), 1.0) - Matrix::Identity(2, 2)).norm() == 0.0);

    Matrix nilpotent(2, 2);
    nilpotent << 0, 1, 0, 0;
    Matrix expected(2, 2);
    expected << 1, 1, 0, 1;
    CHECK((mat_exp(nilpotent, 1.0) - expected).norm() < 1e-15);

    Matrix scalar(1, 1);
    scalar << -1.0;
    CHECK(mat_exp(scalar, 2.0)(0, 0) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

    CHECK_THROWS_AS(mat_exp(Matrix::Zero(2, 3)), ConfigError);
}

TEST_CASE("mat_exp large argument stays accurate") {
    Matrix m(2, 2);
    m << -3.0, 40.0, 0.0, -5.0;
    const Matrix big = mat_exp(m, 100.0);  // ||Mt|| ~ 4e3
    // reference through the semigroup at a benign scale
    Matrix ref = Matrix::Identity(2, 2);
    const Matrix stride = mat_exp(m, 1.0);
    for (int i = 0; i < 100; ++i) ref = (stride * ref).eval();
    CHECK((big - ref).norm() <= 1e-10 * (1.0 + ref.norm()));
}

TEST_CASE("mat_exp semigroup property on random stable matrices") {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> times(0.0, 10.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix a = random_stable(rng, 4);
        const double s = times(rng), t = times(rng);
        const Matrix whole = mat_exp(a, s + t);
        const Matrix split = mat_exp(a, s) * mat_exp(a, t);
        CHECK((whole - split).norm() <= 1e-8 * (1.0 + whole.norm()));
    }
}

TEST_CASE("operator_norm examples") {
    CHECK(operator_norm(Matrix::Identity(5, 5)) == doctest::Approx(1.0).epsilon(1e-12));

    Matrix diag = Matrix::Zero(2, 2);
    diag(0, 0) = 3.0;
    diag(1, 1) = -5.0;
    CHECK(operator_norm(diag) == doctest::Approx(5.0).epsilon(1e-10));

    Matrix rank1(2, 2);
    rank1 << 0, 2, 0, 0;
    CHECK(operator_norm(rank1) == doctest::Approx(2.0).epsilon(1e-10));

    CHECK(operator_norm(Matrix::Zero(3, 3)) == 0.0);
}

TEST_CASE("operator_norm agrees with the SVD on random matrices") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int trial = 0; trial < 30; ++trial) {
        Matrix m(5, 3);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = g(rng);
        const double svd = Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
        CHECK(operator_norm(m) == doctest::Approx(svd).epsilon(1e-8));
    }
}

TEST_CASE("cn_step closed forms") {
    Matrix a(1, 1);
    a << -1.0;
    Vector x(1);
    x << 1.0;
    const Vector stepped = cn_step(a, Vector(), x, 0.1);
    CHECK(stepped(0) == doctest::Approx(0.95 / 1.05).epsilon(1e-14));

    // pure quadrature of a constant forcing
    Vector g(1);
    g << 3.0;
    Vector zero = Vector::Zero(1);
    CHECK(cn_step(Matrix::Zero(1, 1), g, zero, 0.25)(0) == doctest::Approx(0.75));

    // 100 steps of h = 0.01 track e^{-1}
    Vector v(1);
    v << 1.0;
    for (int i = 0; i < 100; ++i) v = cn_step(a, Vector(), v, 0.01);
    CHECK(v(0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-5));

    // singular step matrix: (I - hA/2) = 0 at h = 2/a
    Matrix unstable(1, 1);
    unstable << 2.0;
    CHECK_THROWS_AS(cn_step(unstable, Vector(), x, 1.0), SolverError);
}

TEST_CASE("cn_step is time-reversible without forcing") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix a(3, 3);
    Vector x(3);
    for (int i = 0; i < 3; ++i) {
        x(i) = g(rng);
        for (int j = 0; j < 3; ++j) a(i, j) = g(rng);
    }
    const Vector there = cn_step(a, Vector(), x, 0.05);
    const Vector back = cn_step(a, Vector(), there, -0.05);
    CHECK((back - x).norm() <= 1e-12 * (1.0 + x.norm()));
}

TEST_CASE("rk4_step basics") {
    const auto zero_f = [](double, const Vector& v) { return Vector::Zero(v.size()); };
    Vector x(2);
    x << 1.0, -2.0;
    CHECK((rk4_step(zero_f, 0.0, x, 0.3) - x).norm() == 0.0);

    const auto decay = [](double, const Vector& v) -> Vector { return -v; };
    Vector one(1);
    one << 1.0;
    CHECK(rk4_step(decay, 0.0, one, 0.1)(0) == doctest::Approx(0.9048375).epsilon(1e-7));

    const auto constant = [](double, const Vector& v) { return Vector::Ones(v.size()); };
    Vector z = Vector::Zero(1);
    CHECK(rk4_step(constant, 0.0, z, 0.5)(0) == doctest::Approx(0.5).epsilon(1e-15));

    const auto bad = [](double, const Vector& v) -> Vector {
        return Vector::Constant(v.size(), std::numeric_limits<double>::quiet_NaN());
    };
    CHECK_THROWS_WITH_AS(rk4_step(bad, 0.0, one, 0.1), doctest::Contains("stage k1"),
                         SolverError);
}

TEST_CASE("rk4 integrates exponential decay to 1e-10 over a unit interval") {
    const auto decay = [](double, const Vector& v) -> Vector { return -v; };
    Vector x(1);
    x << 1.0;
    const double h = 1e-3;
    for (int i = 0; i < 1000; ++i) x = rk4_step(decay, i * h, x, h);
    CHECK(std::abs(x(0) - std::exp(-1.0)) <= 1e-10);
}

TEST_CASE("solve_lyapunov closed forms") {
    Matrix a(1, 1), q(1, 1);
    a << -1.0;
    q << 1.0;
    CHECK(solve_lyapunov(a, q)(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

    Matrix a2 = Matrix::Zero(2, 2);
    a2(0, 0) = -1.0;
    a2(1, 1) = -2.0;
    const Matrix w = solve_lyapunov(a2, Matrix::Identity(2, 2));
    CHECK(w(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(w(1, 1) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(std::abs(w(0, 1)) < 1e-14);

    // zero right-hand side
    CHECK(solve_lyapunov(a2, Matrix::Zero(2, 2)).norm() == 0.0);

    // A not Hurwitz: A and -A^T share an eigenvalue
    Matrix sing(1, 1);
    sing << 0.0;
    CHECK_THROWS_AS(solve_lyapunov(sing, q), SolverError);
}

TEST_CASE("estimate_decay_envelope scalar") {
    Matrix a(1, 1);
    a << -1.0;
    const DecayEnvelope env = estimate_decay_envelope(a, 10.0, 100);
    CHECK(env.rate == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(env.overshoot == doctest::Approx(1.0));

    Matrix marginal(1, 1);
    marginal << 0.0;
    CHECK_THROWS_AS(estimate_decay_envelope(marginal, 10.0, 100), SolverError);
}

TEST_CASE("estimate_decay_envelope holds at every sampled point") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const Matrix a = random_stable(rng, 4);
        const double t_max = 12.0;
        const int samples = 60;
        const DecayEnvelope env = estimate_decay_envelope(a, t_max, samples);
        for (int k = 0; k <= samples; ++k) {
            const double t = t_max * k / samples;
            const double nrm = operator_norm(mat_exp(a, t));
            CHECK(nrm <= env.overshoot * std::exp(-env.rate * t) * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("fit helpers") {
    {
        const std::vector<double> x{0.0, 1.0, 2.0};
        const std::vector<double> e{1.0, std::exp(-2.0), std::exp(-4.0)};
        const LineFit f = fit_exponential_decay(x, e);
        CHECK(f.slope == doctest::Approx(-2.0).epsilon(1e-12));
        CHECK(f.r2 == doctest::Approx(1.0));
    }
    {
        const std::vector<double> x{0.0, 1.0};
        const std::vector<double> e{1.0, 1.0};
        CHECK(fit_exponential_decay(x, e).slope == doctest::Approx(0.0));
    }
    {
        const std::vector<double> x{1.0, 2.0, 3.0};
        const std::vector<double> e{3.0 * std::exp(-1.5), 3.0 * std::exp(-3.0),
                                    3.0 * std::exp(-4.5)};
        const LineFit f = fit_exponential_decay(x, e);
        CHECK(f.slope == doctest::Approx(-1.5).epsilon(1e-12));
        CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(fit_exponential_decay(std::vector<double>{1.0}, std::vector<double>{1.0}),
                    ConfigError);
    CHECK_THROWS_AS(
        fit_exponential_decay(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0, -1.0}),
        ConfigError);
}

TEST_CASE("rank checks") {
    Matrix wide(2, 3);
    wide << 1, 0, 1,
            0, 0, 0;
    CHECK(numerical_rank(wide) == 1);
    CHECK(numerical_rank(Matrix::Identity(4, 4)) == 4);

    Matrix a(2, 2), b(2, 1);
    a << 0, 1, 0, 0;
    b << 0, 1;
    CHECK(is_controllable(a, b));
    Matrix b_bad(2, 1);
    b_bad << 1, 0;  // upstream integrator never reached
    CHECK_FALSE(is_controllable(a, b_bad));
    Matrix c(1, 2);
    c << 1, 0;
    CHECK(is_observable(a, c));
    Matrix c_bad(1, 2);
    c_bad << 0, 1;
    CHECK_FALSE(is_observable(a, c_bad));
}
