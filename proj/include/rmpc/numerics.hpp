#pragma once

#include <functional>
#include <span>

#include "rmpc/common.hpp"

namespace rmpc {

/// e^{M t} by scaling-and-squaring with diagonal Pade kernels (orders 3-13
/// picked from the 1-norm). Throws on non-square or non-finite input.
Matrix mat_exp(const Matrix& m, double t = 1.0);

/// Spectral norm (largest singular value) by power iteration on M^T M.
/// Deterministic all-ones start vector, at most 200 iterations, stops when
/// the Rayleigh estimate changes by less than 1e-10 relative.
double operator_norm(const Matrix& m);

/// One Crank-Nicolson step for xdot = A x + g with the forcing g frozen at
/// its midpoint value: returns (I - hA/2)^{-1}((I + hA/2)x + h g).
/// Throws SolverError("reduce step") when I - hA/2 is numerically singular.
Vector cn_step(const Matrix& a, const Vector& g_mid, const Vector& x, double h);

/// Reusable Crank-Nicolson stepper for a constant A: factors I - hA/2 once.
class CnStepper {
  public:
    CnStepper(const Matrix& a, double h);
    Vector step(const Vector& x) const;                      // no forcing
    Vector step(const Vector& x, const Vector& g_mid) const; // forcing at midpoint
  private:
    Eigen::PartialPivLU<Matrix> lu_;
    Matrix plus_;
    double h_;
};

/// Classical explicit fourth-order Runge-Kutta step for xdot = f(t, x).
/// Throws SolverError naming the stage when a stage derivative is non-finite.
Vector rk4_step(const std::function<Vector(double, const Vector&)>& f, double t,
                const Vector& x, double h);

/// Solves A X + X A^T + Q = 0 for X via the dense Kronecker system
/// (n^2 unknowns, LU with partial pivoting). Result is symmetrized when Q is
/// symmetric. Throws SolverError when the Kronecker matrix is singular
/// (A and -A^T share an eigenvalue, e.g. A not Hurwitz for this use).
Matrix solve_lyapunov(const Matrix& a, const Matrix& q);

struct DecayEnvelope {
    double overshoot = 1.0;  // M >= 1
    double rate = 0.0;       // mu: ||e^{At_k}|| <= M e^{-mu t_k} on the grid
};

/// Fits an exponential envelope to ||e^{A t}|| on the grid t_k = k t_max/samples,
/// k = 0..samples. The rate is the least-squares slope of log||e^{At}||
/// shrunk by `safety`; the overshoot is the smallest M >= 1 that makes the
/// envelope hold at every sample. Throws SolverError when A is not verified
/// Hurwitz on the window (||e^{A t_max}|| >= 1 or non-decaying fit).
DecayEnvelope estimate_decay_envelope(const Matrix& a, double t_max, int samples,
                                      double safety = 0.99);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
};

/// Ordinary least squares y = slope * x + intercept with the coefficient of
/// determination. Requires at least two points.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// OLS of ln(e) against x; e must be strictly positive.
LineFit fit_exponential_decay(std::span<const double> x, std::span<const double> e);

/// Numerical rank by column-pivoted QR with threshold 1e-8 relative to the
/// largest pivot.
Eigen::Index numerical_rank(const Matrix& m);

/// rank [B, AB, ..., A^{n-1}B] == n ?
bool is_controllable(const Matrix& a, const Matrix& b);

/// rank [C; CA; ...; CA^{n-1}] == n ?
bool is_observable(const Matrix& a, const Matrix& c);

/// Smallest/largest eigenvalue of a symmetric matrix.
double eig_min_sym(const Matrix& m);
double eig_max_sym(const Matrix& m);

/// Certifies that e^{A t} decays: checks ||e^{A 2^k}|| < 1 for some
/// k <= max_doublings (a sufficient, cheaply verifiable Hurwitz test).
bool transition_decays(const Matrix& a, int max_doublings = 11);

}  // namespace rmpc
